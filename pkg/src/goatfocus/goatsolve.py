"""Two-point ray solver for layered media, plus straight-ray baselines.

The unknowns of the boundary-crossing system are reduced by exact
substitution to the lateral crossing coordinates x_1..x_{N-1}: the interface
heights, tangent slopes and both angle sines are explicit functions of those
coordinates, so Snell's law at each interface becomes one residual per
interface that couples only neighboring crossings.  The resulting system has
a tridiagonal Jacobian and is solved by damped Newton from the straight-ray
guess, with a propagation-based shooting fallback.  After convergence the
full variable set is reconstructed from the crossings alone and every
equation group is re-verified; nothing is trusted from solver state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSegmentError,
    NoBracketError,
    NoIntersectionError,
    NonConvergenceError,
    TotalReflectionError,
)
from .medium import (
    Constant,
    Linear,
    Medium,
    Point2,
    boundary_curvature,
    boundary_eval,
    boundary_slope,
)
from .raytrace import MIN_SEGMENT, RayPath, propagate

_SHOOTING_CANDIDATES = 64
_FP_TOL = 1e-13  # |terminal x - focus x| target for shooting (m)


@dataclass(frozen=True)
class SolverOptions:
    tol_residual: float = 1e-12
    max_newton_iters: int = 25
    max_backtracks: int = 8
    bisection_fallback: bool = True

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")


@dataclass(frozen=True)
class GoatSolution:
    """A solved two-point ray: crossings, reconstructed path, diagnostics."""

    xs: tuple[float, ...]
    path: RayPath
    tof: float
    iterations: int
    residual_norm: float
    method: str  # "newton", "shooting" or "hybrid"
    multiple_roots: bool = False


def _reconstruct(medium: Medium, p0: Point2, pN: Point2, xs):
    """Point arrays (X, Z) of the full chain p0, crossings, pN."""
    xs = np.asarray(xs, dtype=float)
    X = np.concatenate(([p0.x], xs, [pN.x]))
    Z = np.empty_like(X)
    Z[0], Z[-1] = p0.z, pN.z
    for i, b in enumerate(medium.boundaries):
        Z[i + 1] = boundary_eval(b, xs[i])
    return X, Z


def _segment_geometry(X, Z):
    dX = np.diff(X)
    dZ = np.diff(Z)
    L = np.hypot(dX, dZ)
    if np.any(L < MIN_SEGMENT):
        raise DegenerateSegmentError("consecutive path points coincide")
    return dX, dZ, L


def residuals(medium: Medium, p0: Point2, pN: Point2, xs) -> np.ndarray:
    """Snell residuals per interface, normalized to be dimensionless.

    F_n = (c_{n+1} sin(theta_n) - c_n sin(theta'_n)) / max(c), where both
    sines come from the segment/tangent projections at the reconstructed
    crossing points.
    """
    xs = np.asarray(xs, dtype=float)
    X, Z = _reconstruct(medium, p0, pN, xs)
    dX, dZ, L = _segment_geometry(X, Z)
    c = np.asarray(medium.speeds)
    tau = np.array([boundary_slope(b, xs[i]) for i, b in enumerate(medium.boundaries)])
    T = np.sqrt(1.0 + tau * tau)
    sin_in = (dX[:-1] + tau * dZ[:-1]) / (T * L[:-1])
    sin_out = (dX[1:] + tau * dZ[1:]) / (T * L[1:])
    return (c[1:] * sin_in - c[:-1] * sin_out) / np.max(c)


def residual_jacobian(medium: Medium, p0: Point2, pN: Point2, xs):
    """Analytic tridiagonal Jacobian of :func:`residuals`.

    Returns (sub, diag, sup): sub[i] = dF_i/dx_{i-1} (sub[0] unused),
    diag[i] = dF_i/dx_i, sup[i] = dF_i/dx_{i+1} (sup[-1] unused).  Boundary
    second derivatives enter through the tangent-slope chain rule; straight
    boundaries contribute zero curvature.
    """
    xs = np.asarray(xs, dtype=float)
    K = xs.size
    X, Z = _reconstruct(medium, p0, pN, xs)
    dX, dZ, L = _segment_geometry(X, Z)
    c = np.asarray(medium.speeds)
    cmax = np.max(c)
    tau = np.array([boundary_slope(b, xs[i]) for i, b in enumerate(medium.boundaries)])
    kap = np.array([boundary_curvature(b, xs[i]) for i, b in enumerate(medium.boundaries)])
    T = np.sqrt(1.0 + tau * tau)

    A_in = dX[:-1] + tau * dZ[:-1]
    A_out = dX[1:] + tau * dZ[1:]
    sub = np.zeros(K)
    diag = np.zeros(K)
    sup = np.zeros(K)
    for i in range(K):
        Ti, taui, kapi = T[i], tau[i], kap[i]
        dT = taui * kapi / Ti
        # d sin_in / d x_i
        dA = 1.0 + taui * taui + kapi * dZ[i]
        dL = A_in[i] / L[i]
        dsin_in_i = (dA - A_in[i] * dT / Ti - A_in[i] * dL / L[i]) / (Ti * L[i])
        # d sin_out / d x_i
        dA = -(1.0 + taui * taui) + kapi * dZ[i + 1]
        dL = -A_out[i] / L[i + 1]
        dsin_out_i = (dA - A_out[i] * dT / Ti - A_out[i] * dL / L[i + 1]) / (Ti * L[i + 1])
        diag[i] = (c[i + 1] * dsin_in_i - c[i] * dsin_out_i) / cmax
        if i > 0:
            dA = -1.0 - taui * tau[i - 1]
            dL = -(dX[i] + tau[i - 1] * dZ[i]) / L[i]
            dsin_in_im1 = (dA - A_in[i] * dL / L[i]) / (Ti * L[i])
            sub[i] = c[i + 1] * dsin_in_im1 / cmax
        if i < K - 1:
            dA = 1.0 + taui * tau[i + 1]
            dL = (dX[i + 1] + tau[i + 1] * dZ[i + 1]) / L[i + 1]
            dsin_out_ip1 = (dA - A_out[i] * dL / L[i + 1]) / (Ti * L[i + 1])
            sup[i] = -c[i] * dsin_out_ip1 / cmax
    return sub, diag, sup


def _chord_crossing(curve, p0: Point2, pN: Point2, lo: float, hi: float) -> float:
    """Lateral coordinate where the straight chord p0 -> pN crosses ``curve``."""
    x0, z0, xN, zN = p0.x, p0.z, pN.x, pN.z
    if isinstance(curve, Constant):
        t = (curve.d - z0) / (zN - z0)
    elif isinstance(curve, Linear):
        denom = (zN - z0) - curve.k * (xN - x0)
        t = (curve.k * x0 + curve.d - z0) / denom if abs(denom) > 1e-300 else -1.0
    else:
        def h(t):
            return curve._eval(x0 + t * (xN - x0)) - (z0 + t * (zN - z0))
        ha, hb = h(0.0), h(1.0)
        if ha * hb > 0:
            raise NoIntersectionError(
                "straight chord does not cross the boundary", boundary_index=None)
        a, b = 0.0, 1.0
        scale = max(abs(zN - z0), abs(xN - x0))
        while abs(h(0.5 * (a + b))) > 1e-13 and (b - a) * scale > 1e-16:
            m = 0.5 * (a + b)
            if ha * h(m) <= 0:
                b = m
            else:
                a, ha = m, ha
        t = 0.5 * (a + b)
    if not (0.0 < t < 1.0):
        raise NoIntersectionError(
            "straight chord does not cross the boundary between the endpoints",
            boundary_index=None)
    x = x0 + t * (xN - x0)
    if not (lo - 1e-12 <= x <= hi + 1e-12):
        raise NoIntersectionError(
            f"chord crossing x = {x:.6g} outside the lateral domain [{lo}, {hi}]",
            boundary_index=None)
    return x


def initial_guess_straight(medium: Medium, p0: Point2, pN: Point2) -> np.ndarray:
    """Crossings of the straight chord with every interface (refraction-free
    ray), used to start the Newton iteration."""
    lo, hi = medium.domain
    out = np.empty(medium.num_layers - 1)
    for i, b in enumerate(medium.boundaries):
        try:
            out[i] = _chord_crossing(b, p0, pN, lo, hi)
        except NoIntersectionError as exc:
            exc.boundary_index = i + 1
            raise
    return out


def _verify_and_build(medium, p0, pN, xs, iterations, method, opts,
                      multiple_roots=False) -> GoatSolution:
    """Reconstruct the full variable set from the crossings and re-check
    every equation group; package the result."""
    xs = np.asarray(xs, dtype=float)
    X, Z = _reconstruct(medium, p0, pN, xs)
    dX, dZ, L = _segment_geometry(X, Z)
    c = medium.speeds
    inc, refr, tang = [], [], []
    for i, b in enumerate(medium.boundaries):
        tau = boundary_slope(b, xs[i])
        T = math.sqrt(1.0 + tau * tau)
        s_in = (dX[i] + tau * dZ[i]) / (T * L[i])
        s_out = (dX[i + 1] + tau * dZ[i + 1]) / (T * L[i + 1])
        implied = (c[i + 1] / c[i]) * s_in
        if abs(implied) > 1.0 + 1e-9:
            raise TotalReflectionError(
                f"reconstructed crossing {i + 1} implies |sin| = {abs(implied):.6g}",
                ratio=implied, boundary_index=i + 1)
        inc.append(math.asin(min(1.0, max(-1.0, s_in))))
        refr.append(math.asin(min(1.0, max(-1.0, s_out))))
        tang.append(math.atan(tau))
    res = residuals(medium, p0, pN, xs)
    rnorm = float(np.max(np.abs(res))) if res.size else 0.0
    if rnorm > opts.tol_residual:
        raise NonConvergenceError(
            f"re-verified residual {rnorm:.3e} exceeds tolerance "
            f"{opts.tol_residual:.3e}", best_xs=xs, best_residual=rnorm,
            iterations=iterations)
    points = tuple(Point2(float(x), float(z)) for x, z in zip(X, Z))
    tofs = tuple(float(L[i] / c[i]) for i in range(len(c)))
    path = RayPath(points, tuple(inc), tuple(refr), tuple(tang), tofs, sum(tofs))
    return GoatSolution(tuple(float(x) for x in xs), path, path.tof_total,
                        iterations, rnorm, method, multiple_roots)


def solve_newton(medium: Medium, p0: Point2, pN: Point2,
                 opts: SolverOptions = SolverOptions(),
                 x0: np.ndarray | None = None) -> GoatSolution:
    """Damped Newton on the reduced Snell residuals.

    Starts from the straight-ray crossings (or ``x0``); each step is halved
    while the residual norm fails to decrease or a crossing would leave the
    lateral domain.  Raises NonConvergenceError carrying the best iterate.
    """
    lo, hi = medium.domain
    margin = 1e-12
    xs = np.array(initial_guess_straight(medium, p0, pN) if x0 is None else x0,
                  dtype=float)
    F = residuals(medium, p0, pN, xs)
    fn = float(np.max(np.abs(F))) if F.size else 0.0
    best_xs, best_fn = xs.copy(), fn
    iterations = 0
    for _ in range(opts.max_newton_iters):
        if fn <= opts.tol_residual:
            return _verify_and_build(medium, p0, pN, xs, iterations, "newton", opts)
        sub, diag, sup = residual_jacobian(medium, p0, pN, xs)
        K = xs.size
        J = np.diag(diag)
        if K > 1:
            J += np.diag(sub[1:], -1) + np.diag(sup[:-1], 1)
        try:
            delta = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        alpha = 1.0
        accepted = False
        for _bt in range(opts.max_backtracks + 1):
            trial = xs + alpha * delta
            if np.all(trial > lo + margin) and np.all(trial < hi - margin):
                try:
                    Ft = residuals(medium, p0, pN, trial)
                except DegenerateSegmentError:
                    Ft = None
                if Ft is not None:
                    fnt = float(np.max(np.abs(Ft)))
                    if fnt < fn:
                        xs, F, fn = trial, Ft, fnt
                        accepted = True
                        break
            alpha *= 0.5
        iterations += 1
        if not accepted:
            break
        if fn < best_fn:
            best_xs, best_fn = xs.copy(), fn
    if fn <= opts.tol_residual:
        return _verify_and_build(medium, p0, pN, xs, iterations, "newton", opts)
    raise NonConvergenceError(
        f"Newton stalled after {iterations} iterations at residual {best_fn:.3e}",
        best_xs=best_xs, best_residual=best_fn, iterations=iterations)


def _shooting_scan(medium: Medium, p0: Point2, pN: Point2):
    """Evaluate the terminal miss FP(x1) = x_terminal - pN.x over candidate
    first crossings; returns (valid (x, fp) samples, failure cause counts)."""
    lo, hi = medium.domain
    pad = 1e-9 * (hi - lo)
    cand = np.linspace(lo + pad, hi - pad, _SHOOTING_CANDIDATES)
    samples = []
    causes: dict[str, int] = {}
    for x in cand:
        try:
            path = propagate(medium, p0, float(x), pN.z)
        except TotalReflectionError:
            causes["total_reflection"] = causes.get("total_reflection", 0) + 1
        except (NoIntersectionError, DegenerateSegmentError):
            causes["no_intersection"] = causes.get("no_intersection", 0) + 1
        else:
            samples.append((float(x), path.points[-1].x - pN.x))
    return samples, causes


def solve_shooting(medium: Medium, p0: Point2, pN: Point2,
                   opts: SolverOptions = SolverOptions()) -> GoatSolution:
    """Shooting on the first crossing: bracket a sign change of the terminal
    miss among equispaced candidates (skipping rays lost to total reflection),
    then refine by bisection and a secant polish.

    If several roots exist the minimal-ToF one is returned and flagged.
    """
    def fp(x):
        return propagate(medium, p0, x, pN.z).points[-1].x - pN.x

    samples, causes = _shooting_scan(medium, p0, pN)
    evals = len(samples)
    brackets = []
    for (xa, fa), (xb, fb) in zip(samples, samples[1:]):
        if fa == 0.0:
            brackets.append((xa, xa, fa, fa))
        elif fa * fb < 0.0:
            brackets.append((xa, xb, fa, fb))
    if samples and samples[-1][1] == 0.0:
        xa, fa = samples[-1]
        brackets.append((xa, xa, fa, fa))
    if not brackets:
        raise NoBracketError(
            "terminal miss never changes sign across the scan "
            f"({len(samples)} rays evaluated, skipped: {causes})", causes=causes)

    roots = []
    for xa, xb, fa, fb in brackets:
        if xa == xb:
            roots.append(xa)
            continue
        for _ in range(200):
            xm = 0.5 * (xa + xb)
            try:
                fm = fp(xm)
            except (TotalReflectionError, NoIntersectionError,
                    DegenerateSegmentError):
                # Mid-bracket failure: shrink toward the side closer to a root.
                xa = xa + 0.25 * (xm - xa)
                fa = fp(xa)
                continue
            evals += 1
            if abs(fm) <= _FP_TOL or (xb - xa) < 1e-17:
                xa = xb = xm
                fa = fb = fm
                break
            if fa * fm <= 0.0:
                xb, fb = xm, fm
            else:
                xa, fa = xm, fm
        x_prev, f_prev = xa, fa
        x_cur, f_cur = (xb, fb) if xb != xa else (xa + 1e-12, fp(xa + 1e-12))
        for _ in range(12):
            if f_cur == f_prev or abs(f_cur) < 1e-16:
                break
            x_next = x_cur - f_cur * (x_cur - x_prev) / (f_cur - f_prev)
            try:
                f_next = fp(x_next)
            except (TotalReflectionError, NoIntersectionError,
                    DegenerateSegmentError):
                break
            evals += 1
            if abs(f_next) >= abs(f_cur):
                break
            x_prev, f_prev, x_cur, f_cur = x_cur, f_cur, x_next, f_next
        roots.append(x_cur)

    # Deduplicate near-identical roots from adjacent brackets.
    uniq: list[float] = []
    for r in sorted(roots):
        if not uniq or abs(r - uniq[-1]) > 1e-9:
            uniq.append(r)

    solutions = []
    for r in uniq:
        path = propagate(medium, p0, r, pN.z)
        xs = tuple(q.x for q in path.points[1:-1])
        solutions.append((path.tof_total, xs))
    solutions.sort(key=lambda s: s[0])
    tof, xs = solutions[0]
    return _verify_and_build(medium, p0, pN, xs, evals, "shooting", opts,
                             multiple_roots=len(solutions) > 1)


def solve(medium: Medium, p0: Point2, pN: Point2,
          opts: SolverOptions = SolverOptions()) -> GoatSolution:
    """Hybrid driver: Newton from the straight-ray guess, shooting fallback,
    Newton polish of the shooting crossings.

    Focus points that lie above the last interface are handled by truncating
    the stack to the layers above the focus; a focus inside the first layer
    reduces to the straight single-layer ray.
    """
    layer = medium.layer_of(pN)
    if layer == 1:
        seg = p0.dist(pN)
        if seg < MIN_SEGMENT:
            raise DegenerateSegmentError("source and focus coincide")
        tof = seg / medium.speeds[0]
        path = RayPath((p0, pN), (), (), (), (tof,), tof)
        return GoatSolution((), path, tof, 0, 0.0, "newton")
    sub = medium.truncated(layer)

    try:
        return solve_newton(sub, p0, pN, opts)
    except (NonConvergenceError, NoIntersectionError, DegenerateSegmentError,
            TotalReflectionError):
        if not opts.bisection_fallback:
            raise
    try:
        shot = solve_shooting(sub, p0, pN, opts)
    except NoBracketError as exc:
        n_skipped = sum(exc.causes.values())
        if n_skipped and exc.causes.get("total_reflection", 0) == n_skipped:
            raise TotalReflectionError(
                "every launch candidate is totally reflected; no transmitted "
                "path reaches the focus", ratio=None) from exc
        raise
    try:
        polished = solve_newton(sub, p0, pN, opts, x0=np.asarray(shot.xs))
        return GoatSolution(polished.xs, polished.path, polished.tof,
                            shot.iterations + polished.iterations,
                            polished.residual_norm, "hybrid",
                            shot.multiple_roots)
    except (NonConvergenceError, TotalReflectionError):
        return GoatSolution(shot.xs, shot.path, shot.tof, shot.iterations,
                            shot.residual_norm, "hybrid", shot.multiple_roots)


def tof_of_path(medium: Medium, points) -> float:
    """Time of flight along an explicit point chain: sum of segment length
    over layer speed, one segment per layer."""
    pts = list(points)
    if len(pts) != medium.num_layers + 1:
        raise ValueError(
            f"expected {medium.num_layers + 1} points, got {len(pts)}")
    total = 0.0
    for i in range(len(pts) - 1):
        seg = pts[i].dist(pts[i + 1])
        if seg < MIN_SEGMENT:
            raise DegenerateSegmentError(
                f"degenerate segment between {pts[i]} and {pts[i + 1]}")
        total += seg / medium.speeds[i]
    return total


def hmfa_tof(p0: Point2, pN: Point2, c: float) -> float:
    """Straight-line time of flight at a single assumed speed."""
    if not c > 0:
        raise ValueError("speed must be positive")
    return p0.dist(pN) / c
