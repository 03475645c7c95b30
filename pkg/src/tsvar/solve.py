"""Direct-transcription solver.

The decision vector is the set of free trajectory values (interior points,
free endpoints, and the extra shifted point a free endpoint carries). The
objective and constraint are the exact Cauchy sums of the problem
functionals, differentiated by central finite differences evaluated in one
batched pass. Minimization runs a BFGS quasi-Newton iteration with Armijo
backtracking; an isoperimetric constraint is handled by an augmented
Lagrangian outer loop with multiplier updates.

Solving and certification stay independent: the solver never integrates
the Euler-Lagrange equation, it only minimizes the transcribed functional,
and the returned report re-derives the necessary conditions at the result.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .errors import (
    BadParameters,
    EmptyFeasibleSet,
    LineSearchFailure,
    NotConverged,
    SearchSpaceTooLarge,
    ValidationError,
)
from .problem import (
    Frame,
    ProblemSpec,
    Trajectory,
    _raise_pointwise,
    carried_indices,
    make_trajectory,
    validate,
)
from .residuals import ResidualReport, _Tableau, el_residual

__all__ = [
    "SolveOptions",
    "Solution",
    "evaluate_functionals",
    "gradient",
    "solve_unconstrained",
    "solve_isoperimetric",
    "classify_normality",
    "brute_force_oracle",
]


@dataclass(frozen=True)
class SolveOptions:
    """Iteration controls. Defaults suit desk-scale problems."""

    tol_grad: float = 1e-9
    max_iter: int = 500
    tol_con: float = 1e-8
    maximize: bool = False


@dataclass(frozen=True)
class Solution:
    """Solver output: the trajectory, functional values, multipliers,
    the certifying residual report, and iteration bookkeeping. For
    constrained problems `iterations` counts inner BFGS steps across all
    outer multiplier updates."""

    y: Trajectory
    objective: float
    constraint_value: float | None
    lam0: float
    lam: float | None
    report: ResidualReport
    iterations: int
    converged: bool


def _free_local_indices(spec: ProblemSpec) -> np.ndarray:
    """Indices into the carried value array that the optimizer may move."""
    lo, hi = carried_indices(spec)
    pinned = set()
    if spec.left_bc is not None:
        pinned.add(spec.scale.index(spec.a) - lo)
    if spec.right_bc is not None:
        pinned.add(spec.scale.index(spec.b) - lo)
    return np.array([i for i in range(hi - lo + 1) if i not in pinned], dtype=int)


def _objective_sums(spec: ProblemSpec, yv: np.ndarray, start: int, strict: bool):
    """Cauchy sums of L and F over [a, b] for a value array or batch.

    Returns (L_sums, F_sums_or_None) with one entry per batch row. With
    strict=False a non-finite evaluation yields +inf for that row (the
    line search treats it as a rejected step); with strict=True it is
    re-raised pointwise with the offending t.
    """
    fr = Frame(spec, yv, start, strict=strict)
    sl = slice(fr.i_a, fr.i_b)
    env = {
        "t": fr.t_k[sl],
        "y": fr.y_shift[..., sl],
        "v": fr.yd[..., sl],
        "z": fr.z_k[..., sl],
        **spec.params,
    }
    w = fr.w[sl]

    def total(expr, label):
        vals = w * ex.eval_array(expr, env)
        out = np.sum(np.broadcast_to(vals, env["y"].shape[:-1] + (w.size,)), axis=-1)
        bad = ~np.isfinite(out)
        if np.any(bad):
            if strict:
                row = {k: (v[bad][0] if isinstance(v, np.ndarray) and v.ndim > 1 else v)
                       for k, v in env.items()}
                _raise_pointwise(expr, row, env["t"], label)
            out = np.where(bad, np.inf, out)
        return out

    lsum = total(spec.L, "L")
    fsum = total(spec.F, "F") if spec.F is not None else None
    return lsum, fsum


def evaluate_functionals(spec: ProblemSpec, y) -> tuple[float, float | None]:
    """Objective and constraint values at a trajectory: the weighted sums
    of L and F over the cells of [a, b], with z accumulated from y."""
    traj = y if isinstance(y, Trajectory) else make_trajectory(spec, y)
    lsum, fsum = _objective_sums(spec, traj.y.values, traj.y.start, strict=True)
    return float(lsum), (None if fsum is None else float(fsum))


_FD_STEP = float(np.cbrt(np.finfo(float).eps))  # balances truncation and roundoff


def _fd_batch(yv: np.ndarray, free: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stack of +/- perturbed copies of yv, one pair per free index."""
    steps = _FD_STEP * np.maximum(1.0, np.abs(yv[free]))
    batch = np.tile(yv, (2 * free.size, 1))
    rows = np.arange(free.size)
    batch[2 * rows, free] += steps
    batch[2 * rows + 1, free] -= steps
    return batch, steps


def gradient(spec: ProblemSpec, y) -> tuple[np.ndarray, np.ndarray | None]:
    """Central-difference gradients of the objective and constraint with
    respect to the free trajectory values, in ascending point order."""
    traj = y if isinstance(y, Trajectory) else make_trajectory(spec, y)
    yv = traj.y.values
    free = _free_local_indices(spec)
    batch, steps = _fd_batch(yv, free)
    lsum, fsum = _objective_sums(spec, batch, traj.y.start, strict=True)
    dl = (lsum[0::2] - lsum[1::2]) / (2 * steps)
    df = None if fsum is None else (fsum[0::2] - fsum[1::2]) / (2 * steps)
    return dl, df


class _Merit:
    """Scalar merit function over the free values, with batched gradient."""

    def __init__(self, spec: ProblemSpec, base: np.ndarray, start: int,
                 free: np.ndarray, sign: float):
        self.spec, self.start, self.free, self.sign = spec, start, free, sign
        self.base = base.copy()
        self.lam = 0.0
        self.rho = 0.0
        self.gamma = spec.gamma if spec.gamma is not None else 0.0

    def assemble(self, x: np.ndarray) -> np.ndarray:
        yv = self.base.copy()
        yv[self.free] = x
        return yv

    def _combine(self, lsum, fsum):
        val = self.sign * lsum
        if self.spec.F is not None:
            c = fsum - self.gamma
            val = val - self.lam * c + 0.5 * self.rho * c * c
        return val

    def value(self, x: np.ndarray) -> float:
        lsum, fsum = _objective_sums(self.spec, self.assemble(x), self.start, strict=False)
        return float(self._combine(lsum, fsum))

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        yv = self.assemble(x)
        pert, steps = _fd_batch(yv, self.free)
        batch = np.concatenate([yv[None, :], pert], axis=0)
        lsum, fsum = _objective_sums(self.spec, batch, self.start, strict=True)
        dl = (lsum[1::2] - lsum[2::2]) / (2 * steps)
        g = self.sign * dl
        if self.spec.F is not None:
            c = fsum[0] - self.gamma
            df = (fsum[1::2] - fsum[2::2]) / (2 * steps)
            g = g - (self.lam - self.rho * c) * df
        return float(self._combine(lsum[0], None if fsum is None else fsum[0])), g


def _bfgs(merit: _Merit, x0: np.ndarray, tol_grad: float, max_iter: int,
          hinv: np.ndarray | None = None):
    """Quasi-Newton minimization; returns (x, grad, iterations, status, hinv).

    status is one of "converged", "max_iter", "line_search". The inverse
    Hessian approximation resets to the identity whenever the curvature
    condition fails or a search direction stops being a descent direction.

    Steps whose improvement falls below the resolution of the value are
    still accepted (they carry the quadratic tail of the convergence), but
    once they stop shrinking the gradient the iteration is treading noise
    and stops. Exits other than "converged" hand back the iterate with the
    smallest gradient seen, not the last one, so a noisy tail cannot undo
    earlier progress.
    """
    n = x0.size
    x = x0.astype(float).copy()
    f, g = merit.value_and_grad(x)
    fresh = hinv is None  # a fresh approximation gets curvature-scaled below
    if hinv is None:
        hinv = np.eye(n)
    status = "max_iter"
    iters = 0
    stall = 0
    gmax = float(np.max(np.abs(g), initial=0.0))
    best = (gmax, x.copy(), g.copy(), hinv.copy())
    while iters < max_iter:
        if gmax <= tol_grad:
            status = "converged"
            break
        p = -hinv @ g
        slope = float(p @ g)
        if slope >= 0.0:
            hinv = np.eye(n)
            fresh = True
            p, slope = -g, float(-(g @ g))
        step = 1.0
        fx = None
        gx = None
        resolution = 1e-15 * (1.0 + abs(f))
        if 1e-4 * (-slope) > resolution:
            # the classical backtracking regime: the predicted decrease is
            # measurable, so the Armijo test can do its job
            while step > 1e-14:
                trial = merit.value(x + step * p)
                if trial <= f + 1e-4 * step * slope:
                    fx = trial
                    break
                step *= 0.5
        else:
            # the predicted decrease is below the value's resolution, so
            # the Armijo test cannot tell progress from an overshoot;
            # demand a gradient decrease instead. The gradient is affine
            # in the step for locally quadratic merits, so one secant fit
            # places the second and final trial.
            trial, gt = merit.value_and_grad(x + p)
            if float(np.max(np.abs(gt), initial=0.0)) < gmax:
                fx, gx = trial, gt
            else:
                d = gt - g
                dd = float(d @ d)
                t_star = -float(g @ d) / dd if dd > 0.0 else 0.0
                if 1e-14 < t_star < 1e3:
                    trial, gt = merit.value_and_grad(x + t_star * p)
                    if float(np.max(np.abs(gt), initial=0.0)) < gmax:
                        step, fx, gx = t_star, trial, gt
        if fx is None:
            if np.allclose(hinv, np.eye(n)):
                status = "line_search"
                break
            hinv = np.eye(n)  # retry once along steepest descent
            fresh = True
            continue
        x_new = x + step * p
        if gx is None:
            f_new, g_new = merit.value_and_grad(x_new)
        else:
            f_new, g_new = fx, gx
        s, yk = x_new - x, g_new - g
        sy = float(s @ yk)
        if sy <= 1e-12 * np.linalg.norm(s) * np.linalg.norm(yk):
            hinv = np.eye(n)
            fresh = True
        else:
            if fresh:
                # curvature scaling of the initial approximation; without it
                # the unit metric forces tiny steps on stiff problems
                hinv = np.eye(n) * (sy / float(yk @ yk))
                fresh = False
            hy = hinv @ yk
            hinv = (hinv + np.outer(s, s) * ((sy + yk @ hy) / sy**2)
                    - (np.outer(hy, s) + np.outer(s, hy)) / sy)
        gmax_new = float(np.max(np.abs(g_new), initial=0.0))
        if abs(f - f_new) <= 1e-15 * (1.0 + abs(f)):
            if gmax_new > gmax:
                stall += 5  # flat step that made the gradient worse
            elif gmax_new >= 0.98 * best[0]:
                stall += 1  # flat step, gradient not improving
            else:
                stall = 0
        else:
            stall = 0
        x, f, g, gmax = x_new, f_new, g_new, gmax_new
        iters += 1
        if gmax < best[0]:
            best = (gmax, x.copy(), g.copy(), hinv.copy())
        if stall >= 25:
            status = "line_search"
            break
    if status == "max_iter" and gmax <= tol_grad:
        status = "converged"
    if status != "converged" and best[0] < gmax:
        _, x, g, hinv = best
    return x, g, iters, status, hinv


def _default_init(spec: ProblemSpec) -> np.ndarray:
    """Line between the fixed boundary values, zero on free sides, with the
    fixed values stamped exactly."""
    lo, hi = carried_indices(spec)
    pts = spec.scale.points[lo : hi + 1]
    la = spec.left_bc if spec.left_bc is not None else 0.0
    rb = spec.right_bc if spec.right_bc is not None else 0.0
    yv = la + (rb - la) * (pts - spec.a) / (spec.b - spec.a)
    if spec.left_bc is not None:
        yv[spec.scale.index(spec.a) - lo] = spec.left_bc
    if spec.right_bc is not None:
        yv[spec.scale.index(spec.b) - lo] = spec.right_bc
    return yv


def _init_values(spec: ProblemSpec, y0) -> np.ndarray:
    if y0 is None:
        return _default_init(spec)
    traj = y0 if isinstance(y0, Trajectory) else make_trajectory(spec, y0)
    lo, hi = carried_indices(spec)
    return traj.y.values[lo - traj.y.start : hi + 1 - traj.y.start].copy()


def _has_shift_slack(spec: ProblemSpec) -> bool:
    return (spec.flavor == "delta" and spec.right_bc is None) or (
        spec.flavor == "nabla" and spec.left_bc is None
    )


def _refine_shift_point(spec: ProblemSpec, yv: np.ndarray, start: int,
                        lam0: float, lam: float) -> np.ndarray:
    """Pick the carried shift point so the endpoint condition holds.

    The objective never references the value at sigma(b) (delta, free
    right end) or rho(a) (nabla, free left end), so minimization leaves it
    where it started. Stationarity in the endpoint value itself then makes
    the Euler-Lagrange residual at the adjacent point equal, up to the
    graininess factor, to the transversality quantity P = d3H + d3g * I at
    the endpoint; driving P to zero with a Newton iteration in the shift
    value settles both conditions at once.
    """
    idx = -1 if spec.flavor == "delta" else 0
    yv = yv.copy()

    def endpoint_p(u: float) -> float:
        yv[idx] = u
        tab = _Tableau(spec, Frame(spec, yv, start), lam0, lam)
        return float(tab.P[..., idx])

    u = float(yv[idx])
    p = endpoint_p(u)
    tol = 1e-11 * (1.0 + abs(p))
    for _ in range(60):
        if abs(p) <= tol:
            break
        du = 1e-6 * max(1.0, abs(u))
        dp = (endpoint_p(u + du) - endpoint_p(u - du)) / (2 * du)
        if not np.isfinite(dp) or abs(dp) <= 1e-14 * (1.0 + abs(p)):
            break
        u = u - p / dp
        p = endpoint_p(u)
    yv[idx] = u
    return yv


def _require_valid(spec: ProblemSpec) -> None:
    diags = validate(spec)
    if diags:
        raise ValidationError(diags)


def solve_unconstrained(spec: ProblemSpec, y0=None,
                        opts: SolveOptions | None = None) -> Solution:
    """Extremize the objective functional alone.

    Runs BFGS from y0 (default: the line between the boundary values) and
    certifies the result against the Euler-Lagrange equation and, for free
    endpoints, the natural boundary conditions. A failed line search far
    from stationarity raises LineSearchFailure; running out of iterations
    returns the best iterate with converged=False.
    """
    if spec.F is not None:
        raise BadParameters("constraint present; use solve_isoperimetric")
    _require_valid(spec)
    opts = opts or SolveOptions()
    lo, _ = carried_indices(spec)
    base = _init_values(spec, y0)
    free = _free_local_indices(spec)
    sign = -1.0 if opts.maximize else 1.0
    merit = _Merit(spec, base, lo, free, sign)
    x, g, iters, status, _ = _bfgs(merit, base[free], opts.tol_grad, opts.max_iter)
    if status == "line_search" and np.max(np.abs(g)) > 1e3 * opts.tol_grad:
        raise LineSearchFailure(
            f"no descent step found with gradient norm {np.max(np.abs(g)):.3e}"
        )
    yv = merit.assemble(x)
    if _has_shift_slack(spec):
        yv = _refine_shift_point(spec, yv, lo, 1.0, 0.0)
    traj = make_trajectory(spec, yv)
    lval, _ = evaluate_functionals(spec, traj)
    return Solution(
        y=traj,
        objective=lval,
        constraint_value=None,
        lam0=1.0,
        lam=None,
        report=el_residual(spec, traj, 1.0, 0.0),
        iterations=iters,
        converged=(status == "converged"),
    )


def solve_isoperimetric(spec: ProblemSpec, y0=None,
                        opts: SolveOptions | None = None) -> Solution:
    """Extremize subject to the integral constraint equaling gamma.

    Augmented Lagrangian outer loop: minimize L - lam*c + (rho/2)*c^2 over
    the free values with warm-started BFGS inner solves, then update
    lam <- lam - rho*c. The penalty rho starts at 10 and grows tenfold
    whenever an outer step fails to cut |c| by 4x. The reported lam is the
    post-update multiplier, which is what the certificate equation uses.
    """
    if spec.F is None or spec.gamma is None:
        raise BadParameters("solve_isoperimetric needs both F and gamma")
    _require_valid(spec)
    opts = opts or SolveOptions()
    lo, _ = carried_indices(spec)
    base = _init_values(spec, y0)
    free = _free_local_indices(spec)
    sign = -1.0 if opts.maximize else 1.0
    merit = _Merit(spec, base, lo, free, sign)
    merit.rho = 10.0
    x = base[free].copy()
    hinv = None
    total_iters = 0
    c = np.inf
    c_prev = np.inf
    retried_fresh = False
    for _ in range(40):
        x_before = x
        x, g, iters, status, hinv = _bfgs(merit, x, opts.tol_grad, opts.max_iter, hinv)
        total_iters += iters
        moved = bool(np.any(x != x_before))
        if status == "converged":
            retried_fresh = False
        elif not moved and not retried_fresh:
            # dead round: the warm metric could not improve the iterate at
            # all, so rebuild it from scratch before drawing conclusions
            retried_fresh = True
            hinv = None
            continue
        _, fsum = _objective_sums(spec, merit.assemble(x), lo, strict=True)
        c = float(fsum) - merit.gamma
        merit.lam = merit.lam - merit.rho * c
        if abs(c) <= opts.tol_con and status == "converged":
            break
        if abs(c) <= opts.tol_con and status == "line_search" and retried_fresh:
            break  # feasible, and the gradient floor held twice: stop here
        if abs(c) > 0.25 * abs(c_prev):
            if merit.rho >= 1e12:
                warnings.warn(
                    "constraint violation stagnates with a saturated penalty; "
                    "the constraint may be infeasible for these boundary values",
                    stacklevel=2,
                )
                raise NotConverged(
                    f"constraint violation stagnated at |c| = {abs(c):.3e} "
                    f"with the penalty saturated at {merit.rho:.1e}"
                )
            merit.rho *= 10.0
            hinv = None  # the merit curvature just changed scale
        c_prev = abs(c)
    # Verdict and optional polish at the fixed multiplier. The loop's
    # status describes its path; the converged flag must describe the
    # returned point: Lagrangian stationarity (penalty off) plus
    # feasibility, both measured where the solve actually ended.
    rho_loop = merit.rho

    def _measure(xc):
        merit.rho = 0.0
        _, gv = merit.value_and_grad(xc)
        merit.rho = rho_loop
        _, fs = _objective_sums(spec, merit.assemble(xc), lo, strict=True)
        return float(np.max(np.abs(gv), initial=0.0)), float(fs) - merit.gamma

    gmax_fin, c = _measure(x)
    if abs(c) <= opts.tol_con and gmax_fin > opts.tol_grad:
        # one more inner round from a fresh metric; terminal warm metrics
        # are often stale. Kept only when it measurably helps.
        x2, _, iters, _, _ = _bfgs(merit, x, opts.tol_grad, opts.max_iter, None)
        total_iters += iters
        g2, c2 = _measure(x2)
        if abs(c2) <= opts.tol_con and g2 < gmax_fin:
            x, gmax_fin, c = x2, g2, c2
    converged = gmax_fin <= opts.tol_grad and abs(c) <= opts.tol_con
    lam = sign * merit.lam  # multiplier for the original orientation
    yv = merit.assemble(x)
    if _has_shift_slack(spec):
        yv = _refine_shift_point(spec, yv, lo, 1.0, lam)
    traj = make_trajectory(spec, yv)
    lval, fval = evaluate_functionals(spec, traj)
    return Solution(
        y=traj,
        objective=lval,
        constraint_value=fval,
        lam0=1.0,
        lam=lam,
        report=el_residual(spec, traj, 1.0, lam),
        iterations=total_iters,
        converged=converged,
    )


def classify_normality(spec: ProblemSpec, solution: Solution) -> str:
    """"abnormal" when the solution is an extremal of the constraint
    functional itself (the Euler-Lagrange residual of F alone vanishes),
    "normal" otherwise."""
    probe = el_residual(spec, solution.y, 0.0, -1.0)  # H = F
    return "abnormal" if probe.max_abs <= probe.tol_suggested else "normal"


def brute_force_oracle(spec: ProblemSpec, grid, slack: float = 1e-6) -> Trajectory:
    """Exhaustive minimizer over a finite grid of free-value combinations.

    `grid` is one list of candidate values per free coordinate, in
    ascending point order. Every combination is evaluated; constrained
    problems keep candidates with |F_value - gamma| <= slack. Ties go to
    the lexicographically smallest coordinate tuple (value lists are
    sorted ascending before enumeration). Intended as a small-instance
    test oracle, hence the hard limits of 6 coordinates and 41 values.
    """
    _require_valid(spec)
    lo, _ = carried_indices(spec)
    free = _free_local_indices(spec)
    lists = [sorted(float(v) for v in values) for values in grid]
    if len(lists) != free.size:
        raise BadParameters(f"expected {free.size} value lists, got {len(lists)}")
    if free.size > 6 or any(len(v) > 41 for v in lists):
        raise SearchSpaceTooLarge("oracle limits: at most 6 coordinates, 41 values each")
    if any(len(v) == 0 for v in lists):
        raise EmptyFeasibleSet("a coordinate has no candidate values")
    base = _default_init(spec)
    best_val = np.inf
    best = None
    chunk = 16384
    combos = itertools.product(*lists)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)))
        if block.size == 0:
            break
        batch = np.tile(base, (block.shape[0], 1))
        batch[:, free] = block
        lsum, fsum = _objective_sums(spec, batch, lo, strict=False)
        if fsum is not None:
            lsum = np.where(np.abs(fsum - spec.gamma) <= slack, lsum, np.inf)
        i = int(np.argmin(lsum))  # first minimum wins: lexicographic tie-break
        if lsum[i] < best_val:
            best_val = float(lsum[i])
            best = batch[i].copy()
    if best is None or not np.isfinite(best_val):
        raise EmptyFeasibleSet("no grid candidate satisfies the constraint slack")
    return make_trajectory(spec, best)
