"""First-order necessary-condition residuals.

For a candidate trajectory this module evaluates, on the exact scale
arithmetic, the Euler-Lagrange equation in differential and integral
form, the natural boundary conditions for free endpoints, and the
specialized h-difference / q-difference forms of the equation. All
derivatives of composite quantities are taken by tabulating the quantity
on the scale and applying the exact difference quotient, never by nested
finite differences.

With a constraint integrand F and multipliers (lam0, lam), every residual
is formed from H = lam0 * L - lam * F; the unconstrained equation is the
special case (1, 0).

Conventions for the weighted quantities, delta flavor, left anchor:

    I(t) = integral from sigma(t) to b of d4H        (inner integral)
    P(t) = d3H(t) + d3g(t) * I(t)
    R(t) = d2H(t) + d2g(t) * I(t) - P_delta(t)       (the EL residual)
    Q(t) = P(t) + integral from t to b of (d2H + d2g * I)

Nabla flavor replaces sigma by rho and the delta derivative/integral by
their nabla counterparts; a right-anchored integral state reverses the
direction of I. Oriented integrals make the endpoint cases (sigma(t) or
rho(t) falling outside [a, b]) come out right without special handling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .errors import (
    BadParameters,
    EndpointNotFree,
    FlavorMismatch,
    ScaleKindMismatch,
    TrajectoryDomainError,
)
from .problem import Frame, ProblemSpec, Trajectory, carried_indices, make_trajectory
from .timescale import GridFunction, TimeScale

__all__ = [
    "ResidualReport",
    "inner_integral",
    "el_residual",
    "el_residual_integral_form",
    "natural_boundary_residuals",
    "corollary_residual",
    "variation_pairings",
]


@dataclass(frozen=True)
class ResidualReport:
    """Pointwise residual plus boundary and integral-form summaries.

    Boundary residuals are present exactly for the free endpoints.
    tol_suggested is the default pass threshold for "satisfies the
    equation": 1e-6 * (1 + max |d2H|), reflecting the precision limit of
    the numeric partial derivatives.
    """

    pointwise: GridFunction
    max_abs: float
    boundary_left: float | None
    boundary_right: float | None
    integral_form_deviation: float
    multipliers_used: tuple[float, float]
    tol_suggested: float


def _as_trajectory(spec: ProblemSpec, y) -> Trajectory:
    if isinstance(y, Trajectory):
        return y
    return make_trajectory(spec, y)


def _h_partial(spec: ProblemSpec, var: str, env: dict, lam0: float, lam: float):
    """Partial of H = lam0*L - lam*F with respect to one Lagrangian slot."""
    out = lam0 * ex.partial(spec.L, var, env)
    if spec.F is not None and lam != 0.0:
        out = out - lam * ex.partial(spec.F, var, env)
    return out


class _Tableau:
    """All per-kappa-point arrays the residual formulas draw from."""

    def __init__(self, spec: ProblemSpec, fr: Frame, lam0: float, lam: float):
        self.spec, self.fr = spec, fr
        self.m = fr.kappa_hi - fr.kappa_lo + 1
        env = fr.env()
        shape = np.broadcast_shapes(np.shape(env["y"]), np.shape(env["t"]))
        self.d2H = np.broadcast_to(_h_partial(spec, "y", env, lam0, lam), shape)
        self.d3H = np.broadcast_to(_h_partial(spec, "v", env, lam0, lam), shape)
        self.d4H = np.broadcast_to(_h_partial(spec, "z", env, lam0, lam), shape)
        genv = {k: env[k] for k in ("t", "y", "v")} | spec.params
        self.d2g = np.broadcast_to(ex.partial(spec.g, "y", genv), shape)
        self.d3g = np.broadcast_to(ex.partial(spec.g, "v", genv), shape)
        for label, arr in (("d2H", self.d2H), ("d3H", self.d3H), ("d4H", self.d4H),
                           ("d2g", self.d2g), ("d3g", self.d3g)):
            if not np.all(np.isfinite(arr)):
                bad = env["t"][np.argmax(~np.isfinite(np.atleast_2d(arr))[0])]
                raise TrajectoryDomainError(
                    f"partial derivative {label} is non-finite near t={bad!r}"
                )
        # cumulative cells of the inner integrand, indexed by carried
        # position: C[p] - C[q] integrates d4H between positions q and p
        zeros = np.zeros(shape[:-1] + (1,))
        self.C = np.concatenate([zeros, np.cumsum(fr.w * self.d4H, axis=-1)], axis=-1)
        shifted = self.C[..., 1:] if spec.flavor == "delta" else self.C[..., :-1]
        if spec.z_anchor == "left":
            self.I = self.C[..., fr.i_b : fr.i_b + 1] - shifted
        else:
            self.I = shifted - self.C[..., fr.i_a : fr.i_a + 1]
        self.P = self.d3H + self.d3g * self.I
        self.E = self.d2H + self.d2g * self.I

    def residual(self):
        """EL residual values and the carried position of the first one."""
        fr = self.fr
        if self.spec.flavor == "delta":
            dP = (self.P[..., 1:] - self.P[..., :-1]) / fr.w[:-1]
            return self.E[..., :-1] - dP, fr.kappa_lo
        dP = (self.P[..., 1:] - self.P[..., :-1]) / fr.w[1:]
        return self.E[..., 1:] - dP, fr.kappa_lo + 1

    def integral_form(self):
        """Q values on the kappa points and the first carried position."""
        fr = self.fr
        zeros = np.zeros(self.E.shape[:-1] + (1,))
        Ce = np.concatenate([zeros, np.cumsum(fr.w * self.E, axis=-1)], axis=-1)
        tail = Ce[..., :-1] if self.spec.flavor == "delta" else Ce[..., 1:]
        return self.P + (Ce[..., fr.i_b : fr.i_b + 1] - tail), fr.kappa_lo

    def tol_suggested(self) -> float:
        return float(1e-6 * (1.0 + np.max(np.abs(self.d2H))))


def _boundary(spec: ProblemSpec, fr: Frame) -> tuple[float | None, float | None]:
    """Natural-boundary residuals from the L-only tableau, free ends only."""
    tab = _Tableau(spec, fr, 1.0, 0.0)
    left = float(tab.P[..., 0]) if spec.left_bc is None else None
    right = float(tab.P[..., -1]) if spec.right_bc is None else None
    return left, right


def inner_integral(spec: ProblemSpec, y, lam0: float, lam: float,
                   flavor: str | None = None) -> GridFunction:
    """The running integral of d4H that the z-dependence feeds into the
    Euler-Lagrange equation: from sigma(t) (delta) or rho(t) (nabla) to b
    for the left-anchored state, from a up to the shifted point for the
    right-anchored one. Values on the kappa points of the carried range."""
    if flavor is not None and flavor != spec.flavor:
        raise FlavorMismatch(
            f"requested {flavor} integral on a {spec.flavor}-flavored problem"
        )
    traj = _as_trajectory(spec, y)
    fr = Frame(spec, traj.y.values, traj.y.start)
    tab = _Tableau(spec, fr, lam0, lam)
    return GridFunction(spec.scale, np.asarray(tab.I, dtype=float),
                        start=fr.start + fr.kappa_lo)


def el_residual(spec: ProblemSpec, y, lam0: float = 1.0, lam: float = 0.0) -> ResidualReport:
    """Euler-Lagrange residual report in differential form.

    The pointwise residual is

        R(t) = d2H + d2g * I - D(d3H + d3g * I)

    with D the exact delta (nabla) difference quotient, on every point of
    the carried range where D is defined. Natural-boundary residuals are
    included for free endpoints.
    """
    traj = _as_trajectory(spec, y)
    fr = Frame(spec, traj.y.values, traj.y.start)
    tab = _Tableau(spec, fr, lam0, lam)
    rvals, pos = tab.residual()
    rvals = np.asarray(rvals, dtype=float)
    qvals, _ = tab.integral_form()
    deviation = float(np.max(np.abs(qvals - np.mean(qvals))))
    left = right = None
    if spec.left_bc is None or spec.right_bc is None:
        left, right = _boundary(spec, fr)
    return ResidualReport(
        pointwise=GridFunction(spec.scale, rvals, start=fr.start + pos),
        max_abs=float(np.max(np.abs(rvals))),
        boundary_left=left,
        boundary_right=right,
        integral_form_deviation=deviation,
        multipliers_used=(lam0, lam),
        tol_suggested=tab.tol_suggested(),
    )


def el_residual_integral_form(spec: ProblemSpec, y, lam0: float = 1.0,
                              lam: float = 0.0) -> ResidualReport:
    """Euler-Lagrange residual report in integral form.

    Tabulates Q(t) = d3H + d3g * I + integral from t to b of (d2H + d2g * I)
    on the kappa points; the equation holds exactly when Q is constant, so
    the pointwise field is Q minus its mean and max_abs equals the
    reported deviation.
    """
    traj = _as_trajectory(spec, y)
    fr = Frame(spec, traj.y.values, traj.y.start)
    tab = _Tableau(spec, fr, lam0, lam)
    qvals, pos = tab.integral_form()
    centered = np.asarray(qvals - np.mean(qvals), dtype=float)
    deviation = float(np.max(np.abs(centered)))
    left = right = None
    if spec.left_bc is None or spec.right_bc is None:
        left, right = _boundary(spec, fr)
    return ResidualReport(
        pointwise=GridFunction(spec.scale, centered, start=fr.start + pos),
        max_abs=deviation,
        boundary_left=left,
        boundary_right=right,
        integral_form_deviation=deviation,
        multipliers_used=(lam0, lam),
        tol_suggested=tab.tol_suggested(),
    )


def natural_boundary_residuals(spec: ProblemSpec, y) -> tuple[float | None, float | None]:
    """Residuals of the transversality conditions at the free endpoints.

    Each value is d3L + d3g * I evaluated at the endpoint, with I the
    oriented inner integral of d4L; it vanishes exactly when the
    corresponding natural boundary condition holds. Fixed endpoints
    report None; raises EndpointNotFree when both are fixed.
    """
    if spec.left_bc is not None and spec.right_bc is not None:
        raise EndpointNotFree("both endpoint values are fixed")
    carried_indices(spec)  # raises if the free side lacks its shift point
    traj = _as_trajectory(spec, y)
    fr = Frame(spec, traj.y.values, traj.y.start)
    return _boundary(spec, fr)


def _uniform_step(ts: TimeScale) -> float | None:
    gaps = np.diff(ts.points)
    h = float(gaps[0])
    return h if np.all(np.abs(gaps - h) <= 1e-9 * ts.span) else None


def _common_ratio(ts: TimeScale) -> float | None:
    pts = ts.points
    if pts[0] <= 0:
        return None
    ratios = pts[1:] / pts[:-1]
    q = float(ratios[0])
    if q <= 1 or not np.all(np.abs(ratios - q) <= 1e-9 * q):
        return None
    return q


def corollary_residual(spec: ProblemSpec, y, lam0: float, lam: float,
                       kind: str) -> GridFunction:
    """Euler-Lagrange residual via the specialized difference-calculus forms.

    kind "h_calculus" uses the forward h-difference (f(t+h) - f(t)) / h on
    an equally spaced scale; kind "q_calculus" uses the quantum difference
    (f(q*t) - f(t)) / ((q-1) * t) on a geometric scale. Sums are written
    out term by term with their Cauchy weights (h, respectively (q-1)*tau),
    deliberately avoiding the vectorized engine, so that agreement with
    el_residual is a meaningful cross-check and not a tautology.
    """
    if spec.flavor != "delta":
        raise FlavorMismatch("the specialized difference forms are stated for delta flavor")
    if spec.z_anchor != "left":
        raise ScaleKindMismatch("the specialized forms assume the left-anchored state")
    if kind == "h_calculus":
        h = _uniform_step(spec.scale)
        if h is None:
            raise ScaleKindMismatch("scale points are not equally spaced")

        def mu_of(t):
            return h

    elif kind == "q_calculus":
        q = _common_ratio(spec.scale)
        if q is None:
            raise ScaleKindMismatch("scale points are not a geometric ladder with q > 1")

        def mu_of(t):
            return (q - 1.0) * t

    else:
        raise ScaleKindMismatch(f"unknown kind {kind!r}; use h_calculus or q_calculus")

    traj = _as_trajectory(spec, y)
    yg = traj.y
    pts = [float(t) for t in yg.domain_points]
    yv = [float(v) for v in yg.values]
    n = len(pts)
    ts = spec.scale
    i_a, i_b = ts.index(spec.a) - yg.start, ts.index(spec.b) - yg.start

    def forward_diff(f, i):
        return (f[i + 1] - f[i]) / mu_of(pts[i])

    # integral state by explicit left-to-right accumulation
    z = [0.0] * n
    for i in range(1, n):
        gi = ex.evaluate(spec.g, {"t": pts[i - 1], "y": yv[i], "v": forward_diff(yv, i - 1),
                                  **spec.params})
        z[i] = z[i - 1] + mu_of(pts[i - 1]) * gi
    z = [zi - z[i_a] for zi in z]

    def slot_env(i):
        return {"t": pts[i], "y": yv[i + 1], "v": forward_diff(yv, i), "z": z[i],
                **spec.params}

    def hpart(var, i):
        env = slot_env(i)
        val = lam0 * ex.partial(spec.L, var, env)
        if spec.F is not None and lam != 0.0:
            val -= lam * ex.partial(spec.F, var, env)
        return val

    d4 = [hpart("z", i) for i in range(n - 1)]

    def inner_sum(i):
        # sum of d4H from the point after t up to the last point below b;
        # at t = b itself the single backward cell appears with a minus
        if i == i_b:
            return -mu_of(pts[i]) * d4[i]
        total = 0.0
        for j in range(i + 1, i_b):
            total += mu_of(pts[j]) * d4[j]
        return total

    P = []
    for i in range(n - 1):
        env = slot_env(i)
        d3 = hpart("v", i)
        d3g = ex.partial(spec.g, "v", {k: env[k] for k in ("t", "y", "v")} | spec.params)
        P.append(d3 + d3g * inner_sum(i))
    out = []
    for i in range(n - 2):
        env = slot_env(i)
        d2 = hpart("y", i)
        d2g = ex.partial(spec.g, "y", {k: env[k] for k in ("t", "y", "v")} | spec.params)
        out.append(d2 + d2g * inner_sum(i) - forward_diff(P, i))
    return GridFunction(ts, np.array(out), start=yg.start)


def variation_pairings(ts: TimeScale, f, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Cauchy-sum pairings of f against the interior indicator variations.

    For each interior point t_j of [a, b] the variation eta_j is 1 at t_j
    and 0 elsewhere (so eta_j(a) = eta_j(b) = 0); the pairing is the full
    delta integral of f * eta_j(sigma(t)) over [a, b), written out as its
    Cauchy sum. f is a GridFunction or an array of values over the whole
    scale. Returns the interior points and their pairings.
    """
    if isinstance(f, GridFunction):
        fval = f.value_at
    else:
        fa = np.asarray(f, dtype=float)
        if fa.shape != ts.points.shape:
            raise BadParameters(
                f"f must cover the whole scale: expected {ts.points.size} "
                f"values, got {fa.size}"
            )

        def fval(t):
            return float(fa[ts.index(t)])

    ia, ib = ts.index(a), ts.index(b)
    interior = ts.points[ia + 1 : ib]
    pairings = []
    for tj in interior:
        total = 0.0
        for i in range(ia, ib):
            t = ts.points[i]
            eta_sigma = 1.0 if ts.index(ts.sigma(t)) == ts.index(tj) else 0.0
            total += ts.mu(t) * fval(t) * eta_sigma
        pairings.append(total)
    return interior.copy(), np.array(pairings)
