"""Reflection between the delta and nabla calculi.

A delta problem on a scale T maps to a nabla problem on the negated scale
-T: points reflect (t maps to -t), the forward and backward jump
operators swap roles, and the integrands transform by the substitution
t -> -t, v -> -v (the reflected trajectory y*(-t) = y(t) has
y*^rho(-t) = y^sigma(t) and y*^nabla(-t) = -y^delta(t)). The integral
state accumulates from the opposite end after reflection, which is what
the right-anchored state on ProblemSpec expresses; dualizing twice
restores the original problem.

The two residual code paths (delta and nabla) are written once each and
exercised against each other through this map: the dual residual at -t
must equal the primal residual at t, with no leftover sign, and that
agreement is the correspondence duality_check measures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .errors import FlavorMismatch, ScaleMismatch
from .problem import ProblemSpec, Trajectory, make_trajectory
from .residuals import el_residual
from .timescale import GridFunction, TimeScale

__all__ = [
    "DualPair",
    "dualize_scale",
    "dualize_problem",
    "make_dual_pair",
    "reflect_trajectory",
    "duality_check",
]


def dualize_scale(ts: TimeScale) -> TimeScale:
    """The reflected scale: every point negated, re-sorted ascending."""
    return TimeScale(np.sort(-ts.points) + 0.0)  # + 0.0 normalizes -0.0


def _reflect_expr(expr):
    if expr is None:
        return None
    return ex.substitute(expr, {"t": ex.Un("neg", ex.Var("t")),
                                "v": ex.Un("neg", ex.Var("v"))})


def dualize_problem(spec: ProblemSpec) -> ProblemSpec:
    """The same variational problem in the opposite calculus.

    Expressions get the substitution t -> -t, v -> -v; the interval
    becomes [-b, -a] on the reflected scale; the boundary values swap
    ends; gamma and the parameters carry over; the integral state anchors
    at the opposite end. Applying this twice gives back the original
    problem, so both flavors are accepted.
    """
    if spec.flavor not in ("delta", "nabla"):
        raise FlavorMismatch(f"cannot dualize flavor {spec.flavor!r}")
    return ProblemSpec(
        scale=dualize_scale(spec.scale),
        a=-spec.b + 0.0,
        b=-spec.a + 0.0,
        flavor="nabla" if spec.flavor == "delta" else "delta",
        L=_reflect_expr(spec.L),
        g=_reflect_expr(spec.g),
        F=_reflect_expr(spec.F),
        gamma=spec.gamma,
        left_bc=spec.right_bc,
        right_bc=spec.left_bc,
        params=dict(spec.params),
        z_anchor="right" if spec.z_anchor == "left" else "left",
    )


@dataclass(frozen=True)
class DualPair:
    """A delta problem and its nabla reflection, with the point map t -> -t."""

    primal: ProblemSpec
    dual: ProblemSpec

    def map_point(self, t: float) -> float:
        return -t


def make_dual_pair(spec: ProblemSpec) -> DualPair:
    if spec.flavor != "delta":
        raise FlavorMismatch("a dual pair is anchored at a delta-flavored primal")
    return DualPair(primal=spec, dual=dualize_problem(spec))


def reflect_trajectory(pair: DualPair, y) -> Trajectory:
    """The dual-side trajectory y*(-t) = y(t) for a primal trajectory."""
    traj = y if isinstance(y, Trajectory) else make_trajectory(pair.primal, y)
    n_scale = len(pair.primal.scale)
    yg = traj.y
    start_dual = n_scale - yg.stop
    reflected = GridFunction(pair.dual.scale, yg.values[::-1].copy(), start=start_dual)
    return make_trajectory(pair.dual, reflected)


def duality_check(pair: DualPair, y, lam0: float = 1.0, lam: float = 0.0) -> float:
    """Largest mismatch between the primal and reflected residuals.

    Computes the delta residual of y on the primal and the nabla residual
    of the reflected trajectory on the dual, then compares them at matched
    points (t against -t). The two computations share no flavor-specific
    code, so a small value certifies the whole delta/nabla pair of engines
    against each other.
    """
    if not np.array_equal(dualize_scale(pair.primal.scale).points, pair.dual.scale.points):
        raise ScaleMismatch("dual scale is not the reflection of the primal scale")
    traj = y if isinstance(y, Trajectory) else make_trajectory(pair.primal, y)
    if traj.y.scale != pair.primal.scale:
        raise ScaleMismatch("trajectory lives on a different scale than the primal")
    r_primal = el_residual(pair.primal, traj, lam0, lam).pointwise
    r_dual = el_residual(pair.dual, reflect_trajectory(pair, traj), lam0, lam).pointwise
    rp = r_primal.values
    rd = r_dual.values[::-1]  # dual point -t pairs with primal point t
    if rp.shape != rd.shape:
        raise ScaleMismatch("residual domains do not reflect onto each other")
    return float(np.max(np.abs(rp - rd)))
