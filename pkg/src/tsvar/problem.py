"""Variational problem assembly.

A ProblemSpec bundles a Lagrangian L(t, y, v, z), the generator g(t, y, v)
of the integral state z, an optional isoperimetric integrand F with its
target gamma, the interval [a, b] on a finite scale, boundary data, and
the calculus flavor (delta or nabla).

In delta flavor the Lagrangian slots are filled with (t, y(sigma(t)),
y_delta(t), z(t)); in nabla flavor with (t, y(rho(t)), y_nabla(t), z(t)).

The integral state can be anchored at either end of the interval:

    anchor "left"  (the usual form):  z(t) = integral from a to t of g
    anchor "right":                   z(t) = integral from t to b of g

The right anchor arises when a delta problem is rewritten as a nabla
problem on the reflected scale: the reflection reverses the direction of
accumulation. Reports and solvers handle both anchors in both flavors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import expressions as ex
from .errors import (
    NoPointBelowA,
    NoPointBeyondB,
    PointNotInScale,
    TrajectoryDomainError,
)
from .timescale import GridFunction, TimeScale

__all__ = [
    "ProblemSpec",
    "Trajectory",
    "validate",
    "accumulate_z",
    "make_trajectory",
    "trajectory_norm",
    "carried_indices",
]

L_VARS = ("t", "y", "v", "z")
G_VARS = ("t", "y", "v")


@dataclass(frozen=True)
class ProblemSpec:
    """A complete variational problem on a finite time scale.

    left_bc / right_bc are fixed endpoint values, or None for a free
    endpoint. Parameters are named constants available to all three
    expressions.
    """

    scale: TimeScale
    a: float
    b: float
    flavor: str  # "delta" | "nabla"
    L: ex.Expression
    g: ex.Expression
    F: ex.Expression | None = None
    gamma: float | None = None
    left_bc: float | None = None
    right_bc: float | None = None
    params: dict = field(default_factory=dict)
    z_anchor: str = "left"

    def with_(self, **kw) -> "ProblemSpec":
        return replace(self, **kw)


def validate(spec: ProblemSpec) -> list[str]:
    """Structural diagnostics; an empty list means the spec is well formed.

    Each diagnostic is a short code followed by an explanation, for
    example "MissingGamma: constraint integrand F is set but gamma is not".
    """
    out: list[str] = []
    ts = spec.scale
    if spec.flavor not in ("delta", "nabla"):
        out.append(f"BadFlavor: flavor must be 'delta' or 'nabla', got {spec.flavor!r}")
    if spec.z_anchor not in ("left", "right"):
        out.append(f"BadAnchor: z_anchor must be 'left' or 'right', got {spec.z_anchor!r}")
    ia = ib = None
    try:
        ia = ts.index(spec.a)
    except PointNotInScale:
        out.append(f"EndpointNotInScale: a={spec.a!r} is not a scale point")
    try:
        ib = ts.index(spec.b)
    except PointNotInScale:
        out.append(f"EndpointNotInScale: b={spec.b!r} is not a scale point")
    if ia is not None and ib is not None:
        if not ia < ib:
            out.append(f"BadInterval: need a < b, got a={spec.a!r}, b={spec.b!r}")
        elif ib - ia < 2:
            out.append("NoInteriorPoint: no scale point strictly between a and b")
        if spec.flavor == "delta" and spec.right_bc is None and ib == len(ts) - 1:
            out.append("NoPointBeyondB: free right endpoint in delta flavor needs b < max(scale)")
        if spec.flavor == "nabla" and spec.left_bc is None and ia == 0:
            out.append("NoPointBelowA: free left endpoint in nabla flavor needs a > min(scale)")
    if spec.F is not None and spec.gamma is None:
        out.append("MissingGamma: constraint integrand F is set but gamma is not")
    if spec.F is None and spec.gamma is not None:
        out.append("MissingF: gamma is set but the constraint integrand F is not")
    for name, val in spec.params.items():
        if not np.isfinite(val):
            out.append(f"NonFiniteParam: parameter {name!r} = {val!r}")
    allowed_L = set(L_VARS) | set(spec.params)
    allowed_g = set(G_VARS) | set(spec.params)
    for label, expr, allowed in (
        ("L", spec.L, allowed_L),
        ("g", spec.g, allowed_g),
        ("F", spec.F, allowed_L),
    ):
        if expr is None:
            continue
        stray = ex.variables_in(expr) - allowed
        if stray:
            out.append(f"UnknownVariable: {label} references {sorted(stray)}")
    return out


def carried_indices(spec: ProblemSpec) -> tuple[int, int]:
    """Scale index range [lo, hi] a trajectory must cover.

    The range is [a, b], extended one point to the right for a free right
    endpoint in delta flavor (the natural boundary condition needs
    y(sigma(b))), and one point to the left for a free left endpoint in
    nabla flavor (it needs y(rho(a))).
    """
    ts = spec.scale
    lo, hi = ts.index(spec.a), ts.index(spec.b)
    if spec.flavor == "delta" and spec.right_bc is None:
        hi += 1
        if hi >= len(ts.points):
            raise NoPointBeyondB(
                f"free right endpoint needs a scale point beyond b = {spec.b}"
            )
    if spec.flavor == "nabla" and spec.left_bc is None:
        lo -= 1
        if lo < 0:
            raise NoPointBelowA(
                f"free left endpoint needs a scale point below a = {spec.a}"
            )
    return lo, hi


@dataclass(frozen=True)
class Trajectory:
    """Candidate y together with its derived integral state z.

    y covers the carried range of the spec; z is recomputed from y and is
    never an independent quantity.
    """

    y: GridFunction
    z: GridFunction


def accumulate_z(spec: ProblemSpec, y: GridFunction) -> GridFunction:
    """Integral state z from y, on the full domain of y.

    Delta flavor evaluates g at (t, y(sigma(t)), y_delta(t)), nabla at
    (t, y(rho(t)), y_nabla(t)). Left anchor sets z(a) = 0 and accumulates
    forward; right anchor sets z(b) = 0 and accumulates backward. Values
    beyond the anchored interval follow the oriented-integral convention.
    """
    vals = _accumulate_z_values(spec, y.domain_points, y.values, y.start)
    return GridFunction(spec.scale, vals, start=y.start)


def _accumulate_z_values(spec: ProblemSpec, pts: np.ndarray, yv: np.ndarray, start: int,
                         strict: bool = True):
    """Core of accumulate_z, shared with the batched solver path.

    `yv` may be (n,) or (k, n); the result has the same shape. With
    strict=False a non-finite g evaluation is left in place for the caller
    to detect instead of raising.
    """
    ts = spec.scale
    gaps = np.diff(pts)  # (n-1,)
    yd = (yv[..., 1:] - yv[..., :-1]) / gaps
    if spec.flavor == "delta":
        t_k, y_k = pts[:-1], yv[..., 1:]  # g at t uses y(sigma(t))
    else:
        t_k, y_k = pts[1:], yv[..., :-1]  # g at t uses y(rho(t))
    env = {"t": t_k, "y": y_k, "v": yd, **spec.params}
    gv = np.broadcast_to(ex.eval_array(spec.g, env), yd.shape)
    if strict and not np.all(np.isfinite(gv)):
        _raise_pointwise(spec.g, env, t_k, "g")
    cells = gaps * gv  # Cauchy cell contributions, one per gap
    ia = ts.index(spec.a) - start
    ib = ts.index(spec.b) - start
    zeros = np.zeros(yv.shape[:-1] + (1,))
    if spec.z_anchor == "left":
        # z(t) = sum of cells between a and t, zero at a, oriented below a
        cum = np.concatenate([zeros, np.cumsum(cells, axis=-1)], axis=-1)
        return cum - cum[..., ia : ia + 1]
    # right anchor: z(t) = sum of cells between t and b, zero at b
    cum = np.concatenate([zeros, np.cumsum(cells, axis=-1)], axis=-1)
    return cum[..., ib : ib + 1] - cum


def _raise_pointwise(expr, env, t_k, label):
    """Re-run a failed vector evaluation point by point for a precise error."""
    n = np.shape(t_k)[-1] if np.ndim(t_k) else 1
    for j in range(n):
        point_env = {}
        for k, v in env.items():
            if isinstance(v, np.ndarray) and v.ndim >= 1:
                point_env[k] = float(v.reshape(-1, v.shape[-1])[0, j])
            else:
                point_env[k] = float(v)
        try:
            ex.evaluate(expr, point_env)
        except Exception as exc:
            raise type(exc)(f"{label} at t={point_env.get('t')!r}: {exc}") from None
    raise TrajectoryDomainError(f"{label}: non-finite evaluation")


def make_trajectory(spec: ProblemSpec, y) -> Trajectory:
    """Build a Trajectory from y values on the carried range.

    `y` is a GridFunction or an array of values aligned with the carried
    range. Fixed boundary values must match the spec exactly.
    """
    lo, hi = carried_indices(spec)
    n = hi - lo + 1
    if isinstance(y, GridFunction):
        if y.scale != spec.scale:
            raise TrajectoryDomainError("trajectory scale differs from the problem scale")
        if y.start > lo or y.stop < hi + 1:
            raise TrajectoryDomainError(
                f"trajectory must cover scale indices [{lo}, {hi}], "
                f"got [{y.start}, {y.stop - 1}]"
            )
        yg = GridFunction(spec.scale, y.values[lo - y.start : hi + 1 - y.start], start=lo)
    else:
        vals = np.asarray(y, dtype=float)
        if vals.shape != (n,):
            raise TrajectoryDomainError(f"expected {n} trajectory values, got {vals.shape}")
        yg = GridFunction(spec.scale, vals, start=lo)
    ts = spec.scale
    for bc, t in ((spec.left_bc, spec.a), (spec.right_bc, spec.b)):
        if bc is not None and yg.value_at(t) != bc:
            raise TrajectoryDomainError(
                f"fixed boundary value at t={t!r} is {yg.value_at(t)!r}, spec says {bc!r}"
            )
    return Trajectory(y=yg, z=accumulate_z(spec, yg))


def trajectory_norm(spec: ProblemSpec, traj: Trajectory) -> float:
    """Sup-norm of the shifted value plus sup-norm of the derivative.

    Delta: sup |y(sigma(t))| + sup |y_delta(t)| over [a, b] less its
    maximum; nabla uses y(rho(t)), y_nabla(t) over [a, b] less its minimum.
    """
    fr = Frame(spec, traj.y.values, start=traj.y.start)
    ksl = fr.kappa_slice()
    return float(np.max(np.abs(fr.y_shift[..., ksl])) + np.max(np.abs(fr.yd[..., ksl])))


class Frame:
    """Tabulated per-point quantities shared by residuals and the solver.

    Works on a single trajectory (values shape (n,)) or a batch (k, n);
    every derived array keeps the leading batch axes. Index arithmetic is
    local to the carried range: position i corresponds to scale index
    start + i.
    """

    def __init__(self, spec: ProblemSpec, yv: np.ndarray, start: int, strict: bool = True):
        ts = spec.scale
        self.spec = spec
        self.start = start
        n = yv.shape[-1]
        self.pts = ts.points[start : start + n]
        self.i_a = ts.index(spec.a) - start
        self.i_b = ts.index(spec.b) - start
        self.yv = yv
        self.gaps = np.diff(self.pts)
        self.yd_full = (yv[..., 1:] - yv[..., :-1]) / self.gaps
        self.z = _accumulate_z_values(spec, self.pts, yv, start, strict=strict)
        if spec.flavor == "delta":
            # kappa points are positions 0 .. n-2; weights mu, shift sigma
            self.kappa_lo, self.kappa_hi = 0, n - 2
            self.t_k = self.pts[:-1]
            self.w = self.gaps
            self.y_shift = yv[..., 1:]
            self.yd = self.yd_full
            self.z_k = self.z[..., :-1]
        else:
            # kappa points are positions 1 .. n-1; weights nu, shift rho
            self.kappa_lo, self.kappa_hi = 1, n - 1
            self.t_k = self.pts[1:]
            self.w = self.gaps
            self.y_shift = yv[..., :-1]
            self.yd = self.yd_full
            self.z_k = self.z[..., 1:]

    def kappa_positions(self) -> np.ndarray:
        """Carried-range positions of the kappa points, ascending."""
        return np.arange(self.kappa_lo, self.kappa_hi + 1)

    def kappa_slice(self) -> slice:
        """Slice into the kappa-aligned arrays (t_k, w, y_shift, yd, z_k)."""
        return slice(0, self.kappa_hi - self.kappa_lo + 1)

    def k_of_position(self, pos: int) -> int:
        """Index into kappa-aligned arrays for a carried-range position."""
        if not self.kappa_lo <= pos <= self.kappa_hi:
            raise IndexError(f"position {pos} is not a kappa point")
        return pos - self.kappa_lo

    def env(self, lo: int | None = None, hi: int | None = None) -> dict:
        """Expression bindings over kappa positions lo..hi (inclusive)."""
        lo = self.kappa_lo if lo is None else lo
        hi = self.kappa_hi if hi is None else hi
        i, j = self.k_of_position(lo), self.k_of_position(hi) + 1
        return {
            "t": self.t_k[i:j],
            "y": self.y_shift[..., i:j],
            "v": self.yd[..., i:j],
            "z": self.z_k[..., i:j],
            **self.spec.params,
        }
