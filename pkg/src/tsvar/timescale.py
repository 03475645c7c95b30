"""Exact discrete calculus on finite time scales.

A time scale here is a finite, strictly increasing set of real points.
Every point is isolated, so the forward (delta) and backward (nabla)
derivatives are exact difference quotients and the Cauchy integrals are
finite weighted sums. Nothing in this module approximates anything: the
identities of the discrete calculus hold to floating-point roundoff.

Conventions: sigma(max) = max and rho(min) = min, the usual fixed-point
convention at the extremes. Point lookup uses an absolute tolerance of
1e-12 times the scale span, so scales generated through floating-point
arithmetic still index reliably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadParameters,
    DomainTooSmall,
    NonFiniteInput,
    PointNotInScale,
    TooFewPoints,
)

__all__ = [
    "TimeScale",
    "GridFunction",
    "build_scale",
    "generate_scale",
    "jump_operators",
    "derivative",
    "integral",
    "check_condition_H",
    "read_scale_file",
    "write_scale_file",
]


@dataclass(frozen=True)
class TimeScale:
    """Finite sorted point set with jump operators and graininess.

    `points` is an immutable float64 array, strictly increasing, length >= 3.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    # -- basic queries ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.points)

    @property
    def span(self) -> float:
        return float(self.points[-1] - self.points[0])

    @property
    def tol(self) -> float:
        """Absolute tolerance for point identity: 1e-12 of the span."""
        return 1e-12 * self.span

    def index(self, t: float) -> int:
        """Index of the scale point equal to t within tolerance."""
        pts = self.points
        i = int(np.searchsorted(pts, t))
        for j in (i - 1, i):
            if 0 <= j < len(pts) and abs(pts[j] - t) <= self.tol:
                return j
        raise PointNotInScale(f"t={t!r} is not a point of the scale")

    def __contains__(self, t: float) -> bool:
        try:
            self.index(t)
        except PointNotInScale:
            return False
        return True

    # -- jump operators ---------------------------------------------------

    def sigma(self, t: float) -> float:
        """Forward jump: the next point, with sigma(max) = max."""
        i = self.index(t)
        return float(self.points[min(i + 1, len(self.points) - 1)])

    def rho(self, t: float) -> float:
        """Backward jump: the previous point, with rho(min) = min."""
        i = self.index(t)
        return float(self.points[max(i - 1, 0)])

    def mu(self, t: float) -> float:
        """Forward graininess sigma(t) - t."""
        return self.sigma(t) - self.index_value(self.index(t))

    def nu(self, t: float) -> float:
        """Backward graininess t - rho(t)."""
        return self.index_value(self.index(t)) - self.rho(t)

    def index_value(self, i: int) -> float:
        return float(self.points[i])

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeScale) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        pts = self.points
        if len(pts) <= 6:
            inner = ", ".join(repr(float(p)) for p in pts)
        else:
            inner = f"{pts[0]!r}, {pts[1]!r}, ..., {pts[-1]!r} ({len(pts)} points)"
        return f"TimeScale([{inner}])"


@dataclass(frozen=True)
class GridFunction:
    """Real values on a contiguous index range of a time scale.

    `start` is the scale index of the first value. Values are finite and
    immutable after construction.
    """

    scale: TimeScale
    values: np.ndarray
    start: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("grid function values must be one-dimensional")
        if self.start < 0 or self.start + len(vals) > len(self.scale):
            raise ValueError("grid function domain exceeds the scale")
        if len(vals) == 0:
            raise ValueError("grid function needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def stop(self) -> int:
        """One past the last scale index of the domain."""
        return self.start + len(self.values)

    @property
    def domain_points(self) -> np.ndarray:
        return self.scale.points[self.start : self.stop]

    def value_at(self, t: float) -> float:
        i = self.scale.index(t)
        if not self.start <= i < self.stop:
            raise PointNotInScale(f"t={t!r} is outside the grid function domain")
        return float(self.values[i - self.start])

    def __repr__(self):
        return (
            f"GridFunction(on [{self.domain_points[0]!r}, {self.domain_points[-1]!r}],"
            f" {len(self)} values)"
        )


def build_scale(points) -> TimeScale:
    """Validate a point list into a TimeScale.

    Input order is irrelevant; duplicates within 1e-12 of the span are
    merged. Fewer than three surviving points is an error.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.size and not np.all(np.isfinite(pts)):
        raise NonFiniteInput("scale points must be finite")
    if pts.size < 3:
        raise TooFewPoints(f"need at least 3 points, got {pts.size}")
    pts = np.sort(pts)
    tol = 1e-12 * float(pts[-1] - pts[0])
    keep = [0]
    for i in range(1, len(pts)):
        if pts[i] - pts[keep[-1]] > tol:
            keep.append(i)
    pts = pts[keep]
    if len(pts) < 3:
        raise TooFewPoints(f"need at least 3 distinct points, got {len(pts)}")
    return TimeScale(pts)


def generate_scale(kind: str, **kw) -> TimeScale:
    """Generate one of the standard scale families.

    kind="uniform": a, b, n  -> n equally spaced points on [a, b].
    kind="h_z":     h, a, b  -> {a, a+h, ..., b}; (b-a) must be a multiple of h.
    kind="q_scale": q, a, b  -> {a, qa, q^2 a, ..., b}; needs q > 1, 0 < a < b,
                                and b = a q^k for an integer k.
    """
    if kind == "uniform":
        a, b, n = _take(kw, "a", "b", "n")
        n = int(n)
        if n < 3 or not a < b:
            raise BadParameters(f"uniform scale needs n >= 3 and a < b, got n={n}, a={a}, b={b}")
        return TimeScale(np.linspace(a, b, n))
    if kind == "h_z":
        h, a, b = _take(kw, "h", "a", "b")
        if h <= 0 or not a < b:
            raise BadParameters(f"h_z scale needs h > 0 and a < b, got h={h}, a={a}, b={b}")
        k = (b - a) / h
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
            raise BadParameters(f"(b - a)/h = {k} is not an integer")
        k = round(k)
        if k < 2:
            raise BadParameters("h_z scale needs at least 3 points (b >= a + 2h)")
        pts = a + h * np.arange(k + 1, dtype=float)
        pts[-1] = b
        return TimeScale(pts)
    if kind == "q_scale":
        q, a, b = _take(kw, "q", "a", "b")
        if q <= 1 or not 0 < a < b:
            raise BadParameters(f"q_scale needs q > 1 and 0 < a < b, got q={q}, a={a}, b={b}")
        k = math.log(b / a) / math.log(q)
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
            raise BadParameters(f"b/a = {b / a} is not an integer power of q = {q}")
        k = round(k)
        if k < 2:
            raise BadParameters("q_scale needs at least 3 points (b >= a q^2)")
        pts = a * q ** np.arange(k + 1, dtype=float)
        pts[-1] = b
        return TimeScale(pts)
    raise BadParameters(f"unknown scale kind {kind!r}")


def _take(kw: dict, *names):
    missing = [n for n in names if n not in kw]
    extra = [n for n in kw if n not in names]
    if missing or extra:
        raise BadParameters(
            f"scale parameters: missing {missing or 'none'}, unexpected {extra or 'none'}"
        )
    return tuple(float(kw[n]) for n in names)


def jump_operators(ts: TimeScale, t: float) -> tuple[float, float, float, float]:
    """Return (sigma, rho, mu, nu) at a scale point."""
    i = ts.index(t)
    tv = ts.index_value(i)
    sig = ts.index_value(min(i + 1, len(ts) - 1))
    rho = ts.index_value(max(i - 1, 0))
    return sig, rho, sig - tv, tv - rho


def derivative(ts: TimeScale, f: GridFunction, flavor: str) -> GridFunction:
    """Exact delta or nabla derivative of a grid function.

    Delta drops the last domain point, nabla the first. On a finite scale
    every point is scattered, so these quotients are the derivatives of the
    time-scale calculus, not approximations of them.
    """
    if f.scale != ts:
        raise PointNotInScale("grid function lives on a different scale")
    if len(f) < 2:
        raise DomainTooSmall("need at least 2 points to differentiate")
    pts = f.domain_points
    gaps = np.diff(pts)
    quot = np.diff(f.values) / gaps
    if flavor == "delta":
        return GridFunction(ts, quot, start=f.start)
    if flavor == "nabla":
        return GridFunction(ts, quot, start=f.start + 1)
    raise ValueError(f"flavor must be 'delta' or 'nabla', got {flavor!r}")


def integral(ts: TimeScale, f: GridFunction, t1: float, t2: float, flavor: str) -> float:
    """Oriented Cauchy integral of f from t1 to t2.

    Delta: sum of mu(tau) f(tau) over tau in [t1, t2).
    Nabla: sum of nu(tau) f(tau) over tau in (t1, t2].
    Reversed orientation negates; the integral from t to t is zero.
    """
    if f.scale != ts:
        raise PointNotInScale("grid function lives on a different scale")
    i1, i2 = ts.index(t1), ts.index(t2)
    sign = 1.0
    if i1 > i2:
        i1, i2, sign = i2, i1, -1.0
    if i1 == i2:
        return 0.0
    pts = ts.points
    if flavor == "delta":
        lo, hi = i1, i2  # cells [i1, i2)
        idx = np.arange(lo, hi)
        w = pts[idx + 1] - pts[idx]
    elif flavor == "nabla":
        lo, hi = i1 + 1, i2 + 1  # cells (i1, i2]
        idx = np.arange(lo, hi)
        w = pts[idx] - pts[idx - 1]
    else:
        raise ValueError(f"flavor must be 'delta' or 'nabla', got {flavor!r}")
    if idx[0] < f.start or idx[-1] >= f.stop:
        raise PointNotInScale("integration range leaves the grid function domain")
    vals = f.values[idx - f.start]
    return sign * float(np.sum(w * vals))


def check_condition_H(ts: TimeScale):
    """Test whether the backward jump is affine: rho(t) = a1 t + a0.

    Fits (a1, a0) through the second and third points and verifies the
    relation at every point above the minimum, within 1e-9 of the span.
    Returns (a1, a0) with a1 > 0, or None. On h-uniform and q-geometric
    scales with exactly representable points the fit is exact: (1, -h)
    and (1/q, 0) respectively.
    """
    pts = ts.points
    d21 = float(pts[2] - pts[1])
    if d21 == 0.0:
        return None
    a1 = float(pts[1] - pts[0]) / d21
    a0 = float(pts[0]) - a1 * float(pts[1])
    if not a1 > 0:
        return None
    tol = 1e-9 * ts.span
    for i in range(1, len(pts)):
        if abs(float(pts[i - 1]) - (a1 * float(pts[i]) + a0)) > tol:
            return None
    return a1, a0


def read_scale_file(path) -> TimeScale:
    """Load a scale from plain text, one decimal point per line."""
    with open(path, "r", encoding="utf-8") as fh:
        vals = []
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                vals.append(float(s))
            except ValueError:
                raise NonFiniteInput(f"{path}:{lineno}: not a number: {s!r}") from None
    return build_scale(vals)


def write_scale_file(ts: TimeScale, path) -> None:
    """Write a scale as plain text, one point per line, 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in ts.points:
            fh.write("%.17g\n" % p)
