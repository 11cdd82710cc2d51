"""Functions of bounded variation and two ways to apply them to a Hamiltonian.

The reference path evaluates ``f`` on the eigenvalues (spectral theorem). The
second path integrates localized resolvent blocks against the complex measure

    dζ_f(x, y) = df(x) dy Ξ(x, y) + dx dy f(x) (∂_x + i ∂_y) Ξ(x, y),

``f(H)[a, b] = (1/2π) ∫ dζ_f(x, y) [(H - x - iy)^{-1}]_{a, b}``, where Ξ is a
smooth cutoff equal to one near the support of ``f``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from .spectral import (DEFAULT_EIG_TOL, LocalBlock, SpectralData, SpectrumProximityError, _as_array,
                       _sites, eigenvalues)


@dataclass(frozen=True)
class Jump:
    position: float
    height: float
    inclusive: bool  # the jump already applies at ``position`` itself


@dataclass(frozen=True)
class Segment:
    """Continuous increment ``p(clip(x, lo, hi)) - p(lo)``."""

    lo: float
    hi: float
    coef: Tuple[float, ...]

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coef)


class BVFunction:
    """Piecewise-polynomial function with finitely many jumps.

    ``f(x) = left_value + sum of jumps passed at x + sum of segment increments``.
    ``interval`` tags membership of the class of functions that are constant
    left of ``interval[0]`` and vanish right of ``interval[1]``.
    """

    def __init__(self, left_value: float = 0.0, jumps: Sequence[Jump] = (),
                 segments: Sequence[Segment] = (), interval: Optional[Tuple[float, float]] = None,
                 label: str = ""):
        self.left_value = float(left_value)
        self.jumps = tuple(sorted(jumps, key=lambda j: (j.position, not j.inclusive)))
        self.segments = tuple(s for s in segments if s.hi > s.lo)
        self.interval = None if interval is None else (float(interval[0]), float(interval[1]))
        self.label = label
        if self.interval is not None:
            self._check_interval()
        self._tv = None

    def __repr__(self):
        return f"BVFunction({self.label or 'custom'})"

    # evaluation ------------------------------------------------------------
    def _continuous(self, x: np.ndarray) -> np.ndarray:
        out = np.full(x.shape, self.left_value)
        for s in self.segments:
            p = s.poly
            out += p(np.clip(x, s.lo, s.hi)) - p(s.lo)
        return out

    def _jump_part(self, x: np.ndarray, side: str) -> np.ndarray:
        out = np.zeros(x.shape)
        for j in self.jumps:
            if side == "left":
                hit = x > j.position
            elif side == "right":
                hit = x >= j.position
            else:
                hit = (x > j.position) | ((x == j.position) & j.inclusive)
            out += np.where(hit, j.height, 0.0)
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self._continuous(x) + self._jump_part(x, "value")

    def left_limit(self, x):
        x = np.asarray(x, dtype=float)
        return self._continuous(x) + self._jump_part(x, "left")

    def right_limit(self, x):
        x = np.asarray(x, dtype=float)
        return self._continuous(x) + self._jump_part(x, "right")

    def derivative(self, x):
        """Density of the absolutely continuous part of ``df``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for s in self.segments:
            inside = (x > s.lo) & (x < s.hi)
            out += np.where(inside, s.poly.deriv()(x), 0.0)
        return out

    @property
    def right_value(self) -> float:
        """Value on (max breakpoint, inf); cancellation below rounding level snaps to 0."""
        total = self.left_value + sum(j.height for j in self.jumps)
        incs = [s.poly(s.hi) - s.poly(s.lo) for s in self.segments]
        total += sum(incs)
        scale = abs(self.left_value) + sum(abs(j.height) for j in self.jumps)
        for seg in self.segments:
            r = max(abs(seg.lo), abs(seg.hi), 1.0)
            scale += sum(abs(c) * r ** k for k, c in enumerate(seg.coef))
        return 0.0 if abs(total) <= 1e-12 * scale else float(total)

    @property
    def jump_points(self) -> np.ndarray:
        return np.array([j.position for j in self.jumps if j.height != 0.0])

    def breakpoints(self) -> np.ndarray:
        pts = [j.position for j in self.jumps] + [p for s in self.segments for p in (s.lo, s.hi)]
        return np.unique(np.array(pts, dtype=float))

    def pieces(self) -> List[Tuple[float, float, Polynomial]]:
        """Polynomial form on each open interval between consecutive breakpoints."""
        bp = self.breakpoints()
        edges = np.concatenate([[-np.inf], bp, [np.inf]])
        out = []
        for a, b in zip(edges[:-1], edges[1:]):
            if np.isinf(a):
                out.append((a, b, Polynomial([self.left_value])))
                continue
            if np.isinf(b):
                out.append((a, b, Polynomial([self.right_value])))
                continue
            mid = 0.5 * (a + b)
            poly = Polynomial([float(self(mid))])
            for s in self.segments:
                if s.lo <= mid <= s.hi and s.lo < s.hi:
                    p = s.poly
                    poly = poly + p - p(mid)
            out.append((a, b, poly))
        return out

    def support_hull(self) -> Optional[Tuple[float, float]]:
        """Smallest closed interval outside of which ``f`` vanishes (None if f == 0)."""
        if self.left_value != 0.0 or self.right_value != 0.0:
            raise ValueError("function is not compactly supported")
        lo = hi = None
        for a, b, poly in self.pieces():
            nonzero = np.any(np.abs(poly.coef) > 0)
            if not nonzero:
                continue
            if np.isinf(a) or np.isinf(b):
                raise ValueError("function is not compactly supported")
            lo = a if lo is None else min(lo, a)
            hi = b if hi is None else max(hi, b)
        for j in self.jumps:
            if self(j.position) != 0.0:
                lo = j.position if lo is None else min(lo, j.position)
                hi = j.position if hi is None else max(hi, j.position)
        return None if lo is None else (lo, hi)

    # norms -------------------------------------------------------------------
    def total_variation(self) -> float:
        """Exact total variation: point oscillations at breakpoints plus interior variation."""
        if self._tv is not None:
            return self._tv
        tv = 0.0
        for x in self.breakpoints():
            v, l, r = float(self(x)), float(self.left_limit(x)), float(self.right_limit(x))
            tv += abs(v - l) + abs(r - v)
        for a, b, poly in self.pieces():
            if np.isinf(a) or np.isinf(b) or poly.degree() < 1:
                continue
            tv += _poly_variation(poly, a, b)
        self._tv = tv
        return tv

    def l1_norm(self) -> float:
        total = 0.0
        for a, b, poly in self.pieces():
            if not np.any(poly.coef):
                continue
            if np.isinf(a) or np.isinf(b):
                return math.inf
            total += _poly_abs_integral(poly, a, b)
        return total

    def sup_norm(self) -> float:
        vals = [abs(self.left_value), abs(self.right_value)]
        for x in self.breakpoints():
            vals += [abs(float(self(x))), abs(float(self.left_limit(x))), abs(float(self.right_limit(x)))]
        for a, b, poly in self.pieces():
            if np.isinf(a) or np.isinf(b):
                continue
            for r in _real_roots_in(poly.deriv(), a, b):
                vals.append(abs(float(poly(r))))
        return max(vals)

    # algebra -----------------------------------------------------------------
    def __add__(self, other: "BVFunction") -> "BVFunction":
        interval = None
        if self.interval and other.interval:
            interval = (min(self.interval[0], other.interval[0]), max(self.interval[1], other.interval[1]))
        return BVFunction(self.left_value + other.left_value, self.jumps + other.jumps,
                          self.segments + other.segments, interval, f"{self.label}+{other.label}")

    def __mul__(self, c: float) -> "BVFunction":
        c = float(c)
        return BVFunction(c * self.left_value,
                          [replace(j, height=c * j.height) for j in self.jumps],
                          [replace(s, coef=tuple(c * k for k in s.coef)) for s in self.segments],
                          self.interval, f"{c}*{self.label}")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def in_class(self, interval: Tuple[float, float]) -> "BVFunction":
        """Return a copy tagged as constant below ``interval[0]`` and zero from ``interval[1]`` on."""
        return BVFunction(self.left_value, self.jumps, self.segments, interval, self.label)

    def _check_interval(self):
        lo, hi = self.interval
        if not lo < hi:
            raise ValueError("class interval must have lo < hi")
        if self.right_value != 0.0:
            raise ValueError("function does not vanish at +infinity")
        for j in self.jumps:
            if j.height == 0.0:
                continue
            if j.position < lo or (j.position == lo and j.inclusive):
                raise ValueError(f"jump at {j.position} below the class interval")
            if j.position > hi or (j.position == hi and not j.inclusive):
                raise ValueError(f"jump at {j.position} above the class interval")
        for s in self.segments:
            if s.lo < lo or s.hi > hi:
                raise ValueError("smooth segment outside the class interval")

    def truncated_below(self, x0: float) -> "BVFunction":
        """``f * 1_[x0, inf)``: compactly supported when ``f`` vanishes at +infinity."""
        head = Jump(x0, float(self(x0)), True)
        jumps = [head] + [j for j in self.jumps if j.position > x0 or (j.position == x0 and not j.inclusive)]
        segs = [Segment(max(s.lo, x0), s.hi, s.coef) for s in self.segments if s.hi > x0]
        return BVFunction(0.0, jumps, segs, None, f"{self.label}|[{x0},inf)")


def _real_roots_in(poly: Polynomial, a: float, b: float) -> List[float]:
    if poly.degree() < 1:
        return []
    roots = poly.roots()
    real = roots[np.abs(roots.imag) <= 1e-12 * (1 + np.abs(roots.real))].real
    return sorted(float(r) for r in real if a < r < b)


def _poly_variation(poly: Polynomial, a: float, b: float) -> float:
    pts = [a] + _real_roots_in(poly.deriv(), a, b) + [b]
    vals = poly(np.array(pts))
    return float(np.sum(np.abs(np.diff(vals))))


def _poly_abs_integral(poly: Polynomial, a: float, b: float) -> float:
    pts = [a] + _real_roots_in(poly, a, b) + [b]
    anti = poly.integ()
    vals = anti(np.array(pts))
    return float(np.sum(np.abs(np.diff(vals))))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def constant(c: float) -> BVFunction:
    return BVFunction(c, label=f"constant({c})")


def indicator(E: float, interval=None) -> BVFunction:
    """``1_(-inf, E]`` (closed at E)."""
    return BVFunction(1.0, [Jump(E, -1.0, False)], interval=interval, label=f"indicator({E})")


def interval_indicator(lo: float, hi: float) -> BVFunction:
    """``1_[lo, hi]``."""
    if not lo <= hi:
        raise ValueError("need lo <= hi")
    return BVFunction(0.0, [Jump(lo, 1.0, True), Jump(hi, -1.0, False)], label=f"interval({lo},{hi})")


def ramp(E: float, width: float, interval=None) -> BVFunction:
    """1 on (-inf, E], cubic smoothstep down to 0 on [E, E + width], 0 afterwards."""
    if not width > 0:
        raise ValueError("ramp width must be positive")
    t = Polynomial([-E / width, 1.0 / width])
    p = -(3 * t ** 2 - 2 * t ** 3)
    return BVFunction(1.0, (), [Segment(E, E + width, tuple(p.coef))], interval, f"ramp({E},{width})")


def smooth_bump(center: float, halfwidth: float) -> BVFunction:
    """``(1 - t^2)^3`` with ``t = (x - center) / halfwidth`` on |t| <= 1; C^2 and compactly supported."""
    t = Polynomial([-center / halfwidth, 1.0 / halfwidth])
    p = (1 - t ** 2) ** 3
    return BVFunction(0.0, (), [Segment(center - halfwidth, center + halfwidth, tuple(p.coef))],
                      label=f"bump({center},{halfwidth})")


def tabulated(xs: Sequence[float], ys: Sequence[float], interval=None) -> BVFunction:
    """Piecewise-linear interpolation of ``(xs, ys)``, constant beyond the ends."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 1 or np.any(np.diff(xs) <= 0):
        raise ValueError("table needs strictly increasing abscissae and matching ordinates")
    segs = []
    for x0, x1, y0, y1 in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
        slope = (y1 - y0) / (x1 - x0)
        segs.append(Segment(float(x0), float(x1), (float(y0 - slope * x0), float(slope))))
    return BVFunction(float(ys[0]), (), segs, interval, "table")


_LITERAL_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")


def parse_function(text: str, base_dir: Path | None = None) -> BVFunction:
    """Parse ``indicator(E)``, ``ramp(E, width)``, ``table(path)``, ``interval(lo, hi)``, ``bump(c, w)``."""
    m = _LITERAL_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse function literal {text!r}")
    name, args = m.group(1), [a.strip() for a in m.group(2).split(",") if a.strip()]
    try:
        if name == "indicator" and len(args) == 1:
            return indicator(float(args[0]))
        if name == "ramp" and len(args) == 2:
            return ramp(float(args[0]), float(args[1]))
        if name == "interval" and len(args) == 2:
            return interval_indicator(float(args[0]), float(args[1]))
        if name == "bump" and len(args) == 2:
            return smooth_bump(float(args[0]), float(args[1]))
        if name == "constant" and len(args) == 1:
            return constant(float(args[0]))
        if name == "table" and len(args) == 1:
            path = Path(args[0])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            data = np.loadtxt(path, ndmin=2)
            return tabulated(data[:, 0], data[:, 1])
    except ValueError as exc:
        raise ValueError(f"bad function literal {text!r}: {exc}") from exc
    raise ValueError(f"unknown function literal {text!r}")


def total_variation(f: BVFunction) -> float:
    return f.total_variation()


# ---------------------------------------------------------------------------
# spectral-theorem path
# ---------------------------------------------------------------------------

class FunctionValue(NamedTuple):
    matrix: np.ndarray
    degenerate: bool


def jumps_near(ev: np.ndarray, f: BVFunction, tol: float) -> bool:
    jp = f.jump_points
    if jp.size == 0 or ev.size == 0:
        return False
    return bool(np.min(np.abs(ev[:, None] - jp[None, :])) <= tol)


def apply_function_spectral(spec: SpectralData, f: BVFunction, eig_tol: float = DEFAULT_EIG_TOL) -> FunctionValue:
    """``V f(Λ) V^T``; flags eigenvalues within ``eig_tol`` of a jump of ``f``."""
    v = spec.eigenvectors
    vals = f(spec.eigenvalues)
    return FunctionValue((v * vals) @ v.T, jumps_near(spec.eigenvalues, f, eig_tol))


# ---------------------------------------------------------------------------
# cutoff and quadrature for the resolvent representation
# ---------------------------------------------------------------------------

def _psi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _dpsi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, slope at most 2."""
    a, b = _psi(s), _psi(1.0 - np.asarray(s, dtype=float))
    return a / (a + b)


def smooth_step_deriv(s):
    s = np.asarray(s, dtype=float)
    a, b = _psi(s), _psi(1.0 - s)
    da, db = _dpsi(s), _dpsi(1.0 - s)
    return (da * b + a * db) / (a + b) ** 2


def cutoff_profile(t):
    """Smooth even function, 1 on [-1, 1], 0 outside [-2, 2], sup|g'| = 2."""
    return smooth_step(2.0 - np.abs(np.asarray(t, dtype=float)))


def cutoff_profile_deriv(t):
    t = np.asarray(t, dtype=float)
    return -np.sign(t) * smooth_step_deriv(2.0 - np.abs(t))


@dataclass(frozen=True, eq=False)
class HSQuadrature:
    """Nodes ``x + iy`` (upper half plane) with complex weights.

    The node set is mirrored: for each stored node ``(x, y, w)`` the node
    ``(x, -y, conj(w))`` is implied. Ξ(x, y) = g((x - center)/width) g(y/width).
    """

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    center: float
    width: float
    y_min: float
    resolution: int
    jump_points: np.ndarray
    counts: dict = field(default_factory=dict)
    # half-width of the x cell a node stands for (0 for point nodes)
    cell: Optional[np.ndarray] = None

    def cell_half_widths(self) -> np.ndarray:
        return np.zeros(self.x.size) if self.cell is None else self.cell

    @property
    def n_nodes(self) -> int:
        return 2 * self.x.size

    def full_nodes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (np.concatenate([self.x, self.x]), np.concatenate([self.y, -self.y]),
                np.concatenate([self.weights, np.conj(self.weights)]))

    def total_abs_weight(self) -> float:
        return float(2.0 * np.sum(np.abs(self.weights)))

    def weight_sum(self) -> complex:
        return complex(2.0 * np.sum(self.weights.real))

    def cutoff(self, x, y):
        return cutoff_profile((np.asarray(x) - self.center) / self.width) * cutoff_profile(np.asarray(y) / self.width)

    def cutoff_grad_sup(self) -> float:
        t = np.linspace(-2.0, 2.0, 4001)
        g, dg = cutoff_profile(t), cutoff_profile_deriv(t)
        grad2 = (dg[:, None] * g[None, :]) ** 2 + (g[:, None] * dg[None, :]) ** 2
        return float(np.sqrt(grad2.max())) / self.width


_GL_ORDER = 6
_AC_REFINE = 8


def _geometric_gl(y_lo: float, y_hi: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on dyadic panels [y_lo 2^k, y_lo 2^(k+1)] covering [y_lo, y_hi]."""
    t, w = np.polynomial.legendre.leggauss(_GL_ORDER)
    nodes, weights = [], []
    a = y_lo
    while a < y_hi:
        b = min(2.0 * a, y_hi)
        nodes.append(0.5 * (b - a) * t + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
        a = b
    if not nodes:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _midpoints(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    h = (b - a) / n
    return a + h * (np.arange(n) + 0.5), np.full(n, h)


def hs_measure(f: BVFunction, y_min: float, resolution: int = 64) -> HSQuadrature:
    """Quadrature for the measure representing ``f`` through resolvents.

    Nodes with ``|y| < y_min`` are excluded. ``resolution`` is the number of
    midpoint cells per cutoff width in each direction; near the real axis the
    ``y`` direction uses Gauss-Legendre on dyadic panels down to ``y_min``.
    """
    if not y_min > 0:
        raise ValueError("y_min must be positive")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    resolution = int(resolution)
    hull = f.support_hull()
    if hull is None:
        empty = np.zeros(0)
        return HSQuadrature(empty, empty, empty.astype(complex), 0.0, 1.0, y_min, resolution, empty)
    s_lo, s_hi = hull
    width = s_hi - s_lo
    if width <= 0:
        raise ValueError("function support has zero width")
    center = 0.5 * (s_lo + s_hi)
    if y_min >= width:
        raise ValueError("y_min must be smaller than the support width")

    # y-profile on lines inside the support hull: Ξ = g(y / width)
    y_near, wy_near = _geometric_gl(y_min, width)
    y_far, wy_far = _midpoints(width, 2.0 * width, resolution)
    y_line = np.concatenate([y_near, y_far])
    wy_line = np.concatenate([wy_near, wy_far]) * cutoff_profile(y_line / width)

    xs, ys, ws = [], [], []
    counts = {"jump": 0, "ac": 0, "cutoff": 0}
    # jump part of df
    for j in f.jumps:
        if j.height == 0.0:
            continue
        xs.append(np.full(y_line.size, j.position))
        ys.append(y_line)
        ws.append(j.height * wy_line + 0j)
        counts["jump"] += 2 * y_line.size
    # absolutely continuous part of df: after the y integration the kernel
    # jumps at every eigenvalue, so these nodes stand for x cells and the
    # kernel is averaged over the cell when the quadrature is applied
    cells = [np.zeros(v.size) for v in xs]
    for s in f.segments:
        # short segments of a wide support still get ``resolution`` cells
        n_x = max(resolution, math.ceil(resolution * _AC_REFINE * (s.hi - s.lo) / width))
        xm, wx = _midpoints(s.lo, s.hi, n_x)
        dens = s.poly.deriv()(xm) * wx
        keep = dens != 0.0
        if not np.any(keep):
            continue
        X, Y = np.meshgrid(xm[keep], y_line, indexing="ij")
        W = np.outer(dens[keep], wy_line)
        xs.append(X.ravel())
        ys.append(Y.ravel())
        ws.append(W.ravel() + 0j)
        cells.append(np.full(X.size, 0.5 * wx[0]))
        counts["ac"] += 2 * X.size
    # f (∂x + i∂y) Ξ: inside the hull only ∂y Ξ is nonzero, on width <= |y| <= 2 width
    bp = np.unique(np.concatenate([[s_lo, s_hi], f.breakpoints()]))
    bp = bp[(bp >= s_lo) & (bp <= s_hi)]
    y_c, wy_c = _midpoints(width, 2.0 * width, resolution)
    dxi_dy = cutoff_profile_deriv(y_c / width) / width
    for a, b in zip(bp[:-1], bp[1:]):
        n_x = max(1, math.ceil(resolution * (b - a) / width))
        xm, wx = _midpoints(a, b, n_x)
        fx = f(xm) * wx
        if not np.any(fx):
            continue
        X, Y = np.meshgrid(xm, y_c, indexing="ij")
        W = 1j * np.outer(fx, dxi_dy * wy_c)
        xs.append(X.ravel())
        ys.append(Y.ravel())
        ws.append(W.ravel())
        cells.append(np.zeros(X.size))
        counts["cutoff"] += 2 * X.size
    if xs:
        x, y, w, c = np.concatenate(xs), np.concatenate(ys), np.concatenate(ws), np.concatenate(cells)
    else:
        x = y = c = np.zeros(0)
        w = np.zeros(0, dtype=complex)
    return HSQuadrature(x, y, w, center, width, y_min, resolution, f.jump_points, counts, c)


def default_gap_tol(H) -> float:
    """``1e-6`` times the spectral diameter (at least ``1e-6``)."""
    ev = eigenvalues(_as_array(H))
    return 1e-6 * max(float(ev[-1] - ev[0]), 1.0)


def default_y_min(H) -> float:
    """Excision height for the quadrature, far below ``gap_tol`` so it does not limit accuracy."""
    return 1e-3 * default_gap_tol(H)


def function_block_hs(H, f: BVFunction, a: Sequence[int], b: Sequence[int], resolution: int = 64,
                      y_min: float | None = None, gap_tol: float | None = None,
                      method: str = "eigenbasis") -> LocalBlock:
    """Block of ``f(H)`` from the almost-analytic representation with default excision."""
    quad = hs_measure(f, default_y_min(H) if y_min is None else y_min, resolution)
    return apply_function_hs(H, quad, a, b, gap_tol, method=method)


HS_METHODS = ("eigenbasis", "resolvent")


def _cell_kernel(lam: np.ndarray, z: np.ndarray, half: np.ndarray) -> np.ndarray:
    """``1/(λ - z)`` averaged over ``Re z ± half`` (a plain point value where ``half == 0``)."""
    d = lam[:, None] - z[None, :]
    out = np.empty(d.shape, dtype=complex)
    point = half == 0.0
    out[:, point] = 1.0 / d[:, point]
    c = half[~point][None, :]
    # (1/2c) [log(d + c) - log(d - c)], stable for c << |d|
    out[:, ~point] = np.log1p(2.0 * c / (d[:, ~point] - c)) / (2.0 * c)
    return out


def apply_function_hs(H, quad: HSQuadrature, a: Sequence[int], b: Sequence[int],
                      gap_tol: float | None = None, chunk_bytes: int = 32 * 2 ** 20,
                      method: str = "eigenbasis") -> LocalBlock:
    """``(1/2π) Σ_j w_j [(H - z_j)^{-1}]_{a,b}`` over the (mirrored) quadrature nodes.

    ``method="resolvent"`` solves ``(H - z_j) X = χ_b`` at every node, treating
    every node as a point. ``"eigenbasis"`` diagonalizes a real symmetric H
    once and sums scalar kernels per eigenvalue at O(n) cost per node; there
    the nodes of the absolutely continuous part use the kernel averaged over
    their x cell, which removes the first-order error from the jump of the
    y-integrated kernel at each eigenvalue.
    Refuses when a jump of the function lies within ``gap_tol`` of the spectrum.
    """
    if method not in HS_METHODS:
        raise ValueError(f"method must be one of {HS_METHODS}")
    mat = _as_array(H)
    n = mat.shape[0]
    a, b = _sites(a, n), _sites(b, n)
    ev = eigenvalues(mat)
    if gap_tol is None:
        gap_tol = 1e-6 * max(float(ev[-1] - ev[0]), 1.0)
    if jumps_near(ev, BVFunction(0.0, [Jump(p, 1.0, False) for p in quad.jump_points]), gap_tol):
        raise SpectrumProximityError("a jump of f lies within gap_tol of an eigenvalue")
    out = np.zeros((len(a), len(b)), dtype=complex)
    if quad.x.size == 0:
        return LocalBlock(a, b, out.real)
    z = quad.x + 1j * quad.y
    if method == "eigenbasis" and np.isrealobj(mat) and np.array_equal(mat, mat.T):
        lam, vec = np.linalg.eigh(mat)
        g = np.zeros(n, dtype=complex)
        half = quad.cell_half_widths()
        step = max(1, chunk_bytes // (32 * n))
        for start in range(0, z.size, step):
            sl = slice(start, start + step)
            g += (quad.weights[sl][None, :] * _cell_kernel(lam, z[sl], half[sl])).sum(axis=1)
        # the mirrored nodes add the complex conjugate
        out = (vec[a] * (2.0 * g.real)) @ vec[b].T / (2.0 * np.pi)
        return LocalBlock(a, b, out)
    rhs = np.zeros((n, len(b)), dtype=complex)
    rhs[b, np.arange(len(b))] = 1.0
    step = max(1, chunk_bytes // (16 * n * n))
    eye = np.eye(n)
    real_input = np.isrealobj(mat)
    for start in range(0, z.size, step):
        zc = z[start:start + step]
        wc = quad.weights[start:start + step]
        A = mat[None, :, :] - zc[:, None, None] * eye[None, :, :]
        sol = np.linalg.solve(A, np.broadcast_to(rhs, (zc.size, n, len(b))))[:, a, :]
        if real_input:
            # mirrored node contributes conj(w) * conj(R)
            out += 2.0 * np.einsum("k,kij->ij", wc, sol).real
        else:
            Ab = mat[None, :, :] - np.conj(zc)[:, None, None] * eye[None, :, :]
            sol_b = np.linalg.solve(Ab, np.broadcast_to(rhs, (zc.size, n, len(b))))[:, a, :]
            out += np.einsum("k,kij->ij", wc, sol) + np.einsum("k,kij->ij", np.conj(wc), sol_b)
    out /= 2.0 * np.pi
    return LocalBlock(a, b, out.real if real_input else out)
