"""Static magnetic fields of the atom-chip assembly.

Sources are immutable value objects. Every field routine accepts either a
single point of shape ``(3,)`` or a stack of points ``(n, 3)`` and returns a
field array of the same shape, in tesla.

Coordinate frame: x is the trapping-bias direction, y the axial direction
(along the central bar of the Z-wire), z the vertical direction and the loop
axis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Sequence, Union

import numpy as np

from .constants import MU0, to_mG, to_um
from .errors import EllipticConvergenceFailure, EvaluationTooCloseToConductor

EPS_GEOM = 1e-6           # exclusion radius around filaments [m]
CRITICAL_CURRENT_GUARD = 50.0   # [A]
AGM_TOL = 1e-14
AGM_MAXITER = 64


def vec3(v) -> np.ndarray:
    """Validate and return a finite float vector of length 3."""
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"expected 3 components, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector {a}")
    return a


def _as_points(p):
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    if pts.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of 3")
    return pts, single


def _unit(v):
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# elliptic integrals


def ellipke(m, tol=AGM_TOL, maxiter=AGM_MAXITER):
    """Complete elliptic integrals K(m), E(m) and K(m) - E(m) by the AGM.

    The difference ``K - E`` is accumulated directly from the AGM sum so that
    it carries full relative precision for small ``m``.

    Parameters
    ----------
    m : array_like
        Parameter (``k**2``), ``0 <= m < 1``.

    Returns
    -------
    K, E, K_minus_E : ndarray
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 0) or np.any(m >= 1):
        raise EllipticConvergenceFailure("elliptic parameter outside [0, 1)")
    a = np.ones_like(m)
    b = np.sqrt(1.0 - m)
    s = 0.5 * m
    weight = 0.5
    for _ in range(maxiter):
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        weight *= 2.0
        s = s + weight * c * c
        if np.all(np.abs(c) <= tol * a):
            break
    else:
        raise EllipticConvergenceFailure(
            f"AGM did not reach tolerance {tol} in {maxiter} iterations")
    K = np.pi / (2.0 * a)
    dke = K * s
    return K, K - dke, dke


# ---------------------------------------------------------------------------
# sources


@dataclass(frozen=True)
class FiniteSegment:
    """Straight filament from ``start`` to ``end`` carrying ``current`` (A)."""

    start: np.ndarray
    end: np.ndarray
    current: float

    def __post_init__(self):
        object.__setattr__(self, "start", vec3(self.start))
        object.__setattr__(self, "end", vec3(self.end))
        if np.allclose(self.start, self.end, rtol=0, atol=0):
            raise ValueError("segment start and end coincide")
        if not np.isfinite(self.current) or abs(self.current) >= CRITICAL_CURRENT_GUARD:
            raise ValueError(f"segment current {self.current} A exceeds guard")

    @property
    def length(self):
        return float(np.linalg.norm(self.end - self.start))

    def with_current(self, current):
        return FiniteSegment(self.start, self.end, current)

    def field(self, p):
        return segment_field(self, p)


@dataclass(frozen=True)
class CircularLoop:
    """Circular filament; positive current circulates right-handed about ``normal``."""

    center: np.ndarray
    normal: np.ndarray
    radius: float
    current: float

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        n = vec3(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("loop normal must be a unit vector")
        object.__setattr__(self, "normal", n)
        if not self.radius > 0:
            raise ValueError("loop radius must be positive")
        if not np.isfinite(self.current):
            raise ValueError("loop current must be finite")

    def with_current(self, current):
        return CircularLoop(self.center, self.normal, self.radius, current)

    def field(self, p):
        return loop_field(self, p)


@dataclass(frozen=True)
class UniformBias:
    field_T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "field_T", vec3(self.field_T))

    @property
    def current(self):
        return 0.0

    def field(self, p):
        pts, single = _as_points(p)
        out = np.broadcast_to(self.field_T, pts.shape).copy()
        return out[0] if single else out


Source = Union[FiniteSegment, CircularLoop, UniformBias]


@dataclass(frozen=True)
class SourceAssembly:
    """Ordered, non-empty collection of field sources."""

    sources: tuple

    def __post_init__(self):
        srcs = tuple(self.sources)
        if not srcs:
            raise ValueError("assembly must contain at least one source")
        object.__setattr__(self, "sources", srcs)

    def __iter__(self):
        return iter(self.sources)

    def __len__(self):
        return len(self.sources)

    def __add__(self, other):
        return SourceAssembly(self.sources + tuple(other))

    def field(self, p):
        return total_field(self, p)

    def scaled(self, factor):
        """Copy with every conductor current multiplied by ``factor``."""
        return SourceAssembly(tuple(
            s if isinstance(s, UniformBias) else s.with_current(factor * s.current)
            for s in self.sources))

    def without(self, kind):
        return SourceAssembly(tuple(s for s in self.sources if not isinstance(s, kind)))

    def loops(self):
        return [s for s in self.sources if isinstance(s, CircularLoop)]


def z_wire(current, bar_length=2e-3, lead_length=50e-3, origin=(0.0, 0.0, 0.0)):
    """Three segments of a Z-shaped wire in the plane ``z = origin[2]``.

    The central bar runs along y and carries ``current`` towards -y, so the
    field above it points along -x; a +x bias then forms the trap. Both leads
    carry current towards -x and produce the axial (y) bottom field.
    """
    o = vec3(origin)
    h = 0.5 * bar_length
    p1 = o + [lead_length, h, 0.0]
    p2 = o + [0.0, h, 0.0]
    p3 = o + [0.0, -h, 0.0]
    p4 = o + [-lead_length, -h, 0.0]
    return (FiniteSegment(p1, p2, current),
            FiniteSegment(p2, p3, current),
            FiniteSegment(p3, p4, current))


# ---------------------------------------------------------------------------
# field evaluation


def segment_field(seg: FiniteSegment, p, eps=EPS_GEOM):
    """Closed-form Biot-Savart field of a finite straight segment."""
    pts, single = _as_points(p)
    if seg.current == 0.0:
        out = np.zeros_like(pts)
        return out[0] if single else out
    d = seg.end - seg.start
    length = float(np.sqrt(d @ d))
    u = d / length
    r1 = pts - seg.start
    r2 = pts - seg.end
    t = r1 @ u
    perp = r1 - t[:, None] * u
    rho2 = np.einsum("ij,ij->i", perp, perp)
    near = r1 - np.clip(t, 0.0, length)[:, None] * u
    dist = np.sqrt(np.einsum("ij,ij->i", near, near))
    bad = dist < eps
    if bad.any():
        i = int(np.argmax(bad))
        raise EvaluationTooCloseToConductor(
            f"point {pts[i]} lies {dist[i]:.3g} m from a segment (< {eps} m)", point=pts[i])
    n1 = np.sqrt(np.einsum("ij,ij->i", r1, r1))
    n2 = np.sqrt(np.einsum("ij,ij->i", r2, r2))
    cos_diff = t / n1 - (r2 @ u) / n2
    on_line = rho2 == 0.0
    rho2 = np.where(on_line, 1.0, rho2)
    coeff = MU0 * seg.current / (4 * np.pi) * cos_diff / rho2
    coeff[on_line] = 0.0
    # u x perp, written out (np.cross is slow for few points)
    out = np.empty_like(perp)
    out[:, 0] = (u[1] * perp[:, 2] - u[2] * perp[:, 1]) * coeff
    out[:, 1] = (u[2] * perp[:, 0] - u[0] * perp[:, 2]) * coeff
    out[:, 2] = (u[0] * perp[:, 1] - u[1] * perp[:, 0]) * coeff
    return out[0] if single else out


def _loop_frame(normal):
    n = normal
    trial = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = _unit(trial - (trial @ n) * n)
    e2 = np.cross(n, e1)
    return e1, e2, n


def loop_field(loop: CircularLoop, p, eps=EPS_GEOM):
    """Off-axis field of a circular filament via complete elliptic integrals."""
    pts, single = _as_points(p)
    if loop.current == 0.0:
        out = np.zeros_like(pts)
        return out[0] if single else out
    R = loop.radius
    n = loop.normal
    d = pts - loop.center
    z = d @ n
    rvec = d - np.outer(z, n)
    rho = np.linalg.norm(rvec, axis=1)
    alpha2 = (R - rho) ** 2 + z ** 2
    bad = alpha2 < eps ** 2
    if np.any(bad):
        i = int(np.argmax(bad))
        raise EvaluationTooCloseToConductor(
            f"point {pts[i]} lies within {eps} m of the loop filament", point=pts[i])
    beta2 = (R + rho) ** 2 + z ** 2
    beta = np.sqrt(beta2)
    m = 4.0 * R * rho / beta2
    K, E, KmE = ellipke(m)
    r2 = rho ** 2 + z ** 2
    C = MU0 * loop.current / np.pi
    bz = C / (2 * alpha2 * beta) * ((R * R - r2) * E + alpha2 * K)

    near_axis = rho < 1e-5 * R
    safe_rho = np.where(near_axis, 1.0, rho)
    brho = C * z / (2 * alpha2 * beta * safe_rho) * (2 * R * rho * K - (R * R + r2) * KmE)
    # small-rho series avoids the cancellation in the bracket above
    s2 = R * R + z * z
    series = 3 * MU0 * loop.current * R * R * z * rho / (4 * s2 ** 2.5)
    brho = np.where(near_axis, series, brho)

    rhat = np.zeros_like(rvec)
    nz = rho > 0
    rhat[nz] = rvec[nz] / rho[nz, None]
    out = brho[:, None] * rhat + bz[:, None] * n
    return out[0] if single else out


def total_field(assembly: SourceAssembly, p):
    """Superposition of every source's field; errors carry the source index."""
    pts, single = _as_points(p)
    total = np.zeros_like(pts)
    for i, src in enumerate(assembly):
        try:
            total += src.field(pts)
        except EvaluationTooCloseToConductor as exc:
            raise EvaluationTooCloseToConductor(
                f"source {i} ({type(src).__name__}): {exc}", source_index=i,
                point=exc.point) from exc
    return total[0] if single else total


def field_magnitude(assembly, p):
    b = total_field(assembly, p)
    return np.linalg.norm(b, axis=-1)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned node grid: ``origin + i * spacing`` for ``i < counts``."""

    origin: np.ndarray
    spacing: np.ndarray
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", vec3(self.origin))
        sp = vec3(self.spacing)
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 3 or min(counts) < 1:
            raise ValueError("counts must be three positive integers")
        if np.prod(counts) < 2:
            raise ValueError("grid must contain at least two nodes")
        for c, s in zip(counts, sp):
            if c > 1 and not s > 0:
                raise ValueError("spacing must be positive along sampled axes")
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def centered(cls, center, half_widths, counts):
        """Grid spanning ``center +- half_widths`` (inclusive) on each axis."""
        center = vec3(center)
        hw = vec3(half_widths)
        counts = tuple(int(c) for c in counts)
        spacing = np.array([2 * h / (c - 1) if c > 1 else 1.0 for h, c in zip(hw, counts)])
        origin = np.array([c0 - h if c > 1 else c0 for c0, h, c in zip(center, hw, counts)])
        return cls(origin, spacing, counts)

    def axes(self):
        return [self.origin[i] + self.spacing[i] * np.arange(self.counts[i]) for i in range(3)]

    def points(self):
        X, Y, Z = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([X, Y, Z], axis=-1)


@dataclass(frozen=True)
class FieldMap:
    grid: GridSpec
    field: np.ndarray = dc_field(repr=False)       # (nx, ny, nz, 3) [T]
    intensity: np.ndarray = dc_field(repr=False)   # (nx, ny, nz) [T]

    def divergence(self):
        """Central-difference divergence at interior nodes (map spacing as the step).

        Needs at least three nodes along every axis; for planar maps use
        :func:`normalized_divergence` at the nodes instead.
        """
        if min(self.grid.counts) < 3:
            raise ValueError("divergence needs >= 3 nodes along every axis")
        div = sum(np.gradient(self.field[..., ax], self.grid.spacing[ax], axis=ax)
                  for ax in range(3))
        return div[1:-1, 1:-1, 1:-1]

    def to_csv(self, path):
        pts = self.grid.points().reshape(-1, 3)
        b = self.field.reshape(-1, 3)
        mag = self.intensity.reshape(-1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_um", "y_um", "z_um", "Bx_mG", "By_mG", "Bz_mG", "Bmag_mG"])
            for xyz, bb, mm in zip(to_um(pts), to_mG(b), to_mG(mag)):
                w.writerow([f"{v:.9g}" for v in (*xyz, *bb, mm)])


def normalized_divergence(assembly: SourceAssembly, points, spacing, h=1e-9):
    """``|div B| * spacing / max|B|`` at ``points``.

    The derivatives come from a central 6-point stencil of step ``h``, much
    finer than a map spacing, so the result measures the field itself and
    not the truncation error of a coarse stencil.
    """
    pts, _ = _as_points(points)
    div = np.zeros(pts.shape[:-1])
    for ax in range(3):
        e = np.zeros(3)
        e[ax] = h
        div += (total_field(assembly, pts + e)[..., ax] - total_field(assembly, pts - e)[..., ax]) / (2 * h)
    bmax = np.max(field_magnitude(assembly, pts))
    return np.abs(div) * spacing / bmax


def field_grid(assembly: SourceAssembly, grid: GridSpec) -> FieldMap:
    pts = grid.points()
    flat = pts.reshape(-1, 3)
    try:
        b = total_field(assembly, flat)
    except EvaluationTooCloseToConductor as exc:
        raise EvaluationTooCloseToConductor(
            f"grid node {exc.point}: {exc}", exc.source_index, exc.point) from exc
    b = b.reshape(pts.shape)
    return FieldMap(grid, b, np.linalg.norm(b, axis=-1))


def polygon_loop_field(loop: CircularLoop, p, nseg=1_000_000):
    """Brute-force loop field from an ``nseg``-gon of straight segments.

    Independent of :func:`loop_field`; used as a cross-check.
    """
    pts, single = _as_points(p)
    e1, e2, n = _loop_frame(loop.normal)
    phi = np.linspace(0.0, 2 * np.pi, nseg + 1)
    verts = loop.center + loop.radius * (np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2))
    a = verts[:-1]
    b = verts[1:]
    out = np.empty_like(pts)
    for k, q in enumerate(pts):
        r1 = q - a
        r2 = q - b
        n1 = np.linalg.norm(r1, axis=1)
        n2 = np.linalg.norm(r2, axis=1)
        # closed form for each straight piece (Griffiths form)
        cr = np.cross(r1, r2)
        denom = n1 * n2 * (n1 * n2 + np.einsum("ij,ij->i", r1, r2))
        coeff = (n1 + n2) / denom
        out[k] = MU0 * loop.current / (4 * np.pi) * (cr * coeff[:, None]).sum(axis=0)
    return out[0] if single else out
