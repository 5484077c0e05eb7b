"""Axis-aligned hyperrectangles, nice delta-nets and the unreachability test."""

import math
import os
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import InvalidArgument, ResourceLimitError

DEFAULT_NET_CAP = 10**8
NET_CAP_ENV = "STATIONKIT_NET_CAP"


def net_cap():
    """Hard cap on the number of points a single net or round may hold.

    Read from the ``STATIONKIT_NET_CAP`` environment variable when set.
    """
    raw = os.environ.get(NET_CAP_ENV)
    if raw is None or raw == "":
        return DEFAULT_NET_CAP
    try:
        value = int(float(raw))
    except ValueError as exc:
        raise InvalidArgument(f"{NET_CAP_ENV}={raw!r} is not a number") from exc
    if value < 1:
        raise InvalidArgument(f"{NET_CAP_ENV} must be positive, got {value}")
    return value


def as_point(x):
    p = np.asarray(x, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise InvalidArgument(f"a point must be a non-empty 1-d array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidArgument("point coordinates must be finite")
    return p


def barrier_value(lo, side, ell, m):
    """Coordinate of barrier ``m`` on an axis ``[lo, lo + side]`` cut into ``ell`` cells.

    Always evaluated as ``lo + m * (side / ell)`` so the same barrier is
    bit-identical wherever it is recomputed.
    """
    return lo + m * (side / ell)


@dataclass(frozen=True, eq=False)
class HyperRectangle:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_point(self.lo).copy()
        hi = as_point(self.hi).copy()
        if lo.shape != hi.shape:
            raise InvalidArgument(f"lo has dimension {lo.size} but hi has {hi.size}")
        if np.any(lo > hi):
            raise InvalidArgument("every axis needs lo <= hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit_cube(cls, d):
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def around(cls, center, half_width):
        c = as_point(center)
        return cls(c - half_width, c + half_width)

    @property
    def dim(self):
        return self.lo.size

    @property
    def sides(self):
        return self.hi - self.lo

    @property
    def effective_dim(self):
        return int(np.count_nonzero(self.lo < self.hi))

    @property
    def is_full(self):
        return self.effective_dim == self.dim

    @property
    def max_side(self):
        return float(np.max(self.sides))

    @property
    def min_side(self):
        return float(np.min(self.sides))

    def contains(self, points, atol=0.0):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.all((pts >= self.lo - atol) & (pts <= self.hi + atol), axis=1)
        return inside if np.ndim(points) > 1 else bool(inside[0])

    def corners(self):
        """All distinct corners, in lexicographic lo/hi order (lo first)."""
        choices = [(lo,) if lo == hi else (lo, hi) for lo, hi in zip(self.lo, self.hi)]
        return np.array(list(product(*choices)), dtype=float)

    def faces(self):
        """Facets ``(axis, side, rect)`` of a rectangle; side is 0 for lo, 1 for hi."""
        out = []
        for j in range(self.dim):
            if self.lo[j] == self.hi[j]:
                continue
            for side, value in ((0, self.lo[j]), (1, self.hi[j])):
                lo = self.lo.copy()
                hi = self.hi.copy()
                lo[j] = hi[j] = value
                out.append((j, side, HyperRectangle(lo, hi)))
        return out

    def all_faces(self):
        """Every face of every dimension, including the rectangle itself and its corners."""
        per_axis = []
        for lo, hi in zip(self.lo, self.hi):
            if lo == hi:
                per_axis.append([(lo, hi)])
            else:
                per_axis.append([(lo, hi), (lo, lo), (hi, hi)])
        out = []
        for combo in product(*per_axis):
            out.append(HyperRectangle([c[0] for c in combo], [c[1] for c in combo]))
        return out

    def sample_boundary(self, n, rng, exclude=None):
        """Uniform samples from the boundary facets.

        ``exclude`` is an optional rectangle whose boundary is removed: facets
        lying inside a facet of ``exclude`` are skipped and sampled points that
        land on ``exclude``'s boundary are dropped.
        """
        facets = []
        for j, side, face in self.faces():
            value = face.lo[j]
            if exclude is not None and value in (exclude.lo[j], exclude.hi[j]):
                continue
            facets.append(face)
        if not facets:
            return np.empty((0, self.dim))
        areas = np.array([np.prod(np.where(f.sides > 0, f.sides, 1.0)) for f in facets])
        picks = rng.choice(len(facets), size=n, p=areas / areas.sum())
        lo = np.stack([facets[i].lo for i in picks])
        hi = np.stack([facets[i].hi for i in picks])
        pts = lo + rng.random((n, self.dim)) * (hi - lo)
        if exclude is not None:
            on_outer = np.any((pts == exclude.lo) | (pts == exclude.hi), axis=1)
            pts = pts[~on_outer]
        return pts

    def __eq__(self, other):
        if not isinstance(other, HyperRectangle):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        axes = " x ".join(
            f"{{{lo:g}}}" if lo == hi else f"[{lo:g}, {hi:g}]" for lo, hi in zip(self.lo, self.hi)
        )
        return f"HyperRectangle({axes})"


@dataclass(frozen=True, eq=False)
class Net:
    points: np.ndarray
    spacing: float
    host: HyperRectangle
    axes: tuple

    def __len__(self):
        return self.points.shape[0]


def net_axis_counts(rect, delta):
    """Per-axis point counts of the uniform nice net: ceil(sqrt(k) * side / (2 delta)) + 1."""
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    k = rect.effective_dim
    root_k = math.sqrt(k)
    return [math.ceil(root_k * float(side) / (2.0 * delta)) + 1 for side in rect.sides]


def net_size(rect, delta):
    return math.prod(net_axis_counts(rect, delta))


def net_axes(rect, delta):
    counts = net_axis_counts(rect, delta)
    return tuple(
        np.array([lo]) if n == 1 else np.linspace(lo, hi, n)
        for lo, hi, n in zip(rect.lo, rect.hi, counts)
    )


def grid_points(axes):
    """Cartesian product of 1-d grids, first axis varying slowest."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def nice_delta_net(rect, delta, cap=None):
    """Tensor-grid nice delta-net of ``rect``.

    Each axis carries ``ceil(sqrt(k) * side / (2 delta)) + 1`` evenly spaced
    points including both endpoints, where ``k`` is the effective dimension.
    Spacing is then at most ``2 delta / sqrt(k)`` per axis, so every point of
    the rectangle (and of each of its faces) is within ``delta`` of the grid.
    """
    cap = net_cap() if cap is None else cap
    size = net_size(rect, delta)
    if size > cap:
        raise ResourceLimitError(f"net of {size} points exceeds the cap of {cap}")
    axes = net_axes(rect, delta)
    return Net(points=grid_points(axes), spacing=float(delta), host=rect, axes=axes)


def is_unreachable(f_x, f_y, x, y, eps):
    """True where ``f_y > f_x - eps * ||x - y||``.

    ``y`` may be a single point or an ``(n, d)`` batch with matching ``f_y``.
    Ties count as reachable.
    """
    if eps < 0:
        raise InvalidArgument(f"eps must be nonnegative, got {eps}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise InvalidArgument(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    dist = np.linalg.norm(y - x, axis=-1)
    out = np.asarray(f_y) > f_x - eps * dist
    return bool(out) if out.ndim == 0 else out


def barrier_slices(rect, ell):
    """The ``d * (ell - 1)`` interior axis-aligned slices of a full-dimensional rectangle.

    Family ``j`` fixes coordinate ``j`` at ``lo_j + m * side_j / ell`` for
    ``m = 1 .. ell - 1``; families are listed in axis order.
    """
    if ell < 2:
        raise InvalidArgument(f"need at least 2 cells per axis, got ell={ell}")
    if not rect.is_full:
        raise InvalidArgument("barrier slices need a full-dimensional rectangle")
    out = []
    sides = rect.sides
    for j in range(rect.dim):
        for m in range(1, ell):
            lo = rect.lo.copy()
            hi = rect.hi.copy()
            lo[j] = hi[j] = barrier_value(rect.lo[j], sides[j], ell, m)
            out.append(HyperRectangle(lo, hi))
    return out
