"""Gradient Flow Grid Trapping: k-round search for an epsilon-stationary point.

Each round lays ``ell_t - 1`` evenly spaced barriers across every axis of
the current box, queries a nice ``delta_t``-net on all of them in one batch,
moves the iterate to the best point that is reachable from it, and shrinks
the box to a 2- or 3-cell window around the new iterate. Boundary points of
the box stay ``eps_t``-unreachable from the iterate throughout, which pins a
stationary point inside; once the box is small enough the iterate itself
(unconstrained) or one of the box corners (unit cube) is stationary.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlgorithmFailure,
    ContractViolation,
    InvalidArgument,
    ResourceLimitError,
)
from .geometry import HyperRectangle, as_point, barrier_value, net_cap
from .oracle import project_gradient

MODES = ("free", "cube")
ELL_CONVENTIONS = ("corrected", "literal")
BARRIER_TIE_RTOL = 2.0**-40


@dataclass
class GfgtConfig:
    """Run parameters.

    ``ell_convention="literal"`` reproduces the barrier-count formula exactly
    as printed (3**k dividing the base), which leaves the final box about
    9**k times too large; ``"corrected"`` (default) multiplies by 3**k and by
    the initial side length so the k shrink factors reach the target size.
    """

    eps: float
    lipschitz: float
    d: int
    k: int
    x0: np.ndarray
    mode: str = "cube"
    ell_convention: str = "corrected"
    cap: int = None

    def __post_init__(self):
        self.x0 = as_point(self.x0)
        if not self.eps > 0:
            raise InvalidArgument(f"eps must be positive, got {self.eps}")
        if not self.lipschitz > 0:
            raise InvalidArgument(f"lipschitz must be positive, got {self.lipschitz}")
        if self.d < 2:
            raise InvalidArgument(f"dimension must be at least 2, got {self.d}")
        if self.k < 1:
            raise InvalidArgument(f"round budget k must be at least 1, got {self.k}")
        if self.x0.size != self.d:
            raise InvalidArgument(f"x0 has dimension {self.x0.size}, expected {self.d}")
        if self.mode not in MODES:
            raise InvalidArgument(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ell_convention not in ELL_CONVENTIONS:
            raise InvalidArgument(f"unknown ell convention {self.ell_convention!r}")
        if self.mode == "cube" and np.any((self.x0 < 0) | (self.x0 > 1)):
            raise InvalidArgument("cube mode needs x0 inside [0, 1]^d")

    @property
    def eps0(self):
        return self.eps / 4.0

    def initial_side(self, f_x0):
        """Side length of the starting box."""
        if self.mode == "cube":
            return 1.0
        return 4.0 * f_x0 / self.eps0


@dataclass
class IterState:
    t: int
    rect: HyperRectangle
    x: np.ndarray
    f_x: float
    eps_t: float
    ell: int
    delta: float
    queries: int
    x_next: np.ndarray
    f_next: float
    moved: bool
    rect_next: HyperRectangle
    eps_next: float
    new_face_dist: float
    eps_prime: float
    query_bound: float

    @property
    def sides(self):
        return self.rect.sides

    @property
    def r_min(self):
        return self.rect.min_side


@dataclass
class RunTrace:
    d: int
    states: list = field(default_factory=list)
    initial_rect: HyperRectangle = None

    def rows(self):
        cum = 0
        out = []
        for s in self.states:
            cum += s.queries
            out.append(
                [s.t, s.ell, repr(s.delta), repr(s.eps_t), s.queries, cum,
                 repr(s.rect_next.max_side), repr(s.f_next)]
                + [repr(float(v)) for v in s.x_next]
            )
        return out

    def header(self):
        return ["t", "ell", "delta", "eps_t", "queries", "cum_queries", "diam", "f_best"] + [
            f"x{i}" for i in range(self.d)
        ]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.rows())
        return buf.getvalue()

    @property
    def final_rect(self):
        return self.states[-1].rect_next if self.states else self.initial_rect


def ell_exponent(d, k, t):
    q = 2.0 * d / (d + 1.0)
    return ((d - 1.0) / (d + 1.0)) * q**t / (q**k - 1.0)


def ell_base(cfg, f_x0):
    root_d = math.sqrt(cfg.d)
    L, eps, k = cfg.lipschitz, cfg.eps, cfg.k
    if cfg.ell_convention == "literal":
        if cfg.mode == "cube":
            return 2.0 * root_d * L / (3.0**k * eps)
        return 4.0 * f_x0 * root_d * L / (3.0**k * cfg.eps0 * eps)
    return 2.0 * 3.0**k * root_d * L * cfg.initial_side(f_x0) / eps


def schedule_ell(cfg, f_x0, t):
    """Barrier count per axis for round ``t``: ``max(3, ceil(base ** exponent_t))``."""
    if not 0 <= t < cfg.k:
        raise InvalidArgument(f"round index {t} outside [0, {cfg.k})")
    if cfg.mode == "free" and not f_x0 > 0:
        raise InvalidArgument("unconstrained schedule needs f(x0) > 0")
    try:
        value = ell_base(cfg, f_x0) ** ell_exponent(cfg.d, cfg.k, t)
    except OverflowError:
        value = math.inf
    if not math.isfinite(value) or value > 2.0**53:
        raise ResourceLimitError(f"barrier count for round {t} overflows ({value})")
    return max(3, math.ceil(value))


def schedule_delta(cfg, t, ell_t, r_t_min):
    """Net spacing on the barriers of round ``t``."""
    if not r_t_min > 0:
        raise InvalidArgument(f"minimum side must be positive, got {r_t_min}")
    d, k = cfg.d, cfg.k
    num = cfg.eps * r_t_min * 0.75 ** (t * d)
    den = 40.0 * 3.0**k * ell_t * d * math.sqrt(d) * cfg.lipschitz
    return math.sqrt(num / den)


def update_eps(eps_t, t, d, eps):
    return eps_t + eps * 0.75 ** (t * d) / (16.0 * d)


def face_slack_eps(eps_t, delta, dist, lipschitz):
    """Unreachability level a whole slice inherits from its net.

    If every net point of a slice at distance ``dist`` is ``eps_t``-unreachable,
    every point of the slice is unreachable at this level.
    """
    return eps_t + delta**2 / (2.0 * dist) * (lipschitz + 2.0 * eps_t / dist)


def iteration_query_bound(cfg, t, ell, r_min):
    """Closed-form per-round query bound ``C(d,k,L) ell^((d+1)/2) r^((d-1)/2) eps^(-(d-1)/2)``."""
    d, k, L = cfg.d, cfg.k, cfg.lipschitz
    inner = math.sqrt(d) * 3.0**t * math.sqrt(40.0 * 3.0**k * d * math.sqrt(d) * L)
    inner /= 2.0 * math.sqrt(0.75 ** (t * d))
    const = d * inner ** (d - 1)
    return const * ell ** ((d + 1) / 2.0) * r_min ** ((d - 1) / 2.0) * cfg.eps ** (-(d - 1) / 2.0)


def barrier_axis_counts(rect, delta):
    """Grid counts along each axis of a barrier slice (effective dimension d - 1)."""
    root_k = math.sqrt(rect.dim - 1)
    return [math.ceil(root_k * float(side) / (2.0 * delta)) + 1 for side in rect.sides]


def barrier_query_count(rect, ell, delta):
    counts = barrier_axis_counts(rect, delta)
    total = 0
    for j in range(rect.dim):
        total += (ell - 1) * math.prod(c for i, c in enumerate(counts) if i != j)
    return total


BLOCK_SIZE = 1 << 18


def barrier_blocks(rect, ell, delta, block_size=BLOCK_SIZE):
    """Net points on the barriers of ``rect`` in slice order, in blocks of bounded size.

    Slices are ordered by axis, then barrier index; points within a slice
    follow the lexicographic grid order of :func:`geometry.nice_delta_net`.
    """
    counts = barrier_axis_counts(rect, delta)
    sides = rect.sides
    grids = [np.linspace(rect.lo[i], rect.hi[i], counts[i]) for i in range(rect.dim)]
    for j in range(rect.dim):
        others = [i for i in range(rect.dim) if i != j]
        shape = tuple(counts[i] for i in others)
        size = math.prod(shape)
        for m in range(1, ell):
            cut = barrier_value(rect.lo[j], sides[j], ell, m)
            for start in range(0, size, block_size):
                flat = np.arange(start, min(size, start + block_size))
                idx = np.unravel_index(flat, shape)
                block = np.empty((flat.size, rect.dim))
                block[:, j] = cut
                for axis, ix in zip(others, idx):
                    block[:, axis] = grids[axis][ix]
                yield block


def barrier_net(rect, ell, delta):
    """All barrier net points of ``rect`` as one array (see :func:`barrier_blocks`)."""
    return np.concatenate(list(barrier_blocks(rect, ell, delta)))


def select_next(x_t, f_xt, points, values, eps_t):
    """Pick the next iterate from queried net points.

    Candidates are points with ``f(z) <= f(x_t) - eps_t * ||x_t - z||``. If
    there are none the iterate stays; otherwise the candidate with the
    smallest value wins, the earliest one on ties. Returns ``(x, f, moved)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.asarray(values, dtype=float)
    if pts.shape[0] == 0:
        return np.asarray(x_t, dtype=float), float(f_xt), False
    dist = np.linalg.norm(pts - np.asarray(x_t, dtype=float), axis=1)
    reachable = vals <= f_xt - eps_t * dist
    if not np.any(reachable):
        return np.asarray(x_t, dtype=float), float(f_xt), False
    masked = np.where(reachable, vals, np.inf)
    i = int(np.argmin(masked))
    return pts[i].copy(), float(vals[i]), True


def _barrier_index(x, lo, side, ell):
    """Index ``m`` of the cell ``[lo + m*c, lo + (m+1)*c)`` holding ``x``, snapping to barriers.

    Returns ``(m, on_barrier)``; when ``x`` sits on barrier ``m`` (within a
    2**-40 relative tolerance) that barrier's index is returned.
    """
    cell = side / ell
    u = (x - lo) / cell
    m = int(round(u))
    if 0 <= m <= ell:
        tol = BARRIER_TIE_RTOL * max(abs(x), abs(lo) + side)
        if abs(x - barrier_value(lo, side, ell, m)) <= tol:
            return m, True
    return min(max(int(math.floor(u)), 0), ell - 1), False


def compress(rect, x_new, ell):
    """Shrink ``rect`` to a 2- or 3-cell window around ``x_new`` on every axis.

    First cell -> ``[a, a + 2c]``; last cell -> ``[b - 2c, b]``; otherwise the
    window spans the cell holding ``x`` plus one cell on each side. Faces that
    stay on the old boundary keep their exact old coordinate.
    """
    x = as_point(x_new)
    if x.size != rect.dim:
        raise InvalidArgument(f"point has dimension {x.size}, rectangle has {rect.dim}")
    if not rect.contains(x):
        raise InvalidArgument(f"point {x.tolist()} is outside {rect}")
    if ell < 3:
        raise InvalidArgument(f"compression needs ell >= 3, got {ell}")
    lo = rect.lo.copy()
    hi = rect.hi.copy()
    sides = rect.sides
    for j in range(rect.dim):
        a, b, r = rect.lo[j], rect.hi[j], sides[j]
        m, on_barrier = _barrier_index(x[j], a, r, ell)
        if m == 0 or (on_barrier and m == 1):
            lo[j], hi[j] = a, barrier_value(a, r, ell, 2)
        elif m >= ell - 1:
            lo[j], hi[j] = barrier_value(a, r, ell, ell - 2), b
        else:
            lo[j] = barrier_value(a, r, ell, m - 1) if m > 1 else a
            hi[j] = barrier_value(a, r, ell, m + 2) if m + 2 < ell else b
    return HyperRectangle(lo, hi)


def new_face_distance(old, new, x):
    """Distance from ``x`` to the nearest face of ``new`` that is not a face of ``old``."""
    best = math.inf
    for j in range(old.dim):
        if new.lo[j] != old.lo[j]:
            best = min(best, x[j] - new.lo[j])
        if new.hi[j] != old.hi[j]:
            best = min(best, new.hi[j] - x[j])
    return best


def fd_step(eps, lipschitz, d):
    return min(eps / (8.0 * lipschitz * math.sqrt(d)), 1e-6 * math.sqrt(d))


def corner_probes(corners, h):
    """Finite-difference probe layout for each corner, kept inside the unit cube.

    Returns ``(points, plan)``: ``points`` begins with the corners themselves;
    ``plan[c][i] = (plus_idx, minus_idx, width)`` indexes into ``points``.
    """
    n, d = corners.shape
    pts = [c for c in corners]
    plan = []
    for ci, c in enumerate(corners):
        axes = []
        for i in range(d):
            up = c.copy()
            up[i] += h
            down = c.copy()
            down[i] -= h
            up_ok = up[i] <= 1.0
            down_ok = down[i] >= 0.0
            if up_ok and down_ok:
                pts.append(up)
                pts.append(down)
                axes.append((len(pts) - 2, len(pts) - 1, 2.0 * h))
            elif up_ok:
                pts.append(up)
                axes.append((len(pts) - 1, ci, h))
            else:
                pts.append(down)
                axes.append((ci, len(pts) - 1, h))
        plan.append(axes)
    return np.array(pts), plan


def extract_kkt_corner(rect, session, eps, lipschitz):
    """Return a corner of ``rect`` whose estimated projected gradient has norm <= eps.

    All finite-difference probes for all corners go out as a single batch.
    Among passing corners the one with the smallest estimate is returned
    (first in corner order on ties).
    """
    d = rect.dim
    if np.any(rect.lo < 0) or np.any(rect.hi > 1):
        raise InvalidArgument("corner extraction needs a box inside [0, 1]^d")
    corners = rect.corners()
    h = fd_step(eps, lipschitz, d)
    pts, plan = corner_probes(corners, h)
    vals = session.batch_query(pts)
    grads = np.array(
        [[(vals[p] - vals[m]) / w for p, m, w in axes] for axes in plan], dtype=float
    )
    proj = project_gradient(corners, grads)
    norms = np.linalg.norm(proj, axis=1)
    passing = norms <= eps
    if not np.any(passing):
        raise AlgorithmFailure(
            f"no corner of {rect} has projected gradient norm <= {eps}; "
            f"smallest estimate {norms.min():.3g}",
            estimates=[(c.tolist(), g.tolist(), float(nm)) for c, g, nm in zip(corners, proj, norms)],
        )
    i = int(np.argmin(np.where(passing, norms, np.inf)))
    return corners[i].copy()


def gfgt(cfg, session, on_iteration=None):
    """Run the k-round trapping search; returns ``(point, RunTrace)``.

    ``session`` wraps the objective. Round 0 is the single evaluation of
    ``x0``; rounds 1..k query the barrier nets; in cube mode one more round
    estimates projected gradients at the final box's corners.
    ``on_iteration(state)`` is called after every barrier round.
    """
    cap = net_cap() if cfg.cap is None else cfg.cap
    x = cfg.x0.copy()
    f_x = float(session.initial_query(x))
    trace = RunTrace(d=cfg.d)

    if cfg.mode == "free":
        if f_x < 0:
            raise ContractViolation(f"f(x0) = {f_x} < 0; the unconstrained search needs f >= 0")
        if f_x == 0:
            trace.initial_rect = HyperRectangle(x, x)
            return x, trace
        rect = HyperRectangle.around(x, 2.0 * f_x / cfg.eps0)
    else:
        rect = HyperRectangle.unit_cube(cfg.d)
    trace.initial_rect = rect

    ells = [schedule_ell(cfg, f_x, t) for t in range(cfg.k)]
    eps_t = cfg.eps0
    for t, ell in enumerate(ells):
        r_min = rect.min_side
        delta = schedule_delta(cfg, t, ell, r_min)
        n_queries = barrier_query_count(rect, ell, delta)
        if n_queries > cap:
            raise ResourceLimitError(
                f"round {t + 1} needs {n_queries} queries, above the cap of {cap}"
            )
        x_next, f_next, moved = x, f_x, False
        for pts, vals in session.stream_round(barrier_blocks(rect, ell, delta), n_queries):
            if cfg.mode == "free" and np.any(vals < 0):
                raise ContractViolation(
                    f"objective returned {vals.min()} < 0; the unconstrained search needs f >= 0"
                )
            z, f_z, found = select_next(x, f_x, pts, vals, eps_t)
            # blocks arrive in enumeration order, so strict < keeps the first minimiser
            if found and (not moved or f_z < f_next):
                x_next, f_next, moved = z, f_z, True
        rect_next = compress(rect, x_next, ell)
        eps_next = update_eps(eps_t, t, cfg.d, cfg.eps)
        dist = new_face_distance(rect, rect_next, x_next)
        eps_prime = face_slack_eps(eps_t, delta, dist, cfg.lipschitz) if math.isfinite(dist) else eps_t
        state = IterState(
            t=t, rect=rect, x=x, f_x=f_x, eps_t=eps_t, ell=ell, delta=delta,
            queries=n_queries, x_next=x_next, f_next=f_next, moved=moved,
            rect_next=rect_next, eps_next=eps_next, new_face_dist=dist,
            eps_prime=eps_prime, query_bound=iteration_query_bound(cfg, t, ell, r_min),
        )
        trace.states.append(state)
        if on_iteration is not None:
            on_iteration(state)
        rect, x, f_x, eps_t = rect_next, x_next, f_next, eps_next

    if cfg.mode == "cube":
        return extract_kkt_corner(rect, session, cfg.eps, cfg.lipschitz), trace
    return x, trace


def trap_violations(objective, rect, x, eps_t, n_samples, rng, cube=False):
    """Count sampled boundary points of ``rect`` that are reachable from ``x``.

    Uses the objective directly (no session), so nothing is counted as a query.
    With ``cube=True`` the part of the boundary on the unit cube is skipped.
    Returns ``(violations, n_checked)``.
    """
    exclude = HyperRectangle.unit_cube(rect.dim) if cube else None
    ys = rect.sample_boundary(n_samples, rng, exclude=exclude)
    if ys.shape[0] == 0:
        return 0, 0
    f_x = objective.evaluate(x[None, :])[0]
    f_y = objective.evaluate(ys)
    dist = np.linalg.norm(ys - x, axis=1)
    bad = ~(f_y > f_x - eps_t * dist)
    return int(np.count_nonzero(bad)), int(ys.shape[0])
