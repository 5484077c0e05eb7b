"""Zeroth-order oracles with batched queries and per-round accounting.

An algorithm talks to an objective only through a :class:`BatchSession`.
Each call to :meth:`BatchSession.batch_query` is one adaptive round: all
points are submitted together and all answers come back together, so no
answer inside a batch can influence another query of the same batch.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, DomainError, InvalidArgument, UnsupportedOperation


@dataclass
class Objective:
    """A deterministic function on R^d or on the unit cube.

    ``func`` maps an ``(n, d)`` array to ``n`` values; ``grad`` (optional,
    verification only) maps it to an ``(n, d)`` array.
    """

    func: object
    dim: int
    lipschitz: float
    grad: object = None
    domain: str = "free"
    name: str = "objective"

    def __post_init__(self):
        if self.domain not in ("free", "cube"):
            raise InvalidArgument(f"unknown domain {self.domain!r}")
        if self.dim < 1:
            raise InvalidArgument("dimension must be at least 1")

    def _batch(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.dim:
            raise InvalidArgument(f"expected points of dimension {self.dim}, got {pts.shape[1]}")
        return pts, single

    def contains(self, points):
        pts, _ = self._batch(points)
        ok = np.all(np.isfinite(pts), axis=1)
        if self.domain == "cube":
            ok &= np.all((pts >= 0.0) & (pts <= 1.0), axis=1)
        return ok

    def evaluate(self, points):
        pts, single = self._batch(points)
        values = np.asarray(self.func(pts), dtype=float)
        return float(values[0]) if single else values

    def gradient(self, points):
        if self.grad is None:
            raise UnsupportedOperation(f"{self.name} has no analytic gradient")
        pts, single = self._batch(points)
        g = np.asarray(self.grad(pts), dtype=float)
        return g[0] if single else g

    def projected_gradient(self, points):
        """Gradient with components clamped at active faces of the unit cube."""
        pts, single = self._batch(points)
        g = project_gradient(pts, self.gradient(pts))
        return g[0] if single else g


def project_gradient(points, grads):
    """Clamp ``grads`` against active bounds of ``[0, 1]^d``.

    At ``x_i = 0`` the component becomes ``min(0, g_i)``; at ``x_i = 1`` it
    becomes ``max(0, g_i)``; interior components are unchanged.
    """
    g = np.array(grads, dtype=float, copy=True)
    pts = np.asarray(points, dtype=float)
    at_lo = pts == 0.0
    at_hi = pts == 1.0
    g[at_lo] = np.minimum(0.0, g[at_lo])
    g[at_hi] = np.maximum(0.0, g[at_hi])
    return g


@dataclass
class QueryLedger:
    """Per-round batch sizes of algorithm queries.

    Round 0, when present, is the single initial evaluation. Verification
    queries are tallied separately and never create a round.
    """

    rounds: list = field(default_factory=list)
    verification: int = 0

    @property
    def total(self):
        return sum(size for _, size in self.rounds)

    @property
    def n_rounds(self):
        """Number of rounds, not counting an initial round 0."""
        return sum(1 for idx, _ in self.rounds if idx > 0)

    @property
    def n_rounds_with_initial(self):
        return len(self.rounds)

    @property
    def has_initial(self):
        return bool(self.rounds) and self.rounds[0][0] == 0

    def record(self, size, initial=False):
        if initial:
            if self.rounds:
                raise InvalidArgument("the initial round must come before every other round")
            self.rounds.append((0, size))
            return 0
        idx = self.rounds[-1][0] + 1 if self.rounds else 1
        self.rounds.append((idx, size))
        return idx

    def rows(self):
        cum = 0
        out = []
        for idx, size in self.rounds:
            cum += size
            out.append((idx, size, cum))
        return out

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["round", "batch_size", "cumulative_queries"])
        writer.writerows(self.rows())
        return buf.getvalue()


class BatchSession:
    """Adaptivity-accounted access to an oracle.

    ``oracle`` needs ``evaluate(points)`` and ``contains(points)``.
    ``max_rounds`` and ``max_batch`` are optional hard budgets; a batch that
    would break either is rejected before any point is evaluated.
    """

    def __init__(self, oracle, ledger=None, max_rounds=None, max_batch=None):
        self.oracle = oracle
        self.ledger = QueryLedger() if ledger is None else ledger
        self.max_rounds = max_rounds
        self.max_batch = max_batch

    @property
    def round(self):
        return self.ledger.rounds[-1][0] if self.ledger.rounds else None

    def _check(self, pts):
        if pts.shape[0] == 0:
            raise InvalidArgument("a batch must contain at least one point")
        inside = np.asarray(self.oracle.contains(pts))
        if not np.all(inside):
            bad = pts[np.argmin(inside)]
            raise DomainError(f"query {bad.tolist()} is outside the oracle's domain")

    def initial_query(self, point):
        """Evaluate the starting point as round 0."""
        pts = np.atleast_2d(np.asarray(point))
        if pts.shape[0] != 1:
            raise InvalidArgument("the initial query is a single point")
        self._check(pts)
        value = np.asarray(self.oracle.evaluate(pts))
        self.ledger.record(1, initial=True)
        return value[0]

    def batch_query(self, points):
        pts = np.asarray(points)
        if pts.ndim == 1:
            pts = pts[None, :]
        self._check(pts)
        if self.max_batch is not None and pts.shape[0] > self.max_batch:
            raise BudgetExceeded(
                f"batch of {pts.shape[0]} queries exceeds the per-round budget {self.max_batch}"
            )
        if self.max_rounds is not None and self.ledger.n_rounds >= self.max_rounds:
            raise BudgetExceeded(f"round budget of {self.max_rounds} rounds is exhausted")
        values = np.asarray(self.oracle.evaluate(pts))
        self.ledger.record(pts.shape[0])
        return values

    def stream_round(self, blocks, total):
        """Evaluate one round delivered as an iterable of point blocks.

        ``total`` is the round's full size; budgets are checked against it and
        the round is recorded before any point is evaluated, so the blocks
        form a single batch. Yields ``(points, values)`` per block.
        """
        if total < 1:
            raise InvalidArgument("a batch must contain at least one point")
        if self.max_batch is not None and total > self.max_batch:
            raise BudgetExceeded(
                f"batch of {total} queries exceeds the per-round budget {self.max_batch}"
            )
        if self.max_rounds is not None and self.ledger.n_rounds >= self.max_rounds:
            raise BudgetExceeded(f"round budget of {self.max_rounds} rounds is exhausted")
        self.ledger.record(total)
        seen = 0
        for block in blocks:
            pts = np.atleast_2d(np.asarray(block))
            self._check(pts)
            seen += pts.shape[0]
            yield pts, np.asarray(self.oracle.evaluate(pts))
        if seen != total:
            raise InvalidArgument(f"round declared {total} points but delivered {seen}")

    def verification_query(self, points):
        """Evaluate points for checking purposes; counted apart from rounds."""
        pts = np.atleast_2d(np.asarray(points))
        values = np.asarray(self.oracle.evaluate(pts))
        self.ledger.verification += pts.shape[0]
        return values


def central_difference_gradient(evaluate, points, step):
    """Central finite-difference gradients of ``evaluate`` at each point.

    Returns the ``(n, d)`` gradient estimates and the number of evaluations.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = pts.shape
    eye = np.eye(d) * step
    grads = np.empty((n, d))
    for i, p in enumerate(pts):
        vals = np.asarray(evaluate(np.concatenate([p + eye, p - eye])))
        grads[i] = (vals[:d] - vals[d:]) / (2.0 * step)
    return grads, 2 * d * n


def verify_gradient(obj, points, step, session=None):
    """Largest ``||analytic - central FD|| / max(1, ||analytic||)`` over ``points``.

    When ``session`` is given the finite-difference evaluations are logged
    as verification queries on its ledger.
    """
    if obj.grad is None:
        raise UnsupportedOperation(f"{obj.name} has no analytic gradient to verify")
    if not step > 0:
        raise InvalidArgument(f"step must be positive, got {step}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    evaluate = session.verification_query if session is not None else obj.evaluate
    fd, _ = central_difference_gradient(evaluate, pts, step)
    exact = obj.gradient(pts)
    err = np.linalg.norm(exact - fd, axis=1) / np.maximum(1.0, np.linalg.norm(exact, axis=1))
    return float(np.max(err))
