"""Monotone path functions on grid graphs and round-limited local search.

A monotone path starts at the origin of ``{0..n}^d`` and takes ``n`` unit
steps, each increasing one coordinate. The path function is ``-||v||_1`` on
the path and ``+||v||_1`` elsewhere, so the path's endpoint is its only
local minimum. Finding that endpoint with few adaptive rounds is the
discrete counterpart of finding a stationary point.
"""

import csv
import io
import json
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import BudgetExceeded, InvalidArgument
from .oracle import BatchSession

GRID_CSV_HEADER = ["n", "d", "k", "q", "seed", "found", "rounds_used", "queries_used"]


@dataclass(frozen=True)
class GridGraph:
    n: int
    d: int

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise InvalidArgument(f"grid needs n >= 1 and d >= 1, got n={self.n}, d={self.d}")

    @property
    def size(self):
        return (self.n + 1) ** self.d

    def contains(self, v):
        v = np.asarray(v)
        return bool(v.shape == (self.d,) and np.all((v >= 0) & (v <= self.n)))

    def vertices(self):
        return np.array(list(product(range(self.n + 1), repeat=self.d)), dtype=np.int64)

    def neighbors(self, v):
        out = []
        for j in range(self.d):
            for step in (-1, 1):
                u = list(v)
                u[j] += step
                if 0 <= u[j] <= self.n:
                    out.append(tuple(u))
        return out


@dataclass(frozen=True)
class MonotonePath:
    n: int
    d: int
    steps: tuple
    seed: int

    @property
    def vertices(self):
        v = [0] * self.d
        out = [tuple(v)]
        for j in self.steps:
            v[j] += 1
            out.append(tuple(v))
        return out

    @property
    def endpoint(self):
        return self.vertices[-1]

    def to_json(self):
        return json.dumps(
            {"n": self.n, "d": self.d, "seed": self.seed, "steps": list(self.steps)},
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        return cls(n=raw["n"], d=raw["d"], steps=tuple(raw["steps"]), seed=raw["seed"])


def random_monotone_path(n, d, seed):
    """Path whose every step picks a uniformly random axis that is not yet at ``n``."""
    GridGraph(n, d)
    rng = np.random.default_rng(seed)
    v = np.zeros(d, dtype=np.int64)
    steps = []
    for _ in range(n):
        open_axes = np.flatnonzero(v < n)
        j = int(open_axes[rng.integers(open_axes.size)])
        v[j] += 1
        steps.append(j)
    return MonotonePath(n=n, d=d, steps=tuple(steps), seed=seed)


class PathOracle:
    """Path function ``P(v) = -||v||_1`` on the path, ``+||v||_1`` off it."""

    def __init__(self, path):
        self.path = path
        self.grid = GridGraph(path.n, path.d)
        self.position = {v: i for i, v in enumerate(path.vertices)}

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points))
        return np.all((pts >= 0) & (pts <= self.grid.n) & (pts == np.round(pts)), axis=1)

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points)).astype(np.int64)
        norms = pts.sum(axis=1)
        on = np.array([tuple(p) in self.position for p in pts.tolist()])
        return np.where(on, -norms, norms)


def path_value(oracle, v):
    if not oracle.grid.contains(v):
        raise InvalidArgument(f"vertex {list(v)} is outside the grid")
    return int(oracle.evaluate(np.asarray(v)[None, :])[0])


def is_local_min(oracle, v):
    v = tuple(int(c) for c in v)
    if not oracle.grid.contains(v):
        raise InvalidArgument(f"vertex {list(v)} is outside the grid")
    nbrs = oracle.grid.neighbors(v)
    vals = oracle.evaluate(np.array([v] + nbrs))
    return bool(np.all(vals[0] <= vals[1:]))


def local_minima(oracle):
    """All local minima, by brute force over the grid."""
    verts = oracle.grid.vertices()
    vals = dict(zip(map(tuple, verts.tolist()), oracle.evaluate(verts).tolist()))
    out = []
    for v, fv in vals.items():
        if all(fv <= vals[u] for u in oracle.grid.neighbors(v)):
            out.append(v)
    return out


def square(v, n):
    """The cube ``prod_s [v_s / (n+1), (v_s + 1) / (n+1)]`` a vertex maps to in ``[0, 1]^d``."""
    v = np.asarray(v, dtype=float)
    return v / (n + 1), (v + 1) / (n + 1)


def reduction_budget(queries_smooth, d):
    """Path queries that ``queries_smooth`` queries to the smooth extension cost."""
    if queries_smooth < 0 or d < 1:
        raise InvalidArgument("need queries_smooth >= 0 and d >= 1")
    return (2 * d + 1) * queries_smooth


def lower_bound_q_scale(n, d, k):
    """Per-round query scale ``n^((d^(k+1) - d^k) / (d^k - 1)) / (20 d k)`` under which search fails."""
    return n ** ((d ** (k + 1) - d**k) / (d**k - 1)) / (20.0 * d * k)


# ---------------------------------------------------------------------------
# Search strategies. Each one proposes a batch from what it has seen so far,
# receives the answers, and finally names a vertex.


class FrontierStrategy:
    """Follow the path from its furthest known vertex.

    The path is monotone, so the vertex after a known path vertex ``v`` is
    ``v + e_j`` for some axis ``j``; every off-path answer rules that axis
    out. Each round spends its budget on a breadth-first lookahead over the
    still-possible continuations, nearest first.
    """

    def start(self, grid, rng):
        self.grid = grid
        self.known = {}
        self.tip = tuple([0] * grid.d)
        self.known[self.tip] = 0

    def _on_path(self, v):
        return self.known.get(v) == -sum(v)

    def _tip(self):
        """Furthest path vertex that is known or deducible from the answers so far."""
        while sum(self.tip) < self.grid.n:
            succ = []
            for j in range(self.grid.d):
                if self.tip[j] < self.grid.n:
                    u = list(self.tip)
                    u[j] += 1
                    succ.append(tuple(u))
            on = [u for u in succ if self._on_path(u)]
            if on:
                self.tip = on[0]
                continue
            open_ = [u for u in succ if u not in self.known]
            if len(open_) == 1:
                # every other successor is off the path, so this one is on it
                self.known[open_[0]] = -sum(open_[0])
                self.tip = open_[0]
                continue
            break
        return self.tip

    def next_batch(self, q):
        tip = self._tip()
        batch = []
        frontier = [tip]
        seen = {tip}
        while frontier and len(batch) < q:
            nxt = []
            for v in frontier:
                for j in range(self.grid.d):
                    if v[j] >= self.grid.n:
                        continue
                    u = list(v)
                    u[j] += 1
                    u = tuple(u)
                    if u in seen:
                        continue
                    seen.add(u)
                    if u in self.known:
                        if self.known[u] == -sum(u):
                            nxt.append(u)
                        continue
                    batch.append(u)
                    nxt.append(u)
                    if len(batch) >= q:
                        break
                if len(batch) >= q:
                    break
            frontier = nxt
        return batch

    def observe(self, batch, values):
        for v, val in zip(batch, values):
            self.known[v] = int(val)

    def done(self):
        tip = self._tip()
        return sum(tip) == self.grid.n

    def result(self):
        return self._tip()


class ExhaustiveStrategy:
    """Query the grid in lexicographic order; report the best on-path vertex seen."""

    def start(self, grid, rng):
        self.grid = grid
        self.order = [tuple(v) for v in grid.vertices().tolist()]
        self.cursor = 0
        self.best = (tuple([0] * grid.d), 0)

    def next_batch(self, q):
        batch = self.order[self.cursor : self.cursor + q]
        self.cursor += len(batch)
        return batch

    def observe(self, batch, values):
        for v, val in zip(batch, values):
            if val < self.best[1]:
                self.best = (v, int(val))

    def done(self):
        return self.cursor >= len(self.order) or -self.best[1] == self.grid.n

    def result(self):
        return self.best[0]


class RandomStrategy:
    """Query uniformly random unseen vertices; report the best on-path vertex seen."""

    def start(self, grid, rng):
        self.grid = grid
        self.order = [tuple(v) for v in grid.vertices()[rng.permutation(grid.size)].tolist()]
        self.cursor = 0
        self.best = (tuple([0] * grid.d), 0)

    next_batch = ExhaustiveStrategy.next_batch
    observe = ExhaustiveStrategy.observe
    done = ExhaustiveStrategy.done
    result = ExhaustiveStrategy.result


STRATEGIES = {"frontier": FrontierStrategy, "exhaustive": ExhaustiveStrategy, "random": RandomStrategy}


@dataclass
class SearchResult:
    found: bool
    answer: tuple
    ledger: object
    budget_violation: bool = False

    @property
    def rounds_used(self):
        return self.ledger.n_rounds

    @property
    def queries_used(self):
        return self.ledger.total


def round_limited_search(oracle, rounds, queries_per_round, strategy="frontier", seed=0):
    """Run ``strategy`` with at most ``rounds`` batches of ``queries_per_round`` queries.

    ``found`` is True when the reported vertex is the path's endpoint. A
    strategy that tries to exceed the budget is stopped and the run counts
    as failed.
    """
    if rounds < 1 or queries_per_round < 1:
        raise InvalidArgument("need at least one round and one query per round")
    strat = STRATEGIES[strategy]() if isinstance(strategy, str) else strategy
    rng = np.random.default_rng(seed)
    strat.start(oracle.grid, rng)
    session = BatchSession(oracle, max_rounds=rounds, max_batch=queries_per_round)
    violation = False
    for _ in range(rounds):
        if strat.done():
            break
        batch = strat.next_batch(queries_per_round)
        if not batch:
            break
        try:
            values = session.batch_query(np.array(batch, dtype=np.int64))
        except BudgetExceeded:
            violation = True
            break
        strat.observe(batch, values.tolist())
    answer = tuple(int(c) for c in strat.result())
    found = not violation and answer == oracle.path.endpoint
    return SearchResult(found=found, answer=answer, ledger=session.ledger, budget_violation=violation)


def wilson_interval(successes, trials, confidence=0.95):
    from scipy.stats import binomtest

    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return ci.low, ci.high


def grid_bench_rows(n, d, ks, qs, seeds, strategy="frontier"):
    """One CSV row per ``(k, q, seed)`` run, in a fixed order."""
    rows = []
    for k in ks:
        for q in qs:
            for seed in seeds:
                path = random_monotone_path(n, d, seed)
                res = round_limited_search(PathOracle(path), k, q, strategy, seed)
                rows.append([n, d, k, q, seed, int(res.found), res.rounds_used, res.queries_used])
    return rows


def rows_to_csv(header, rows, schema=None):
    buf = io.StringIO()
    if schema is not None:
        buf.write(f"# schema: {schema}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def failure_surface(rows):
    """Failure rate with a Wilson 95% interval for each ``(k, q)`` cell."""
    cells = {}
    for n, d, k, q, seed, found, *_ in rows:
        cells.setdefault((k, q), []).append(found)
    out = []
    for (k, q), founds in cells.items():
        fails = len(founds) - sum(founds)
        lo, hi = wilson_interval(fails, len(founds))
        out.append({"k": k, "q": q, "trials": len(founds), "failure_rate": fails / len(founds),
                    "ci_low": lo, "ci_high": hi})
    return out

