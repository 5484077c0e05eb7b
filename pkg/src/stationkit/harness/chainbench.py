"""Batched baselines run against the unscaled chain function, tracking revealed links.

Both baselines query ``batch`` points per round. Values, gradient norms and
progress indices of a batch are computed from each point's chain variables
and squared norm, which is algebraically the same as evaluating the points
but avoids materialising ``batch x d`` arrays for random directions.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from ..hardchain import LARGE_GRAD_FLOOR, ChainOracle, chain_potential, chain_potential_grad, sample_partition
from ..oracle import QueryLedger

BASELINES = ("random-search", "fd-descent")
BENCH_HEADER = ["baseline", "seed", "round", "queries", "max_index", "best_value"]


@dataclass
class ChainBenchConfig:
    d: int = 4096
    d0: int = 256
    rounds: int = 20
    batch: int = 1000
    trials: int = 200
    seed: int = 0
    baselines: tuple = BASELINES

    def validate(self):
        if self.d0 < 1 or self.d % self.d0 or self.d // self.d0 < 3:
            raise InvalidArgument("d0 must divide d with at least 3 parts")
        if self.rounds < 0 or self.batch < 2 or self.trials < 1:
            raise InvalidArgument("need rounds >= 0, batch >= 2 and trials >= 1")
        for b in self.baselines:
            if b not in BASELINES:
                raise InvalidArgument(f"unknown baseline {b!r}; choose from {BASELINES}")
        return self


class ProjectedChain:
    """Unscaled chain function evaluated from ``(X(x), ||x||^2)`` pairs."""

    def __init__(self, oracle):
        self.oracle = oracle
        self.M = oracle.partition.membership()
        self.R2 = oracle.R**2

    def stats(self, X, sq):
        """Values, gradient norms and progress indices for chain vars ``X`` and squared norms ``sq``."""
        s = 1.0 / np.sqrt(1.0 + sq / self.R2)
        Y = X * s[:, None]
        values = chain_potential(Y) + 0.2 * sq
        G = chain_potential_grad(Y)  # the part-space gradient has norm ||G|| (orthonormal rows)
        xu = np.sum(X * G, axis=1)  # x . grad_g
        c = 0.4 - s**3 * xu / self.R2
        gnorm2 = s**2 * np.sum(G * G, axis=1) + 2.0 * s * c * xu + c**2 * sq
        full = np.concatenate([np.zeros((Y.shape[0], 1)), Y], axis=1)
        hit = np.abs(np.diff(full, axis=1)) >= 0.5
        idx = np.max(np.where(hit, np.arange(1, Y.shape[1] + 1), 0), axis=1)
        return values, np.sqrt(np.maximum(gnorm2, 0.0)), idx


@dataclass
class TrialResult:
    baseline: str
    seed: int
    max_index: list  # running max of the progress index after each round (round 0 first)
    best_value: list
    queries: list
    min_grad_norm_low_index: float  # smallest gradient norm among queried points with index <= r

    def within_budget(self):
        """Progress index at most 2t after every round t."""
        return all(idx <= 2 * t for t, idx in enumerate(self.max_index))


def _rademacher(rng, n, d):
    bits = np.unpackbits(rng.integers(0, 256, size=(n, (d + 7) // 8), dtype=np.uint8), axis=1)
    return bits[:, :d].astype(np.float32)


def run_trial(baseline, cfg, seed):
    part = sample_partition(cfg.d, cfg.d0, seed)
    oracle = ChainOracle(part)
    chain = ProjectedChain(oracle)
    M = chain.M
    r = part.r
    rng = np.random.default_rng([seed, BASELINES.index(baseline)])
    ledger = QueryLedger()

    x = np.zeros(cfg.d)
    X = M @ x
    v0, g0, i0 = chain.stats(X[None, :], np.array([0.0]))
    ledger.record(1, initial=True)
    fx = float(v0[0])
    running = int(i0[0])
    max_index = [running]
    best = [fx]
    min_grad = float(g0[0]) if i0[0] <= r else math.inf
    step = 1.0
    fd_h = 1e-6
    root_d = math.sqrt(cfg.d)

    for _ in range(cfg.rounds):
        if baseline == "random-search":
            # candidates x + step * xi, xi uniform on {+-1/sqrt(d)}^d
            B = _rademacher(rng, cfg.batch, cfg.d)
            proj = B @ np.concatenate([M.T, x[:, None]], axis=1).astype(np.float32)
            proj = proj.astype(float)
            Xxi = (2.0 * proj[:, :-1] - M.sum(axis=1)) / root_d
            xxi = (2.0 * proj[:, -1] - x.sum()) / root_d
            Xc = X + step * Xxi
            sq = x @ x + 2.0 * step * xxi + step**2
            vals, gn, idx = chain.stats(Xc, sq)
            i = int(np.argmin(vals))
            if vals[i] < fx:
                x = x + step * (2.0 * B[i].astype(float) - 1.0) / root_d
                X = M @ x
                fx = float(vals[i])
                step *= 2.0
            else:
                step *= 0.5
        else:
            # forward differences on batch - 1 random coordinates, then a 1/l_1 gradient step
            coords = rng.choice(cfg.d, size=cfg.batch - 1, replace=False)
            Xc = np.vstack([X[None, :], X + fd_h * M[:, coords].T])
            sq = np.concatenate([[x @ x], x @ x + 2.0 * fd_h * x[coords] + fd_h**2])
            vals, gn, idx = chain.stats(Xc, sq)
            ghat = (vals[1:] - vals[0]) / fd_h
            x = x.copy()
            x[coords] -= ghat / oracle.l_p
            X = M @ x
            fx = float(chain.stats(X[None, :], np.array([x @ x]))[0][0])
        ledger.record(Xc.shape[0])
        running = max(running, int(idx.max()))
        low = idx <= r
        if np.any(low):
            min_grad = min(min_grad, float(gn[low].min()))
        max_index.append(running)
        best.append(min(best[-1], float(vals.min()), fx))
    return TrialResult(
        baseline=baseline, seed=seed, max_index=max_index, best_value=best,
        queries=[size for _, size in ledger.rounds], min_grad_norm_low_index=min_grad,
    )


def run_chain_bench(cfg):
    """All trials of every baseline; returns ``(results, csv_rows)``."""
    cfg.validate()
    results = []
    rows = []
    for baseline in cfg.baselines:
        for t in range(cfg.trials):
            seed = cfg.seed + t
            res = run_trial(baseline, cfg, seed)
            results.append(res)
            for rnd, (q, idx, val) in enumerate(zip(res.queries, res.max_index, res.best_value)):
                rows.append([baseline, seed, rnd, q, idx, repr(val)])
    return results, rows


def summarize(results, floor=LARGE_GRAD_FLOOR):
    out = {}
    for b in sorted({r.baseline for r in results}):
        mine = [r for r in results if r.baseline == b]
        ok = sum(r.within_budget() for r in mine)
        out[b] = {
            "trials": len(mine),
            "within_2t": ok,
            "fraction_within_2t": ok / len(mine),
            "max_final_index": max(r.max_index[-1] for r in mine),
            "min_grad_norm_low_index": min(r.min_grad_norm_low_index for r in mine),
            "grad_floor_ok": all(r.min_grad_norm_low_index >= floor for r in mine),
        }
    return out
