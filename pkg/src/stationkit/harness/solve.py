"""The ``solve`` experiment: run the trapping search on a builtin objective and verify it."""

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidArgument
from ..hardchain import L1_DEFAULT, ChainOracle, sample_partition
from ..objectives import cosine, quadratic
from ..oracle import BatchSession
from ..trap import GfgtConfig, gfgt

FUNCS = ("quadratic", "cosine", "chain")


@dataclass
class SolveConfig:
    func: str = "quadratic"
    d: int = 2
    k: int = 2
    eps: float = 1e-2
    lipschitz: float = 1.0
    seed: int = 0
    mode: str = "cube"
    chain_parts: int = 3

    def validate(self):
        if self.func not in FUNCS:
            raise InvalidArgument(f"unknown function {self.func!r}; choose from {FUNCS}")
        if self.mode not in ("cube", "free"):
            raise InvalidArgument(f"mode must be 'cube' or 'free', got {self.mode!r}")
        if self.func == "chain" and (self.chain_parts < 3 or self.d < self.chain_parts):
            raise InvalidArgument("the chain objective needs at least 3 parts of size >= 1")
        # the remaining fields are checked by GfgtConfig
        return self


def build_problem(cfg):
    """Objective and start point for a solve config, all randomness from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.func == "quadratic":
        center = rng.random(cfg.d) if cfg.mode == "cube" else rng.uniform(-1.0, 1.0, cfg.d)
        obj = quadratic(cfg.d, cfg.lipschitz, center, domain=cfg.mode)
    elif cfg.func == "cosine":
        obj = cosine(cfg.d, cfg.lipschitz, domain=cfg.mode)
    else:
        d0 = cfg.d // cfg.chain_parts
        part = sample_partition(cfg.d, d0, cfg.seed, n_parts=cfg.chain_parts)
        # unit length scale; amplitude sets the gradient-Lipschitz constant to cfg.lipschitz
        oracle = ChainOracle(part, sigma=1.0, amplitude=cfg.lipschitz / L1_DEFAULT)
        obj = oracle.objective(domain=cfg.mode)
    x0 = rng.random(cfg.d) if cfg.mode == "cube" else rng.uniform(-1.0, 1.0, cfg.d)
    return obj, x0


def run_solve(cfg):
    """Run one solve; returns ``(summary, trace, ledger)``.

    The summary's ``ok`` flag is True when the analytic (projected, in cube
    mode) gradient norm at the output is at most ``eps``.
    """
    cfg.validate()
    obj, x0 = build_problem(cfg)
    gcfg = GfgtConfig(eps=cfg.eps, lipschitz=cfg.lipschitz, d=cfg.d, k=cfg.k, x0=x0, mode=cfg.mode)
    session = BatchSession(obj)
    start = time.perf_counter()
    out, trace = gfgt(gcfg, session)
    wall = time.perf_counter() - start
    grad = obj.projected_gradient(out) if cfg.mode == "cube" else obj.gradient(out)
    gnorm = float(np.linalg.norm(grad))
    ledger = session.ledger
    summary = {
        "config": asdict(cfg),
        "output": [float(v) for v in out],
        "grad_norm": gnorm,
        "ok": bool(gnorm <= cfg.eps),
        "rounds": ledger.n_rounds,
        "rounds_including_initial": ledger.n_rounds_with_initial,
        "queries_per_round": [size for _, size in ledger.rounds],
        "total_queries": ledger.total,
        "final_diameter": trace.final_rect.max_side,
        "diameter_target": cfg.eps / (2.0 * math.sqrt(cfg.d) * cfg.lipschitz),
        "wall_time_s": wall,
    }
    return summary, trace, ledger
