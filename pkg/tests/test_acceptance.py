"""Acceptance criteria, each checked at its stated tolerance and reported by number."""

import math
import time

import numpy as np
import pytest

from stationkit import hardchain
from stationkit.gridpath import (
    PathOracle,
    failure_surface,
    grid_bench_rows,
    local_minima,
    random_monotone_path,
    round_limited_search,
    square,
    lower_bound_q_scale,
)
from stationkit.harness import cli
from stationkit.harness.chainbench import ChainBenchConfig, run_chain_bench, summarize
from stationkit.harness.suites import suite_component_functions
from stationkit.objectives import cosine, quadratic
from stationkit.oracle import BatchSession, verify_gradient
from stationkit.trap import GfgtConfig, gfgt, trap_violations

EPS = 1e-2
D = 2


def _schedule_violations(cfg, trace, ledger):
    """Invariant breaches of one run: eps bookkeeping, final size, per-axis shrink."""
    bad = []
    states = trace.states
    if states[0].eps_t != cfg.eps / 4:
        bad.append("eps_0 != eps/4")
    if states[-1].eps_next > cfg.eps / 2:
        bad.append("eps_k > eps/2")
    if trace.final_rect.max_side > cfg.eps / (2 * math.sqrt(cfg.d) * cfg.lipschitz):
        bad.append("final diameter")
    for st in states:
        if np.any(st.rect_next.sides > 3 * st.rect.sides / st.ell * (1 + 1e-12)):
            bad.append(f"shrink at t={st.t}")
        if st.eps_prime > st.eps_next:
            bad.append(f"slack at t={st.t}")
        if st.new_face_dist < st.rect.min_side / st.ell * (1 - 1e-9):
            bad.append(f"face distance at t={st.t}")
    if ledger.n_rounds != cfg.k + 1:
        bad.append("round count")
    return bad


@pytest.fixture(scope="module")
def solve_suite():
    """The 160 cube-mode runs: k in 1..4, quadratic and cosine, 20 seeds each."""
    rng = np.random.default_rng(2024)
    runs = []
    start = time.perf_counter()
    for k in (1, 2, 3, 4):
        for name in ("quadratic", "cosine"):
            for _ in range(20):
                obj = quadratic(D, 1.0, rng.random(D)) if name == "quadratic" else cosine(D, 1.0)
                cfg = GfgtConfig(eps=EPS, lipschitz=1.0, d=D, k=k, x0=rng.random(D))
                session = BatchSession(obj)
                out, trace = gfgt(cfg, session)
                gnorm = float(np.linalg.norm(obj.projected_gradient(out)))
                runs.append((k, name, gnorm, _schedule_violations(cfg, trace, session.ledger)))
    return runs, time.perf_counter() - start


def test_c01_gfgt_correctness(solve_suite, criterion):
    runs, wall = solve_suite
    ok = sum(g <= EPS for _, _, g, _ in runs)
    worst = max(g for _, _, g, _ in runs)
    criterion(1, "GFGT output is eps-stationary", ok == len(runs) and wall <= 60.0,
              f"{ok}/{len(runs)} runs, worst |grad| {worst:.2e}, {wall:.1f}s")


def _sweep(k, eps_values=(1e-1, 3e-2, 1e-2)):
    per_iter, total = [], []
    for e in eps_values:
        obj = quadratic(D, 1.0, [0.37, 0.61])
        session = BatchSession(obj)
        _, trace = gfgt(GfgtConfig(eps=e, lipschitz=1.0, d=D, k=k, x0=[0.9, 0.2]), session)
        per_iter.append(max(st.queries for st in trace.states))
        total.append(session.ledger.total)
    x = np.log(1.0 / np.array(eps_values))
    return np.polyfit(x, np.log(per_iter), 1)[0], np.polyfit(x, np.log(total), 1)[0]


def test_c02_grid_search_slope(criterion):
    _, slope = _sweep(1)
    criterion(2, "k=1 total-query slope vs 1/eps is 2.0 +- 0.15", abs(slope - 2.0) <= 0.15,
              f"slope {slope:.3f}")


def test_c03_exponent_decay(criterion):
    def predicted(k):
        return (D - 1) / (2 * ((2 * D / (D + 1)) ** k - 1)) + (D - 1) / 2

    s1, _ = _sweep(1)
    s2, _ = _sweep(2)
    ok = s2 < s1 and abs(s1 - predicted(1)) <= 0.2 and abs(s2 - predicted(2)) <= 0.2
    criterion(3, "per-iteration query exponent decays with k", ok,
              f"k=1 {s1:.3f} (pred {predicted(1):.3f}), k=2 {s2:.3f} (pred {predicted(2):.3f})")


def test_c04_schedule_invariants(solve_suite, criterion):
    runs, _ = solve_suite
    bad = [(k, name, v) for k, name, _, v in runs if v]
    criterion(4, "schedule invariants hold in every run", not bad,
              f"{len(bad)} runs with violations" + (f", e.g. {bad[0]}" if bad else ""))


def test_c05_trap_invariant(criterion):
    rng = np.random.default_rng(5)
    checked = violations = 0
    setups = [(k, name, seed) for k in (1, 2, 3, 4) for name in ("quadratic", "cosine") for seed in range(2)]
    for k, name, seed in setups:
        srng = np.random.default_rng(seed + 100 * k)
        obj = quadratic(D, 1.0, srng.random(D)) if name == "quadratic" else cosine(D, 1.0)
        cfg = GfgtConfig(eps=EPS, lipschitz=1.0, d=D, k=k, x0=srng.random(D))

        def hook(st):
            nonlocal checked, violations
            v, n = trap_violations(obj, st.rect_next, st.x_next, st.eps_next, 1000, rng, cube=True)
            violations += v
            checked += n

        gfgt(cfg, BatchSession(obj), hook)
    # unconstrained runs: the starting box and every later box
    for seed in range(3):
        srng = np.random.default_rng(seed)
        obj = quadratic(D, 1.0, srng.uniform(-1, 1, D), domain="free")
        cfg = GfgtConfig(eps=0.5, lipschitz=1.0, d=D, k=2, x0=srng.uniform(-1, 1, D), mode="free")
        first = {}

        def hook_free(st):
            nonlocal checked, violations
            if not first:
                first["done"] = True
                v, n = trap_violations(obj, st.rect, st.x, st.eps_t, 1000, rng)
                violations += v
                checked += n
            v, n = trap_violations(obj, st.rect_next, st.x_next, st.eps_next, 1000, rng)
            violations += v
            checked += n

        gfgt(cfg, BatchSession(obj), hook_free)
    criterion(5, "sampled boundary points are eps_t-unreachable", violations == 0 and checked > 0,
              f"{violations} reachable of {checked} sampled")


def test_c06_component_functions(criterion):
    start = time.perf_counter()
    checks = suite_component_functions()
    wall = time.perf_counter() - start
    failed = [name for name, ok, _ in checks if not ok]
    criterion(6, "Psi/Phi property suite", not failed and wall <= 5.0,
              f"{len(checks) - len(failed)}/{len(checks)} checks, {wall:.2f}s" + (f", failed {failed}" if failed else ""))


def test_c07_hard_instance_gradient_bounds(criterion):
    rng = np.random.default_rng(7)
    part = hardchain.sample_partition(512, 64, 7)
    orc = hardchain.ChainOracle(part)
    r = part.r
    # 500 points placed on random chain configurations, 500 Gaussian points of varied scale
    placed = hardchain.embed_chain_vars(part, hardchain.sample_chain_configs(r, 500, rng), rng, noise=0.1)
    gauss = rng.standard_normal((500, 512)) * rng.uniform(0.01, 3.0, (500, 1))
    y = np.vstack([placed, gauss])
    gmax = np.linalg.norm(orc.grad_g(y), axis=1).max()
    bound = 46 * math.sqrt(r + 1)
    X = hardchain.sample_chain_configs(r, 1000, rng, last_gap=1.0)
    x = hardchain.unsquash(hardchain.embed_chain_vars(part, X, rng, noise=0.1), orc.R)
    Xq = orc.progress_vars(x)
    assert np.all(np.abs(Xq[:, -1] - Xq[:, -2]) < 1)
    gmin = np.linalg.norm(orc.grad_f_unscaled(x), axis=1).min()
    criterion(7, "chain gradient upper and lower bounds", gmax <= bound and gmin >= 0.08,
              f"max |grad g| {gmax:.2f} <= {bound:.2f}; min |grad f| {gmin:.3f} >= 0.08")


def test_c08_gradient_fd_agreement(criterion):
    rng = np.random.default_rng(8)
    scaled = hardchain.make_scaled_oracle(0.05, 10, 1.0, 1, 1.0, 512, 8, enforce_dimension_gate=False)
    part = scaled.partition
    X = hardchain.sample_chain_configs(part.r, 100, rng)
    pts = hardchain.unsquash(hardchain.embed_chain_vars(part, X, rng, noise=0.1), scaled.R) * scaled.sigma
    errors = {
        "chain": verify_gradient(scaled.objective(), pts, 1e-5 * scaled.sigma),
        "quadratic": verify_gradient(quadratic(5, 1.0, rng.random(5)), rng.random((100, 5)), 1e-5),
        "cosine": verify_gradient(cosine(5, 1.0), rng.random((100, 5)), 1e-5),
    }
    worst = max(errors.values())
    criterion(8, "analytic gradients match finite differences", worst <= 1e-5,
              ", ".join(f"{k} {v:.1e}" for k, v in errors.items()))


def test_c09_information_hiding(criterion):
    cfg = ChainBenchConfig(d=4096, d0=256, rounds=20, batch=1000, trials=200, seed=0)
    start = time.perf_counter()
    results, _ = run_chain_bench(cfg)
    wall = time.perf_counter() - start
    stats = summarize(results)
    ok = wall <= 600 and all(s["fraction_within_2t"] >= 0.95 and s["grad_floor_ok"] for s in stats.values())
    detail = "; ".join(
        f"{b}: {s['within_2t']}/{s['trials']} within 2t, max index {s['max_final_index']}, "
        f"min |grad| {s['min_grad_norm_low_index']:.3f}"
        for b, s in stats.items()
    )
    criterion(9, "progress index <= 2t under batched baselines", ok, f"{detail}; {wall:.0f}s")


def test_c10_concentration(criterion):
    d, d0 = 4096, 256
    rng = np.random.default_rng(10)
    dense = np.abs(rng.standard_normal(d))
    dense /= np.linalg.norm(dense)
    spiky = np.zeros(d)
    spiky[rng.choice(d, 64, replace=False)] = rng.uniform(0.5, 1.0, 64)
    spiky /= np.linalg.norm(spiky)
    lines, ok = [], True
    for name, y in (("dense", dense), ("spiky", spiky)):
        top = np.sort((y / math.sqrt(d0)) ** 2)[::-1][:d0].sum()
        crossing = math.sqrt(16 * top * math.log(2))  # where the bound drops below 1
        ts = [0.25 * crossing, 0.5 * crossing, crossing, 1.5 * crossing, 2 * crossing, 3 * crossing]
        res = hardchain.concentration_probe(d, d0, 10**4, ts, y=y, seed=11)
        ok &= all(r.frequency <= r.bound for r in res)
        lines.append(name + " " + " ".join(f"t={r.t:.3g}:{r.frequency:.4f}<={min(r.bound, 9.99):.3g}" for r in res))
    criterion(10, "empirical tails within the concentration bound", ok, "; ".join(lines))


def test_c11_grid_paths(criterion):
    unique = True
    for d, n_max in ((2, 8), (3, 4)):
        for n in range(1, n_max + 1):
            for seed in range(50):
                path = random_monotone_path(n, d, seed)
                unique &= local_minima(PathOracle(path)) == [path.endpoint]
    tiles = True
    rng = np.random.default_rng(11)
    for d in (1, 2, 3):
        for n in range(1, 5):
            verts = np.array(np.meshgrid(*[range(n + 1)] * d, indexing="ij")).reshape(d, -1).T
            lo, hi = square(verts, n)
            tiles &= math.isclose(np.prod(hi - lo, axis=1).sum(), 1.0)
            probes = rng.random((2000, d))
            inside = np.all((probes[:, None] > lo[None]) & (probes[:, None] < hi[None]), axis=2)
            tiles &= bool(np.all(inside.sum(axis=1) == 1))
            tiles &= bool(np.all(lo >= 0) and np.all(hi <= 1))
    rounds_ok = True
    for n in (1, 5, 8, 20):
        for seed in range(20):
            res = round_limited_search(PathOracle(random_monotone_path(n, 2, seed)), 10 * n, 1, "frontier")
            rounds_ok &= res.found and res.rounds_used == n
    q = round(lower_bound_q_scale(64, 2, 2))
    cell = failure_surface(grid_bench_rows(64, 2, [2], [q], range(200)))[0]
    criterion(11, "grid-path suite", unique and tiles and rounds_ok,
              f"unique minimum {unique}, tiling {tiles}, q=1 rounds == n {rounds_ok}; "
              f"reported only: failure rate {cell['failure_rate']:.3f} "
              f"[{cell['ci_low']:.3f}, {cell['ci_high']:.3f}] at n=64, k=2, q={q} vs 7/40 = 0.175")


def test_c12_reproducible_csv(tmp_path, criterion):
    commands = {
        "solve": (["solve", "--func", "cosine", "--d", "2", "--k", "2", "--seed", "3"], ["trace.csv", "rounds.csv"]),
        "chain-bench": (["chain-bench", "--d", "4096", "--d0", "256", "--rounds", "4", "--trials", "3",
                         "--seed", "3"], ["chain_bench.csv"]),
        "grid-bench": (["grid-bench", "--n", "16", "--k", "2,4", "--q", "1,3", "--trials", "20",
                        "--seed", "3"], ["grid_bench.csv"]),
    }
    same = {}
    for name, (args, files) in commands.items():
        outs = []
        for rep in range(2):
            out = tmp_path / f"{name}-{rep}"
            cli.main(args + ["--out", str(out)])
            outs.append([(out / f).read_bytes() for f in files])
        same[name] = outs[0] == outs[1] and all(len(b) > 0 for b in outs[0])
    criterion(12, "same seed gives byte-identical CSVs", all(same.values()),
              ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
