"""Self-check suites run by ``stationkit verify``.

Every suite returns a list of ``(check, passed, detail)`` tuples. Functions
are looked up through their modules at call time so a patched component
is what gets checked.
"""

import math

import numpy as np

from .. import errors, geometry, gridpath, hardchain, objectives, oracle, trap


def _check(name, passed, detail=""):
    return (name, bool(passed), detail)


def suite_geometry():
    rng = np.random.default_rng(0)
    out = []
    rect = geometry.HyperRectangle([0.0, -1.0, 2.0], [1.0, 0.5, 2.5])
    delta = 0.07
    net = geometry.nice_delta_net(rect, delta)
    probe = rect.lo + rng.random((2000, 3)) * rect.sides
    dist = np.min(np.linalg.norm(probe[:, None, :] - net.points[None, :, :], axis=2), axis=1)
    out.append(_check("net covers rectangle", dist.max() <= delta, f"max gap {dist.max():.4g}"))
    worst = 0.0
    for face in rect.faces():
        f = face[2]
        pts = f.lo + rng.random((500, 3)) * f.sides
        on_face = net.points[f.contains(net.points)]
        gap = np.min(np.linalg.norm(pts[:, None, :] - on_face[None, :, :], axis=2), axis=1).max()
        worst = max(worst, gap)
    out.append(_check("net restricted to each facet covers it", worst <= delta, f"max gap {worst:.4g}"))
    slices = geometry.barrier_slices(geometry.HyperRectangle.unit_cube(3), 4)
    out.append(_check("barrier slice count d(ell-1)", len(slices) == 9))
    out.append(_check("unreachability is strict", not geometry.is_unreachable(1.0, 0.5, [0, 0], [0, 5], 0.1)))
    return out


def suite_oracle():
    out = []
    obj = objectives.quadratic(2, 1.0, [0.5, 0.5])
    s = oracle.BatchSession(obj, max_rounds=2, max_batch=3)
    s.initial_query([0.1, 0.1])
    s.batch_query(np.zeros((3, 2)))
    rejected = False
    try:
        s.batch_query(np.zeros((4, 2)))
    except errors.BudgetExceeded:
        rejected = True
    out.append(_check("oversized batch rejected", rejected))
    out.append(_check("ledger counts rounds and queries", s.ledger.n_rounds == 1 and s.ledger.total == 4))
    err = oracle.verify_gradient(obj, np.random.default_rng(1).random((20, 2)), 1e-5)
    out.append(_check("quadratic gradient matches finite differences", err <= 1e-5, f"{err:.2e}"))
    return out


def suite_component_functions():
    """Exact-threshold checks of the Psi / Phi properties."""
    psi, psi_prime = hardchain.psi, hardchain.psi_prime
    phi, phi_prime = hardchain.phi, hardchain.phi_prime
    out = []
    low = np.linspace(-10.0, 0.5, 10001)
    out.append(_check("Psi = 0 for x <= 1/2", np.all(psi(low) == 0.0)))
    out.append(_check("Psi' = 0 for x <= 1/2", np.all(psi_prime(low) == 0.0)))
    xs = np.linspace(1.0, 5.0, 401)
    ys = np.linspace(-1.0, 1.0, 401)[1:-1]
    prod = psi(xs)[:, None] * phi_prime(ys)[None, :]
    out.append(_check("Psi(x) Phi'(y) > 1 for x >= 1, |y| < 1", np.all(prod > 1.0), f"min {prod.min():.6g}"))
    pts = np.random.default_rng(4).uniform(-6.0, 6.0, 10**4)
    p, dp, f, df = psi(pts), psi_prime(pts), phi(pts), phi_prime(pts)
    out.append(_check("0 <= Psi < e", np.all((p >= 0) & (p < math.e)), f"max {p.max():.6g}"))
    out.append(_check("0 <= Psi' <= sqrt(54/e)", np.all((dp >= 0) & (dp <= hardchain.PSI_PRIME_SUP)), f"max {dp.max():.6g}"))
    out.append(_check("0 < Phi < sqrt(2 pi e)", np.all((f > 0) & (f < hardchain.PHI_SUP))))
    out.append(_check("0 < Phi' <= sqrt(e)", np.all((df > 0) & (df <= hardchain.SQRT_E))))
    out.append(_check("Psi(1) = 1", psi(1.0) == 1.0))
    return out


def suite_chain():
    rng = np.random.default_rng(7)
    out = []
    part = hardchain.sample_partition(512, 64, 11)
    orc = hardchain.ChainOracle(part)
    r = part.r
    y = hardchain.embed_chain_vars(part, hardchain.sample_chain_configs(r, 300, rng), rng, noise=0.05)
    gmax = np.linalg.norm(orc.grad_g(y), axis=1).max()
    out.append(_check("||grad g|| <= 46 sqrt(r+1)", gmax <= hardchain.GRAD_BOUND_COEF * math.sqrt(r + 1), f"max {gmax:.4g}"))
    X = hardchain.sample_chain_configs(r, 300, rng, last_gap=1.0)
    x = hardchain.unsquash(hardchain.embed_chain_vars(part, X, rng, noise=0.05), orc.R)
    gmin = np.linalg.norm(orc.grad_f_unscaled(x), axis=1).min()
    out.append(_check("||grad f|| >= 0.08 when the last gap is < 1", gmin >= hardchain.LARGE_GRAD_FLOOR, f"min {gmin:.4g}"))
    err = oracle.verify_gradient(orc.objective(), x[:20], 1e-5)
    out.append(_check("chain gradient matches finite differences", err <= 1e-5, f"{err:.2e}"))
    out.append(_check("f(0) = -Psi(1) Phi(0)", abs(orc.value(np.zeros(512)) + hardchain.PHI_SUP / 2) < 1e-12))
    return out


def suite_trap():
    out = []
    rng = np.random.default_rng(3)
    obj = objectives.quadratic(2, 1.0, [0.3, 0.8])
    cfg = trap.GfgtConfig(eps=1e-2, lipschitz=1.0, d=2, k=3, x0=[0.9, 0.1])
    bad = []

    def hook(st):
        v, _ = trap.trap_violations(obj, st.rect_next, st.x_next, st.eps_next, 200, rng, cube=True)
        if v or st.eps_prime > st.eps_next or st.queries > st.query_bound:
            bad.append(st.t)

    session = oracle.BatchSession(obj)
    x, tr = trap.gfgt(cfg, session, hook)
    g = np.linalg.norm(obj.projected_gradient(x))
    out.append(_check("output is stationary", g <= 1e-2, f"{g:.3g}"))
    out.append(_check("per-iteration invariants", not bad, f"failing iterations {bad}"))
    out.append(_check("final diameter", tr.final_rect.max_side <= 1e-2 / (2 * math.sqrt(2))))
    out.append(_check("round count k + 1", session.ledger.n_rounds == 4))
    return out


def suite_gridpath():
    out = []
    unique = True
    for seed in range(10):
        path = gridpath.random_monotone_path(6, 2, seed)
        orc = gridpath.PathOracle(path)
        unique &= gridpath.local_minima(orc) == [path.endpoint]
    out.append(_check("endpoint is the unique local minimum", unique))
    res = gridpath.round_limited_search(gridpath.PathOracle(gridpath.random_monotone_path(8, 2, 0)), 50, 1)
    out.append(_check("q=1 frontier search takes n rounds", res.found and res.rounds_used == 8))
    return out


SUITES = {
    "geometry": suite_geometry,
    "oracle": suite_oracle,
    "component-functions": suite_component_functions,
    "chain-function": suite_chain,
    "trap": suite_trap,
    "gridpath": suite_gridpath,
}


def run_suites(names=None):
    """Run suites by name; returns ``{suite: [(check, passed, detail), ...]}``."""
    report = {}
    for name in names or SUITES:
        try:
            report[name] = SUITES[name]()
        except Exception as exc:  # a crashing suite is a failing suite
            report[name] = [_check("suite raised", False, f"{type(exc).__name__}: {exc}")]
    return report
