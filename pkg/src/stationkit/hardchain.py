"""Randomly partitioned chain functions that hide their structure from batched queries.

The coordinates of R^d are split at random into equal parts ``P_1 .. P_{r+2}``.
The chain variables are the normalised part sums ``X^i = sum_{s in P_i} y_s / sqrt(d0)``.
The chain potential ``g`` only has a small gradient once every consecutive
pair of chain variables has been pulled apart. A query that does not know the
partition sees near-zero part sums, so each round reveals at most a couple
of new links.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DimensionTooSmall, InvalidArgument
from .oracle import Objective

SQRT_E = math.sqrt(math.e)
PHI_SUP = math.sqrt(2.0 * math.pi * math.e)
PSI_PRIME_SUP = math.sqrt(54.0 / math.e)
GRAD_BOUND_COEF = 46.0
LARGE_GRAD_FLOOR = 0.08
VALUE_GAP_PER_LINK = 12.0
R_COEF = 230.0
SIGMA_COEF = 0.08
R_DIVISOR = 1857.0
GATE_COEF = 16.0**2 * 230.0**2

# Below this value of 2x - 1 the factor exp(1 - 1/(2x-1)^2) is under 1e-480,
# so Psi is returned as exactly 0 instead of risking overflow in 1/(2x-1)^2.
PSI_CUTOFF = 0.03

# Gradient-Lipschitz constant of the unscaled chain function. Estimated from
# finite-difference Hessians of the chain potential at 1e5 random chain
# configurations (gaps uniform on [-2, 2], r = 6), with Nelder-Mead refinement
# of the 20 worst: largest spectral norm found 410.8. Adding 0.4 for the
# quadratic term and rounding up gives 420. The squashing map only shrinks it.
L1_DEFAULT = 420.0


def psi(x):
    """``exp(1 - 1/(2x-1)^2)`` for ``x > 1/2``, else 0."""
    x = np.asarray(x, dtype=float)
    u = 2.0 * x - 1.0
    live = u > PSI_CUTOFF
    safe = np.where(live, u, 1.0)
    return np.where(live, np.exp(1.0 - 1.0 / safe**2), 0.0)


def psi_prime(x):
    x = np.asarray(x, dtype=float)
    u = 2.0 * x - 1.0
    live = u > PSI_CUTOFF
    safe = np.where(live, u, 1.0)
    return np.where(live, np.exp(1.0 - 1.0 / safe**2) * 4.0 / safe**3, 0.0)


def phi(x):
    """``sqrt(e) * int_{-inf}^x exp(-t^2/2) dt``, via the normal CDF."""
    return PHI_SUP * ndtr(np.asarray(x, dtype=float))


def phi_prime(x):
    x = np.asarray(x, dtype=float)
    return SQRT_E * np.exp(-0.5 * x**2)


@dataclass(frozen=True, eq=False)
class ChainPartition:
    """Random equal-size parts of ``[d]``.

    ``parts`` holds ``n_parts`` disjoint sorted index arrays of size ``d0``.
    When ``d0 * n_parts < d`` the leftover coordinates belong to no part and
    never affect the chain.
    """

    d: int
    d0: int
    parts: tuple
    seed: int

    @property
    def n_parts(self):
        return len(self.parts)

    @property
    def r(self):
        return self.n_parts - 2

    def membership(self):
        """``(r+1, d)`` matrix mapping a point to its chain variables X^1..X^{r+1}."""
        m = np.zeros((self.r + 1, self.d))
        for i, part in enumerate(self.parts[: self.r + 1]):
            m[i, part] = 1.0 / math.sqrt(self.d0)
        return m

    def to_json(self):
        return json.dumps(
            {"d": self.d, "d0": self.d0, "seed": self.seed, "parts": [p.tolist() for p in self.parts]},
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        parts = tuple(np.array(p, dtype=np.int64) for p in raw["parts"])
        part = cls(d=raw["d"], d0=raw["d0"], parts=parts, seed=raw["seed"])
        _check_parts(part)
        return part

    def __eq__(self, other):
        if not isinstance(other, ChainPartition):
            return NotImplemented
        return (self.d, self.d0, self.seed) == (other.d, other.d0, other.seed) and all(
            np.array_equal(a, b) for a, b in zip(self.parts, other.parts)
        ) and self.n_parts == other.n_parts


def _check_parts(part):
    seen = np.concatenate(part.parts)
    if any(p.size != part.d0 for p in part.parts):
        raise InvalidArgument("all parts must have size d0")
    if np.unique(seen).size != seen.size or seen.min() < 0 or seen.max() >= part.d:
        raise InvalidArgument("parts must be disjoint subsets of [d]")


def sample_partition(d, d0, seed, n_parts=None):
    """Uniformly random split of ``[d]`` into parts of size ``d0``.

    A seeded shuffle of ``[d]`` is cut into consecutive blocks. By default
    ``d0`` must divide ``d`` and there are ``d / d0 >= 3`` parts; passing
    ``n_parts`` uses only the first ``n_parts * d0`` shuffled coordinates.
    """
    if d < 1 or d0 < 1:
        raise InvalidArgument(f"d and d0 must be positive, got d={d}, d0={d0}")
    if n_parts is None:
        if d % d0 != 0:
            raise InvalidArgument(f"part size {d0} does not divide d={d}")
        n_parts = d // d0
    elif n_parts * d0 > d:
        raise InvalidArgument(f"{n_parts} parts of size {d0} do not fit in d={d}")
    if n_parts < 3:
        raise InvalidArgument(f"need at least 3 parts (r >= 1), got {n_parts}")
    perm = np.random.default_rng(seed).permutation(d)
    parts = tuple(np.sort(perm[i * d0 : (i + 1) * d0]) for i in range(n_parts))
    return ChainPartition(d=d, d0=d0, parts=parts, seed=seed)


def chain_potential(X):
    """The chain potential as a function of chain variables ``X`` of shape ``(n, r+1)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, m = X.shape
    r = m - 1
    full = np.concatenate([np.zeros((n, 1)), X], axis=1)
    value = -psi(1.0) * phi(full[:, 1])
    if r >= 1:
        sign = (-1.0) ** np.arange(1, r + 1)
        a = full[:, 0:r] - full[:, 1 : r + 1]
        b = full[:, 2 : r + 2] - full[:, 1 : r + 1]
        terms = sign * (psi(a) * phi(b) - psi(-a) * phi(-b))
        value = value - terms.sum(axis=1)
    return value


def chain_potential_grad(X):
    """Derivative of :func:`chain_potential` with respect to each chain variable."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, m = X.shape
    r = m - 1
    full = np.concatenate([np.zeros((n, 1)), X], axis=1)
    grad = np.zeros((n, m + 1))
    grad[:, 1] = -psi(1.0) * phi_prime(full[:, 1])
    if r >= 1:
        sign = (-1.0) ** np.arange(1, r + 1)
        a = full[:, 0:r] - full[:, 1 : r + 1]
        b = full[:, 2 : r + 2] - full[:, 1 : r + 1]
        d_a = sign * (psi_prime(a) * phi(b) + psi_prime(-a) * phi(-b))
        d_b = sign * (psi(a) * phi_prime(b) + psi(-a) * phi_prime(-b))
        # the sum enters with a minus sign
        grad[:, 0:r] -= d_a
        grad[:, 2 : r + 2] -= d_b
        grad[:, 1 : r + 1] += d_a + d_b
    return grad[:, 1:]


class ChainOracle:
    """Scaled chain function ``amplitude * f(x / sigma)`` on R^d.

    ``f(x) = g(rho(x)) + ||x||^2 / 5`` with ``rho(x) = x / sqrt(1 + ||x||^2 / R^2)``
    and ``R = 230 sqrt(r + 1)``. With the default ``sigma = amplitude = 1``
    this is the unscaled function.
    """

    def __init__(self, partition, sigma=1.0, amplitude=1.0, p=1, l_p=L1_DEFAULT):
        if not sigma > 0 or not amplitude > 0:
            raise InvalidArgument("sigma and amplitude must be positive")
        self.partition = partition
        self.sigma = float(sigma)
        self.amplitude = float(amplitude)
        self.p = p
        self.l_p = float(l_p)
        self.R = R_COEF * math.sqrt(partition.r + 1)
        self._membership = partition.membership()

    @property
    def d(self):
        return self.partition.d

    @property
    def r(self):
        return self.partition.r

    @property
    def lipschitz(self):
        """Gradient-Lipschitz constant of the scaled function (given ``l_1``)."""
        return self.amplitude * self.l_p / self.sigma**2

    def _points(self, x):
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.d:
            raise InvalidArgument(f"expected points of dimension {self.d}, got {pts.shape[1]}")
        return pts, single

    def squash(self, x):
        """``rho(x)`` together with the factor ``1 / sqrt(1 + ||x||^2 / R^2)``."""
        scale = 1.0 / np.sqrt(1.0 + np.sum(x * x, axis=1) / self.R**2)
        return x * scale[:, None], scale

    def chain_vars(self, y):
        return y @ self._membership.T

    def g(self, y):
        """Unscaled chain potential at (already squashed) points ``y``."""
        return chain_potential(self.chain_vars(y))

    def grad_g(self, y):
        return chain_potential_grad(self.chain_vars(y)) @ self._membership

    def f_unscaled(self, x):
        y, _ = self.squash(x)
        return self.g(y) + 0.2 * np.sum(x * x, axis=1)

    def grad_f_unscaled(self, x):
        y, scale = self.squash(x)
        G = self.grad_g(y)
        radial = np.sum(y * G, axis=1) / self.R**2
        return scale[:, None] * (G - y * radial[:, None]) + 0.4 * x

    def value(self, x):
        pts, single = self._points(x)
        v = self.amplitude * self.f_unscaled(pts / self.sigma)
        return float(v[0]) if single else v

    def gradient(self, x):
        pts, single = self._points(x)
        g = (self.amplitude / self.sigma) * self.grad_f_unscaled(pts / self.sigma)
        return g[0] if single else g

    def progress_vars(self, x):
        """Chain variables at ``rho(x / sigma)`` for a batch of points."""
        pts, _ = self._points(x)
        y, _ = self.squash(pts / self.sigma)
        return self.chain_vars(y)

    def progress_index(self, x):
        """Largest ``i`` with ``|X^i - X^{i-1}| >= 1/2`` (0 if none), per point."""
        X = self.progress_vars(x)
        full = np.concatenate([np.zeros((X.shape[0], 1)), X], axis=1)
        hit = np.abs(np.diff(full, axis=1)) >= 0.5
        idx = np.arange(1, X.shape[1] + 1)
        return np.max(np.where(hit, idx, 0), axis=1)

    @property
    def value_shift(self):
        """Constant making ``value + value_shift >= 0`` everywhere."""
        return self.amplitude * (VALUE_GAP_PER_LINK * self.r - float(chain_potential(np.zeros((1, self.r + 1)))[0]))

    def objective(self, domain="free", shift=None):
        """Wrap as an :class:`Objective`; ``shift`` defaults to :attr:`value_shift` when free."""
        c = (self.value_shift if domain == "free" else 0.0) if shift is None else shift
        return Objective(
            func=lambda x: self.value(x) + c,
            dim=self.d,
            lipschitz=self.lipschitz,
            grad=self.gradient,
            domain=domain,
            name="chain",
        )


@dataclass(frozen=True)
class ProgressVector:
    X: np.ndarray
    index: int


def chain_value(oracle, x):
    return oracle.value(x)


def chain_gradient(oracle, x):
    return oracle.gradient(x)


def progress(oracle, x):
    pts, single = oracle._points(x)
    if not single:
        raise InvalidArgument("progress takes a single point; use ChainOracle.progress_index for batches")
    return ProgressVector(X=oracle.progress_vars(pts)[0], index=int(oracle.progress_index(pts)[0]))


def scaled_parameters(eps, Delta, L_p, p, l_p):
    """``(r, sigma, amplitude)`` of the scaled instance for target accuracy ``eps``."""
    for name, v in (("eps", eps), ("Delta", Delta), ("L_p", L_p), ("l_p", l_p)):
        if not v > 0:
            raise InvalidArgument(f"{name} must be positive, got {v}")
    if p < 1:
        raise InvalidArgument(f"order p must be at least 1, got {p}")
    sigma = (l_p * eps / (SIGMA_COEF * L_p)) ** (1.0 / p)
    r = math.floor(Delta / R_DIVISOR * (L_p / l_p) ** (1.0 / p) * eps ** (-(1.0 + p) / p))
    amplitude = L_p * sigma ** (p + 1) / l_p
    return r, sigma, amplitude


def min_dimension(r):
    """Smallest ``d`` with ``16^2 * 230^2 * (r+1)^2 * ln(d)^2 <= d``."""
    c = GATE_COEF * (r + 1) ** 2
    d = c
    for _ in range(100):
        nxt = c * math.log(d) ** 2
        if abs(nxt - d) < 0.5:
            break
        d = nxt
    d = math.ceil(d)
    while c * math.log(d) ** 2 > d:
        d += 1
    while d > 2 and c * math.log(d - 1) ** 2 <= d - 1:
        d -= 1
    return d


def make_scaled_oracle(eps, Delta, L_p, p, l_p, d, seed, enforce_dimension_gate=True):
    """Scaled hard instance whose epsilon-stationary points need ``r`` chain links.

    ``d`` must pass the dimension gate unless ``enforce_dimension_gate`` is
    False (every admissible ``d`` is at least ~1e10, far beyond memory).
    Parts have size ``d // (r + 2)``; the ``d mod (r + 2)`` leftover
    coordinates are inert.
    """
    r, sigma, amplitude = scaled_parameters(eps, Delta, L_p, p, l_p)
    if r < 1:
        raise InvalidArgument(
            f"r = {r}: the instance needs at least one link; increase Delta or decrease eps"
        )
    if enforce_dimension_gate:
        need = min_dimension(r)
        if d < need:
            raise DimensionTooSmall(f"d={d} fails the dimension gate for r={r}; need d >= {need}", need)
    d0 = d // (r + 2)
    floor = math.ceil(math.log(d) ** 2) if d > 1 else 1
    if d0 < max(1, floor):
        raise InvalidArgument(f"part size {d0} is below ceil(ln(d)^2) = {floor}; increase d")
    part = sample_partition(d, d0, seed, n_parts=r + 2)
    return ChainOracle(part, sigma=sigma, amplitude=amplitude, p=p, l_p=l_p)


def embed_chain_vars(partition, X, rng, noise=0.0):
    """Points ``y`` whose chain variables equal ``X`` exactly.

    Each part ``P_i`` gets the constant ``X^i / sqrt(d0)``; ``noise`` adds
    Gaussian perturbations projected to zero sum within every part (and free
    noise on coordinates outside parts 1..r+1).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    y = np.zeros((n, partition.d))
    if noise > 0:
        y = noise * rng.standard_normal((n, partition.d))
    for i, part in enumerate(partition.parts[: partition.r + 1]):
        block = y[:, part]
        block -= block.mean(axis=1, keepdims=True)
        y[:, part] = block + X[:, i : i + 1] / math.sqrt(partition.d0)
    return y


def unsquash(y, R):
    """Inverse of ``rho``: the ``x`` with ``rho(x) = y`` (needs ``||y|| < R``)."""
    norm2 = np.sum(y * y, axis=1)
    if np.any(norm2 >= R**2):
        raise InvalidArgument("points must satisfy ||y|| < R to be inverted")
    return y / np.sqrt(1.0 - norm2 / R**2)[:, None]


def sample_chain_configs(r, n, rng, last_gap=None):
    """Random chain configurations: successive gaps uniform on [-2, 2].

    ``last_gap`` optionally bounds ``|X^{r+1} - X^r|`` strictly.
    """
    gaps = rng.uniform(-2.0, 2.0, size=(n, r + 1))
    if last_gap is not None:
        gaps[:, -1] = rng.uniform(-last_gap, last_gap, size=n) * (1 - 1e-9)
    return np.cumsum(gaps, axis=1)


@dataclass(frozen=True)
class ProbeResult:
    t: float
    frequency: float
    bound: float
    trials: int


def concentration_probe(d, d0, trials, t, y=None, seed=0):
    """Empirical tail ``P[|X(y) - E X(y)| >= t]`` for a random ``d0``-subset part.

    ``X(y) = sum_{s in P} y_s / sqrt(d0)``. ``y`` (nonnegative) defaults to
    a seeded vector of absolute Gaussians normalised to unit length. Returns
    the frequency for each requested ``t`` along with the concentration
    bound ``2 exp(-t^2 / (16 sum of the d0 largest alpha^2))``, ``alpha = y / sqrt(d0)``.
    """
    if not (0 < d0 <= d) or trials < 1:
        raise InvalidArgument("need 0 < d0 <= d and trials >= 1")
    rng = np.random.default_rng(seed)
    if y is None:
        y = np.abs(rng.standard_normal(d))
        y /= np.linalg.norm(y)
    y = np.asarray(y, dtype=float)
    if y.shape != (d,) or np.any(y < 0):
        raise InvalidArgument("test vector must be nonnegative with dimension d")
    alpha = y / math.sqrt(d0)
    mean = d0 / d * alpha.sum()
    top = np.sort(alpha**2)[::-1][:d0].sum()
    devs = np.empty(trials)
    chunk = max(1, min(trials, 2**22 // d))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        keys = rng.random((m, d))
        picks = np.argpartition(keys, d0 - 1, axis=1)[:, :d0]
        devs[done : done + m] = np.abs(alpha[picks].sum(axis=1) - mean)
        done += m
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = []
    for tv in ts:
        freq = float(np.mean(devs >= tv))
        bound = 2.0 * math.exp(-(tv**2) / (16.0 * top)) if top > 0 else 0.0
        out.append(ProbeResult(t=float(tv), frequency=freq, bound=bound, trials=trials))
    return out if np.ndim(t) else out[0]
