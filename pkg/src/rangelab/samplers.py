"""Random generators: the conditioned walk, GW and GWI trees, the limit path.

All samplers take an explicit numpy Generator.  Ensembles derive one stream
per replicate from (master seed, replicate index), so results do not depend
on how replicates are sharded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .trees import OrderedTree, SinTreeSlice, range_tree

SIZE_CAP_DEFAULT = 10_000_000

_WALK_CHUNK = 8192  # uniform pairs per kernel call; fixed for reproducibility


class SizeCapExceeded(RuntimeError):
    pass


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    epsilon: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if not 0.0 < self.epsilon < 0.5:
            raise InvalidParams("epsilon must lie strictly in (0, 1/2)")
        if w.ndim != 1 or w.shape[0] == 0:
            raise InvalidParams("weights must be a nonempty vector")
        if (w < 0).any() or (w >= 1).any():
            raise InvalidParams("every weight must satisfy 0 <= a_i < 1")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParams("weights must sum to 1 within 1e-12")

    @property
    def u(self) -> float:
        return 0.5 + self.epsilon

    @property
    def d(self) -> float:
        return 0.5 - self.epsilon

    @property
    def q(self) -> float:
        """Down/up ratio d/u (the subcritical offspring mean)."""
        return self.d / self.u

    @property
    def b(self) -> int:
        return int(self.weights.shape[0])

    @property
    def a_plus(self) -> float:
        return float(self.weights.max())

    def cum_weights(self) -> np.ndarray:
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c

    def up_prob_table(self, tail_tol: float = 1e-18, cap: int = 1 << 21) -> np.ndarray:
        """Doob-transformed up probabilities by height, u*h(n+1)/h(n).

        Above the table the conditioning is numerically invisible and u is
        used instead.
        """
        q = self.q
        n_tab = min(cap, int(math.ceil(math.log(tail_tol) / math.log(q))) + 2)
        n = np.arange(n_tab, dtype=np.float64)
        hn = -np.expm1((n + 1) * math.log(q))
        hn1 = -np.expm1((n + 2) * math.log(q))
        tab = self.u * hn1 / hn
        tab[0] = 1.0  # u*(1+q) = u+d = 1 exactly; root never steps down
        return tab


def conditioned_up_probability(n: int, params: ModelParams) -> float:
    """P(step up | at height n), for the walk conditioned to stay >= 0."""
    if n < 0:
        raise ValueError("height must be >= 0")
    if n == 0:
        return 1.0
    lq = math.log(params.q)
    hn = -math.expm1((n + 1) * lq)
    hn1 = -math.expm1((n + 2) * lq)
    return params.u * hn1 / hn


def escape_margin(params: ModelParams, tol: float = 1e-4) -> int:
    """Margin M with P(conditioned walk ever drops M below its level) <= tol."""
    return int(math.ceil(math.log(tol) / math.log(params.q)))


@dataclass(frozen=True)
class FixedSteps:
    n_steps: int


@dataclass(frozen=True)
class HeightStabilized:
    x_target: int
    margin: int

    @property
    def stop_height(self) -> int:
        return self.x_target + self.margin


StopPolicy = FixedSteps | HeightStabilized


def height_stabilized(params: ModelParams, x_target: int, tol: float = 1e-4) -> HeightStabilized:
    return HeightStabilized(x_target, escape_margin(params, tol))


@dataclass(frozen=True, eq=False)
class Walk:
    """Conditioned-walk trajectory: moves[i] = j >= 1 for Up(j), 0 for Down."""

    moves: np.ndarray
    truncation_error: float = 0.0
    stop: StopPolicy | None = None

    def heights(self) -> np.ndarray:
        steps = np.where(self.moves > 0, 1, -1)
        return np.concatenate(([0], np.cumsum(steps)))

    @property
    def n_steps(self) -> int:
        return int(self.moves.shape[0])


def sample_walk(params: ModelParams, stop: StopPolicy, rng: np.random.Generator) -> Walk:
    p_tab = params.up_prob_table()
    cum_a = params.cum_weights()
    parts: list[np.ndarray] = []
    h = 0
    if isinstance(stop, FixedSteps):
        mode, remaining = 0, stop.n_steps
        trunc = 0.0
    else:
        mode, remaining = 1, stop.stop_height
        trunc = params.q ** stop.margin
    while True:
        us = rng.random(2 * _WALK_CHUNK)
        buf = np.zeros(_WALK_CHUNK, dtype=np.int64)
        target = remaining if mode == 0 else stop.stop_height
        n, h, done = kernels.walk_fill(us, p_tab, params.u, cum_a, h, mode, target, buf)
        parts.append(buf[:n])
        if mode == 0:
            remaining -= n
        if done:
            break
    return Walk(np.concatenate(parts), truncation_error=trunc, stop=stop)


def range_tree_of_walk(walk: Walk, params: ModelParams, upto: int | None = None) -> OrderedTree:
    return range_tree(walk.moves, params.b, upto)


def _geometric_counts(rng: np.random.Generator, n: int, log_d: float) -> np.ndarray:
    """n i.i.d. draws of mu(k) = u d^k via inverse CDF."""
    u01 = rng.random(n)
    return np.floor(np.log1p(-u01) / log_d).astype(np.int64)


def sample_gw_counts(params: ModelParams, rng: np.random.Generator,
                     size_cap: int = SIZE_CAP_DEFAULT) -> np.ndarray:
    """Children counts (DFS preorder) of one GW(mu) tree, mu(k) = u d^k."""
    log_d = math.log(params.d)
    parts: list[np.ndarray] = []
    excess = 0
    total = 0
    chunk = 64
    while True:
        ks = _geometric_counts(rng, chunk, log_d)
        cs = excess + np.cumsum(ks - 1)
        hit = np.nonzero(cs == -1)[0]
        if hit.size:
            parts.append(ks[: hit[0] + 1])
            return np.concatenate(parts)
        parts.append(ks)
        excess = int(cs[-1])
        total += chunk
        if total > size_cap:
            raise SizeCapExceeded(f"GW tree exceeded {size_cap} vertices")
        chunk = min(chunk * 4, 1 << 16)


def sample_gw(params: ModelParams, rng: np.random.Generator,
              size_cap: int = SIZE_CAP_DEFAULT) -> OrderedTree:
    return OrderedTree(sample_gw_counts(params, rng, size_cap))


def _spine_child_count(params: ModelParams, rng: np.random.Generator) -> int:
    """Spine-vertex children count: P(k) = mu(k-1) = u d^(k-1), k >= 1."""
    u01 = float(rng.random())
    return 1 + int(math.floor(math.log1p(-u01) / math.log(params.d)))


def _assemble_slice(levels, size_cap: int) -> SinTreeSlice:
    """Build a slice from per-level (k, slot, bushes) going down the spine."""
    parts: list[np.ndarray] = []
    tails: list[list[np.ndarray]] = []
    spine_pos: list[int] = []
    pos = 0
    for k, slot, bushes in levels:
        spine_pos.append(pos)
        parts.append(np.array([k], dtype=np.int64))
        pos += 1
        for t in bushes[: slot - 1]:
            parts.append(t)
            pos += t.shape[0]
        tails.append(bushes[slot - 1 :])
        if pos > size_cap:
            raise SizeCapExceeded(f"slice exceeded {size_cap} vertices")
    spine_pos.append(pos)
    parts.append(np.zeros(1, dtype=np.int64))
    for right in reversed(tails):
        for t in right:
            parts.append(t)
    counts = np.concatenate(parts)
    if counts.shape[0] > size_cap:
        raise SizeCapExceeded(f"slice exceeded {size_cap} vertices")
    return SinTreeSlice(OrderedTree(counts), np.asarray(spine_pos, dtype=np.int64))


def sample_gwi_left(params: ModelParams, n: int, rng: np.random.Generator,
                    size_cap: int = SIZE_CAP_DEFAULT) -> SinTreeSlice:
    """GWI slice of spine height n with every bush left of the spine child."""
    levels = []
    for _ in range(n):
        k = _spine_child_count(params, rng)
        bushes = [sample_gw_counts(params, rng, size_cap) for _ in range(k - 1)]
        levels.append((k, k, bushes))
    return _assemble_slice(levels, size_cap)


def sample_gwi_uniform(params: ModelParams, n: int, rng: np.random.Generator,
                       size_cap: int = SIZE_CAP_DEFAULT) -> SinTreeSlice:
    """GWI slice with the spine-child slot uniform among the k slots."""
    levels = []
    for _ in range(n):
        k = _spine_child_count(params, rng)
        slot = 1 + int(rng.integers(k))
        bushes = [sample_gw_counts(params, rng, size_cap) for _ in range(k - 1)]
        levels.append((k, slot, bushes))
    return _assemble_slice(levels, size_cap)


_SB_CDF_CACHE: dict[float, np.ndarray] = {}


def _size_biased_cdf(params: ModelParams, tail_tol: float = 1e-15) -> np.ndarray:
    cdf = _SB_CDF_CACHE.get(params.epsilon)
    if cdf is None:
        q = params.q
        kmax = max(4, int(math.ceil(math.log(tail_tol) / math.log(params.d))) + 2)
        k = np.arange(1, kmax, dtype=np.float64)
        pmf = k * (params.u * params.d ** k) / q
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        _SB_CDF_CACHE[params.epsilon] = cdf
    return cdf


def _size_biased_count(params: ModelParams, rng: np.random.Generator) -> int:
    """Spine children count k with P(k) = k mu(k) / mu_bar (size-biased)."""
    cdf = _size_biased_cdf(params)
    return 1 + int(np.searchsorted(cdf, rng.random(), side="right"))


@dataclass(frozen=True)
class SizeBiasedForest:
    trees: list[OrderedTree]
    sin_row: int
    slice: SinTreeSlice


def sample_size_biased_forest(params: ModelParams, l: int, n: int,
                              rng: np.random.Generator,
                              size_cap: int = SIZE_CAP_DEFAULT) -> SizeBiasedForest:
    """l-tree forest, one uniform row carrying the size-biased slice."""
    if l < 1:
        raise InvalidParams("forest needs at least one tree")
    sin_row = int(rng.integers(l))
    levels = []
    for _ in range(n):
        k = _size_biased_count(params, rng)
        slot = 1 + int(rng.integers(k))
        bushes = [sample_gw_counts(params, rng, size_cap) for _ in range(k - 1)]
        levels.append((k, slot, bushes))
    sl = _assemble_slice(levels, size_cap)
    trees = []
    for row in range(l):
        if row == sin_row:
            trees.append(sl.tree)
        else:
            trees.append(sample_gw(params, rng, size_cap))
    return SizeBiasedForest(trees, sin_row, sl)


@dataclass(frozen=True, eq=False)
class LimitPathSample:
    grid_dt: float
    values: np.ndarray
    drift: float = -2.0


def sample_limit_D(grid_dt: float, horizon: float, rng: np.random.Generator) -> LimitPathSample:
    """Euler path of 2(B - 2I), B with drift -2, I its running infimum."""
    steps = int(round(horizon / grid_dt))
    inc = rng.normal(-2.0 * grid_dt, math.sqrt(grid_dt), size=steps)
    b = np.concatenate(([0.0], np.cumsum(inc)))
    i = np.minimum.accumulate(b)
    return LimitPathSample(grid_dt, 2.0 * (b - 2.0 * i))


def limit_marginals(times, n_paths: int, dt: float, rng: np.random.Generator,
                    chunk: int = 256) -> np.ndarray:
    """Samples of 2 D_t at each t in `times`; shape (len(times), n_paths)."""
    times = np.asarray(times, dtype=np.float64)
    idx = np.round(times / dt).astype(np.int64)
    steps = int(idx.max())
    out = np.empty((times.shape[0], n_paths))
    done = 0
    while done < n_paths:
        c = min(chunk, n_paths - done)
        inc = rng.normal(-2.0 * dt, math.sqrt(dt), size=(c, steps))
        b = np.cumsum(inc, axis=1)
        i = np.minimum.accumulate(np.minimum(b, 0.0), axis=1)
        d = 2.0 * (b - 2.0 * i)
        for r, k in enumerate(idx):
            out[r, done : done + c] = d[:, k - 1] if k > 0 else 0.0
        done += c
    return out


def gwi_population_pgf_check(params: ModelParams, n: int, x: float,
                             rng: np.random.Generator, l: int = 0,
                             n_samples: int = 10_000):
    """Empirical E[x^Z_n] over GWI forests vs the product formula.

    The forest has one uniform-dispatch sin-tree plus l independent GW trees;
    Z_n is the level-n population minus the spine vertex.  Returns
    (empirical, analytic, std_error).
    """
    from .trees import heights

    u, d = params.u, params.d

    def f(y: float) -> float:
        return u / (1.0 - d * y)

    analytic = 1.0
    fk = x
    for _ in range(n):
        analytic *= f(fk)  # immigration pgf g = f for this dispatching law
        fk = f(fk)
    analytic *= fk ** l if l else 1.0

    vals = np.empty(n_samples)
    for i in range(n_samples):
        sl = sample_gwi_uniform(params, n, rng)
        z = int(np.count_nonzero(heights(sl.tree) == n)) - 1
        for _ in range(l):
            t = sample_gw(params, rng)
            z += int(np.count_nonzero(heights(t) == n))
        vals[i] = x ** z
    emp = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return emp, analytic, se


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (master seed, key...); sharding-invariant."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=key)))
