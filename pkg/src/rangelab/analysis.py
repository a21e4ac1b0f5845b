"""Closed-form and Monte Carlo quantities: the time-change constant, its
finite-bias analogue, iterated generating functions, and exact example
probabilities.

The reciprocal 1/gamma is the limiting distinct-words-per-vertex ratio
E[(1 + X_1 + X_1 X_2 + ...)^-1]; its finite-bias version replaces the full
series by a geometric-length one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .samplers import ModelParams

_CHUNK = 20_000


class DegenerateWeights(ValueError):
    pass


class EmptyWord(ValueError):
    pass


@dataclass(frozen=True)
class GammaEstimate:
    value: float
    std_error: float
    truncation_bound: float
    n_samples: int

    def __post_init__(self):
        if not 0.0 < self.value <= 1.0:
            raise ValueError("distinct-per-vertex ratio must lie in (0, 1]")
        if self.truncation_bound < 0:
            raise ValueError("truncation bound must be reported and >= 0")

    @property
    def gamma(self) -> float:
        return 1.0 / self.value


@dataclass(frozen=True)
class GenFunParams:
    v: tuple[int, ...]
    A: float
    B: float

    def __post_init__(self):
        if len(self.v) >= 1 and not (self.B > 1.0 and self.A >= 1.0):
            raise ValueError("need B > 1 and A >= 1 for nonempty words")


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] == 0:
        raise ValueError("weights must be a nonempty vector")
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    if (w >= 1).any():
        raise DegenerateWeights("a weight equal to 1 makes the series diverge")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1 within 1e-12")
    return w


def _is_uniform(w: np.ndarray) -> bool:
    return bool(np.all(w == w[0]))


def inv_gamma_mc(weights, n_samples: int, tol: float,
                 rng: np.random.Generator) -> GammaEstimate:
    """Estimate of E[(1 + X_1 + X_1 X_2 + ...)^-1] with geometric tail bound."""
    w = _check_weights(weights)
    if tol <= 0:
        raise ValueError("tol must be positive")
    a_plus = float(w.max())
    if _is_uniform(w):
        # X deterministic: exact partial geometric sum, zero variance
        x = a_plus
        n_terms = max(1, int(math.ceil(math.log(tol * (1 - x)) / math.log(x))))
        s = (1 - x ** (n_terms + 1)) / (1 - x)
        tail = x ** (n_terms + 1) / (1 - x)
        # 1/S_K - 1/S = tail/(S_K S) <= tail/S_K since S >= 1
        return GammaEstimate(1.0 / s, 0.0, tail / s, n_samples)
    n_terms = max(1, int(math.ceil(math.log(tol * (1 - a_plus)) / math.log(a_plus))))
    tail = a_plus ** (n_terms + 1) / (1 - a_plus)
    cum = np.cumsum(w)
    cum[-1] = 1.0
    acc = 0.0
    acc2 = 0.0
    done = 0
    while done < n_samples:
        c = min(_CHUNK, n_samples - done)
        xs = w[np.searchsorted(cum, rng.random((c, n_terms)), side="right")]
        s = 1.0 + np.cumprod(xs, axis=1).sum(axis=1)
        vals = 1.0 / s
        acc += vals.sum()
        acc2 += (vals * vals).sum()
        done += c
    mean = acc / n_samples
    var = max(0.0, acc2 / n_samples - mean * mean)
    se = math.sqrt(var / n_samples)
    return GammaEstimate(mean, se, tail, n_samples)


def inv_gamma_eps(weights, epsilon: float, n_samples: int,
                  rng: np.random.Generator) -> GammaEstimate:
    """Finite-bias ratio E[(1 + X_1 q + ... + X_1...X_G q^G)^-1].

    G is geometric with P(G=n) = (1-q) q^n, q = d/u.  Uniform weights use
    exact series summation instead of Monte Carlo.
    """
    w = _check_weights(weights)
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    q = (0.5 - epsilon) / (0.5 + epsilon)
    if _is_uniform(w):
        r = q * float(w[0])
        n_max = int(math.ceil(math.log(1e-14) / math.log(q)))
        n = np.arange(n_max + 1, dtype=np.float64)
        s_n = (1.0 - r ** (n + 1)) / (1.0 - r)
        val = float(np.sum((1.0 - q) * q ** n / s_n))
        return GammaEstimate(val, 0.0, q ** (n_max + 1), n_samples)
    g_cap = int(math.ceil(math.log(1e-15) / math.log(q)))
    cum = np.cumsum(w)
    cum[-1] = 1.0
    qpow = q ** np.arange(1, g_cap + 1)
    acc = 0.0
    acc2 = 0.0
    done = 0
    while done < n_samples:
        c = min(_CHUNK, n_samples - done)
        g = np.floor(np.log1p(-rng.random(c)) / math.log(q)).astype(np.int64)
        g = np.minimum(g, g_cap)
        xs = w[np.searchsorted(cum, rng.random((c, g_cap)), side="right")]
        terms = np.cumprod(xs, axis=1) * qpow
        mask = np.arange(1, g_cap + 1)[None, :] <= g[:, None]
        s = 1.0 + (terms * mask).sum(axis=1)
        vals = 1.0 / s
        acc += vals.sum()
        acc2 += (vals * vals).sum()
        done += c
    mean = acc / n_samples
    var = max(0.0, acc2 / n_samples - mean * mean)
    return GammaEstimate(mean, math.sqrt(var / n_samples), q ** (g_cap + 1), n_samples)


def inv_gamma_eps_empirical(params: ModelParams, n_trees: int,
                            rng: np.random.Generator) -> GammaEstimate:
    """Ratio-of-sums estimator E[#distinct tracks]/E[#vertices] over marked
    GW trees; the finite-bias ratio by its defining expectations."""
    from .marks import attach_iid_marks, track
    from .samplers import sample_gw

    d_vals = np.empty(n_trees)
    t_vals = np.empty(n_trees)
    for i in range(n_trees):
        t = sample_gw(params, rng)
        _, z = track(attach_iid_marks(t, params, rng))
        d_vals[i] = z.distinct
        t_vals[i] = z.total
    ratio = d_vals.sum() / t_vals.sum()
    resid = d_vals - ratio * t_vals
    se = math.sqrt(float((resid * resid).sum())) / t_vals.sum()
    return GammaEstimate(float(ratio), se, 0.0, n_trees)


def f_eval(params: ModelParams, x: float) -> float:
    """Offspring pgf f(x) = u / (1 - d x)."""
    return params.u / (1.0 - params.d * x)


def f_letter(params: ModelParams, i: int, x: float) -> float:
    """f_i(x) = f(1 - a_i + a_i x)."""
    a = float(params.weights[i - 1])
    return f_eval(params, 1.0 - a + a * x)


def f_v_compose(params: ModelParams, v, x: float) -> float:
    """f_v = f_{m_1} o ... o f_{m_n}, applied right to left."""
    y = x
    for m in reversed(tuple(v)):
        y = f_letter(params, m, y)
    return y


def genfun_params(params: ModelParams, v) -> GenFunParams:
    """A(v) and B(v) with 1/B(v) = a_v (d/u)^n, via the append recursion."""
    v = tuple(int(m) for m in v)
    if len(v) == 0:
        raise EmptyWord("the closed form needs a nonempty word")
    uod = params.u / params.d
    a = params.weights
    A = 1.0
    inv_prefix = 1.0  # (u/d)^j / (a_{m_1}...a_{m_j})
    for j, m in enumerate(v[:-1], start=1):
        inv_prefix *= uod / a[m - 1]
        A += inv_prefix
    B = 1.0
    for m in v:
        B *= uod / a[m - 1]
    return GenFunParams(v, A, B)


def genfun_params_exact(eps: Fraction, weights: list[Fraction], v) -> tuple[Fraction, Fraction]:
    """Exact-rational A(v), B(v) for rational parameters."""
    v = tuple(int(m) for m in v)
    if len(v) == 0:
        raise EmptyWord("the closed form needs a nonempty word")
    u = Fraction(1, 2) + eps
    d = Fraction(1, 2) - eps
    uod = u / d
    A = Fraction(1)
    pref = Fraction(1)
    for m in v[:-1]:
        pref *= uod / weights[m - 1]
        A += pref
    B = Fraction(1)
    for m in v:
        B *= uod / weights[m - 1]
    return A, B


def f_v_closed(params: ModelParams, v, x: float) -> float:
    """1 - f_v(1-x') identity: f_v(x) = 1 - (1-x)/(A(v)(1-x) + B(v))."""
    gp = genfun_params(params, v)
    xp = 1.0 - x
    return 1.0 - xp / (gp.A * xp + gp.B)


def f_n_closed(params: ModelParams, n: int, x: float) -> float:
    """n-fold composition f o ... o f(x), in the q = d/u < 1 form."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return x
    q = params.q
    qn = q ** n
    c = 1.0 - x * q
    return (qn * (1.0 - x) - c) / (qn * q * (1.0 - x) - c)


def f_n_compose(params: ModelParams, n: int, x: float) -> float:
    y = x
    for _ in range(n):
        y = f_eval(params, y)
    return y


def conditional_z_pgf_check(params: ModelParams, v, w, x: float,
                            n_samples: int, rng: np.random.Generator,
                            l: int = 1, min_class: int = 50):
    """Empirical E[x^Z_vw | Z_v = z] vs f_w(x)^z over marked GW forests.

    Returns a list of (z, empirical, analytic, std_error, n_class) rows for
    every conditioning class with at least `min_class` hits.
    """
    from .marks import attach_iid_marks, track_forest
    from .samplers import sample_gw

    v = tuple(int(m) for m in v)
    w = tuple(int(m) for m in w)
    by_class: dict[int, list[float]] = {}
    for _ in range(n_samples):
        forest = [attach_iid_marks(sample_gw(params, rng), params, rng)
                  for _ in range(l)]
        z = track_forest(forest)
        zv = z.count_of(v)
        if zv == 0:
            continue
        by_class.setdefault(zv, []).append(x ** z.count_of(v + w))
    rows = []
    for zv in sorted(by_class):
        vals = np.asarray(by_class[zv])
        if vals.shape[0] < min_class:
            continue
        analytic = f_v_compose(params, w, x) ** zv if w else x ** zv
        se = float(vals.std(ddof=1) / math.sqrt(vals.shape[0])) if vals.shape[0] > 1 else 0.0
        rows.append((zv, float(vals.mean()), analytic, se, int(vals.shape[0])))
    return rows


def example_event_probabilities(weights, epsilon: float) -> tuple[float, float]:
    """P(range tree in A) and P(mirrored range tree in A) for the binary
    event A = {root has 2 children, first a leaf, second internal}."""
    w = _check_weights(weights)
    if w.shape[0] != 2:
        raise ValueError("the closed form is for binary weights (a, 1-a)")
    a = float(w[0])
    u = 0.5 + epsilon
    d = 0.5 - epsilon

    def p_of(aa: float) -> float:
        return d * u * u * aa * (1 - aa) / ((u + d * aa) * (u + d * d * aa))

    return p_of(a), p_of(1 - a)


def escape_probability(params: ModelParams) -> float:
    """P(unconditioned height walk ever hits -1) = d/u."""
    return params.q


def escape_probability_dp(params: ModelParams, n_steps: int = 10_000,
                          height_cap: int = 800) -> float:
    """Absorbing-chain DP oracle: P(hit -1 within n_steps) from height 0."""
    u, d = params.u, params.d
    v = np.zeros(height_cap)
    for _ in range(n_steps):
        nxt = np.empty_like(v)
        nxt[0] = d + u * v[1]
        nxt[1:-1] = d * v[:-2] + u * v[2:]
        nxt[-1] = d * v[-2]
        v = nxt
    return float(v[0])


def stay_nonnegative_dp(params: ModelParams, n_steps: int,
                        height_cap: int = 1200) -> np.ndarray:
    """q_N(h) = P(+-1 walk from h stays >= 0 for N steps); the h-transform
    oracle for the conditioned transition probabilities."""
    u, d = params.u, params.d
    q = np.ones(height_cap)
    for _ in range(n_steps):
        nxt = np.empty_like(q)
        nxt[0] = u * q[1]
        nxt[1:-1] = d * q[:-2] + u * q[2:]
        nxt[-1] = 1.0  # above the cap the walk is effectively free
        q = nxt
    return q
