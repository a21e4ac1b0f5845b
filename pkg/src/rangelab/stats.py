"""Ensemble simulation and the statistical verification harness.

One replicate = one conditioned walk stopped above the cut level, its range
tree, and the decoded-and-shuffled twin; marginal samples of the rescaled
contours are compared against the Brownian limit by two-sample KS tests.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov
from scipy.stats import chi2

from . import marks, trees
from .samplers import (
    ModelParams,
    height_stabilized,
    limit_marginals,
    sample_gwi_left,
    sample_gwi_uniform,
    sample_size_biased_forest,
    sample_gw,
    sample_walk,
    stream,
)

STOP_TOL = 1e-5  # escape tolerance for the HeightStabilized stop
TREE_TEXT_CAP = 512  # serialize trees into JSONL only below this size


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n1: int
    n2: int

    def __post_init__(self):
        if not (0.0 <= self.statistic <= 1.0 and 0.0 <= self.p_value <= 1.0):
            raise ValueError("KS statistic and p-value must lie in [0, 1]")


def ks_two_sample(a, b) -> KSResult:
    """Two-sample KS with the asymptotic Kolmogorov p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InsufficientData("both samples must be nonempty")
    both = np.concatenate([a, b])
    both.sort(kind="mergesort")
    fa = np.searchsorted(np.sort(a), both, side="right") / a.size
    fb = np.searchsorted(np.sort(b), both, side="right") / b.size
    stat = float(np.max(np.abs(fa - fb)))
    n_eff = math.sqrt(a.size * b.size / (a.size + b.size))
    p = float(kolmogorov(n_eff * stat))
    return KSResult(stat, min(1.0, p), a.size, b.size)


def chisq_homogeneity(counts_a: dict, counts_b: dict, min_expected: float = 5.0):
    """Two-sample chi-square on shared classes, merging small ones.

    Returns (statistic, p_value, dof).
    """
    keys = sorted(set(counts_a) | set(counts_b), key=str)
    oa = np.array([counts_a.get(k, 0) for k in keys], dtype=np.float64)
    ob = np.array([counts_b.get(k, 0) for k in keys], dtype=np.float64)
    na, nb = oa.sum(), ob.sum()
    if na == 0 or nb == 0:
        raise InsufficientData("both samples must be nonempty")
    # merge classes whose pooled expected count is too small
    pooled = oa + ob
    exp_a = na * pooled / (na + nb)
    exp_b = nb * pooled / (na + nb)
    small = np.minimum(exp_a, exp_b) < min_expected
    if small.any():
        oa = np.concatenate([oa[~small], [oa[small].sum()]])
        ob = np.concatenate([ob[~small], [ob[small].sum()]])
    if oa.shape[0] < 2:
        raise InsufficientData("need at least two classes after merging")
    pooled = oa + ob
    na, nb = oa.sum(), ob.sum()
    ea = na * pooled / (na + nb)
    eb = nb * pooled / (na + nb)
    stat = float(np.sum((oa - ea) ** 2 / ea) + np.sum((ob - eb) ** 2 / eb))
    dof = oa.shape[0] - 1
    return stat, float(chi2.sf(stat, dof)), dof


def shape_class(t: trees.OrderedTree, height: int = 2, size_cap: int = 8) -> str:
    """Tree-shape key: the height-truncated tree, or an overflow bucket."""
    cut = trees.truncate_at_height(t, height)
    if cut.size > size_cap:
        return "overflow"
    return cut.to_text()


@dataclass(frozen=True)
class EnsembleConfig:
    params: ModelParams
    x_cut: float
    n_replicates: int
    seed: int
    shards: int = 1
    observation_times: tuple = (0.2, 0.5)
    limit_dt: float = 1e-4

    @property
    def x_eps(self) -> int:
        return int(math.floor(self.x_cut / self.params.epsilon))


@dataclass
class EnsembleResult:
    cfg: EnsembleConfig
    records: list
    marginals: dict  # (source, s) -> np.ndarray

    def sample(self, source: str, s: float) -> np.ndarray:
        return self.marginals[(source, float(s))]


def _replicate_record(cfg: EnsembleConfig, i: int) -> dict:
    params = cfg.params
    eps = params.epsilon
    rng = stream(cfg.seed, 0, i)
    stop = height_stabilized(params, cfg.x_eps, STOP_TOL)
    walk = sample_walk(params, stop, rng)
    h = walk.heights()
    zeta = int(np.nonzero(h <= cfg.x_eps)[0][-1])

    tau = trees.range_tree(walk.moves, params.b, upto=zeta)
    dec = marks.decode_walk_prefix(walk, params, rng, zeta)
    tilde, _ = marks.shuffle_with_perm(dec.marked(), rng)

    c_tau = trees.contour_direct(tau).values
    h_tau = trees.heights(tau)
    c_mirror = trees.contour_direct(trees.mirror(tau)).values
    c_tilde = trees.contour_direct(tilde.tree).values

    def at(arr, idx):
        return float(eps * arr[idx]) if idx < arr.shape[0] else 0.0

    marg = {"tau": {}, "tau_height": {}, "tau_mirror": {}, "tau_tilde": {}}
    for s in cfg.observation_times:
        idx = int(math.floor(s / (eps * eps)))
        idx_h = int(math.floor(s / (2 * eps * eps)))
        marg["tau"][s] = at(c_tau, idx)
        marg["tau_height"][s] = at(h_tau, idx_h)
        marg["tau_mirror"][s] = at(c_mirror, idx)
        marg["tau_tilde"][s] = at(c_tilde, idx)

    rec = {
        "replicate": i,
        "seed_path": [cfg.seed, 0, i],
        "params": {"epsilon": params.epsilon, "weights": params.weights.tolist(),
                   "x_cut": cfg.x_cut},
        "zeta": zeta,
        "n_walk_steps": walk.n_steps,
        "distinct": tau.size,
        "total": tilde.size,
        "truncation_error": walk.truncation_error,
        "marginals": marg,
    }
    if tau.size <= TREE_TEXT_CAP:
        rec["tau_tree"] = tau.to_text()
    return rec


def _replicate_range(cfg: EnsembleConfig, lo: int, hi: int) -> list:
    return [_replicate_record(cfg, i) for i in range(lo, hi)]


def simulate_ensemble(cfg: EnsembleConfig, out_dir: str | None = None) -> EnsembleResult:
    """Run all replicates (sharded) plus the limit-path marginal samples.

    Outputs are identical for any shard count: replicate i always uses the
    stream (seed, 0, i), and the merge is by replicate index.
    """
    n = cfg.n_replicates
    shards = max(1, cfg.shards)
    bounds = np.linspace(0, n, shards + 1).astype(int)
    if shards == 1:
        records = _replicate_range(cfg, 0, n)
    else:
        with ProcessPoolExecutor(max_workers=shards) as pool:
            futs = [pool.submit(_replicate_range, cfg, int(lo), int(hi))
                    for lo, hi in zip(bounds[:-1], bounds[1:])]
            records = []
            for f in futs:
                records.extend(f.result())

    times = [float(s) for s in cfg.observation_times]
    marginals = {}
    for src in ("tau", "tau_height", "tau_mirror", "tau_tilde"):
        for s in times:
            marginals[(src, s)] = np.array([r["marginals"][src][s] for r in records])

    lim_rng = stream(cfg.seed, 1)
    plain = limit_marginals(times, n, cfg.limit_dt, lim_rng)
    for k, s in enumerate(times):
        marginals[("limit", s)] = plain[k]

    result = EnsembleResult(cfg, records, marginals)
    if out_dir is not None:
        persist_ensemble(result, out_dir)
    return result


def attach_limit_gamma(result: EnsembleResult, gamma: float) -> None:
    """Add samples of 2 D_{gamma s} (fresh substream, deterministic)."""
    cfg = result.cfg
    times = [float(s) for s in cfg.observation_times]
    rng = stream(cfg.seed, 2)
    vals = limit_marginals([gamma * s for s in times], cfg.n_replicates, cfg.limit_dt, rng)
    for k, s in enumerate(times):
        result.marginals[("limit_gamma", s)] = vals[k]


def persist_ensemble(result: EnsembleResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "ensemble.jsonl"), "w") as fh:
        for rec in result.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    write_marginals_csv(result, os.path.join(out_dir, "marginals.csv"))


def write_marginals_csv(result: EnsembleResult, path: str) -> None:
    keep = ("tau", "tau_tilde", "limit", "limit_gamma")
    with open(path, "w") as fh:
        fh.write("s,value,source\n")
        for (src, s), vals in sorted(result.marginals.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            if src not in keep:
                continue
            for v in vals:
                fh.write(f"{s:.17g},{v:.17g},{src}\n")


def replicate_exact_identities(cfg: EnsembleConfig, i: int) -> dict:
    """Re-derive replicate i and check every exact per-replicate identity.

    Returns {name: bool}; uses the same stream as the ensemble run.
    """
    params = cfg.params
    rng = stream(cfg.seed, 0, i)
    stop = height_stabilized(params, cfg.x_eps, STOP_TOL)
    walk = sample_walk(params, stop, rng)
    h = walk.heights()
    zeta = int(np.nonzero(h <= cfg.x_eps)[0][-1])
    tau = trees.range_tree(walk.moves, params.b, upto=zeta)
    dec = marks.decode_walk_prefix(walk, params, rng, zeta)
    tilde, _ = marks.shuffle_with_perm(dec.marked(), rng)
    _, z = marks.track(tilde)
    tau_full = trees.range_tree(walk.moves, params.b)
    return {
        "track_image_is_visited_set":
            marks.track_image_canonical(tilde) == marks.visited_trie_canonical(walk, params, upto=zeta),
        "coincide_below_cut":
            trees.truncate_at_height(tau, cfg.x_eps) == trees.truncate_at_height(tau_full, cfg.x_eps),
        "shrink_equals_range_tree": marks.shrink_to_range_tree(tilde) == tau,
        "z_total_is_size": z.total == tilde.size,
        "distinct_le_total": tau.size <= tilde.size,
    }


def excursion_mass_above(x: float, t_max: float, n_paths: int = 4000,
                         dt: float = 1e-3, seed: int = 2024) -> float:
    """P(sup_{r <= t_max} 2 D_r > x), estimated once to validate the cut."""
    rng = stream(seed, 9)
    steps = int(round(t_max / dt))
    hits = 0
    done = 0
    while done < n_paths:
        c = min(256, n_paths - done)
        inc = rng.normal(-2.0 * dt, math.sqrt(dt), size=(c, steps))
        b = np.cumsum(inc, axis=1)
        i = np.minimum.accumulate(np.minimum(b, 0.0), axis=1)
        d = 2.0 * (b - 2.0 * i)
        hits += int((d.max(axis=1) > x).sum())
        done += c
    return hits / n_paths


def theorem1_marginal_test(result: EnsembleResult, gamma: float) -> dict:
    """KS rows for the scaled-contour limit at each observation time.

    Returns {name: KSResult} with, per time s: the contour vs 2D_{gamma s},
    the height-process variant, the mirrored contour, and the negative
    control against 2D_s (expected to reject when gamma != 1).
    """
    if ("limit_gamma", float(result.cfg.observation_times[0])) not in result.marginals:
        attach_limit_gamma(result, gamma)
    out = {}
    for s in result.cfg.observation_times:
        s = float(s)
        lim_g = result.sample("limit_gamma", s)
        lim = result.sample("limit", s)
        out[f"thm1_contour_s{s:g}"] = ks_two_sample(result.sample("tau", s), lim_g)
        out[f"thm1_height_s{s:g}"] = ks_two_sample(result.sample("tau_height", s), lim_g)
        out[f"thm1_mirror_s{s:g}"] = ks_two_sample(result.sample("tau_mirror", s), lim_g)
        out[f"thm1_negctrl_s{s:g}"] = ks_two_sample(result.sample("tau", s), lim)
    return out


def lemma34_marginal_test(result: EnsembleResult) -> dict:
    """KS rows for the shuffled (unshrunk) tree against 2D_s, no time change,
    plus the tau-vs-tilde discrimination row."""
    out = {}
    for s in result.cfg.observation_times:
        s = float(s)
        out[f"lemma34_tilde_s{s:g}"] = ks_two_sample(result.sample("tau_tilde", s),
                                                     result.sample("limit", s))
        out[f"lemma34_tau_vs_tilde_s{s:g}"] = ks_two_sample(result.sample("tau", s),
                                                            result.sample("tau_tilde", s))
    return out


def _decoded_shape_counts(params: ModelParams, n_spine: int, n_samples: int,
                          rng: np.random.Generator, shuffled: bool) -> dict:
    counts: dict[str, int] = {}
    stop = height_stabilized(params, n_spine, STOP_TOL)
    for _ in range(n_samples):
        walk = sample_walk(params, stop, rng)
        dec = marks.decode_walk_to_marked_tree(walk, params, rng, x_cut=n_spine)
        t = marks.shuffle(dec.marked(), rng).tree if shuffled else dec.tree
        key = shape_class(t)
        counts[key] = counts.get(key, 0) + 1
    return counts


def _gwi_shape_counts(params: ModelParams, n_spine: int, n_samples: int,
                      rng: np.random.Generator, uniform: bool) -> dict:
    counts: dict[str, int] = {}
    for _ in range(n_samples):
        sl = (sample_gwi_uniform if uniform else sample_gwi_left)(params, n_spine, rng)
        key = shape_class(sl.tree)
        counts[key] = counts.get(key, 0) + 1
    return counts


def law_check_lemma31(params: ModelParams, n_samples: int, rng: np.random.Generator,
                      n_spine: int = 2):
    """Decoded-from-walk trees vs direct left-dispatch GWI slices, compared
    on height-2 truncated shapes.  Returns (stat, p, dof)."""
    a = _decoded_shape_counts(params, n_spine, n_samples, rng, shuffled=False)
    b = _gwi_shape_counts(params, n_spine, n_samples, rng, uniform=False)
    return chisq_homogeneity(a, b)


def law_check_shuffle(params: ModelParams, n_samples: int, rng: np.random.Generator,
                      n_spine: int = 2):
    """Shuffled decoded trees vs uniform-dispatch GWI slices."""
    a = _decoded_shape_counts(params, n_spine, n_samples, rng, shuffled=True)
    b = _gwi_shape_counts(params, n_spine, n_samples, rng, uniform=True)
    return chisq_homogeneity(a, b)


SIZEBIAS_FUNCTIONALS = ("height0", "height1", "cut_le_5")


def _forest_cut_sizes(forest: list[trees.OrderedTree]) -> np.ndarray:
    """#[phi]_u for every vertex u: total minus strict-descendant count."""
    from .kernels import parents_from_counts

    total = sum(t.size for t in forest)
    out = []
    for t in forest:
        n = t.size
        par = parents_from_counts(t.children_counts)
        sizes = [1] * n
        for v in range(n - 1, 0, -1):
            sizes[par[v]] += sizes[v]
        out.extend(total - (s - 1) for s in sizes)
    return np.asarray(out)


def sizebias_identity_check(params: ModelParams, l: int, functional: str,
                            rng: np.random.Generator, n_samples: int = 10_000):
    """Monte Carlo of both sides of the size-biased sum identity.

    Returns (lhs, rhs, sigmas): the two estimates and their distance in
    combined standard errors.
    """
    if functional not in SIZEBIAS_FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}")
    mu_bar = params.q
    # the height indicators make one or both sides per-sample constants
    lhs_n = n_samples if functional != "height0" else min(n_samples, 2000)
    rhs_n = n_samples if functional == "cut_le_5" else min(n_samples, 2000)

    lhs_vals = np.empty(lhs_n)
    for i in range(lhs_n):
        forest = [sample_gw(params, rng) for _ in range(l)]
        if functional == "height0":
            lhs_vals[i] = sum(1 for t in forest)
        elif functional == "height1":
            lhs_vals[i] = sum(int(np.count_nonzero(trees.heights(t) == 1)) for t in forest)
        else:
            lhs_vals[i] = int((_forest_cut_sizes(forest) <= 5).sum())
    lhs = float(lhs_vals.mean())
    lhs_se = float(lhs_vals.std(ddof=1) / math.sqrt(lhs_n))

    if functional == "height0":
        n_terms = [0]
    elif functional == "height1":
        n_terms = [1]
    else:
        n_terms = [n for n in range(0, 6) if n + l <= 5]
    rhs = 0.0
    rhs_var = 0.0
    for n in n_terms:
        vals = np.empty(rhs_n)
        for i in range(rhs_n):
            fb = sample_size_biased_forest(params, l, n, rng)
            if functional == "height0":
                vals[i] = 1.0  # |u*_0| = 0 always
            elif functional == "height1":
                vals[i] = 1.0  # |u*_1| = 1 always
            else:
                vals[i] = 1.0 if sum(t.size for t in fb.trees) <= 5 else 0.0
        weight = l * mu_bar ** n
        rhs += weight * float(vals.mean())
        rhs_var += (weight * float(vals.std(ddof=1) / math.sqrt(rhs_n))) ** 2
    rhs_se = math.sqrt(rhs_var)

    denom = math.sqrt(lhs_se * lhs_se + rhs_se * rhs_se)
    sigmas = abs(lhs - rhs) / denom if denom > 0 else 0.0
    return lhs, rhs, sigmas
