"""Batch entry point: `rangelab gamma|verify|limit|simulate|report-data`.

Config is flat key=value (file via --config, overridden by CLI flags); every
run writes a manifest echoing the resolved configuration.  Exit codes:
0 all pass, 1 statistical-test failure, 2 exact-test failure, 3 bad config.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys

import numpy as np

from . import __version__, analysis, kernels, marks, stats, trees
from .samplers import ModelParams, stream

EXIT_OK = 0
EXIT_STATISTICAL = 1
EXIT_EXACT = 2
EXIT_CONFIG = 3

PRESETS = {
    "smoke": dict(epsilon=0.1, x_cut=12.0, n_replicates=400, limit_dt=1e-3,
                  observation_times="0.2,0.5", n_samples=2000),
    "acceptance": dict(epsilon=0.02, x_cut=12.0, n_replicates=4000, limit_dt=1e-4,
                       observation_times="0.2,0.5", n_samples=100000),
}


class ConfigError(ValueError):
    pass


def load_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line (want key=value): {raw.strip()!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def resolve_options(args, defaults: dict) -> dict:
    """Precedence: CLI flag > config file > preset > defaults."""
    opts = dict(defaults)
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}")
        opts.update(PRESETS[args.preset])
    if args.config:
        opts.update(load_config_file(args.config))
    for key in list(defaults) + ["seed", "shards"]:
        flag = getattr(args, key, None)
        if flag is not None:
            opts[key] = flag
    opts["seed"] = int(opts.get("seed", 20240901))
    opts["shards"] = int(opts.get("shards", 1))
    return opts


def parse_weights(text) -> np.ndarray:
    if isinstance(text, np.ndarray):
        return text
    try:
        w = np.array([float(tok) for tok in str(text).split(",") if tok.strip() != ""])
    except ValueError as exc:
        raise ConfigError(f"cannot parse weights {text!r}") from exc
    if w.size == 0:
        raise ConfigError("weights must be nonempty")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ConfigError(f"weights must sum to 1 within 1e-12, got {w.sum()!r}")
    return w


def parse_floats(text) -> tuple:
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip() != "")


def write_manifest(out_dir: str, command: str, opts: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"version={__version__}", f"backend={kernels.backend_name()}",
             f"command={command}"]
    for k in sorted(opts):
        lines.append(f"{k}={opts[k]}")
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _csv_write(path: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------- gamma ----

def cmd_gamma(args) -> int:
    defaults = dict(weights="0.5,0.5", eps_grid="0.1,0.05,0.02,0.01",
                    n_samples=100000, tol=1e-9, empirical_trees=5000, out="out")
    try:
        opts = resolve_options(args, defaults)
        weights = parse_weights(opts["weights"])
        eps_grid = parse_floats(opts["eps_grid"])
        n_samples = int(opts["n_samples"])
        tol = float(opts["tol"])
        n_emp = int(opts["empirical_trees"])
    except (ConfigError, analysis.DegenerateWeights) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = opts["seed"]
    out_dir = str(opts["out"])
    write_manifest(out_dir, "gamma", opts)

    wtxt = " ".join(_fmt(x) for x in weights)
    rows = []
    g = analysis.inv_gamma_mc(weights, n_samples, tol, stream(seed, 100))
    rows.append([wtxt, "limit", "inv_gamma_mc", _fmt(g.value), _fmt(g.std_error),
                 _fmt(g.truncation_bound), g.n_samples, seed])
    for k, eps in enumerate(eps_grid):
        ge = analysis.inv_gamma_eps(weights, eps, n_samples, stream(seed, 101, k))
        rows.append([wtxt, _fmt(eps), "inv_gamma_eps", _fmt(ge.value), _fmt(ge.std_error),
                     _fmt(ge.truncation_bound), ge.n_samples, seed])
        if n_emp > 0:
            params = ModelParams(eps, weights)
            gd = analysis.inv_gamma_eps_empirical(params, n_emp, stream(seed, 102, k))
            rows.append([wtxt, _fmt(eps), "distinct_ratio", _fmt(gd.value), _fmt(gd.std_error),
                         _fmt(gd.truncation_bound), gd.n_samples, seed])
    _csv_write(os.path.join(out_dir, "gamma.csv"),
               ["weights", "epsilon", "estimator", "value", "std_error",
                "truncation_bound", "n_samples", "seed"], rows)
    return EXIT_OK


# --------------------------------------------------------------- verify ----

def _suite_encodings(params: ModelParams, rng, n_random: int):
    """HL, HC, MIR exact on all trees <= 7 vertices plus random GW trees."""
    from .samplers import sample_gw

    corpus = trees.all_trees(7) + [sample_gw(params, rng) for _ in range(n_random)]
    bad = 0
    for t in corpus:
        hl = trees.height_from_lukasiewicz(trees.lukasiewicz_path(t))
        if hl != trees.height_process(t):
            bad += 1
            continue
        if trees.contour_from_height(trees.height_process(t)) != trees.contour_direct(t):
            bad += 1
            continue
        m = trees.mirror(t)
        if trees.mirror(m) != t or m.size != t.size:
            bad += 1
            continue
        if sorted(trees.heights(m).tolist()) != sorted(trees.heights(t).tolist()):
            bad += 1
    return bad == 0, float(bad), float("nan")


def _suite_spine(params: ModelParams, rng, n_random: int):
    """SPD identities and the CUT contour agreement on random GWI slices."""
    from .samplers import sample_gwi_left, sample_gwi_uniform

    bad = 0
    for i in range(n_random):
        sampler = sample_gwi_uniform if i % 2 else sample_gwi_left
        sl = sampler(params, 2 + int(rng.integers(6)), rng)
        if not _spine_identities_hold(sl):
            bad += 1
            continue
        if not _cut_contour_holds(sl, rng):
            bad += 1
    return bad == 0, float(bad), float("nan")


def _spine_identities_hold(sl) -> bool:
    dec = trees.spine_decomposition(sl)
    hf = trees.forest_heights(trees.bush_forest(sl))
    h_left = trees.left_part_heights(sl)
    n_left = h_left.shape[0]
    n_bush = dec.n_of_p.shape[0]
    # height decomposition H_n = (n - p(n)) + H_{p(n)}(f)
    for n in range(n_left):
        p = int(dec.p_of_n[n])
        hp = int(hf[p]) if p < hf.shape[0] else 0
        if h_left[n] != n - p + hp:
            return False
    # row map: n(p) must be the row of the p-th off-spine vertex (set oracle)
    on_spine = np.zeros(sl.tree.size, dtype=bool)
    on_spine[sl.spine] = True
    off_rows = np.nonzero(~on_spine[:n_left])[0]
    if not np.array_equal(off_rows, dec.n_of_p):
        return False
    if not np.array_equal(dec.n_of_p, np.arange(n_bush) + dec.alpha):
        return False
    # infimum characterization of p(n)
    for n in range(n_left):
        if int(dec.p_of_n[n]) != int(np.searchsorted(dec.n_of_p, n, side="left")):
            return False
    # sandwich alpha(p(n)-1) <= n - p(n) <= alpha(p(n)), tight off the spine
    for n in range(n_left):
        p = int(dec.p_of_n[n])
        if p < n_bush:
            if not (n - p) <= dec.alpha[p]:
                return False
            if not on_spine[n] and (n - p) != dec.alpha[p]:
                return False
        if 0 <= p - 1 < n_bush and not dec.alpha[p - 1] <= (n - p):
            return False
    return True


def _cut_contour_holds(sl, rng) -> bool:
    m = sl.spine_height
    if m < 2:
        return True
    n = 1 + int(rng.integers(m - 1))
    inner = trees.truncate_at_spine(sl, n)
    c_outer = trees.contour_direct(sl.tree).values
    c_inner = trees.contour_direct(inner.tree).values
    h_left = trees.left_part_heights(sl)
    sigma = trees.sigma_n(trees.PathSeq(h_left, "height"), n)
    upto = 2 * sigma - n
    if not np.array_equal(c_outer[: upto + 1], c_inner[: upto + 1]):
        return False
    # mirrored tail: right contour of the slice equals the reversed inner one
    msl = trees.mirror_slice(sl)
    c_outer_m = trees.contour_direct(msl.tree).values
    h_left_m = trees.left_part_heights(msl)
    sigma_m = int(np.nonzero(h_left_m <= n)[0][-1])
    upto_m = 2 * sigma_m - n
    last = 2 * (inner.tree.size - 1)
    tail = c_inner[last - upto_m: last + 1][::-1]
    return np.array_equal(c_outer_m[: upto_m + 1], tail)


def _suite_prop33ii(rng):
    grids = np.linspace(0.0, 1.0, 11)
    worst = 0.0
    for weights in ([0.5, 0.5], [0.7, 0.2, 0.1]):
        params = ModelParams(0.1, np.array(weights))
        b = len(weights)
        for _ in range(500):
            n = 1 + int(rng.integers(30))
            v = tuple(1 + int(j) for j in rng.integers(b, size=n))
            for x in grids:
                err = abs(analysis.f_v_compose(params, v, x) - analysis.f_v_closed(params, v, x))
                worst = max(worst, err)
    return worst < 1e-12, worst, float("nan")


def _suite_prop33i(rng):
    params = ModelParams(0.1, np.array([0.5, 0.5]))
    rows = analysis.conditional_z_pgf_check(params, (1,), (1,), 0.5, 30000, rng, l=1)
    if not rows:
        return False, float("nan"), float("nan")
    worst = max(abs(emp - ana) / se if se > 0 else 0.0 for _, emp, ana, se, _ in rows)
    return worst < 3.0, worst, float("nan")


def _suite_lemma31(params: ModelParams, rng, n_samples: int):
    stat, p, _ = stats.law_check_lemma31(params, n_samples, rng)
    return p > 0.01, stat, p


def _suite_shuffle_law(params: ModelParams, rng, n_samples: int):
    stat, p, _ = stats.law_check_shuffle(params, n_samples, rng)
    return p > 0.01, stat, p


def _suite_sizebias(params: ModelParams, rng, n_samples: int):
    worst = 0.0
    for functional in stats.SIZEBIAS_FUNCTIONALS:
        _, _, sig = stats.sizebias_identity_check(params, 2, functional, rng, n_samples)
        worst = max(worst, sig)
    return worst < 3.0, worst, float("nan")


def _suite_track(params: ModelParams, rng, n_walks: int):
    from .samplers import height_stabilized, sample_walk

    bad = 0
    for _ in range(n_walks):
        walk = sample_walk(params, height_stabilized(params, 3, 1e-5), rng)
        h = walk.heights()
        zeta = int(np.nonzero(h <= 3)[0][-1])
        dec = marks.decode_walk_prefix(walk, params, rng, zeta)
        sh = marks.shuffle(dec.marked(), rng)
        if marks.visited_trie_canonical(walk, params, upto=zeta) != marks.track_image_canonical(dec.marked()):
            bad += 1
            continue
        if marks.track_image_canonical(sh) != marks.track_image_canonical(dec.marked()):
            bad += 1
            continue
        if marks.shrink_to_range_tree(sh) != trees.range_tree(walk.moves, params.b, upto=zeta):
            bad += 1
    return bad == 0, float(bad), float("nan")


def _suite_escape(params: ModelParams):
    err = abs(analysis.escape_probability_dp(params) - params.q)
    return err < 1e-8, err, float("nan")


def _suite_fn_limit():
    params = ModelParams(1e-4, np.array([0.5, 0.5]))
    delta = 0.5
    n = int(math.floor(delta / params.epsilon))
    val = analysis.f_n_closed(params, n, 0.0) ** int(math.floor(1 / params.epsilon))
    target = math.exp(-4.0 / (math.e ** (4 * delta) - 1.0))
    err = abs(val - target)
    return err < 1e-2, err, float("nan")


def verify_suites(seed: int, n_random: int, n_law: int):
    """(name, kind, callable) registry; kind 'exact' or 'statistical'."""
    params = ModelParams(0.1, np.array([0.5, 0.5]))
    return [
        ("encodings_hl_hc_mir", "exact",
         lambda: _suite_encodings(params, stream(seed, 10), n_random)),
        ("spine_spd_cut", "exact",
         lambda: _suite_spine(params, stream(seed, 11), max(200, n_random // 10))),
        ("prop33ii_compose_closed", "exact", lambda: _suite_prop33ii(stream(seed, 12))),
        ("prop33i_conditional_pgf", "statistical", lambda: _suite_prop33i(stream(seed, 13))),
        ("lemma31_law", "statistical",
         lambda: _suite_lemma31(params, stream(seed, 14), n_law)),
        ("shuffle_law", "statistical",
         lambda: _suite_shuffle_law(params, stream(seed, 15), n_law)),
        ("sizebias_identity", "statistical",
         lambda: _suite_sizebias(params, stream(seed, 16), max(2000, n_law))),
        ("track_identities", "exact",
         lambda: _suite_track(params, stream(seed, 17), 200)),
        ("escape_probability_dp", "exact", lambda: _suite_escape(params)),
        ("fn_closed_limit", "exact", lambda: _suite_fn_limit()),
    ]


def cmd_verify(args) -> int:
    defaults = dict(out="out", n_random=2000, n_law=4000)
    try:
        opts = resolve_options(args, defaults)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = str(opts["out"])
    write_manifest(out_dir, "verify", opts)
    seed = opts["seed"]
    rows = []
    worst = EXIT_OK
    for name, kind, fn in verify_suites(seed, int(opts["n_random"]), int(opts["n_law"])):
        ok, stat, p = fn()
        rows.append([name, _fmt(stat), _fmt(p), seed, kind, "pass" if ok else "fail"])
        print(f"{'PASS' if ok else 'FAIL'}  {name}  stat={stat:.6g} p={p:.6g}")
        if not ok:
            worst = max(worst, EXIT_STATISTICAL if kind == "statistical" else EXIT_EXACT)
    _csv_write(os.path.join(out_dir, "tests.csv"),
               ["test", "statistic", "p_value", "seed", "params", "status"], rows)
    return worst


# ---------------------------------------------------------------- limit ----

def _limit_config(args):
    defaults = dict(epsilon=0.02, weights="0.5,0.5", x_cut=12.0, n_replicates=4000,
                    observation_times="0.2,0.5", limit_dt=1e-4, gamma="auto",
                    out="out", n_samples=0)
    opts = resolve_options(args, defaults)
    weights = parse_weights(opts["weights"])
    params = ModelParams(float(opts["epsilon"]), weights)
    cfg = stats.EnsembleConfig(
        params=params,
        x_cut=float(opts["x_cut"]),
        n_replicates=int(opts["n_replicates"]),
        seed=opts["seed"],
        shards=opts["shards"],
        observation_times=parse_floats(opts["observation_times"]),
        limit_dt=float(opts["limit_dt"]),
    )
    if str(opts["gamma"]) == "auto":
        g = analysis.inv_gamma_mc(weights, 100000, 1e-9, stream(cfg.seed, 3))
        gamma = g.gamma
    else:
        gamma = float(opts["gamma"])
    return opts, cfg, gamma


def cmd_limit(args) -> int:
    try:
        opts, cfg, gamma = _limit_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = str(opts["out"])
    opts["gamma_resolved"] = gamma
    write_manifest(out_dir, "limit", opts)

    mass = stats.excursion_mass_above(cfg.x_cut, gamma * max(cfg.observation_times))
    if mass >= 0.005:
        print(f"config error: x_cut={cfg.x_cut} leaves excursion mass {mass} >= 0.005",
              file=sys.stderr)
        return EXIT_CONFIG

    result = stats.simulate_ensemble(cfg, out_dir)
    stats.attach_limit_gamma(result, gamma)
    stats.write_marginals_csv(result, os.path.join(out_dir, "marginals.csv"))

    rows = [["excursion_mass_above_cut", _fmt(mass), _fmt(float("nan")), cfg.seed,
             f"x={cfg.x_cut}", "pass"]]
    failed = False
    checks = dict(theorem=stats.theorem1_marginal_test(result, gamma),
                  lemma34=stats.lemma34_marginal_test(result))
    for group, res in checks.items():
        for name, ks in res.items():
            reject_expected = "negctrl" in name or "tau_vs_tilde" in name
            if reject_expected:
                ok = ks.p_value < 1e-3 if gamma != 1.0 else True
            else:
                ok = ks.p_value > 1e-3
            failed |= not ok
            rows.append([name, _fmt(ks.statistic), _fmt(ks.p_value), cfg.seed,
                         f"eps={cfg.params.epsilon} x={cfg.x_cut} gamma={gamma:.6g}",
                         "pass" if ok else "fail"])
            print(f"{'PASS' if ok else 'FAIL'}  {name}  D={ks.statistic:.4f} p={ks.p_value:.3e}")
    _csv_write(os.path.join(out_dir, "tests.csv"),
               ["test", "statistic", "p_value", "seed", "params", "status"], rows)
    return EXIT_STATISTICAL if failed else EXIT_OK


def cmd_simulate(args) -> int:
    try:
        opts, cfg, _gamma = _limit_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = str(opts["out"])
    write_manifest(out_dir, "simulate", opts)
    stats.simulate_ensemble(cfg, out_dir)
    return EXIT_OK


def cmd_report_data(args) -> int:
    """Produce the full CSV set (small preset) for the report component."""
    if args.preset is None:
        args.preset = "smoke"
    if getattr(args, "observation_times", None) is None:
        args.observation_times = "0.1,0.2,0.3,0.4,0.5"
    rc = cmd_gamma(args)
    if rc != EXIT_OK:
        return rc
    return cmd_limit(args)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rangelab",
                                 description="range-tree scaling-limit laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--shards", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--preset", type=str, default=None, choices=list(PRESETS))

    g = sub.add_parser("gamma", help="time-change constant estimates over an epsilon grid")
    common(g)
    g.add_argument("--weights", type=str, default=None)
    g.add_argument("--eps-grid", dest="eps_grid", type=str, default=None)
    g.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    g.add_argument("--tol", type=float, default=None)
    g.add_argument("--empirical-trees", dest="empirical_trees", type=int, default=None)
    g.set_defaults(fn=cmd_gamma)

    v = sub.add_parser("verify", help="run every deterministic and law property suite")
    common(v)
    v.add_argument("--n-random", dest="n_random", type=int, default=None)
    v.add_argument("--n-law", dest="n_law", type=int, default=None)
    v.set_defaults(fn=cmd_verify)

    for name, fn, hlp in (("limit", cmd_limit, "ensemble + scaling-limit KS tests"),
                          ("simulate", cmd_simulate, "ensemble simulation only"),
                          ("report-data", cmd_report_data, "emit the CSV set for the report")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--weights", type=str, default=None)
        p.add_argument("--x-cut", dest="x_cut", type=float, default=None)
        p.add_argument("--n-replicates", dest="n_replicates", type=int, default=None)
        p.add_argument("--observation-times", dest="observation_times", type=str, default=None)
        p.add_argument("--limit-dt", dest="limit_dt", type=float, default=None)
        p.add_argument("--gamma", type=str, default=None)
        if name == "report-data":
            p.add_argument("--n-samples", dest="n_samples", type=int, default=None)
            p.add_argument("--eps-grid", dest="eps_grid", type=str, default=None)
            p.add_argument("--tol", type=float, default=None)
            p.add_argument("--empirical-trees", dest="empirical_trees", type=int, default=None)
        p.set_defaults(fn=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
