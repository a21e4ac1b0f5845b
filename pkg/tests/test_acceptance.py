"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line.  Statistical criteria run at pinned seeds.

Two criteria are expected to fail and are left red deliberately; the
blocking analysis lives in the decisions ledger (see README):
  - full track monotonicity after the shuffle (criterion: track identities),
  - the desk-scale KS verification of the scaling limit at eps = 0.02.
"""

import math
import os
import time

import numpy as np
import pytest

from rangelab import analysis, cli, marks, stats, trees
from rangelab.samplers import (
    ModelParams,
    height_stabilized,
    sample_gw,
    sample_gwi_left,
    sample_gwi_uniform,
    sample_walk,
    stream,
)

SEED = 20240901
P01 = ModelParams(0.1, np.array([0.5, 0.5]))


def report(name, ok, detail=""):
    print(f"ACCEPTANCE {'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return ok


class TestGammaValues:
    def test_uniform_gamma(self):
        t0 = time.monotonic()
        g2 = analysis.inv_gamma_mc([0.5, 0.5], 100_000, 1e-9, stream(SEED, 201))
        g5 = analysis.inv_gamma_mc([0.2] * 5, 100_000, 1e-9, stream(SEED, 202))
        elapsed = time.monotonic() - t0
        ok2 = abs(g2.value - 0.5) <= max(3 * g2.std_error, g2.truncation_bound)
        ok5 = abs(g5.value - 0.8) <= max(3 * g5.std_error, g5.truncation_bound)
        ok = ok2 and ok5 and elapsed < 10.0
        assert report("gamma_uniform_values",
                      ok, f"b2={g2.value:.12f} b5={g5.value:.12f} t={elapsed:.2f}s")


class TestGammaEpsConvergence:
    def test_series_and_cross_check(self):
        t0 = time.monotonic()
        vals = [analysis.inv_gamma_eps([0.5, 0.5], e, 0, stream(SEED, 203)).value
                for e in (0.1, 0.05, 0.02, 0.01)]
        series_t = time.monotonic() - t0
        diffs = [abs(v - 0.5) for v in vals]
        ok_mono = diffs == sorted(diffs, reverse=True)
        ok_limit = diffs[-1] < 0.05
        ok_time = series_t < 5.0

        emp = analysis.inv_gamma_eps_empirical(P01, 100_000, stream(SEED, 204))
        series01 = vals[0]
        ok_cross = abs(emp.value - series01) < 3 * emp.std_error
        ok = ok_mono and ok_limit and ok_time and ok_cross
        assert report("gamma_eps_convergence", ok,
                      f"grid={['%.4f' % v for v in vals]} emp={emp.value:.4f}"
                      f"+-{emp.std_error:.4f} t={series_t:.2f}s")


class TestEventProbabilities:
    def test_closed_form_and_mc(self):
        t0 = time.monotonic()
        a, eps = 0.3, 0.1
        p_left, p_right = analysis.example_event_probabilities([a, 1 - a], eps)
        ok_value = abs(p_left - 0.064815) < 1e-6 and p_left != p_right
        pl5, pr5 = analysis.example_event_probabilities([0.5, 0.5], eps)
        ok_sym = abs(pl5 - pr5) < 1e-12

        params = ModelParams(eps, np.array([a, 1 - a]))
        stop = height_stabilized(params, 2, 1e-5)
        n = 100_000
        rng = stream(SEED, 205)
        hits = 0
        trunc = params.q ** stop.margin
        for _ in range(n):
            w = sample_walk(params, stop, rng)
            t = trees.range_tree(w.moves, params.b)
            c = t.children_counts
            if c[0] == 2 and c[1] == 0 and c[trees.subtree_end(t, 1)] > 0:
                hits += 1
        freq = hits / n
        se = math.sqrt(p_left * (1 - p_left) / n)
        ok_mc = abs(freq - p_left) < 3 * se + trunc
        elapsed = time.monotonic() - t0
        ok = ok_value and ok_sym and ok_mc and elapsed < 120.0
        assert report("event_probabilities", ok,
                      f"closed={p_left:.6f} mc={freq:.6f} ({abs(freq-p_left)/se:.2f} sigma) "
                      f"t={elapsed:.1f}s")


class TestProp33ii:
    def test_compose_equals_closed(self):
        t0 = time.monotonic()
        rng = stream(SEED, 206)
        grid = np.linspace(0.0, 1.0, 11)
        worst = 0.0
        for weights in ([0.5, 0.5], [0.7, 0.2, 0.1]):
            params = ModelParams(0.1, np.array(weights))
            for _ in range(500):
                n = 1 + int(rng.integers(30))
                v = tuple(1 + int(j) for j in rng.integers(len(weights), size=n))
                for x in grid:
                    err = abs(analysis.f_v_compose(params, v, x)
                              - analysis.f_v_closed(params, v, x))
                    worst = max(worst, err)
        elapsed = time.monotonic() - t0
        ok = worst < 1e-12 and elapsed < 5.0
        assert report("prop33ii_closed_form", ok, f"worst={worst:.2e} t={elapsed:.2f}s")


class TestProp33i:
    def test_conditional_pgf(self):
        rows = analysis.conditional_z_pgf_check(P01, (1,), (1,), 0.5, 100_000,
                                                stream(SEED, 207), l=1)
        classes = {z for z, *_ in rows}
        devs = {z: abs(emp - ana) / se for z, emp, ana, se, _ in rows if se > 0}
        ok = {1, 2} <= classes and all(d < 3.0 for z, d in devs.items() if z in (1, 2))
        assert report("prop33i_conditional_pgf", ok,
                      "sigmas=" + str({z: f"{d:.2f}" for z, d in sorted(devs.items())}))


class TestEncodingSuite:
    def test_exact_encodings(self):
        t0 = time.monotonic()
        rng = stream(SEED, 208)
        corpus = trees.all_trees(7) + [sample_gw(P01, rng) for _ in range(10_000)]
        bad = 0
        for t in corpus:
            if trees.height_from_lukasiewicz(trees.lukasiewicz_path(t)) != trees.height_process(t):
                bad += 1
            elif trees.contour_from_height(trees.height_process(t)) != trees.contour_direct(t):
                bad += 1
            else:
                m = trees.mirror(t)
                if (trees.mirror(m) != t or m.size != t.size
                        or sorted(trees.heights(m).tolist()) != sorted(trees.heights(t).tolist())):
                    bad += 1
        # SPD and CUT identities on random GWI slices (both dispatch laws)
        from rangelab.cli import _cut_contour_holds, _spine_identities_hold

        for i in range(1000):
            sampler = sample_gwi_uniform if i % 2 else sample_gwi_left
            sl = sampler(P01, 2 + int(rng.integers(6)), rng)
            if not _spine_identities_hold(sl):
                bad += 1
            elif not _cut_contour_holds(sl, rng):
                bad += 1
        elapsed = time.monotonic() - t0
        ok = bad == 0 and elapsed < 30.0
        assert report("encoding_suite", ok,
                      f"corpus={len(corpus)}+1000 slices bad={bad} t={elapsed:.1f}s")


class TestLawChecks:
    def test_lemma31_and_shuffle_laws(self):
        stat1, p1, _ = stats.law_check_lemma31(P01, 10_000, stream(SEED, 209))
        stat2, p2, _ = stats.law_check_shuffle(P01, 10_000, stream(SEED, 210))
        # A/A calibration and A/B power controls
        from rangelab.stats import _gwi_shape_counts, chisq_homogeneity

        aa1 = _gwi_shape_counts(P01, 2, 10_000, stream(SEED, 211), uniform=False)
        aa2 = _gwi_shape_counts(P01, 2, 10_000, stream(SEED, 212), uniform=False)
        _, p_aa, _ = chisq_homogeneity(aa1, aa2)
        ab = _gwi_shape_counts(ModelParams(0.12, np.array([0.5, 0.5])), 2, 20_000,
                               stream(SEED, 213), uniform=False)
        ab0 = _gwi_shape_counts(P01, 2, 20_000, stream(SEED, 214), uniform=False)
        _, p_ab, _ = chisq_homogeneity(ab0, ab)
        ok = p1 > 0.01 and p2 > 0.01 and p_aa > 0.01 and p_ab < 0.01
        assert report("law_checks", ok,
                      f"lemma31 p={p1:.3f} shuffle p={p2:.3f} A/A p={p_aa:.3f} A/B p={p_ab:.2e}")


class TestTrackIdentities:
    def test_exact_on_walk_ensemble(self):
        """traceW, tra, ttilde1 and shrink==range_tree hold exactly; the full
        monotonicity (increasing) is reported per replicate and is red.

        Expected failure: equal sibling marks whose earlier copy has
        descendants admit no track-sorted block order (see ledger)."""
        n_walks = 1000
        bad_image = bad_tra = bad_shrink = monotone_violations = 0
        for i in range(n_walks):
            rng = stream(SEED, 215, i)
            walk = sample_walk(P01, height_stabilized(P01, 3, 1e-5), rng)
            zeta = int(np.nonzero(walk.heights() <= 3)[0][-1])
            dec = marks.decode_walk_prefix(walk, P01, rng, zeta)
            sh = marks.shuffle(dec.marked(), rng)
            img = marks.visited_trie_canonical(walk, P01, upto=zeta)
            if marks.track_image_canonical(dec.marked()) != img:
                bad_image += 1
            if marks.track_image_canonical(sh) != img:
                bad_tra += 1
            if marks.shrink_to_range_tree(sh) != trees.range_tree(walk.moves, P01.b, upto=zeta):
                bad_shrink += 1
            if marks.track_monotone_violations(sh) > 0:
                monotone_violations += 1
        report("track_traceW_image", bad_image == 0, f"bad={bad_image}/{n_walks}")
        report("track_tra_preserved", bad_tra == 0, f"bad={bad_tra}/{n_walks}")
        report("track_shrink_equals_range_tree", bad_shrink == 0, f"bad={bad_shrink}/{n_walks}")
        ok_increasing = monotone_violations == 0
        report("track_increasing_full", ok_increasing,
               f"violating replicates={monotone_violations}/{n_walks} "
               "(unattainable for tied sibling marks; see decisions ledger)")
        assert bad_image == 0 and bad_tra == 0 and bad_shrink == 0
        assert ok_increasing, (
            "Eq. (increasing) cannot hold for block shuffles with tied sibling "
            "marks; kept red per the ledger analysis")


class TestEscapeProbability:
    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
    def test_dp_matches(self, eps):
        params = ModelParams(eps, np.array([0.5, 0.5]))
        err = abs(analysis.escape_probability_dp(params) - params.q)
        assert report(f"escape_probability_eps{eps}", err < 1e-8, f"err={err:.2e}")


class TestFnLimit:
    def test_limit_value(self):
        params = ModelParams(1e-4, np.array([0.5, 0.5]))
        n = int(math.floor(0.5 / params.epsilon))
        val = analysis.f_n_closed(params, n, 0.0) ** int(math.floor(1 / params.epsilon))
        target = math.exp(-4.0 / (math.e**2 - 1.0))
        ok = abs(val - target) < 1e-2
        assert report("fn_closed_limit", ok, f"val={val:.6f} target={target:.6f}")


class TestSizeBias:
    def test_catalogue(self):
        worst = {}
        for functional in stats.SIZEBIAS_FUNCTIONALS:
            _, _, sig = stats.sizebias_identity_check(P01, 2, functional,
                                                      stream(SEED, 216), 100_000)
            worst[functional] = sig
        ok = all(s < 3.0 for s in worst.values())
        assert report("sizebias_identity", ok,
                      "sigmas=" + str({k: f"{v:.2f}" for k, v in worst.items()}))


@pytest.fixture(scope="module")
def acceptance_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("acc") / "run1")
    rc = cli.main(["limit", "--preset", "acceptance", "--out", out,
                   "--seed", str(SEED), "--shards", "8"])
    return out, rc


class TestTheorem1DeskScale:
    def test_marginal_ks(self, acceptance_run):
        """The spec-pinned desk-scale KS verification.  Runs faithfully; the
        positive rows are expected red at eps=0.02 (ledger: the finite-eps
        offspring-variance bias 1-6eps, the gamma_eps=1.693 vs gamma=2 time
        change, and the O(eps D/s) height-index shift all exceed the KS
        resolution at N=4000)."""
        out, rc = acceptance_run
        t0 = time.monotonic()
        rows = {}
        for line in open(os.path.join(out, "tests.csv")).read().splitlines()[1:]:
            name, stat, p, *_ = line.split(",")
            if name.startswith(("thm1", "lemma34")):
                rows[name] = (float(stat), float(p))
        checks = {}
        for s in ("0.2", "0.5"):
            checks[f"(a) contour s={s}"] = rows[f"thm1_contour_s{s}"][1] > 1e-3
            checks[f"(b) height s={s}"] = rows[f"thm1_height_s{s}"][1] > 1e-3
            checks[f"(c) negative control s={s}"] = rows[f"thm1_negctrl_s{s}"][1] < 1e-3
            checks[f"(d) lemma34 tilde s={s}"] = rows[f"lemma34_tilde_s{s}"][1] > 1e-3
            checks[f"(e) mirror s={s}"] = rows[f"thm1_mirror_s{s}"][1] > 1e-3
        for name, ok in checks.items():
            report(f"theorem1 {name}", ok)
        # mechanism diagnostics (informational, convergence direction)
        diag = []
        for eps, n_rep in ((0.1, 600), (0.05, 600), (0.02, 600)):
            params = ModelParams(eps, np.array([0.5, 0.5]))
            cfg = stats.EnsembleConfig(params, 12.0, n_rep, seed=SEED,
                                       observation_times=(0.5,), limit_dt=1e-3)
            res = stats.simulate_ensemble(cfg)
            ks = stats.ks_two_sample(res.sample("tau_tilde", 0.5), res.sample("limit", 0.5))
            diag.append(ks.statistic)
        trend_ok = diag[0] > diag[1] > diag[2]
        report("theorem1 diagnostic: KS(tilde, 2D_s) decreases along eps",
               trend_ok, f"D={['%.3f' % d for d in diag]}")
        assert trend_ok
        assert all(checks.values()), (
            "desk-scale KS rows red as analyzed in the decisions ledger; "
            f"failing: {[k for k, v in checks.items() if not v]}")


class TestDeterminism:
    def test_byte_identical_and_shard_invariant(self, acceptance_run, tmp_path):
        out1, _ = acceptance_run
        out2 = str(tmp_path / "run2")
        out3 = str(tmp_path / "run3")
        cli.main(["limit", "--preset", "acceptance", "--out", out2,
                  "--seed", str(SEED), "--shards", "8"])
        cli.main(["limit", "--preset", "acceptance", "--out", out3,
                  "--seed", str(SEED), "--shards", "3"])
        ok = True
        for fname in ("marginals.csv", "tests.csv", "ensemble.jsonl"):
            a = open(os.path.join(out1, fname), "rb").read()
            ok &= a == open(os.path.join(out2, fname), "rb").read()
            ok &= a == open(os.path.join(out3, fname), "rb").read()
        assert report("determinism_and_shard_invariance", ok)
