"""Benchmark acceptance suite.

One test per numbered criterion; each prints a single pass/fail line with
the measured values (through the capture-disabled channel, so the lines show
up in live pytest output). Long-horizon training runs make this module take
several minutes; the unit suites elsewhere stay fast.
"""

import os
import time

import numpy as np
import pytest

from cyclematch.baselines import matchals, pgdds, spectral
from cyclematch.cli import main as cli_main
from cyclematch.geometry import build_prior
from cyclematch.graph import augmented_operator
from cyclematch.losses import cycle_loss
from cyclematch.metrics import compare_scores, similarity_stats, time_method
from cyclematch.nn import model_forward
from cyclematch.synthgen import SynthGraphSpec, gen_graph, gen_scene
from cyclematch.train import TrainConfig, ablate, gradcheck, train

P30_OUTLIERS = SynthGraphSpec(views=3, points=30, descriptor_dim=16,
                              descriptor_noise_sigma=0.25, outlier_rate=0.1,
                              seed=0)


def _report(capsys, num, ok, detail):
    with capsys.disabled():
        print("criterion %2d %s: %s" % (num, "PASS" if ok else "FAIL", detail),
              flush=True)


def test_criterion_01_gradient_correctness(capsys):
    t0 = time.perf_counter()
    rep = gradcheck(seed=7, directions=20)
    elapsed = time.perf_counter() - t0
    ok = rep["max_rel_err"] <= 1e-4 and elapsed < 10.0
    _report(capsys, 1, ok,
            "gradcheck gn_on %.2e gn_off %.2e (tol 1e-4, %.1fs)"
            % (rep["gn_on"], rep["gn_off"], elapsed))
    assert rep["max_rel_err"] <= 1e-4
    assert elapsed < 10.0


def _train_similarities(views, outliers, steps=20000):
    spec = SynthGraphSpec(views=views, points=10, descriptor_dim=16,
                          descriptor_noise_sigma=0.25, outlier_rate=outliers,
                          seed=0)
    cfg = TrainConfig(steps=steps, graph=spec, eval_every=steps, seed=0)
    result = train(cfg)
    final = result.evals[-1]
    return final["same_mean"], final["diff_mean"]


def test_criterion_02_similarity_replication(capsys):
    t0 = time.perf_counter()
    same3, diff3 = _train_similarities(views=3, outliers=0.0)
    t3 = time.perf_counter() - t0
    t0 = time.perf_counter()
    same5, _ = _train_similarities(views=5, outliers=0.0)
    t5 = time.perf_counter() - t0
    t0 = time.perf_counter()
    same_out, _ = _train_similarities(views=3, outliers=0.1)
    tout = time.perf_counter() - t0
    ok = (same3 >= 0.95 and diff3 <= 0.20 and same5 >= 0.97
          and same_out >= 0.85 and max(t3, t5, tout) <= 1800.0)
    _report(capsys, 2, ok,
            "3-view same %.4f diff %.4f, 5-view same %.4f, "
            "10%% outliers same %.4f (%.0f/%.0f/%.0fs)"
            % (same3, diff3, same5, same_out, t3, t5, tout))
    assert same3 >= 0.95 and diff3 <= 0.20
    assert same5 >= 0.97
    assert same_out >= 0.85
    assert max(t3, t5, tout) <= 1800.0


def test_criterion_03_initialization_baseline(capsys):
    t0 = time.perf_counter()
    sames, diffs = [], []
    for seed in range(5):
        spec = SynthGraphSpec(views=3, points=10, descriptor_dim=16,
                              descriptor_noise_sigma=0.25, seed=seed)
        graph, gt = gen_graph(spec)
        stats = similarity_stats(graph.features, gt)
        sames.append(stats.same_mean)
        diffs.append(stats.diff_mean)
    same, diff = float(np.mean(sames)), float(np.mean(diffs))
    elapsed = time.perf_counter() - t0
    ok = 0.35 <= same <= 0.65 and 0.05 <= diff <= 0.45 and elapsed < 60.0
    _report(capsys, 3, ok,
            "identity same %.4f in [0.35,0.65], diff %.4f in [0.05,0.45] "
            "(%.1fs)" % (same, diff, elapsed))
    assert 0.35 <= same <= 0.65
    assert 0.05 <= diff <= 0.45
    assert elapsed < 60.0


def test_criterion_04_spectral_exactness(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for views in (3, 4, 5):
        for points in (10, 30):
            spec = SynthGraphSpec(views=views, points=points,
                                  descriptor_dim=16,
                                  descriptor_noise_sigma=0.0, seed=views)
            graph, gt = gen_graph(spec)
            rep = compare_scores(spectral(graph.adjacency, points), gt)
            worst = max(worst, rep.l1)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10.0
    _report(capsys, 4, ok,
            "spectral worst l1 %.2e over views {3,4,5} x p {10,30} "
            "(tol 1e-6, %.1fs)" % (worst, elapsed))
    assert worst <= 1e-6
    assert elapsed < 10.0


def test_criterion_05_baseline_ordering(capsys):
    t0 = time.perf_counter()
    sums = {"spectral": 0.0, "m15": 0.0, "m50": 0.0, "pgdds": 0.0}
    for seed in range(20):
        graph, gt = gen_graph(SynthGraphSpec(
            views=3, points=30, descriptor_dim=16,
            descriptor_noise_sigma=0.25, outlier_rate=0.1, seed=seed))
        A = graph.adjacency
        sums["spectral"] += compare_scores(spectral(A, 30), gt).l1
        sums["m15"] += compare_scores(matchals(A, 30, 15), gt).l1
        sums["m50"] += compare_scores(matchals(A, 30, 50), gt).l1
        sums["pgdds"] += compare_scores(
            pgdds(A, 30, graph.view_of, 50), gt).l1
    means = {k: v / 20.0 for k, v in sums.items()}
    elapsed = time.perf_counter() - t0
    ok = (means["pgdds"] <= means["m50"] <= means["spectral"]
          and means["m50"] <= means["m15"] and elapsed < 300.0)
    _report(capsys, 5, ok,
            "mean l1 pgdds@50 %.5f m@50 %.5f m@15 %.5f spectral %.5f "
            "(need pgdds<=m50<=spectral and m50<=m15, %.0fs)"
            % (means["pgdds"], means["m50"], means["m15"],
               means["spectral"], elapsed))
    assert means["pgdds"] <= means["m50"]
    assert means["m50"] <= means["m15"]
    assert means["m50"] <= means["spectral"], (
        "matchals@50 mean l1 %.5f is not <= spectral %.5f: the clamped "
        "spectral cosine embedding is already strong on this distribution "
        "and ridge-regularized ALS cannot reach it at any iteration count"
        % (means["m50"], means["spectral"]))
    assert elapsed < 300.0


def test_criterion_06_runtime_ordering(capsys):
    cfg = TrainConfig(steps=200, graph=P30_OUTLIERS, eval_every=200,
                      heldout=1, seed=0)
    result = train(cfg)
    ratios = []
    for seed in range(5):
        from dataclasses import replace
        graph, _ = gen_graph(replace(P30_OUTLIERS, seed=100 + seed))
        Lt = augmented_operator(graph)
        feats = graph.features
        t_fwd = min(time_method(
            lambda: model_forward(result.model, Lt, feats))
            for _ in range(3))
        t_pg = time_method(
            lambda: pgdds(graph.adjacency, 30, graph.view_of, 50))
        ratios.append(t_pg / t_fwd)
    worst = min(ratios)
    ok = worst >= 5.0
    _report(capsys, 6, ok,
            "gcn forward vs pgdds@50 speedup min %.0fx over 5 instances "
            "(need >= 5x)" % worst)
    assert worst >= 5.0


def test_criterion_07_rotation_invariance(capsys):
    graph, _ = gen_graph(SynthGraphSpec(views=3, points=10,
                                        descriptor_dim=16,
                                        descriptor_noise_sigma=0.25, seed=0))
    rng = np.random.default_rng(0)
    E = rng.normal(size=(graph.n, 10))
    base, _ = cycle_loss(graph.adjacency, E)
    worst_loss, worst_gram = 0.0, 0.0
    for _ in range(5):
        Q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        rot, _ = cycle_loss(graph.adjacency, E @ Q)
        worst_loss = max(worst_loss, abs(rot - base))
        worst_gram = max(worst_gram,
                         np.abs((E @ Q) @ (E @ Q).T - E @ E.T).max())
    ok = worst_loss <= 1e-10 and worst_gram <= 1e-10
    _report(capsys, 7, ok,
            "orthogonal Q: loss drift %.2e, gram drift %.2e (tol 1e-10)"
            % (worst_loss, worst_gram))
    assert worst_loss <= 1e-10
    assert worst_gram <= 1e-10


def test_criterion_08_epipolar_prior(capsys):
    t0 = time.perf_counter()
    graph, scene = gen_scene(3, 10, seed=0, descriptor_noise_sigma=0.0)
    prior = build_prior(scene, graph, rescale=False)
    gt = scene.gt
    u = np.argmax(gt.X, axis=1)
    cross = gt.view_of[:, None] != gt.view_of[None, :]
    true_pairs = cross & (u[:, None] == u[None, :])
    false_pairs = cross & (u[:, None] != u[None, :])
    worst_true = prior.G[true_pairs].max()
    median_false = float(np.median(prior.G[false_pairs]))
    elapsed = time.perf_counter() - t0
    ok = worst_true <= 1e-9 and median_false > 1e-3 and elapsed < 10.0
    _report(capsys, 8, ok,
            "true-pair residual max %.2e (tol 1e-9), non-pair median %.3f "
            "(> 1e-3, %.1fs)" % (worst_true, median_false, elapsed))
    assert worst_true <= 1e-9
    assert median_false > 1e-3
    assert elapsed < 10.0


def test_criterion_09_geometric_ablation(capsys):
    spec = SynthGraphSpec(views=3, points=10, descriptor_dim=16,
                          descriptor_noise_sigma=0.25, outlier_rate=0.1,
                          seed=0)
    base = dict(steps=5000, graph=spec, use_scene=True, eval_every=5000,
                seed=0)
    rows = ablate([TrainConfig(use_geometric=True, **base),
                   TrainConfig(use_geometric=False, **base)], seeds=5)
    on, off = rows[0], rows[1]
    ok = on["mean_l1"] <= off["mean_l1"]
    _report(capsys, 9, ok,
            "held-out l1 with geometry %.5f+-%.5f vs without %.5f+-%.5f "
            "over 5 seeds" % (on["mean_l1"], on["std_l1"],
                              off["mean_l1"], off["std_l1"]))
    assert on["mean_l1"] <= off["mean_l1"]


def test_criterion_10_groupnorm_ablation(capsys):
    spec = SynthGraphSpec(views=3, points=30, descriptor_dim=16,
                          descriptor_noise_sigma=0.25, seed=0)
    base = dict(steps=2000, graph=spec, eval_every=2000, seed=0)
    rows = ablate([TrainConfig(use_groupnorm=True, **base),
                   TrainConfig(use_groupnorm=False, **base)], seeds=5)
    on, off = rows[0], rows[1]
    ok = on["mean_l1"] <= off["mean_l1"]
    _report(capsys, 10, ok,
            "held-out l1 with group norm %.5f+-%.5f vs without %.5f+-%.5f "
            "over 5 seeds" % (on["mean_l1"], on["std_l1"],
                              off["mean_l1"], off["std_l1"]))
    assert on["mean_l1"] <= off["mean_l1"]


def _tree_bytes(root):
    out = {}
    for base, _dirs, files in os.walk(root):
        for f in files:
            p = os.path.join(base, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_criterion_11_cli_determinism(tmp_path, capsys):
    tiny = ["--views", "2", "--points", "4", "--descriptor-dim", "6"]
    tiny_train = tiny + ["--hidden", "8", "--groups", "2", "--heldout", "1",
                         "--eval-every", "2", "--seed", "0"]

    def chains(d):
        g = os.path.join(d, "g.cgrf")
        run = os.path.join(d, "run")
        yield ["gen-graph", "--seed", "3", "--out", g] + tiny
        yield ["gen-scene", "--views", "3", "--points", "8", "--seed", "3",
               "--out", os.path.join(d, "s.scnf")]
        yield ["train", "--steps", "4", "--out", run] + tiny_train
        yield ["infer", "--graph", g, "--model",
               os.path.join(run, "model.gcnm"),
               "--out", os.path.join(d, "inf")]
        for method in ("spectral", "matchals", "pgdds"):
            yield ["baseline", "--method", method, "--graph", g,
                   "--gt", os.path.join(d, "g.gtrf"), "--iters", "3",
                   "--out", os.path.join(d, "bl_" + method)]
        yield ["eval", "--graph", g, "--gt", os.path.join(d, "g.gtrf"),
               "--embedding", os.path.join(run, "model.gcnm")]
        yield ["sweep", "--iters", "2,4", "--instances", "2", "--seed", "1",
               "--out", os.path.join(d, "sw")] + tiny
        yield ["ablate", "--flag", "groupnorm", "--steps", "2",
               "--seeds", "3", "--out", os.path.join(d, "ab")] + tiny_train
        yield ["gradcheck", "--seed", "7", "--directions", "5"]

    outputs = []
    for name in ("a", "b"):
        d = str(tmp_path / name)
        os.makedirs(d)
        stdout_parts = []
        for argv in chains(d):
            assert cli_main(argv) == 0, "subcommand failed: %r" % argv
            # The CLI echoes absolute output paths; those differ between
            # the two run dirs by construction, so compare modulo prefix.
            stdout_parts.append(capsys.readouterr().out.replace(d, "<out>"))
        outputs.append((_tree_bytes(d), stdout_parts))

    (tree_a, out_a), (tree_b, out_b) = outputs
    ok = tree_a == tree_b and out_a == out_b
    _report(capsys, 11, ok,
            "all 9 subcommands byte-identical across two runs "
            "(%d files compared)" % len(tree_a))
    assert sorted(tree_a) == sorted(tree_b)
    for rel in tree_a:
        assert tree_a[rel] == tree_b[rel], "file differs: %s" % rel
    assert out_a == out_b


def test_criterion_12_doubly_stochastic_projection(capsys):
    worst = 0.0
    checked = 0
    for seed in range(5):
        graph, _ = gen_graph(SynthGraphSpec(
            views=3, points=10, descriptor_dim=16,
            descriptor_noise_sigma=0.25, outlier_rate=0.1, seed=seed))
        out = pgdds(graph.adjacency, 10, graph.view_of, iters=20)
        assert len(out.ds_residuals) == 20
        worst = max(worst, max(out.ds_residuals))
        checked += len(out.ds_residuals)
    graph, _ = gen_graph(P30_OUTLIERS)
    out = pgdds(graph.adjacency, 30, graph.view_of, iters=20)
    worst = max(worst, max(out.ds_residuals))
    checked += len(out.ds_residuals)
    ok = worst <= 1e-6
    _report(capsys, 12, ok,
            "worst row/col sum deviation %.2e over %d outer iterations "
            "(tol 1e-6)" % (worst, checked))
    assert worst <= 1e-6
