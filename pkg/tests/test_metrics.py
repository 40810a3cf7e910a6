import numpy as np
import pytest

from cyclematch.baselines import spectral
from cyclematch.errors import DimensionMismatch
from cyclematch.metrics import (METRICS_HEADER, compare_scores,
                                embedding_similarity, error_report,
                                format_metrics_row, mask_within_view,
                                metrics_row, procrustes_align, score_stats,
                                similarity_stats, sweep_iterations,
                                time_method, time_stats, write_metrics_csv,
                                zero_diagonal)
from cyclematch.synthgen import SynthGraphSpec, gen_graph


def two_view_gt():
    # 2 views x 2 points, identity assignment in both views
    spec = SynthGraphSpec(views=2, points=2, descriptor_dim=4,
                          descriptor_noise_sigma=0.0, seed=0)
    return gen_graph(spec)


def test_similarity_stats_hand_oracle():
    graph, gt = two_view_gt()
    u = np.argmax(gt.X, axis=1)
    # orthogonal embedding indexed by universe id: same pairs have cosine 1,
    # different pairs cosine 0
    E = np.eye(gt.X.shape[1])[u]
    stats = similarity_stats(E, gt)
    assert stats.same_mean == 1.0 and stats.same_std == 0.0
    assert stats.diff_mean == 0.0 and stats.diff_std == 0.0


def test_similarity_stats_pools_cross_view_pairs_only():
    graph, gt = two_view_gt()
    S = np.zeros((gt.n, gt.n))
    u = np.argmax(gt.X, axis=1)
    vof = gt.view_of
    # poison within-view entries; they must not reach either population
    same_view = vof[:, None] == vof[None, :]
    S[same_view] = 99.0
    cross = ~same_view
    S[cross & (u[:, None] == u[None, :])] = 0.8
    S[cross & (u[:, None] != u[None, :])] = 0.1
    stats = score_stats(S, gt)
    assert stats.same_mean == 0.8 and stats.same_std == 0.0
    assert stats.diff_mean == 0.1 and stats.diff_std == 0.0


def test_similarity_stats_validation():
    _, gt = two_view_gt()
    with pytest.raises(DimensionMismatch):
        similarity_stats(np.zeros((gt.n + 1, 3)), gt)
    with pytest.raises(DimensionMismatch):
        score_stats(np.zeros((gt.n + 1, gt.n + 1)), gt)


def test_error_report_literal_formula():
    S = np.array([[0.0, 1.0], [1.0, 0.0]])
    A = np.array([[0.0, 0.5], [0.5, 0.0]])
    rep = error_report(S, A, runtime_s=2.5)
    assert rep.l1 == 2 * 0.5 / 4
    assert rep.l2 == 2 * 0.25 / 4
    assert rep.runtime_s == 2.5
    with pytest.raises(DimensionMismatch):
        error_report(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        error_report(np.zeros((2, 2)), np.zeros((3, 3)))


def test_zero_diagonal_and_mask_within_view():
    S = np.full((4, 4), 0.5)
    out = zero_diagonal(S)
    assert S[0, 0] == 0.5  # input untouched
    np.testing.assert_array_equal(np.diag(out), np.zeros(4))
    assert out[0, 1] == 0.5
    view_of = np.array([0, 0, 1, 1])
    masked = mask_within_view(S, view_of)
    assert masked[0, 1] == 0.0 and masked[2, 3] == 0.0
    assert masked[0, 2] == 0.5


def test_compare_scores_spectral_noiseless():
    spec = SynthGraphSpec(views=3, points=10, descriptor_dim=16,
                          descriptor_noise_sigma=0.0, seed=0)
    graph, gt = gen_graph(spec)
    rep = compare_scores(spectral(graph.adjacency, 10), gt)
    assert rep.l1 <= 1e-6


def test_embedding_similarity_clamps():
    E = np.array([[2.0, 0.0], [0.0, -1.0]])
    S = embedding_similarity(E)
    np.testing.assert_array_equal(S, np.array([[1.0, 0.0], [0.0, 1.0]]))


def test_procrustes_align_recovers_rotation():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 4))
    Q_true, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    E = X @ Q_true.T
    Q, rank_deficient = procrustes_align(E, X)
    assert not rank_deficient
    np.testing.assert_allclose(E @ Q, X, atol=1e-10)
    np.testing.assert_allclose(Q.T @ Q, np.eye(4), atol=1e-12)


def test_procrustes_align_flags_rank_deficiency():
    E = np.zeros((5, 3))
    E[:, 0] = 1.0
    X = E.copy()
    _, rank_deficient = procrustes_align(E, X)
    assert rank_deficient
    with pytest.raises(DimensionMismatch):
        procrustes_align(np.zeros((5, 3)), np.zeros((5, 4)))


def test_time_method_and_stats():
    calls = []
    t = time_method(lambda: calls.append(1))
    assert t >= 0.0 and calls == [1]
    mean, std, samples = time_stats(lambda: None, repeats=4)
    assert len(samples) == 4
    assert mean >= 0.0 and std >= 0.0


def test_format_metrics_row_precision_and_nan():
    row = metrics_row("spectral", l1=1.0 / 3.0, l2=None, runtime_s=None,
                      views=3, points=10, seed=2)
    line = format_metrics_row(row)
    parts = line.split(",")
    assert parts[0] == "spectral"
    assert parts[1] == "3" and parts[2] == "10"
    assert parts[3] == "nan" and parts[4] == "nan"  # noise, outliers unset
    assert parts[5] == "nan" and parts[6] == "2"
    assert parts[7] == "%.17g" % (1.0 / 3.0)
    assert float(parts[7]) == 1.0 / 3.0  # round trips
    assert parts[8] == "nan" and parts[9] == "nan"


def test_write_metrics_csv(tmp_path):
    rows = [metrics_row("pgdds", l1=0.25, l2=0.125, runtime_s=0.5, iters=10)]
    path = str(tmp_path / "m.csv")
    write_metrics_csv(path, rows)
    lines = open(path).read().splitlines()
    assert lines[0] == METRICS_HEADER
    assert lines[1].startswith("pgdds,nan,nan,nan,nan,10,nan,0.25,0.125,0.5")
    assert len(lines) == 2


def test_sweep_iterations_rows_and_validation():
    spec = SynthGraphSpec(views=3, points=8, descriptor_dim=16,
                          descriptor_noise_sigma=0.2, seed=1)
    graph, gt = gen_graph(spec)
    rows = sweep_iterations("matchals", graph.adjacency, 8, (1, 3, 5), gt,
                            meta={"views": 3, "points": 8, "seed": 1})
    assert [r["iters"] for r in rows] == [1, 3, 5]
    assert all(r["method"] == "matchals" for r in rows)
    assert all(np.isfinite(r["l1"]) for r in rows)
    assert rows[0]["views"] == 3 and rows[0]["seed"] == 1
    pg = sweep_iterations("pgdds", graph.adjacency, 8, (2, 4), gt,
                          view_of=graph.view_of)
    assert [r["iters"] for r in pg] == [2, 4]
    with pytest.raises(DimensionMismatch):
        sweep_iterations("spectral", graph.adjacency, 8, (1,), gt)
    with pytest.raises(DimensionMismatch):
        sweep_iterations("matchals", graph.adjacency, 8, (5, 1), gt)
    assert sweep_iterations("matchals", graph.adjacency, 8, (), gt) == []


def test_similarity_stats_orthogonal_invariant():
    # Cosines depend on E only through row norms and inner products, both
    # preserved by a right-orthogonal transform.
    graph, gt = gen_graph(SynthGraphSpec(views=3, points=5, descriptor_dim=4,
                                         descriptor_noise_sigma=0.3, seed=6))
    rng = np.random.default_rng(6)
    E = rng.normal(size=(gt.n, 4))
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    a = similarity_stats(E, gt)
    b = similarity_stats(E @ Q, gt)
    assert b.same_mean == pytest.approx(a.same_mean, abs=1e-12)
    assert b.same_std == pytest.approx(a.same_std, abs=1e-12)
    assert b.diff_mean == pytest.approx(a.diff_mean, abs=1e-12)
    assert b.diff_std == pytest.approx(a.diff_std, abs=1e-12)


def test_error_report_permutation_invariant():
    rng = np.random.default_rng(7)
    S = rng.uniform(size=(9, 9))
    A = rng.uniform(size=(9, 9))
    perm = rng.permutation(9)
    idx = np.ix_(perm, perm)
    base = error_report(S, A)
    permuted = error_report(S[idx], A[idx])
    assert permuted.l1 == pytest.approx(base.l1, rel=1e-13)
    assert permuted.l2 == pytest.approx(base.l2, rel=1e-13)


def test_procrustes_residual_invariant_to_pre_rotation():
    # Aligning E Q0 lands on the same product E Q, so the fit quality can
    # not depend on the arbitrary orientation the solver happened to pick.
    rng = np.random.default_rng(8)
    E = rng.normal(size=(10, 4))
    X = rng.normal(size=(10, 4))
    Q0, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    Q, _ = procrustes_align(E, X)
    Q1, _ = procrustes_align(E @ Q0, X)
    np.testing.assert_allclose(E @ Q0 @ Q1, E @ Q, atol=1e-10)
    assert np.linalg.norm(E @ Q0 @ Q1 - X) == pytest.approx(
        np.linalg.norm(E @ Q - X), rel=1e-12)
