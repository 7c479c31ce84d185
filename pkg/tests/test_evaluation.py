import numpy as np
import pytest

from helpers import hypergeom_recall_null
from oaembed.errors import ParseError
from oaembed.evaluation import (RECALL_LEVELS, EvalReport,
                                brute_force_clustering_accuracy,
                                clustering_accuracy, evaluate_all, f1_scores,
                                kmeans_pp, kmeans_pp_full, load_report, predict,
                                rank_nodes, recall_at, train_classifier)
from oaembed.network import AttributedNetwork, EmbeddingResult
from oaembed.numerics import make_rng
from oaembed.seeding import synth_network


# ----------------------------------------------------------------- ranking


def test_rank_nodes_descending_with_tie_break():
    got = rank_nodes(np.array([0.1, 0.5, 0.5, 0.9]))
    assert got.tolist() == [3, 1, 2, 0]


def test_rank_nodes_errors():
    with pytest.raises(ValueError):
        rank_nodes(np.ones((2, 2)))
    with pytest.raises(ValueError):
        rank_nodes(np.array([1.0, np.nan]))


def test_recall_worked_example():
    ranked = [1, 2, 9, 4, 5, 0, 3, 6, 7, 8]
    got = recall_at(ranked, {1, 2, 3, 4, 5}, 50.0)
    assert got == pytest.approx(0.8)


def test_recall_cutoff_is_ceiling():
    ranked = list(range(10))
    # 25% of 10 -> ceil(2.5) = 3 entries inspected
    assert recall_at(ranked, {2}, 25.0) == 1.0
    assert recall_at(ranked, {3}, 25.0) == 0.0
    # 20% of 10 -> exactly 2, float noise must not widen it
    assert recall_at(ranked, {2}, 20.0) == 0.0


def test_recall_monotone_in_level():
    rng = make_rng(0)
    ranked = rng.permutation(40)
    truth = set(rng.choice(40, size=6, replace=False).tolist())
    vals = [recall_at(ranked, truth, l) for l in (5, 10, 15, 20, 25, 50, 100)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 1.0


def test_recall_errors():
    with pytest.raises(ValueError):
        recall_at([0, 1], set(), 10.0)
    with pytest.raises(ValueError):
        recall_at([0, 1], {0}, 0.0)
    with pytest.raises(ValueError):
        recall_at([0, 1], {0}, 101.0)


# -------------------------------------------------------------------- f1


def test_f1_worked_example():
    macro, micro = f1_scores([0, 0, 1, 1], [0, 0, 1, 0])
    assert macro == pytest.approx((0.8 + 2.0 / 3.0) / 2.0, abs=1e-12)
    assert micro == pytest.approx(0.75, abs=1e-12)


def test_f1_perfect_and_relabeled():
    assert f1_scores([2, 5, 2], [2, 5, 2]) == (1.0, 1.0)
    a = f1_scores([0, 0, 1, 1], [0, 0, 1, 0])
    b = f1_scores([7, 7, 3, 3], [7, 7, 3, 7])  # consistent renaming
    assert a == pytest.approx(b)


def test_f1_class_never_predicted():
    macro, micro = f1_scores([0, 1], [1, 1])
    assert macro == pytest.approx(1.0 / 3.0)
    assert micro == pytest.approx(0.5)


def test_f1_errors():
    with pytest.raises(ValueError):
        f1_scores([0, 1], [0])
    with pytest.raises(ValueError):
        f1_scores([], [])


# ------------------------------------------------------------- classifier


def separable_data(rng, n_per=20, gap=6.0):
    x = np.vstack([rng.normal(size=(n_per, 2)),
                   rng.normal(size=(n_per, 2)) + gap])
    y = np.array([4] * n_per + [9] * n_per)  # non-contiguous label values
    return x, y


def test_classifier_separable_data():
    rng = make_rng(1)
    x, y = separable_data(rng)
    clf = train_classifier(x, y)
    assert np.array_equal(predict(clf, x), y)
    assert clf.classes.tolist() == [4, 9]


def test_classifier_deterministic_and_trace():
    rng = make_rng(2)
    x, y = separable_data(rng)
    a = train_classifier(x, y, steps=50)
    b = train_classifier(x, y, steps=50)
    assert np.array_equal(a.weights, b.weights)
    assert len(a.loss_trace) == 51
    assert a.loss_trace[-1] < a.loss_trace[0]


def test_classifier_three_classes():
    rng = make_rng(3)
    centers = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]])
    x = np.vstack([rng.normal(size=(15, 2)) + c for c in centers])
    y = np.repeat([0, 1, 2], 15)
    clf = train_classifier(x, y)
    assert (predict(clf, x) == y).mean() == 1.0


def test_classifier_input_errors():
    with pytest.raises(ValueError):
        train_classifier(np.ones((3, 2)), np.zeros(3, dtype=int))  # one class
    with pytest.raises(ValueError):
        train_classifier(np.ones((3, 2)), np.array([0, 1]))
    with pytest.raises(ValueError):
        train_classifier(np.ones(3), np.array([0, 1, 0]))


# ----------------------------------------------------------------- kmeans


def test_kmeans_separated_line():
    pts = np.array([[0.0], [0.1], [0.2], [10.0], [10.1], [10.2]])
    labels = kmeans_pp(pts, 2, seed=0)
    assert labels[0] == labels[1] == labels[2]
    assert labels[3] == labels[4] == labels[5]
    assert labels[0] != labels[3]


def test_kmeans_single_cluster_mean():
    pts = np.array([[1.0, 0.0], [3.0, 2.0], [5.0, 4.0]])
    labels, centers, trace = kmeans_pp_full(pts, 1, seed=0)
    assert labels.tolist() == [0, 0, 0]
    assert np.allclose(centers[0], pts.mean(axis=0))
    assert len(trace) >= 1


def test_kmeans_wcss_non_increasing():
    rng = make_rng(4)
    pts = rng.normal(size=(60, 3))
    _, _, trace = kmeans_pp_full(pts, 4, seed=1)
    assert all(a >= b - 1e-9 for a, b in zip(trace, trace[1:]))


def test_kmeans_deterministic():
    rng = make_rng(5)
    pts = rng.normal(size=(40, 2))
    assert np.array_equal(kmeans_pp(pts, 3, seed=7), kmeans_pp(pts, 3, seed=7))


def test_kmeans_duplicate_points_survive():
    pts = np.array([[1.0, 1.0]] * 5 + [[4.0, 4.0]])
    labels = kmeans_pp(pts, 3, seed=0)
    assert labels.shape == (6,)
    assert ((labels >= 0) & (labels < 3)).all()


def test_kmeans_errors():
    pts = np.ones((3, 2))
    with pytest.raises(ValueError):
        kmeans_pp(pts, 4, seed=0)
    with pytest.raises(ValueError):
        kmeans_pp(pts, 0, seed=0)
    with pytest.raises(ValueError):
        kmeans_pp(np.empty((0, 2)), 1, seed=0)


# ---------------------------------------------------------------- matching


def test_clustering_accuracy_examples():
    assert clustering_accuracy([0, 1, 0, 1], [0, 0, 1, 1]) == 0.5
    assert clustering_accuracy([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0
    assert clustering_accuracy([5, 5, 9, 9], [0, 0, 1, 1]) == 1.0


def test_clustering_accuracy_matches_brute_force():
    rng = make_rng(6)
    for _ in range(20):
        n = int(rng.integers(4, 30))
        kp = int(rng.integers(1, 5))
        kt = int(rng.integers(2, 5))
        pred = rng.integers(0, kp, size=n)
        truth = rng.integers(0, kt, size=n)
        assert clustering_accuracy(pred, truth) == pytest.approx(
            brute_force_clustering_accuracy(pred, truth), abs=1e-12)


def test_clustering_accuracy_errors():
    with pytest.raises(ValueError):
        clustering_accuracy([0, 1], [0])
    with pytest.raises(ValueError):
        clustering_accuracy([], [])


# ------------------------------------------------------------- full battery


def one_hot_result(net, truth_ids):
    """Embedding that encodes the label perfectly; planted nodes score highest."""
    n = net.n_nodes
    emb = np.zeros((n, net.n_classes))
    emb[np.arange(n), net.labels] = 1.0
    scores = np.linspace(0.5, 0.1, n)
    scores[list(truth_ids)] = 1.0
    comp = np.column_stack([scores, scores, scores])
    return EmbeddingResult(embedding=emb, outlier_scores=scores,
                           component_scores=comp, loss_trace=[1.0, 0.5])


def test_evaluate_all_perfect_embedding():
    net = synth_network(120, 3, 0.2, 0.02, 30, 0.9, seed=8)
    truth = [3, 40, 90]
    report = evaluate_all(net, one_hot_result(net, truth), truth,
                          splits=(10, 50), reps=3, seed=1)
    assert set(report.recall_at) == set(RECALL_LEVELS)
    assert all(v == 1.0 for v in report.recall_at.values())
    assert report.clustering_accuracy == 1.0
    for macro, micro in report.f1.values():
        assert micro == 1.0
        assert macro == 1.0
    assert report.config["n_nodes"] == 120
    assert report.config["n_truth"] == 3
    assert report.config["reps"] == 3
    assert report.config["splits"] == [10, 50]


def test_evaluate_all_random_scores_near_null():
    rng = make_rng(9)
    net = synth_network(200, 2, 0.1, 0.01, 20, 0.9, seed=10)
    truth = rng.choice(200, size=10, replace=False).tolist()
    emb = rng.normal(size=(200, 4))
    scores = rng.uniform(0.1, 1.0, size=200)
    comp = np.column_stack([scores] * 3)
    result = EmbeddingResult(embedding=emb, outlier_scores=scores,
                             component_scores=comp, loss_trace=[0.0])
    report = evaluate_all(net, result, truth, splits=(30,), reps=2, seed=2)
    mean, std = hypergeom_recall_null(200, 10, int(np.ceil(0.25 * 200)))
    assert abs(report.recall_at[25] - mean) <= 4 * std + 1e-9


def test_evaluate_all_exclude_outliers():
    net = synth_network(90, 3, 0.2, 0.02, 30, 0.9, seed=11)
    truth = [0, 45]
    report = evaluate_all(net, one_hot_result(net, truth), truth,
                          splits=(20,), reps=2, seed=3, exclude_outliers=True)
    assert report.config["exclude_outliers"] is True
    assert report.clustering_accuracy == 1.0


def test_evaluate_all_deterministic():
    net = synth_network(80, 2, 0.2, 0.02, 16, 0.9, seed=12)
    result = one_hot_result(net, [5])
    a = evaluate_all(net, result, [5], splits=(30,), reps=2, seed=4)
    b = evaluate_all(net, result, [5], splits=(30,), reps=2, seed=4)
    assert a == b


def test_evaluate_all_validation():
    net = synth_network(50, 2, 0.2, 0.02, 10, 0.9, seed=13)
    result = one_hot_result(net, [1])
    with pytest.raises(ValueError):
        evaluate_all(net, result, [])
    with pytest.raises(ValueError):
        evaluate_all(net, result, [50])
    with pytest.raises(ValueError):
        evaluate_all(net, result, [1], splits=(0,))
    unlabeled = AttributedNetwork(adjacency=net.adjacency,
                                  attributes=net.attributes)
    with pytest.raises(ValueError):
        evaluate_all(unlabeled, result, [1])
    short = EmbeddingResult(embedding=result.embedding[:49],
                            outlier_scores=result.outlier_scores[:49],
                            component_scores=result.component_scores[:49],
                            loss_trace=[0.0])
    with pytest.raises(ValueError):
        evaluate_all(net, short, [1])


# ---------------------------------------------------------------- reports


def sample_report():
    return EvalReport(recall_at={5: 0.2, 10: 0.4},
                      f1={10: (0.5, 0.6), 50: (0.7, 0.8)},
                      clustering_accuracy=0.9,
                      config={"seed": 3, "reps": 2})


def test_report_json_round_trip():
    report = sample_report()
    again = EvalReport.from_json(report.to_json())
    assert again == report
    assert all(isinstance(k, int) for k in again.recall_at)
    assert all(isinstance(v, tuple) for v in again.f1.values())


def test_report_tsv_layout():
    lines = sample_report().to_tsv().splitlines()
    assert lines[0] == "metric\tkey\tvalue"
    assert ["recall_at", "5", "0.2"] == lines[1].split("\t")
    assert any(line.startswith("f1_macro\t10\t") for line in lines)
    assert lines[-1].startswith("clustering_accuracy\t-\t")


def test_load_report_round_trip(tmp_path):
    path = tmp_path / "report.json"
    path.write_text(sample_report().to_json())
    assert load_report(str(path)) == sample_report()


def test_load_report_errors(tmp_path):
    with pytest.raises(ParseError):
        load_report(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_report(str(bad))
    partial = tmp_path / "partial.json"
    partial.write_text("{\"recall_at\": {}}")
    with pytest.raises(ParseError):
        load_report(str(partial))
