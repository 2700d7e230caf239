"""Tests for match criteria, stratification and the evaluation report."""

import numpy as np
import pytest
from sklearn.metrics import precision_recall_fscore_support

from typesim.cluster import Prediction
from typesim.errors import EmptyEvaluation
from typesim.evaluation import (
    evaluate,
    match_exact,
    match_parametric,
    stratify,
    type_frequency_report,
)


def pred_of(*types, kind="argument"):
    k = len(types)
    ranked = [(t, (k - i) / sum(range(1, k + 1))) for i, t in enumerate(types)]
    return Prediction(ranked=ranked, kind=kind)


def test_match_exact():
    assert match_exact("List[str]", "List[str]")
    assert not match_exact("List[str]", "List[int]")
    assert match_exact("str", "str")


def test_match_parametric():
    assert match_parametric("List[str]", "List[int]")
    assert not match_parametric("List[str]", "Dict[str, int]")
    assert match_parametric("int", "int")
    assert match_parametric("Dict[str, List[int]]", "Dict[int, int]")


def test_exact_implies_parametric_random_pairs():
    rng = np.random.default_rng(0)
    bases = ["List", "Dict", "int", "str", "Optional", "Tuple"]
    args = ["int", "str", "bool", "bytes"]
    for _ in range(500):
        def draw():
            b = bases[rng.integers(len(bases))]
            if b in ("int", "str") or rng.random() < 0.3:
                return b
            return f"{b}[{args[rng.integers(len(args))]}]"
        a, b = draw(), draw()
        if match_exact(a, b):
            assert match_parametric(a, b)


def test_stratify_threshold():
    counts = {"int": 101, "str": 100, "bool": 0}
    assert stratify(counts, "int") == "common"
    assert stratify(counts, "str") == "rare"
    assert stratify(counts, "unseen") == "rare"


def test_evaluate_hand_computed_weighted_metrics():
    # truths [int, int, str], top-1 preds [int, str, str]
    pairs = [
        (pred_of("int"), "int"),
        (pred_of("str"), "int"),
        (pred_of("str"), "str"),
    ]
    report = evaluate(pairs, n=1, train_counts={})
    combined = report.match_rates["combined"]
    assert combined["exact"]["all"] == pytest.approx(100 * 2 / 3)
    weighted = report.weighted["combined"]
    assert weighted["precision"] == pytest.approx((2 * 1.0 + 1 * 0.5) / 3, abs=1e-9)
    assert weighted["recall"] == pytest.approx(2 / 3, abs=1e-9)


def test_weighted_metrics_match_sklearn():
    rng = np.random.default_rng(1)
    types = ["int", "str", "List[int]", "bool"]
    truths = [types[rng.integers(4)] for _ in range(60)]
    preds = [
        t if rng.random() < 0.6 else types[rng.integers(4)] for t in truths
    ]
    pairs = [(pred_of(p), t) for p, t in zip(preds, truths)]
    report = evaluate(pairs, n=1, train_counts={})
    skl_p, skl_r, skl_f, _ = precision_recall_fscore_support(
        truths, preds, average="weighted", zero_division=0
    )
    weighted = report.weighted["combined"]
    assert weighted["precision"] == pytest.approx(skl_p, abs=1e-12)
    assert weighted["recall"] == pytest.approx(skl_r, abs=1e-12)
    assert weighted["f1"] == pytest.approx(skl_f, abs=1e-12)


def test_perfect_predictions():
    pairs = [(pred_of(t), t) for t in ["int", "str", "List[int]"] * 3]
    report = evaluate(pairs, n=1, train_counts={"int": 500})
    for criterion in ("exact", "parametric"):
        assert report.match_rates["combined"][criterion]["all"] == 100.0
    assert report.weighted["combined"]["f1"] == pytest.approx(1.0)


def test_topn_monotone():
    pairs = [
        (pred_of("str", "int"), "int"),
        (pred_of("int", "str"), "int"),
        (pred_of("bool", "bytes", "int"), "int"),
    ]
    rates = [
        evaluate(pairs, n=n, train_counts={}).match_rates["combined"]["exact"]["all"]
        for n in (1, 2, 3, 10)
    ]
    assert rates == sorted(rates)


def test_weighted_recall_equals_top1_accuracy():
    rng = np.random.default_rng(2)
    types = ["a", "b", "c"]
    pairs = []
    for _ in range(40):
        truth = types[rng.integers(3)]
        guess = types[rng.integers(3)]
        pairs.append((pred_of(guess), truth))
    report = evaluate(pairs, n=1, train_counts={})
    acc = report.match_rates["combined"]["exact"]["all"] / 100
    assert report.weighted["combined"]["recall"] == pytest.approx(acc, abs=1e-12)


def test_per_task_and_strata_counts():
    train_counts = {"int": 500, "MyType": 3}
    pairs = [
        (pred_of("int", kind="argument"), "int"),
        (pred_of("MyType", kind="argument"), "MyType"),
        (pred_of("int", kind="return"), "int"),
    ]
    report = evaluate(pairs, n=1, train_counts=train_counts)
    assert report.counts["combined"]["all"] == 3
    assert report.counts["argument"]["all"] == 2
    assert report.counts["return"]["all"] == 1
    assert (
        report.counts["combined"]["common"] + report.counts["combined"]["rare"]
        == report.counts["combined"]["all"]
    )
    assert report.match_rates["return"]["exact"]["all"] == 100.0
    # exact <= parametric on every stratum of every task
    for task, rates in report.match_rates.items():
        for stratum in ("all", "common", "rare"):
            assert rates["exact"][stratum] <= rates["parametric"][stratum]


def test_evaluate_permutation_invariant():
    rng = np.random.default_rng(3)
    pairs = [
        (pred_of(["int", "str"][rng.integers(2)]), ["int", "str"][rng.integers(2)])
        for _ in range(20)
    ]
    a = evaluate(pairs, n=1, train_counts={}).to_dict()
    shuffled = list(pairs)
    rng.shuffle(shuffled)
    b = evaluate(shuffled, n=1, train_counts={}).to_dict()
    assert a == b


def test_evaluate_empty_raises():
    with pytest.raises(EmptyEvaluation):
        evaluate([], n=1, train_counts={})


def test_report_roundtrip_and_table(tmp_path):
    pairs = [(pred_of("int"), "int"), (pred_of("str"), "int")]
    report = evaluate(pairs, n=1, train_counts={"int": 200})
    report.save(tmp_path / "eval.json")
    loaded = type(report).load(tmp_path / "eval.json")
    assert loaded.to_dict() == report.to_dict()
    table = report.render_table()
    assert "Exact Match" in table and "combined" in table and "return" in table


def test_type_frequency_report():
    labels = ["str"] * 10
    rep = type_frequency_report(labels)
    assert rep["top10_share_percent"] == 100.0
    assert rep["histogram"][0] == ["str", 10]

    fixture = ["int"] * 6 + ["str"] * 5 + ["bool"] * 4 + [f"T{i}" for i in range(9)]
    rep = type_frequency_report(fixture)
    # hand count: 12 unique types; top-10 covers 6+5+4 plus 7 of the 9
    # singletons = 22 of 24 labels
    assert rep["total"] == 24
    assert rep["unique"] == 12
    assert rep["top10_share_percent"] == pytest.approx(100.0 * 22 / 24)
