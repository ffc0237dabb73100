import math
import random

import pytest

import featforge


@pytest.fixture()
def product_csv(tmp_path):
    rng = random.Random(7)
    path = tmp_path / "product.csv"
    with open(path, "w") as f:
        f.write("x1,x2,target\n")
        for _ in range(120):
            a, b = rng.gauss(0, 1), rng.gauss(0, 1)
            y = a * b + 0.05 * rng.gauss(0, 1)
            f.write(f"{a!r},{b!r},{y!r}\n")
    return str(path)


def test_version():
    assert featforge.__version__.count(".") == 2


def test_parse_and_evaluate():
    parsed = featforge.parse_expressions("x1 x2 *, x1 square", ["x1", "x2"])
    assert [e["postfix"] for e in parsed] == ["x1 x2 *", "x1 square"]
    assert parsed[0]["infix"] == "(x1 * x2)"
    assert parsed[0]["depth"] == 1

    cols = {"x1": [1.0, 2.0, -3.0], "x2": [4.0, 0.5, 2.0]}
    out = featforge.evaluate_expression("x1 x2 *", cols)
    assert out == [4.0, 1.0, -6.0]

    with pytest.raises(ValueError):
        featforge.parse_expressions("x1 bogus &", ["x1"])


def test_score_csv_lifts_with_the_product(product_csv):
    base = featforge.score_csv(product_csv, "target", model="linear")
    lifted = featforge.score_csv(
        product_csv, "target", tokens="x1 x2 *", model="linear"
    )
    assert lifted["primary"] > base["primary"] + 0.3
    assert len(base["per_fold"]) == 5


def test_run_search_reports_and_traces(product_csv, tmp_path):
    trace = str(tmp_path / "trace.jsonl")
    result = featforge.run_search(
        product_csv,
        "target",
        iterations=2,
        steps=3,
        model="linear",
        seed=9,
        trace_out=trace,
    )
    assert result["records"] == 7
    assert result["best_score"] >= result["baseline_score"]
    prov = result["provenance"]
    assert prov["kept_originals"] + prov["dropped_originals"] == 2

    again = featforge.run_search(
        product_csv, "target", iterations=2, steps=3, model="linear", seed=9
    )
    for r in (result, again):
        r["stats"].pop("wall_seconds")
    result.pop("trace", None)
    assert result == again

    records = featforge.load_trace(trace)
    assert len(records) == 7
    assert records[0]["iteration"] == -1
    assert all("score" in r and "tokens" in r for r in records)


def test_train_router_and_reuse(product_csv, tmp_path):
    trace = str(tmp_path / "trace.jsonl")
    featforge.run_search(
        product_csv,
        "target",
        iterations=20,
        steps=6,
        model="linear",
        seed=3,
        trace_out=trace,
    )
    policy = str(tmp_path / "router.bin")
    report = featforge.train_router([trace], policy, epochs=3, seed=1)
    assert report["samples"] == 120
    assert len(report["epoch_objective"]) == 3
    assert all(math.isfinite(v) for v in report["epoch_objective"])

    routed = featforge.run_search(
        product_csv,
        "target",
        iterations=2,
        steps=3,
        model="linear",
        router="ppo",
        policy=policy,
        seed=4,
    )
    assert routed["records"] == 7


def test_llm_mode_needs_the_cli(product_csv):
    with pytest.raises(ValueError):
        featforge.run_search(product_csv, "target", router="llm")
