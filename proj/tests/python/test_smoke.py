import json
import math
import random

import pytest

import perfest


def make_record(steps, scores=(0.5, 0.25)):
    return {
        "service_id": "svc",
        "task_id": "t",
        "context_id": "c",
        "sample_id": "x1",
        "input_text": "q",
        "generated_text": "a b",
        "output_steps": [
            {"token": f"w{i}", "top_probs": [[f"c{j}", p] for j, p in enumerate(probs)]}
            for i, probs in enumerate(steps)
        ],
        "input_scores": list(scores),
    }


def test_features_match_hand_values():
    rec = make_record([[0.6, 0.3, 0.1], [0.9, 0.05]])
    assert perfest.nll(rec) == pytest.approx(-math.log(0.6) - math.log(0.9), rel=1e-12)
    assert perfest.gap(rec) == pytest.approx(0.3 + 0.85, rel=1e-12)
    assert perfest.ppl(rec) == pytest.approx(math.exp(-(math.log(0.5) + math.log(0.25)) / 2), rel=1e-12)
    assert perfest.ppl(rec, "exact-sum") == pytest.approx(8.0, rel=1e-12)
    h = -sum(p * math.log(p) for p in (0.6, 0.3, 0.1))
    assert perfest.max_ent(rec) == pytest.approx(h, rel=1e-12)
    assert set(perfest.features(rec)) == {"NLL", "PPL", "GAP", "MAXENT"}


def test_invalid_record_raises_domain_error():
    rec = make_record([[0.5]])
    del rec["output_steps"]
    with pytest.raises(perfest.PerfestError):
        perfest.nll(rec)
    with pytest.raises(ValueError):
        perfest.ppl(make_record([[0.5]]), "bogus")


def test_interpolation_is_sorted_and_bounded():
    rng = random.Random(3)
    for _ in range(50):
        values = [rng.gauss(0, 1) for _ in range(rng.randint(1, 40))]
        d = rng.randint(1, 60)
        out = perfest.interpolate_profile(values, d)
        assert len(out) == d
        assert out == sorted(out)
        assert min(values) <= out[0] and out[-1] <= max(values)
    assert perfest.interpolate_profile([3.0, 1.0, 2.0], 3) == [1.0, 2.0, 3.0]


def test_feature_selection_prefers_informative_pair():
    rng = random.Random(7)
    a, b = 0.7, math.sqrt(1 - 0.49)
    table = {"NLL": [], "PPL": [], "GAP": [], "MAXENT": []}
    perf = []
    for _ in range(800):
        p, u, e = rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1)
        perf.append(p)
        table["NLL"].append(-(a * p + b * u))
        table["PPL"].append(-(a * p - b * u))
        table["GAP"].append(0.3 * p + e)
        table["MAXENT"].append(0.3 * p + e + 0.1 * rng.gauss(0, 1))
    sel = perfest.select_features(table, perf)
    assert sel["best"] == ["NLL", "PPL"]
    assert len(sel["ranked"]) == 15


def test_metamodel_round_trip(tmp_path):
    rng = random.Random(11)
    profiles = [[rng.random() for _ in range(6)] for _ in range(40)]
    targets = [sum(p) / 6 for p in profiles]
    model = perfest.MetaModel.train("RANDOM_FOREST", profiles, targets, seed=5, params={"n_trees": 20},
                                    kinds=["NLL", "PPL"])
    assert model.kind == "RANDOM_FOREST" or model.label == "RandomForest"
    assert model.dims == 3
    preds = model.predict_many(profiles)
    assert all(0.0 <= p <= 1.0 for p in preds)
    path = tmp_path / "m.json"
    model.save(path)
    again = perfest.MetaModel.load(path)
    assert again.predict_many(profiles) == preds
    assert json.loads(model.to_json())["format"] == json.loads(again.to_json())["format"]
    knn = perfest.MetaModel.train("KNN", profiles, targets, params={"k": 1})
    assert knn.predict(profiles[4]) == pytest.approx(targets[4], abs=1e-12)


def test_cli_pipeline(tmp_path):
    store = str(tmp_path / "store")
    rc, _, err = perfest.run_cli(["--seed", "3", "synth", "--out", store, "--services", "2", "--tasks", "3",
                                  "--contexts", "2", "--samples", "40"])
    assert rc == 0, err
    model = str(tmp_path / "model.json")
    rc, _, err = perfest.run_cli(["--seed", "3", "train", "--store", store, "--out", model,
                                  "--unlabeled-n", "40", "--param", "n_trees=10"])
    assert rc == 0, err
    rc, out, err = perfest.run_cli(["estimate", "--store", store, "--model", model, "--unlabeled-n", "40"])
    assert rc == 0, err
    assert out
    assert perfest.run_cli(["no-such-command"])[0] == 2
    assert perfest.run_cli(["extract", "--store", str(tmp_path / "missing"), "--out", model])[0] == 1
