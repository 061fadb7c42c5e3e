import json
import math

import numpy as np
import pytest

from helpers import max_gradient_error, random_rnn_instance as _random_instance
from iaplan.core import RngStream
from iaplan.domains import build
from iaplan.influence import (InfluenceDataset, LearnedInfluence, RnnPredictor, TrainConfig, UniformInfluence,
                              collect_dataset, rnn_forward, sequence_loss, train,
                              uniform_predictor, zero_predictor)
from iaplan.toy import BanditSimulator

LN2 = math.log(2.0)


def test_zero_gru_halves_hidden_state():
    pred = zero_predictor("gru", 3, 2, (2, 2))
    z, heads = rnn_forward(pred, np.ones(2), np.array([1.0, 0.0, 1.0]))
    assert np.allclose(z, [0.5, 0.5])
    for probs in heads:
        assert np.allclose(probs, [0.5, 0.5])


@pytest.mark.parametrize("cell", ["gru", "elman"])
def test_zero_parameters_give_uniform_heads(cell):
    pred = zero_predictor(cell, 4, 3, (3, 2), head_kind="softmax")
    _, heads = rnn_forward(pred, np.zeros(3), np.arange(4.0))
    assert np.allclose(heads[0], [1 / 3] * 3) and np.allclose(heads[1], [0.5, 0.5])


def test_forward_rejects_width_mismatch():
    pred = zero_predictor("gru", 3, 2, (2,))
    with pytest.raises(ValueError):
        rnn_forward(pred, np.zeros(2), np.zeros(4))


@pytest.mark.parametrize("cell", ["gru", "elman"])
@pytest.mark.parametrize("head,spec", [("bernoulli", (2, 2)), ("softmax", (3, 2))])
def test_gradients_match_finite_differences(cell, head, spec):
    for seed in range(3):
        pred, inputs, targets = _random_instance(cell, head, spec, seed)
        assert max_gradient_error(pred, inputs, targets) < 1e-4


@pytest.mark.parametrize("cell", ["gru", "elman"])
@pytest.mark.parametrize("head,spec", [("bernoulli", (2, 2, 2)), ("softmax", (3, 2))])
def test_compiled_inference_matches_reference(cell, head, spec):
    pred, inputs, _ = _random_instance(cell, head, spec, seed=5, steps=6)
    fast = LearnedInfluence(pred, lambda a, x: x)
    z_fast = fast.initial_hidden()
    z_ref = np.zeros(pred.hidden_width)
    for t in range(inputs.shape[1]):
        z_fast, dist = fast.forward(z_fast, 0, inputs[0, t])
        z_ref, heads = rnn_forward(pred, z_ref, inputs[0, t])
        assert np.allclose(z_fast, z_ref, atol=1e-12)
        if head == "bernoulli":
            assert np.allclose(dist, [h[1] for h in heads], atol=1e-12)
        else:
            for got, ref in zip(dist, heads):
                assert np.allclose(got, ref, atol=1e-12)


def test_forward_is_deterministic():
    pred, inputs, _ = _random_instance("gru", "bernoulli", (2, 2), seed=1)
    a = rnn_forward(pred, np.zeros(3), inputs[0, 0])
    b = rnn_forward(pred, np.zeros(3), inputs[0, 0])
    assert np.array_equal(a[0], b[0]) and all(np.array_equal(x, y) for x, y in zip(a[1], b[1]))


def test_model_round_trip(tmp_path):
    pred, inputs, targets = _random_instance("elman", "softmax", (3, 2), seed=2)
    pred.meta["train_config"] = {"weight_decay": 1e-4}
    path = tmp_path / "model.json"
    pred.save(path)
    loaded = RnnPredictor.load(path)
    assert loaded.meta["train_config"]["weight_decay"] == 1e-4
    assert sequence_loss(loaded, inputs, targets) == sequence_loss(pred, inputs, targets)


def test_model_load_validates_shapes(tmp_path):
    pred, _, _ = _random_instance("gru", "bernoulli", (2, 2), seed=3)
    path = tmp_path / "model.json"
    pred.save(path)
    doc = json.loads(path.read_text())
    doc["params"]["W_r"]["shape"] = [1, 1]
    doc["params"]["W_r"]["data"] = [0.0]
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        RnnPredictor.load(path)


def test_dataset_round_trip(tmp_path):
    ds = collect_dataset(build("gac"), 5, RngStream(1))
    path = tmp_path / "data.jsonl"
    ds.save(path)
    header = json.loads(path.read_text().splitlines()[0])
    assert header["input_width"] == 3 and header["seq_len"] == 9 and header["source_spec"] == [2, 2]
    back = InfluenceDataset.load(path)
    assert np.array_equal(back.inputs, ds.inputs) and np.array_equal(back.targets, ds.targets)


def test_collect_shapes_and_determinism():
    domain = build("gac")
    ds = collect_dataset(domain, 1000, RngStream(4), horizon=10)
    assert ds.inputs.shape == (1000, 9, 3) and ds.targets.shape == (1000, 9, 2)
    again = collect_dataset(domain, 1000, RngStream(4), horizon=10)
    assert np.array_equal(ds.inputs, again.inputs) and np.array_equal(ds.targets, again.targets)
    train_set, val_set = ds.split()
    assert len(train_set) == 800 and len(val_set) == 200


def test_collect_gtc_dataset():
    ds = collect_dataset(build("gtc"), 3, RngStream(0))
    assert ds.inputs.shape == (3, 29, 27) and ds.targets.shape == (3, 29, 4)


def test_collect_rejects_simulators_without_sources():
    class NoSources:
        name = "bandit"
        global_sim = BanditSimulator()
        horizon = 3
        input_width = 1
        source_spec = (2,)

    with pytest.raises(TypeError):
        collect_dataset(NoSources(), 1, RngStream(0))


def test_empty_dataset_is_refused_by_training():
    ds = collect_dataset(build("gac"), 0, RngStream(0))
    assert len(ds) == 0
    with pytest.raises(ValueError):
        train(ds, TrainConfig(epochs=1))


def test_first_recorded_contest_is_fair():
    ds = collect_dataset(build("gac"), 10_000, RngStream(9), horizon=2)
    assert abs(ds.targets[:, 0, 0].mean() - 0.5) <= 0.02


def _synthetic(n, steps, rng, learnable):
    inputs = rng.integers(0, 2, size=(n, steps, 3)).astype(float)
    if learnable:
        targets = inputs[:, :, 2:3].astype(np.int64)
    else:
        targets = rng.integers(0, 2, size=(n, steps, 1))
    return InfluenceDataset(inputs, targets, (2,))


def test_unpredictable_targets_stay_at_ln2():
    ds = _synthetic(500, 6, np.random.default_rng(0), learnable=False)
    pred, curve = train(ds, TrainConfig(optimizer="adam", learning_rate=0.01, epochs=60, hidden_width=4))
    assert len(curve) == 60
    assert abs(pred.meta["val_ce"] - LN2) < 0.02


def test_learnable_targets_are_learned():
    ds = _synthetic(500, 6, np.random.default_rng(1), learnable=True)
    pred, curve = train(ds, TrainConfig(optimizer="adam", learning_rate=0.02, epochs=300, hidden_width=4))
    assert pred.meta["val_ce"] < 0.01
    # the training loss trends downward: compare moving averages
    train_ce = np.array(curve.train_ce)
    window = 50
    averages = np.convolve(train_ce, np.ones(window) / window, mode="valid")
    assert all(averages[i + window] <= averages[i] + 1e-3 for i in range(0, len(averages) - window, window))


def test_learning_curve_csv(tmp_path):
    ds = _synthetic(50, 4, np.random.default_rng(2), learnable=True)
    _, curve = train(ds, TrainConfig(epochs=3, hidden_width=2))
    path = tmp_path / "curve.csv"
    curve.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_ce,val_ce" and len(lines) == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts():
    ds = _synthetic(50, 4, np.random.default_rng(3), learnable=True)
    ds.inputs[0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        train(ds, TrainConfig(epochs=2, hidden_width=2))


def test_short_training_beats_uniform_on_gac():
    ds = collect_dataset(build("gac", {"n_agents": 5}), 1000, RngStream(3))
    pred, _ = train(ds, TrainConfig(optimizer="adam", epochs=150, weight_decay=1e-5))
    assert pred.meta["val_ce"] < LN2


def test_uniform_predictor_ignores_inputs():
    gac = uniform_predictor((2, 2))
    z = gac.initial_hidden()
    assert gac.forward(z, 0, 1) == gac.forward(z, 1, 0)
    assert gac.forward(z, 0, 1)[1] == ((0.5, 0.5), (0.5, 0.5))
    gtc = UniformInfluence((2, 2, 2, 2))
    rng = RngStream(3)
    draws = np.array([gtc.sample(gtc.forward((), 0, None)[1], rng) for _ in range(20_000)])
    assert np.all(np.abs(draws.mean(axis=0) - 0.5) < 0.02)


def test_saturated_head_is_deterministic():
    pred = zero_predictor("gru", 3, 2, (2, 2))
    pred.params["b_out"][:] = [60.0, -60.0]
    learned = LearnedInfluence(pred, lambda a, x: np.array([1.0, 0.0, float(x)]))
    rng = RngStream(0)
    z = learned.initial_hidden()
    for _ in range(200):
        z, dist = learned.forward(z, 0, 1)
        assert learned.sample(dist, rng) == (1, 0)


@pytest.mark.parametrize("head,spec", [("bernoulli", (2, 2)), ("softmax", (3, 2))])
def test_head_cross_entropy_averages_to_the_loss(head, spec):
    from iaplan.influence import head_cross_entropy

    pred, inputs, targets = _random_instance("gru", head, spec, seed=7)
    per_head = head_cross_entropy(pred, inputs, targets)
    assert per_head.shape == (len(spec),)
    assert per_head.mean() == pytest.approx(sequence_loss(pred, inputs, targets), rel=1e-12)
