"""Main model and discriminator: shapes, heads, init, JSON round-trip."""
import numpy as np
import pytest

from flexssl import autodiff as ad
from flexssl.data import gen_two_moons
from flexssl.models import (Discriminator, TaskKind, build_discriminator,
                            build_main_model, forward_discriminator,
                            forward_main, load_model_json, save_model_json)


def test_parameter_count_two_hidden_layers():
    f = build_main_model(TaskKind.classification(2), 2, [32, 32], seed=0)
    assert f.n_params() == 2 * 32 + 32 + 32 * 32 + 32 + 32 * 2 + 2


def test_same_seed_same_parameters():
    a = build_main_model(TaskKind.classification(3), 4, [16], seed=5)
    b = build_main_model(TaskKind.classification(3), 4, [16], seed=5)
    for name, t in a.params.items():
        assert np.array_equal(t.values, b.params[name].values)


def test_empty_hidden_gives_linear_model():
    f = build_main_model(TaskKind.regression(1), 3, [], seed=0)
    assert f.n_params() == 3 * 1 + 1


def test_negative_width_rejected():
    with pytest.raises(ValueError, match="positive"):
        build_main_model(TaskKind.classification(2), 2, [32, -1], seed=0)


def test_classification_rows_sum_to_one():
    f = build_main_model(TaskKind.classification(4), 3, [8], seed=1)
    out = forward_main(f, np.random.default_rng(0).normal(size=(10, 3)))
    assert np.allclose(out.values.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(out.values > 0.0)


def test_regression_head_has_no_softmax():
    f = build_main_model(TaskKind.regression(5), 3, [8], seed=1)
    out = forward_main(f, np.random.default_rng(0).normal(size=(10, 3)))
    assert not np.allclose(out.values.sum(axis=1), 1.0, atol=1e-6)


def test_forward_empty_batch():
    f = build_main_model(TaskKind.classification(2), 2, [4], seed=0)
    out = forward_main(f, np.zeros((0, 2)))
    assert out.shape == (0, 2)


def test_forward_rejects_wrong_input_dim():
    f = build_main_model(TaskKind.classification(2), 2, [4], seed=0)
    with pytest.raises(ValueError, match="shape"):
        forward_main(f, np.zeros((3, 5)))


def test_untrained_model_scores_near_chance_over_seeds():
    ds = gen_two_moons(500, 0.2, seed=0)
    accs = []
    for seed in range(20):
        f = build_main_model(TaskKind.classification(2), 2, [32, 32], seed=seed)
        preds = forward_main(f, ds.x).values.argmax(axis=1)
        accs.append(np.mean(preds == ds.y))
    assert abs(np.mean(accs) - 0.5) < 0.1


def test_discriminator_outputs_in_open_interval():
    d = build_discriminator(2, 2, emb_width=8, seed=0)
    rng = np.random.default_rng(1)
    p = forward_discriminator(d, rng.normal(size=(20, 2)),
                              rng.uniform(size=(20, 2)), rng.uniform(size=(20, 1)))
    assert np.all(p.values > 0.0)
    assert np.all(p.values < 1.0)


def test_discriminator_duplicate_rows_give_duplicate_outputs():
    d = build_discriminator(3, 2, emb_width=8, seed=0)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 3))
    y = rng.uniform(size=(4, 2))
    g = rng.uniform(size=(4, 1))
    stacked = forward_discriminator(d, np.vstack([x, x[:1]]),
                                    np.vstack([y, y[:1]]), np.vstack([g, g[:1]]))
    assert stacked.values[4, 0] == stacked.values[0, 0]


def test_discriminator_per_row_purity_under_permutation():
    d = build_discriminator(2, 2, emb_width=8, seed=3)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 2))
    y = rng.uniform(size=(6, 2))
    g = rng.uniform(size=(6, 1))
    base = forward_discriminator(d, x, y, g).values
    perm = rng.permutation(6)
    shuffled = forward_discriminator(d, x[perm], y[perm], g[perm]).values
    assert np.array_equal(shuffled, base[perm])


def test_discriminator_row_count_mismatch_rejected():
    d = build_discriminator(2, 2, emb_width=4, seed=0)
    with pytest.raises(ValueError, match="shape"):
        forward_discriminator(d, np.zeros((3, 2)), np.zeros((4, 2)), np.zeros((3, 1)))


def test_discriminator_width_mismatch_rejected_at_construction():
    store = ad.ParamStore()
    store.add("xw", np.zeros((2, 8)))
    store.add("xb", np.zeros(8))
    store.add("yw", np.zeros((2, 4)))
    store.add("yb", np.zeros(4))
    store.add("fw", np.zeros((9, 1)))
    store.add("fb", np.zeros(1))
    with pytest.raises(ValueError, match="width"):
        Discriminator(2, 2, 8, store)


def test_discriminator_inputs_are_constants():
    d = build_discriminator(2, 2, emb_width=4, seed=0)
    f = build_main_model(TaskKind.classification(2), 2, [4], seed=0)
    x = np.random.default_rng(0).normal(size=(5, 2))
    y_hat = forward_main(f, x)
    p = forward_discriminator(d, x, y_hat, np.ones((5, 1)))
    loss = p.mean()
    ad.backward(loss)
    assert all(t.grad is None for t in f.params.tensors())
    assert any(t.grad is not None for t in d.params.tensors())


def test_main_model_json_round_trip_exact(tmp_path):
    f = build_main_model(TaskKind.classification(3), 4, [8, 8], seed=2,
                         input_dropout=0.1)
    path = tmp_path / "f.json"
    save_model_json(f, path)
    g = load_model_json(path)
    assert g.task == f.task
    assert g.hidden == f.hidden
    assert g.input_dropout == f.input_dropout
    for name, t in f.params.items():
        assert np.array_equal(g.params[name].values, t.values)
    x = np.random.default_rng(0).normal(size=(6, 4))
    assert np.array_equal(forward_main(f, x).values, forward_main(g, x).values)


def test_discriminator_json_round_trip_exact(tmp_path):
    d = build_discriminator(3, 2, emb_width=8, seed=2)
    path = tmp_path / "d.json"
    save_model_json(d, path)
    e = load_model_json(path)
    assert (e.input_dim, e.out_dim, e.emb_width) == (3, 2, 8)
    for name, t in d.params.items():
        assert np.array_equal(e.params[name].values, t.values)
