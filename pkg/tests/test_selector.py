import math

import numpy as np
import pytest

from medcurate import selector
from medcurate.corpus import EmbeddingVector
from medcurate.errors import DuplicateId, MissingEmbedding, ShapeMismatch
from medcurate.preference import PreferencePair
from medcurate.selector import (
    FeatureSpec,
    HashingTextEncoder,
    RatingModel,
    TrainConfig,
    featurize,
    loss_and_grads,
    pair_loss,
    text_key,
    train,
)


def random_pair(rng, d=6, weight=1.0, source="model"):
    return PreferencePair(
        x_i=rng.normal(size=d), x_j=rng.normal(size=d),
        z=(1, 0) if rng.random() < 0.5 else (0, 1),
        weight=weight, source=source,
    )


# -- featurize -----------------------------------------------------------------


def test_featurize_shape_and_values():
    emb = {
        ("img1", "image"): EmbeddingVector("img1", "image", [1.0, 0.0]),
        (text_key("q", "a"), "text"): EmbeddingVector("t", "text", [0.0, 2.0]),
    }
    out = featurize("img1", "q", "a", emb)
    assert out.shape == (4,)
    assert np.allclose(out, [1.0, 0.0, 0.0, 1.0])


def test_featurize_missing_text():
    emb = {("img1", "image"): EmbeddingVector("img1", "image", [1.0, 0.0])}
    with pytest.raises(MissingEmbedding):
        featurize("img1", "q", "a", emb)


def test_feature_spec_d_in():
    spec = FeatureSpec(d_image=5, d_text=7)
    assert spec.d_in == 12


def test_hashing_encoder_deterministic_unit_norm():
    enc = HashingTextEncoder(32)
    v1 = enc.encode("left lower lobe consolidation")
    v2 = enc.encode("left lower lobe consolidation")
    assert np.array_equal(v1, v2)
    assert np.linalg.norm(v1) == pytest.approx(1.0)


# -- forward --------------------------------------------------------------------


def test_forward_zero_model():
    model = RatingModel(3, hidden_dims=[4], seed=0)
    for W in model.weights:
        W[:] = 0.0
    for b in model.biases:
        b[:] = 0.0
    assert model.forward(np.ones(3)) == 0.0


def test_forward_identity_like():
    model = RatingModel(3, hidden_dims=[], seed=0)
    model.weights[0][:] = np.array([[1.0, 0.0, 0.0]])
    model.biases[0][:] = 0.0
    assert model.forward(np.array([1.0, 0.0, 0.0])) == 1.0


def test_forward_deterministic():
    model = RatingModel(5, seed=3)
    x = np.random.default_rng(0).normal(size=5)
    assert model.forward(x) == model.forward(x)


def test_forward_shape_mismatch():
    model = RatingModel(5, seed=0)
    with pytest.raises(ShapeMismatch):
        model.forward(np.ones(4))


def test_model_json_round_trip():
    model = RatingModel(4, hidden_dims=[8], seed=1)
    text = model.to_json(feature_spec=FeatureSpec(d_image=2, d_text=2),
                         config=TrainConfig())
    clone = RatingModel.from_json(text)
    x = np.random.default_rng(2).normal(size=4)
    assert clone.forward(x) == model.forward(x)


# -- loss -----------------------------------------------------------------------


def zero_model(d=4):
    model = RatingModel(d, hidden_dims=[], seed=0)
    model.weights[0][:] = 0.0
    model.biases[0][:] = 0.0
    return model


def test_pair_loss_literal_ln2():
    pair = PreferencePair(x_i=np.ones(4), x_j=np.ones(4), z=(1, 0), weight=1.0)
    assert pair_loss(zero_model(), pair, "literal_eq1") == pytest.approx(math.log(2), rel=1e-12)


def test_pair_loss_bce_two_ln2():
    pair = PreferencePair(x_i=np.ones(4), x_j=np.ones(4), z=(1, 0), weight=1.0)
    assert pair_loss(zero_model(), pair, "bce") == pytest.approx(2 * math.log(2), rel=1e-12)


def test_pair_loss_weight_400():
    pair = PreferencePair(x_i=np.ones(4), x_j=np.ones(4), z=(1, 0), weight=400.0)
    assert pair_loss(zero_model(), pair, "literal_eq1") == pytest.approx(400 * math.log(2), rel=1e-12)


def test_pair_loss_weight_scaling_exact():
    rng = np.random.default_rng(0)
    model = RatingModel(6, seed=5)
    for _ in range(200):
        pair = random_pair(rng)
        base = pair_loss(model, pair, "bce", weight=1.0)
        for w in (2.0, 4.0, 1024.0):
            assert pair_loss(model, pair, "bce", weight=w) == w * base
        w = float(rng.uniform(0.1, 500))
        assert pair_loss(model, pair, "bce", weight=w) == pytest.approx(w * base, rel=1e-15)


def test_pair_loss_nonnegative_both_forms():
    rng = np.random.default_rng(1)
    model = RatingModel(6, seed=2)
    for _ in range(100):
        pair = random_pair(rng)
        assert pair_loss(model, pair, "literal_eq1") >= 0.0
        assert pair_loss(model, pair, "bce") >= 0.0


def test_bce_monotone_in_scores():
    # with z=(1,0): decreasing in f(x_i), increasing in f(x_j)
    losses_i = []
    losses_j = []
    for f in np.linspace(-3, 3, 13):
        p_i = selector._pair_loss_unweighted(f, 0.0, (1, 0), "bce")
        p_j = selector._pair_loss_unweighted(0.0, f, (1, 0), "bce")
        losses_i.append(p_i)
        losses_j.append(p_j)
    assert all(b < a for a, b in zip(losses_i, losses_i[1:]))
    assert all(b > a for a, b in zip(losses_j, losses_j[1:]))


def numeric_grads(model, pair, form, h=1e-5):
    gw = [np.zeros_like(W) for W in model.weights]
    gb = [np.zeros_like(b) for b in model.biases]
    params = [(model.weights, gw), (model.biases, gb)]
    for group, grads in params:
        for li, P in enumerate(group):
            it = np.nditer(P, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = P[idx]
                P[idx] = orig + h
                hi = pair_loss(model, pair, form)
                P[idx] = orig - h
                lo = pair_loss(model, pair, form)
                P[idx] = orig
                grads[li][idx] = (hi - lo) / (2 * h)
    return gw, gb


@pytest.mark.parametrize("form", ["literal_eq1", "bce"])
def test_gradients_match_finite_differences(form):
    rng = np.random.default_rng(42)
    for trial in range(20):
        model = RatingModel(4, hidden_dims=[5], seed=trial)
        pair = random_pair(rng, d=4, weight=float(rng.uniform(0.5, 3.0)))
        _, gw, gb = loss_and_grads(model, pair, form)
        nw, nb = numeric_grads(model, pair, form)
        for a, n in zip(gw + gb, nw + nb):
            scale = np.maximum(np.abs(n), 1e-3)
            assert np.max(np.abs(a - n) / scale) < 1e-4


# -- training --------------------------------------------------------------------


def separable_pairs(n, d, rng, shift=1.0, source="model"):
    pairs = []
    for _ in range(n):
        base = rng.normal(size=d)
        better = base.copy()
        better[0] += shift
        z = (1, 0) if rng.random() < 0.5 else (0, 1)
        if z == (1, 0):
            pairs.append(PreferencePair(x_i=better, x_j=base, z=z, source=source))
        else:
            pairs.append(PreferencePair(x_i=base, x_j=better, z=z, source=source))
    return pairs


def holdout_acc(model, pairs):
    correct = 0
    for p in pairs:
        f_i, f_j = model.forward(p.x_i), model.forward(p.x_j)
        preferred = f_i > f_j if p.z == (1, 0) else f_j > f_i
        correct += preferred
    return correct / len(pairs)


def test_train_separable_reaches_95_acc():
    rng = np.random.default_rng(0)
    pairs = separable_pairs(2000, 8, rng)
    holdout = separable_pairs(400, 8, rng)
    cfg = TrainConfig(epochs=6, learning_rate=1e-3, seed=0)
    model, report = train(pairs, cfg, d_in=8)
    assert holdout_acc(model, holdout) >= 0.95
    assert len(report.epoch_losses) == 6


def test_train_zero_learning_rate_freezes_parameters():
    rng = np.random.default_rng(1)
    pairs = separable_pairs(200, 4, rng)
    cfg = TrainConfig(epochs=3, learning_rate=0.0, seed=0)
    ref = RatingModel(4, seed=0)
    model, report = train(pairs, cfg, d_in=4)
    for W, W0 in zip(model.weights, ref.weights):
        assert np.array_equal(W, W0)
    assert report.epoch_losses[0] == pytest.approx(report.epoch_losses[-1], rel=1e-12)


def test_train_deterministic():
    rng = np.random.default_rng(2)
    pairs = separable_pairs(300, 5, rng)
    cfg = TrainConfig(epochs=2, seed=7)
    m1, _ = train(pairs, cfg, d_in=5)
    m2, _ = train(pairs, cfg, d_in=5)
    for a, b in zip(m1.weights + m1.biases, m2.weights + m2.biases):
        assert np.array_equal(a, b)


def test_mixture_balance_equal_contributions():
    rng = np.random.default_rng(3)
    human = separable_pairs(5, 6, rng, source="human")
    model_pairs = separable_pairs(2000, 6, rng, source="model")
    cfg = TrainConfig(epochs=1, w_human=400.0, seed=0)
    _, report = train(human + model_pairs, cfg, d_in=6)
    src = report.epoch_source_loss[0]
    share = src["human"] / (src["human"] + src["model"])
    assert 0.45 <= share <= 0.55


def test_batch_source_mixing_matches_global_ratio():
    rng = np.random.default_rng(4)
    human = separable_pairs(100, 4, rng, source="human")
    model_pairs = separable_pairs(300, 4, rng, source="model")
    pairs = human + model_pairs
    # seeded shuffles distribute sources with the global 1:3 ratio in expectation
    fractions = []
    for seed in range(50):
        order = np.random.default_rng(seed).permutation(len(pairs))
        batch = order[:64]
        fractions.append(np.mean([pairs[i].source == "human" for i in batch]))
    assert np.mean(fractions) == pytest.approx(0.25, abs=0.03)


def test_score_empty_and_duplicates():
    model = RatingModel(4, seed=0)
    assert selector.score(model, [], {}) == {}
    feats = lambda i, q, a: np.ones(4)
    with pytest.raises(DuplicateId):
        selector.score(model, [("s1", "i", "q", "a"), ("s1", "i", "q", "a")], {},
                       featurizer=feats)


def test_score_order_invariant():
    model = RatingModel(4, seed=1)
    rng = np.random.default_rng(5)
    feats = {f"s{i}": rng.normal(size=4) for i in range(10)}
    featurizer = lambda i, q, a: feats[i]
    samples = [(f"s{i}", f"s{i}", "q", "a") for i in range(10)]
    fwd = selector.score(model, samples, {}, featurizer=featurizer)
    rev = selector.score(model, list(reversed(samples)), {}, featurizer=featurizer)
    assert fwd == rev


def test_score_skips_missing_embedding_with_warning():
    model = RatingModel(4, seed=1)

    def featurizer(i, q, a):
        if i == "bad":
            raise MissingEmbedding(i, "image")
        return np.ones(4)

    with pytest.warns(UserWarning):
        out = selector.score(model, [("ok", "ok", "q", "a"), ("bad", "bad", "q", "a")],
                             {}, featurizer=featurizer)
    assert set(out) == {"ok"}
