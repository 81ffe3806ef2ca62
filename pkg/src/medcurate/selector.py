"""The distilled rating function: features, MLP head, pairwise objective, training, scoring.

The pairwise objective comes in two forms:

* ``literal_eq1``: L = -w * (z_i * log s(f(x_i)) + z_j * log s(f(x_j)))
* ``bce`` (training default): the full binary cross-entropy over both samples,
  L = -w * (z_i log s_i + (1-z_i) log(1-s_i) + z_j log s_j + (1-z_j) log(1-s_j))

where s is the sigmoid. The literal form gives no gradient to the
non-preferred sample and is satisfiable by scoring everything high, so bce is
the default for training; both are selectable and reported.

w multiplies the human-source pairs only (model-source weight is fixed at 1):
a 1:400 scarcity ratio of human to model pairs balanced by w=400 pins the
weight to the scarce resource.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DivergenceDetected,
    DuplicateId,
    MissingEmbedding,
    ShapeMismatch,
)
from .preference import PreferencePair

logger = logging.getLogger(__name__)

LOG_EPS = 1e-12


@dataclass
class FeatureSpec:
    mode: str = "concat_image_text"
    d_image: int = 0
    d_text: int = 0
    normalize: bool = True

    @property
    def d_in(self) -> int:
        return self.d_image + self.d_text


@dataclass
class TrainConfig:
    epochs: int = 6
    learning_rate: float = 1e-4
    batch_size: int = 64
    w_human: float = 1.0
    loss_form: str = "bce"  # "literal_eq1" | "bce"
    seed: int = 0
    optimizer: str = "adam"  # "sgd" | "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.w_human <= 0:
            raise ValueError("w_human must be > 0")
        if self.loss_form not in ("literal_eq1", "bce"):
            raise ValueError(f"unknown loss_form {self.loss_form!r}")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_source_loss: list[dict] = field(default_factory=list)  # {"human": sum, "model": sum}

    def to_json(self) -> str:
        return json.dumps(
            {"epoch_losses": self.epoch_losses, "epoch_source_loss": self.epoch_source_loss}
        )


class RatingModel:
    """Small rectifier MLP mapping a feature vector to a scalar pre-sigmoid score."""

    def __init__(self, d_in: int, hidden_dims=(256,), seed: int = 0):
        self.d_in = d_in
        self.hidden_dims = list(hidden_dims)
        self.seed = seed
        rng = np.random.default_rng(seed)
        dims = [d_in] + self.hidden_dims + [1]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    # -- forward / backward ------------------------------------------------

    def forward_batch(self, X: np.ndarray) -> tuple[np.ndarray, list]:
        """Returns (scores (n,), cache of layer inputs for backprop)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d_in:
            raise ShapeMismatch(f"expected input dim {self.d_in}, got {X.shape[1]}")
        cache = []
        a = X
        last = len(self.weights) - 1
        for li, (W, b) in enumerate(zip(self.weights, self.biases)):
            cache.append(a)
            z = a @ W.T + b
            a = z if li == last else np.maximum(z, 0.0)
        return a[:, 0], cache

    def forward(self, x) -> float:
        out, _ = self.forward_batch(np.asarray(x, dtype=float)[None, :])
        return float(out[0])

    def backward_batch(self, cache: list, grad_out: np.ndarray):
        """Backpropagate per-sample gradients wrt the scalar output.

        Returns (weight grads, bias grads) summed over the batch.
        """
        gw = [np.zeros_like(W) for W in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        delta = np.asarray(grad_out, dtype=float)[:, None]  # (n, 1)
        last = len(self.weights) - 1
        for li in range(last, -1, -1):
            a_in = cache[li]
            if li != last:
                # recompute the rectifier mask from the pre-activation
                z = a_in @ self.weights[li].T + self.biases[li]
                delta = delta * (z > 0)
            gw[li] = delta.T @ a_in
            gb[li] = delta.sum(axis=0)
            if li > 0:
                delta = delta @ self.weights[li]
        return gw, gb

    # -- (de)serialization --------------------------------------------------

    def to_json(self, feature_spec: FeatureSpec | None = None, config: TrainConfig | None = None) -> str:
        obj = {
            "d_in": self.d_in,
            "hidden_dims": self.hidden_dims,
            "seed": self.seed,
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        if feature_spec is not None:
            obj["feature_spec"] = vars(feature_spec)
        if config is not None:
            obj["config"] = vars(config)
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "RatingModel":
        obj = json.loads(text)
        model = cls(obj["d_in"], obj["hidden_dims"], seed=obj.get("seed", 0))
        for li, (W, flat) in enumerate(zip(model.weights, obj["weights"])):
            model.weights[li] = np.asarray(flat, dtype=float).reshape(W.shape)
        for li, b in enumerate(obj["biases"]):
            model.biases[li] = np.asarray(b, dtype=float)
        return model


# -- features ----------------------------------------------------------------


def text_key(question: str, answer: str) -> str:
    """Content hash keying precomputed text embeddings of a QA sample."""
    return hashlib.sha256(f"{question}\n{answer}".encode("utf-8")).hexdigest()


def _l2(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def featurize(image_id: str, question: str, answer: str, embeddings: dict,
              spec: FeatureSpec | None = None) -> np.ndarray:
    """L2-normalized image embedding concatenated with the L2-normalized text
    embedding of "question + newline + answer" (looked up by content hash)."""
    img = embeddings.get((image_id, "image"))
    if img is None:
        raise MissingEmbedding(image_id, "image")
    txt = embeddings.get((text_key(question, answer), "text"))
    if txt is None:
        raise MissingEmbedding(text_key(question, answer), "text")
    iv = np.asarray(img.vector, dtype=float)
    tv = np.asarray(txt.vector, dtype=float)
    if spec is None or spec.normalize:
        iv, tv = _l2(iv), _l2(tv)
    return np.concatenate([iv, tv])


class HashingTextEncoder:
    """Deterministic feature-hashing text encoder for fully offline runs.

    Tokens are hashed into d buckets with a signed count; the result is
    L2-normalized. Stands in for precomputed encoder embeddings under --mock.
    """

    def __init__(self, d: int = 64):
        self.d = d

    def encode(self, text: str) -> np.ndarray:
        v = np.zeros(self.d)
        for tok in text.lower().split():
            h = int.from_bytes(hashlib.sha256(tok.encode("utf-8")).digest()[:8], "big")
            v[h % self.d] += 1.0 if (h >> 63) & 1 == 0 else -1.0
        return _l2(v)


# -- loss ----------------------------------------------------------------------


def _sigmoid(f):
    return 1.0 / (1.0 + np.exp(-np.asarray(f, dtype=float)))


def _clamped_log(p):
    return np.log(np.clip(p, LOG_EPS, 1.0 - LOG_EPS))


def _pair_loss_unweighted(f_i: float, f_j: float, z: tuple[int, int], form: str) -> float:
    z_i, z_j = z
    p_i, p_j = _sigmoid(f_i), _sigmoid(f_j)
    if form == "literal_eq1":
        return float(-(z_i * _clamped_log(p_i) + z_j * _clamped_log(p_j)))
    if form == "bce":
        return float(
            -(
                z_i * _clamped_log(p_i)
                + (1 - z_i) * _clamped_log(1.0 - p_i)
                + z_j * _clamped_log(p_j)
                + (1 - z_j) * _clamped_log(1.0 - p_j)
            )
        )
    raise ValueError(f"unknown loss form {form!r}")


def pair_loss(model: RatingModel, pair: PreferencePair, form: str = "bce",
              weight: float | None = None) -> float:
    """Weighted pairwise loss; weight defaults to the pair's own weight.

    The weight multiplies the unit loss exactly, so scaling by powers of two
    is bit-exact.
    """
    w = pair.weight if weight is None else weight
    f_i = model.forward(pair.x_i)
    f_j = model.forward(pair.x_j)
    return w * _pair_loss_unweighted(f_i, f_j, pair.z, form)


def _loss_grads_wrt_scores(f: np.ndarray, z: np.ndarray, w: np.ndarray, form: str):
    """Per-sample loss and dL/df for a stacked score vector.

    f, z, w all length n (each pair contributes two rows: i then j).
    """
    p = _sigmoid(f)
    if form == "literal_eq1":
        loss = -w * z * _clamped_log(p)
        grad = -w * z * (1.0 - p)
    else:
        loss = -w * (z * _clamped_log(p) + (1.0 - z) * _clamped_log(1.0 - p))
        grad = w * (p - z)
    return loss, grad


def loss_and_grads(model: RatingModel, pair: PreferencePair, form: str = "bce"):
    """Loss plus analytic parameter gradients for one pair (test oracle hook)."""
    X = np.stack([np.asarray(pair.x_i, dtype=float), np.asarray(pair.x_j, dtype=float)])
    f, cache = model.forward_batch(X)
    z = np.asarray(pair.z, dtype=float)
    w = np.full(2, pair.weight)
    losses, grad_f = _loss_grads_wrt_scores(f, z, w, form)
    gw, gb = model.backward_batch(cache, grad_f)
    return float(losses.sum()), gw, gb


# -- training --------------------------------------------------------------------


class _Adam:
    def __init__(self, params, lr, b1, b2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def train(pairs: list[PreferencePair], cfg: TrainConfig, d_in: int,
          hidden_dims=(256,)) -> tuple[RatingModel, TrainReport]:
    """Minibatch training over the union of both preference sources.

    Each epoch is a seeded shuffle of all pairs, so batches mix sources in
    the global human:model proportion in expectation. Human-source pairs are
    weighted by cfg.w_human; model-source pairs by 1.
    """
    if not pairs:
        raise ValueError("no training pairs")
    model = RatingModel(d_in, hidden_dims, seed=cfg.seed)
    n = len(pairs)
    Xi = np.stack([np.asarray(p.x_i, dtype=float) for p in pairs])
    Xj = np.stack([np.asarray(p.x_j, dtype=float) for p in pairs])
    Z = np.asarray([p.z for p in pairs], dtype=float)  # (n, 2)
    W = np.asarray([cfg.w_human if p.source == "human" else 1.0 for p in pairs])
    is_human = np.asarray([p.source == "human" for p in pairs])

    params = model.weights + model.biases
    if cfg.optimizer == "adam":
        opt = _Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    elif cfg.optimizer == "sgd":
        opt = _SGD(cfg.learning_rate)
    else:
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")

    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        by_source = {"human": 0.0, "model": 0.0}
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            b = len(idx)
            X = np.concatenate([Xi[idx], Xj[idx]])  # (2b, d)
            z = np.concatenate([Z[idx, 0], Z[idx, 1]])
            w = np.concatenate([W[idx], W[idx]])
            f, cache = model.forward_batch(X)
            losses, grad_f = _loss_grads_wrt_scores(f, z, w, cfg.loss_form)
            pair_losses = losses[:b] + losses[b:]
            total += float(pair_losses.sum())
            by_source["human"] += float(pair_losses[is_human[idx]].sum())
            by_source["model"] += float(pair_losses[~is_human[idx]].sum())
            gw, gb = model.backward_batch(cache, grad_f / b)
            opt.step(params, gw + gb)
        mean_loss = total / n
        if not np.isfinite(mean_loss):
            raise DivergenceDetected(f"epoch {epoch}: mean loss {mean_loss}")
        report.epoch_losses.append(mean_loss)
        report.epoch_source_loss.append(by_source)
    return model, report


def score(model: RatingModel, samples, embeddings: dict,
          featurizer=None) -> dict[str, float]:
    """Batch forward over featurized samples, keyed by sample id.

    Samples are (sample_id, image_id, question, answer) tuples. Samples with
    missing embeddings are excluded with a warning, not fatal.
    """
    featurizer = featurizer or (lambda i, q, a: featurize(i, q, a, embeddings))
    ids, feats = [], []
    seen = set()
    for sample_id, image_id, question, answer in samples:
        if sample_id in seen:
            raise DuplicateId(sample_id)
        seen.add(sample_id)
        try:
            feats.append(featurizer(image_id, question, answer))
            ids.append(sample_id)
        except MissingEmbedding as exc:
            warnings.warn(f"skipping {sample_id}: {exc}")
            logger.warning("skipping %s: %s", sample_id, exc)
    if not ids:
        return {}
    # deterministic merge regardless of input order
    order = np.argsort(np.asarray(ids))
    X = np.stack([feats[i] for i in order])
    out, _ = model.forward_batch(X)
    return {ids[i]: float(s) for i, s in zip(order, out)}
