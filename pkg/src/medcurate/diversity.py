"""K-means over joint embeddings and diversity-aware demonstration sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import DOMAINS, ImageTextPair
from .errors import InsufficientPool, KTooLarge, MissingEmbedding


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, d)
    assignments: dict[str, int]
    inertia: float
    seed: int
    inertia_history: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "seed": self.seed,
                "inertia": self.inertia,
                "inertia_history": self.inertia_history,
                "centroids": self.centroids.tolist(),
                "assignments": self.assignments,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        obj = json.loads(text)
        return cls(
            k=obj["k"],
            centroids=np.asarray(obj["centroids"], dtype=float),
            assignments=obj["assignments"],
            inertia=obj["inertia"],
            seed=obj["seed"],
            inertia_history=obj.get("inertia_history", []),
        )


@dataclass
class DemoCandidateSet:
    sample_ids: list[str]
    per_cluster_counts: dict[int, int]


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    first = rng.integers(n)
    centroids[0] = X[first]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a chosen centroid
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[i] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[i]) ** 2, axis=1))
    return centroids


def kmeans_fit(points: dict[str, np.ndarray], k: int, seed: int = 0,
               max_iters: int = 100, tol: float = 1e-6) -> ClusterModel:
    """Lloyd's algorithm with k-means++ init, deterministic given seed.

    Tracks inertia per iteration; stops when the decrease falls below tol.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ids = sorted(points)
    X = np.asarray([points[i] for i in ids], dtype=float)
    n_distinct = len(np.unique(X, axis=0))
    if k > n_distinct:
        raise KTooLarge(f"k={k} exceeds {n_distinct} distinct points")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(X, k, rng)
    history = []
    prev_inertia = math.inf
    labels = None
    for _ in range(max_iters):
        d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(len(X)), labels].sum())
        history.append(inertia)
        if prev_inertia - inertia < tol:
            break
        prev_inertia = inertia
        for c in range(k):
            mask = labels == c
            if mask.any():
                centroids[c] = X[mask].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(d2[np.arange(len(X)), labels]))
                centroids[c] = X[far]
    # final assignment against the final centroids
    d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(X)), labels].sum())
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignments={i: int(c) for i, c in zip(ids, labels)},
        inertia=inertia,
        seed=seed,
        inertia_history=history,
    )


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        return v
    return v / norm


def joint_feature(pair: ImageTextPair, emb: dict) -> np.ndarray:
    """Concatenate the L2-normalized image and text embeddings (dimension 2d)."""
    img = emb.get((pair.id, "image"))
    if img is None:
        raise MissingEmbedding(pair.id, "image")
    txt = emb.get((pair.id, "text"))
    if txt is None:
        raise MissingEmbedding(pair.id, "text")
    return np.concatenate(
        [_l2_normalize(np.asarray(img.vector, dtype=float)),
         _l2_normalize(np.asarray(txt.vector, dtype=float))]
    )


def complexity_score(pair: ImageTextPair) -> int:
    """Whitespace-token count of caption plus inline mentions."""
    n = len(pair.caption.split())
    for m in pair.inline_mentions:
        n += len(m.split())
    return n


def sample_demonstrations(model: ClusterModel, corpus: list[ImageTextPair],
                          M: int, seed: int = 0) -> DemoCandidateSet:
    """Draw M demonstration candidates, an equal share per cluster, restricted
    to each cluster's top complexity quartile; remainder goes to the largest
    clusters (ties broken by lowest cluster index)."""
    if M > len(corpus):
        raise ValueError(f"M={M} exceeds corpus size {len(corpus)}")
    by_id = {p.id: p for p in corpus}
    members: dict[int, list[str]] = {c: [] for c in range(model.k)}
    for pid, c in model.assignments.items():
        if pid in by_id:
            members[c].append(pid)

    # top quartile by complexity per cluster (at least one member kept)
    eligible: dict[int, list[str]] = {}
    for c, ids in members.items():
        ids = sorted(ids, key=lambda i: (-complexity_score(by_id[i]), i))
        keep = max(1, math.ceil(len(ids) / 4)) if ids else 0
        eligible[c] = ids[:keep]

    base = M // model.k
    quotas = {c: base for c in range(model.k)}
    remainder = M - base * model.k
    # largest clusters first, tie-break lowest index
    order = sorted(range(model.k), key=lambda c: (-len(members[c]), c))
    for c in order[:remainder]:
        quotas[c] += 1

    # redistribute shares of clusters that cannot fill their quota
    rng = np.random.default_rng(seed)
    chosen: dict[int, list[str]] = {}
    deficit = 0
    for c in range(model.k):
        pool = eligible[c]
        take = min(quotas[c], len(pool))
        deficit += quotas[c] - take
        idx = rng.permutation(len(pool))[:take]
        chosen[c] = [pool[i] for i in sorted(idx)]
    # unfilled shares move to the largest cluster first (tie-break lowest index)
    for widen in (False, True):
        for c in order:
            while deficit > 0:
                source = eligible[c] if not widen else members[c]
                pool = [i for i in source if i not in chosen[c]]
                if not pool:
                    break
                pick = pool[int(rng.integers(len(pool)))]
                chosen[c].append(pick)
                deficit -= 1
        if deficit == 0:
            break
    if deficit > 0:
        raise ValueError("not enough points to satisfy M")

    sample_ids = [i for c in range(model.k) for i in chosen[c]]
    return DemoCandidateSet(
        sample_ids=sample_ids,
        per_cluster_counts={c: len(chosen[c]) for c in range(model.k) if chosen[c]},
    )


def per_call_demos(pool: list[dict], seed: int = 0, per_domain: int = 2,
                   domains=DOMAINS) -> list[dict]:
    """Pick per_domain demonstrations for each domain, seeded, order shuffled.

    Pool entries are dicts with at least a "domain" key.
    """
    rng = np.random.default_rng(seed)
    by_domain: dict[str, list[dict]] = {d: [] for d in domains}
    for demo in pool:
        if demo["domain"] in by_domain:
            by_domain[demo["domain"]].append(demo)
    picked = []
    for d in domains:
        have = by_domain[d]
        if len(have) < per_domain:
            raise InsufficientPool(d, len(have), per_domain)
        idx = rng.permutation(len(have))[:per_domain]
        picked.extend(have[i] for i in idx)
    order = rng.permutation(len(picked))
    return [picked[i] for i in order]
