import json

import numpy as np
import pytest

from medcurate.corpus import DOMAINS

DOMAIN_WORDS = {
    "CXR": "chest radiograph with bilateral lung fields and costophrenic angles",
    "MRI": "magnetic resonance image showing T2 signal in deep white matter",
    "Histology": "hematoxylin eosin stained section with dense cellular infiltrate",
    "Gross": "gross pathology specimen with well demarcated lesion margins",
    "CT": "computed tomography slice with contrast enhancement of soft tissue",
}


@pytest.fixture
def synthetic_corpus_files(tmp_path):
    """100 image-text pairs (20 per domain) plus domain-clustered 4-d embeddings."""
    rng = np.random.default_rng(1234)
    corpus_lines = []
    emb_lines = []
    centers = {d: rng.normal(scale=5.0, size=4) for d in DOMAINS}
    for i in range(100):
        domain = DOMAINS[i % 5]
        pid = f"s{i:03d}"
        words = DOMAIN_WORDS[domain].split()
        caption = " ".join(words[: 3 + i % len(words)]) + f" case {i}"
        mentions = [f"finding {i}"] if i % 3 == 0 else []
        corpus_lines.append(json.dumps({
            "id": pid, "image_ref": f"images/{pid}.png", "caption": caption,
            "inline_mentions": mentions, "domain": domain,
        }))
        img = centers[domain] + rng.normal(scale=0.3, size=4)
        txt = centers[domain] + rng.normal(scale=0.3, size=4)
        emb_lines.append(json.dumps({"id": pid, "kind": "image", "vector": img.tolist()}))
        emb_lines.append(json.dumps({"id": pid, "kind": "text", "vector": txt.tolist()}))
    corpus_path = tmp_path / "corpus.ndjson"
    corpus_path.write_text("\n".join(corpus_lines) + "\n")
    emb_path = tmp_path / "embeddings.ndjson"
    emb_path.write_text("\n".join(emb_lines) + "\n")
    return corpus_path, emb_path


def pytest_runtest_logreport(report):
    """One PASS/FAIL line per acceptance criterion."""
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\nacceptance {name}: {outcome}", flush=True)
