"""Pipeline CLI: one binary orchestrating every stage via subcommands.

Every subcommand writes versioned JSON artifacts into out-dir/<stage>/ plus a
run manifest (input hashes, seed, config hash, tool version). With --mock all
remote backends are replaced by the deterministic offline mock, making full
reruns bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import corpus as corpus_mod
from . import diversity, evalharness, genclient, preference, ranking, selector
from .errors import MedcurateError

DEFAULT_CONFIG = {
    "paths": {
        "corpus": "corpus.ndjson",
        "embeddings": "embeddings.ndjson",
        "text_embeddings": None,
        "human_prefs": None,
        "templates": None,
        "out_dir": "out",
    },
    "clustering": {"k": 10, "seed": 0},
    "generation": {"demos_per_call": 10, "demo_pool_size": 50,
                   "backend": {"base_url": "", "api_key_env": "MEDCURATE_API_KEY"},
                   "temperature": 0.7},
    "selector": {"epochs": 6, "learning_rate": 1e-4, "batch_size": 64,
                 "w_human": 1.0, "loss_form": "bce", "seed": 0, "optimizer": "adam",
                 "hidden_dims": [256], "threshold": 7, "hash_text_dim": 64},
    "selection": {"percentile": 50, "reuse_clusters": False},
    "eval": {"judge_backend": {"base_url": ""}},
}


def _deep_update(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = value
    return out


def _apply_set(config: dict, dotted: str, raw: str):
    keys = dotted.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    try:
        node[keys[-1]] = json.loads(raw)
    except json.JSONDecodeError:
        node[keys[-1]] = raw


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


class Context:
    def __init__(self, config, mock, seed, out_dir):
        self.config = config
        self.mock = mock
        self.seed = seed if seed is not None else 0
        self.out_dir = Path(out_dir or config["paths"]["out_dir"])

    def stage_dir(self, stage: str) -> Path:
        d = self.out_dir / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _input_key(self, p) -> str:
        # stable across output directories: stage-relative path or bare name
        try:
            return str(Path(p).relative_to(self.out_dir))
        except ValueError:
            return Path(p).name

    def write_manifest(self, stage: str, inputs: list, outputs: list[Path]):
        manifest = {
            "stage": stage,
            "tool_version": __version__,
            "seed": self.seed,
            "mock": self.mock,
            "config_hash": _config_hash(self.config),
            "inputs": {self._input_key(p): _sha256_file(p)
                       for p in inputs if Path(p).exists()},
            "outputs": {p.name: _sha256_file(p) for p in outputs},
        }
        path = self.stage_dir(stage) / "manifest.json"
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
        return manifest

    def backend(self):
        if self.mock:
            return genclient.MockBackend(seed=self.seed)
        cfg = self.config["generation"]["backend"]
        return genclient.HttpBackend(genclient.BackendConfig(**cfg))

    def template(self, name: str) -> str:
        tdir = self.config["paths"].get("templates")
        if tdir:
            path = Path(tdir) / f"{name}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        return genclient.load_template(name)

    def load_corpus(self):
        return corpus_mod.load_corpus(self.config["paths"]["corpus"])

    def load_embeddings(self):
        emb = corpus_mod.load_embeddings(self.config["paths"]["embeddings"])
        text_path = self.config["paths"].get("text_embeddings")
        if text_path:
            emb.update(corpus_mod.load_embeddings(text_path))
        return emb

    def featurizer(self, embeddings):
        """(image_id, question, answer) -> vector. Under --mock, text features
        come from the deterministic hashing encoder instead of precomputed
        encoder embeddings."""
        if self.mock or not self.config["paths"].get("text_embeddings"):
            encoder = selector.HashingTextEncoder(self.config["selector"]["hash_text_dim"])

            def featurize(image_id, question, answer):
                img = embeddings.get((image_id, "image"))
                if img is None:
                    raise selector.MissingEmbedding(image_id, "image")
                iv = np.asarray(img.vector, dtype=float)
                norm = np.linalg.norm(iv)
                if norm > 0:
                    iv = iv / norm
                return np.concatenate([iv, encoder.encode(f"{question}\n{answer}")])

            return featurize
        return lambda i, q, a: selector.featurize(i, q, a, embeddings)

    def feature_dim(self, embeddings) -> int:
        d_image = len(next(v.vector for k, v in embeddings.items() if k[1] == "image"))
        if self.mock or not self.config["paths"].get("text_embeddings"):
            return d_image + self.config["selector"]["hash_text_dim"]
        d_text = len(next(v.vector for k, v in embeddings.items() if k[1] == "text"))
        return d_image + d_text


pass_ctx = click.make_pass_decorator(Context)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file; defaults merged underneath.")
@click.option("--mock", is_flag=True, help="Use the deterministic offline mock backend.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--set", "overrides", multiple=True, metavar="dotted.name=value",
              help="Override any config field by dotted name.")
@click.version_option(version=__version__)
@click.pass_context
def main(ctx, config_path, mock, seed, out, overrides):
    """Curation pipeline for biomedical visual instruction-following data."""
    config = DEFAULT_CONFIG
    if config_path:
        config = _deep_update(config, json.loads(Path(config_path).read_text()))
    for item in overrides:
        dotted, _, raw = item.partition("=")
        _apply_set(config, dotted, raw)
    if seed is not None:
        config = _deep_update(config, {"clustering": {"seed": seed},
                                       "selector": {"seed": seed}})
    ctx.obj = Context(config, mock, seed, out)


def _fail(exc):
    error = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(error), err=True)
    sys.exit(1)


@main.command()
@pass_ctx
def cluster(ctx):
    """Fit k-means over joint image/text embeddings of the corpus."""
    try:
        pairs = ctx.load_corpus()
        emb = ctx.load_embeddings()
        points = {p.id: diversity.joint_feature(p, emb) for p in pairs}
        model = diversity.kmeans_fit(points, k=ctx.config["clustering"]["k"],
                                     seed=ctx.config["clustering"]["seed"])
        out = ctx.stage_dir("cluster") / "model.json"
        out.write_text(model.to_json())
        ctx.write_manifest("cluster", [ctx.config["paths"]["corpus"],
                                       ctx.config["paths"]["embeddings"]], [out])
        click.echo(f"clustered {len(points)} points into k={model.k}, inertia={model.inertia:.4f}")
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command("sample-demos")
@click.option("--size", "m", type=int, default=None, help="Demo pool size M.")
@pass_ctx
def sample_demos(ctx, m):
    """Draw the diverse demonstration candidate pool from the clusters."""
    try:
        pairs = ctx.load_corpus()
        by_id = {p.id: p for p in pairs}
        model = diversity.ClusterModel.from_json(
            (ctx.out_dir / "cluster" / "model.json").read_text())
        m = m or ctx.config["generation"]["demo_pool_size"]
        cand = diversity.sample_demonstrations(model, pairs, M=m,
                                               seed=ctx.config["clustering"]["seed"])
        chosen = list(cand.sample_ids)
        # top up underrepresented domains so per-call demos stay satisfiable
        need = ctx.config["generation"]["demos_per_call"] // 5
        for domain in corpus_mod.DOMAINS:
            have = [i for i in chosen if by_id[i].domain == domain]
            extras = sorted(
                (p for p in pairs if p.domain == domain and p.id not in chosen),
                key=lambda p: (-diversity.complexity_score(p), p.id))
            chosen.extend(p.id for p in extras[: max(0, need - len(have))])
        pool = []
        for pid in chosen:
            p = by_id[pid]
            context = p.caption
            if p.inline_mentions:
                context += " " + " ".join(p.inline_mentions)
            pool.append({"id": p.id, "domain": p.domain, "image_ref": p.image_ref,
                         "context": context, "response": p.caption})
        out = ctx.stage_dir("demos") / "pool.json"
        out.write_text(json.dumps(pool, indent=1))
        ctx.write_manifest("demos", [ctx.out_dir / "cluster" / "model.json"], [out])
        click.echo(f"sampled {len(pool)} demonstration candidates")
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command()
@pass_ctx
def generate(ctx):
    """Generate multi-round instruction records for every corpus sample."""
    try:
        pairs = ctx.load_corpus()
        pool = json.loads((ctx.out_dir / "demos" / "pool.json").read_text())
        template = ctx.template("generation")
        backend = ctx.backend()
        gen_cfg = ctx.config["generation"]
        records = []
        tasks = []
        skipped = 0
        for i, pair in enumerate(pairs):
            demos = diversity.per_call_demos(pool, seed=ctx.seed + i,
                                             per_domain=gen_cfg["demos_per_call"] // 5)
            request = genclient.build_generation_prompt(
                pair, demos, template, temperature=gen_cfg["temperature"])
            output = genclient.parse_generation(genclient.call(request, backend))
            if not output.usable:
                skipped += 1
                continue
            turns = []
            for q, a in output.parsed[:6]:
                turns.append(corpus_mod.Turn("human", q))
                turns.append(corpus_mod.Turn("assistant", a))
            records.append(corpus_mod.InstructionRecord(
                id=pair.id, image=pair.image_ref, domain=pair.domain, conversations=turns))
            # two seeded candidate answers for the first instruction -> annotation task
            q0 = output.parsed[0][0]
            alt = genclient.ChatRequest(
                system="alternate candidate", messages=request.messages,
                temperature=gen_cfg["temperature"], model_id=request.model_id)
            alt_out = genclient.parse_generation(genclient.call(alt, backend))
            answer_b = alt_out.parsed[0][1] if alt_out.usable else output.parsed[0][1]
            tasks.append({"task_id": f"{pair.id}/q0", "image_ref": pair.image_ref,
                          "caption": pair.caption, "question": q0,
                          "answer_a": output.parsed[0][1], "answer_b": answer_b})
        out_records = ctx.stage_dir("generate") / "records.json"
        manifest = corpus_mod.write_dataset(
            records, out_records, name="generated",
            provenance={"seed": ctx.seed, "config_hash": _config_hash(ctx.config),
                        "generator": "mock" if ctx.mock else gen_cfg["backend"].get("base_url", "")})
        out_tasks = ctx.stage_dir("generate") / "tasks.json"
        out_tasks.write_text(json.dumps(tasks, indent=1))
        out_manifest = ctx.stage_dir("generate") / "dataset_manifest.json"
        out_manifest.write_text(json.dumps(vars(manifest), indent=1, sort_keys=True))
        ctx.write_manifest("generate", [ctx.config["paths"]["corpus"]],
                           [out_records, out_tasks, out_manifest])
        click.echo(f"generated {len(records)} records ({skipped} unusable outputs skipped)")
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command()
@pass_ctx
def rate(ctx):
    """Judge-rate every QA round of the generated records (0-10)."""
    try:
        records = corpus_mod.load_dataset(ctx.out_dir / "generate" / "records.json")
        template = ctx.template("rating")
        backend = ctx.backend()
        lines = []
        for rec in records:
            rounds = list(zip(rec.conversations[::2], rec.conversations[1::2]))
            for ri, (q, a) in enumerate(rounds):
                request = genclient.build_rating_prompt(
                    (rec.image, q.text, a.text), genclient.DEFAULT_CRITERIA, template)
                score = genclient.parse_rating(genclient.call(request, backend))
                lines.append(json.dumps({
                    "sample_id": f"{rec.id}#r{ri}", "image_id": rec.id,
                    "question": q.text, "answer": a.text, "score": score,
                }))
        out = ctx.stage_dir("rate") / "ratings.ndjson"
        out.write_text("\n".join(lines) + "\n")
        ctx.write_manifest("rate", [ctx.out_dir / "generate" / "records.json"], [out])
        click.echo(f"rated {len(lines)} QA rounds")
    except (MedcurateError, OSError) as exc:
        _fail(exc)


def _load_training_pairs(ctx, embeddings):
    featurize = ctx.featurizer(embeddings)
    ratings = preference.load_model_ratings(ctx.out_dir / "rate" / "ratings.ndjson")
    records = corpus_mod.load_dataset(ctx.out_dir / "generate" / "records.json")
    domain_of = {}
    for rec in records:
        for ri in range(len(rec.conversations) // 2):
            domain_of[f"{rec.id}#r{ri}"] = rec.domain
    pairs = preference.pairs_from_model(ratings, featurize, seed=ctx.seed,
                                        domain_of=domain_of)
    prefs_path = ctx.config["paths"].get("human_prefs")
    if prefs_path:
        prefs = preference.load_human_preferences(prefs_path)
        pairs += preference.pairs_from_human(prefs, featurize)
    return pairs, ratings


@main.command("train-selector")
@pass_ctx
def train_selector(ctx):
    """Train the preference-distilled rating model on mixed pairs."""
    try:
        embeddings = ctx.load_embeddings()
        pairs, _ = _load_training_pairs(ctx, embeddings)
        sel = ctx.config["selector"]
        cfg = selector.TrainConfig(
            epochs=sel["epochs"], learning_rate=sel["learning_rate"],
            batch_size=sel["batch_size"], w_human=sel["w_human"],
            loss_form=sel["loss_form"], seed=sel["seed"], optimizer=sel["optimizer"])
        model, report = selector.train(pairs, cfg, d_in=ctx.feature_dim(embeddings),
                                       hidden_dims=tuple(sel["hidden_dims"]))
        out_model = ctx.stage_dir("selector") / "model.json"
        out_model.write_text(model.to_json(config=cfg))
        out_report = ctx.stage_dir("selector") / "train_report.json"
        out_report.write_text(report.to_json())
        ctx.write_manifest("selector", [ctx.out_dir / "rate" / "ratings.ndjson"],
                           [out_model, out_report])
        click.echo(f"trained on {len(pairs)} pairs; "
                   f"final epoch loss {report.epoch_losses[-1]:.4f}")
    except (MedcurateError, OSError) as exc:
        _fail(exc)


def _scores_and_labels(ctx, embeddings):
    model = selector.RatingModel.from_json(
        (ctx.out_dir / "selector" / "model.json").read_text())
    ratings = preference.load_model_ratings(ctx.out_dir / "rate" / "ratings.ndjson")
    samples = [(r.sample_id, r.image_id, r.question, r.answer) for r in ratings]
    scores = selector.score(model, samples, embeddings,
                            featurizer=ctx.featurizer(embeddings))
    labels = preference.derive_binary_labels([], ratings,
                                             threshold=ctx.config["selector"]["threshold"])
    return scores, labels, ratings


@main.command("eval-selector")
@pass_ctx
def eval_selector(ctx):
    """Rank-based metrics (ACC/AUC/MR/MAP) of the trained selector."""
    try:
        embeddings = ctx.load_embeddings()
        scores, labels, _ = _scores_and_labels(ctx, embeddings)
        metrics = ranking.rank_metrics(scores, labels)
        out = ctx.stage_dir("eval-selector") / "rank_metrics.json"
        out.write_text(metrics.to_json())
        ctx.write_manifest("eval-selector", [ctx.out_dir / "selector" / "model.json"], [out])
        click.echo(metrics.to_json())
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command()
@click.option("--grid-step", type=int, default=1)
@click.option("--percentiles", default=None, help="Comma-separated override of critical percentiles.")
@pass_ctx
def curves(ctx, grid_step, percentiles):
    """Precision/F1@K percentile curves plus critical-percentile detection."""
    try:
        embeddings = ctx.load_embeddings()
        scores, labels, _ = _scores_and_labels(ctx, embeddings)
        grid = list(range(grid_step, 101, grid_step))
        curve = ranking.pk_f1_curve(scores, labels, grid)
        critical = ([float(x) for x in percentiles.split(",")]
                    if percentiles else ranking.detect_critical(curve))
        report = ranking.SelectionReport(curve=curve, critical_percentiles=critical)
        out_json = ctx.stage_dir("curves") / "curves.json"
        out_json.write_text(report.to_json())
        out_csv = ctx.stage_dir("curves") / "curves.csv"
        out_csv.write_text(ranking.curve_to_csv(curve))
        ctx.write_manifest("curves", [ctx.out_dir / "selector" / "model.json"],
                           [out_json, out_csv])
        click.echo(f"critical percentiles: {critical}")
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command()
@click.option("--percentile", "-p", type=float, default=None)
@click.option("--reuse-clusters", is_flag=True, default=None,
              help="Reuse the stage-1 cluster assignments instead of re-fitting.")
@pass_ctx
def select(ctx, percentile, reuse_clusters):
    """Cluster-balanced top-percentile selection over the generated records."""
    try:
        embeddings = ctx.load_embeddings()
        records = corpus_mod.load_dataset(ctx.out_dir / "generate" / "records.json")
        scores, _, _ = _scores_and_labels(ctx, embeddings)
        # per-record score: mean over its rated rounds
        rec_scores = {}
        for rec in records:
            round_scores = [scores[f"{rec.id}#r{ri}"]
                            for ri in range(len(rec.conversations) // 2)
                            if f"{rec.id}#r{ri}" in scores]
            if round_scores:
                rec_scores[rec.id] = float(np.mean(round_scores))
        reuse = reuse_clusters if reuse_clusters is not None \
            else ctx.config["selection"]["reuse_clusters"]
        if reuse:
            cmodel = diversity.ClusterModel.from_json(
                (ctx.out_dir / "cluster" / "model.json").read_text())
            assignments = {i: c for i, c in cmodel.assignments.items() if i in rec_scores}
        else:
            featurize = ctx.featurizer(embeddings)
            points = {}
            for rec in records:
                if rec.id not in rec_scores:
                    continue
                text = " ".join(t.text for t in rec.conversations)
                points[rec.id] = featurize(rec.id, text, "")
            k = min(ctx.config["clustering"]["k"], len(points))
            cmodel = diversity.kmeans_fit(points, k=k, seed=ctx.config["clustering"]["seed"])
            assignments = cmodel.assignments
        p = percentile if percentile is not None else ctx.config["selection"]["percentile"]
        report = ranking.select_balanced(rec_scores, assignments, p)
        out = ctx.stage_dir("select") / "selection.json"
        out.write_text(report.to_json())
        ctx.write_manifest("select", [ctx.out_dir / "generate" / "records.json"], [out])
        click.echo(f"selected {len(report.selected_ids)} of {len(rec_scores)} records at p={p}")
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command()
@pass_ctx
def emit(ctx):
    """Write the final selected dataset in the released JSON schema."""
    try:
        records = corpus_mod.load_dataset(ctx.out_dir / "generate" / "records.json")
        selection = json.loads((ctx.out_dir / "select" / "selection.json").read_text())
        chosen = set(selection["selected_ids"])
        selected = [r for r in records if r.id in chosen]
        out = ctx.stage_dir("emit") / "dataset.json"
        manifest = corpus_mod.write_dataset(
            selected, out, name="selected",
            provenance={"seed": ctx.seed, "config_hash": _config_hash(ctx.config),
                        "percentile": ctx.config["selection"]["percentile"]})
        out_manifest = ctx.stage_dir("emit") / "dataset_manifest.json"
        out_manifest.write_text(json.dumps(vars(manifest), indent=1, sort_keys=True))
        ctx.write_manifest("emit", [ctx.out_dir / "select" / "selection.json"],
                           [out, out_manifest])
        click.echo(f"emitted {len(selected)} records")
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command("annotate-serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8400)
@click.option("--data-dir", type=click.Path(), default="annotations")
@click.option("--import", "import_path", type=click.Path(exists=True), default=None,
              help="Task JSON file to import at startup.")
@click.option("--redundancy", type=int, default=1)
@click.option("--token", default=None)
@click.option("--static-dir", type=click.Path(), default=None,
              help="Directory with the annotator UI bundle.")
@pass_ctx
def annotate_serve(ctx, host, port, data_dir, import_path, redundancy, token, static_dir):
    """Serve the clinician annotation queue over HTTP."""
    import uvicorn

    from .annotsvc import AnnotationStore, create_app

    data = Path(data_dir)
    data.mkdir(parents=True, exist_ok=True)
    store = AnnotationStore(data / "annotations.ndjson", redundancy=redundancy,
                            seed=ctx.seed)
    if import_path:
        tasks = json.loads(Path(import_path).read_text())
        fresh = [t for t in tasks if t["task_id"] not in store.tasks]
        store.import_tasks(fresh)
        click.echo(f"imported {len(fresh)} tasks")
    app = create_app(store, token=token, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


@main.command("judge-winrate")
@click.option("--items", "items_path", type=click.Path(exists=True), required=True)
@click.option("--models", required=True, help="Comma-separated pair: A,B")
@pass_ctx
def judge_winrate(ctx, items_path, models):
    """Pairwise win-rate between two models' answers, judged head to head."""
    try:
        items = evalharness.load_eval_items(items_path)
        model_a, model_b = models.split(",")
        backend = ctx.backend()
        template = ctx.template("judge")
        result = evalharness.win_rate(items, model_a, model_b,
                                      lambda r: genclient.call(r, backend),
                                      template, seed=ctx.seed)
        result["verdicts"] = [vars(v) for v in result["verdicts"]]
        out = ctx.stage_dir("judge-winrate") / "winrate.json"
        out.write_text(json.dumps(result, indent=1))
        ctx.write_manifest("judge-winrate", [items_path], [out])
        click.echo(json.dumps({k: v for k, v in result.items() if k != "verdicts"}))
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command("score-chat")
@click.option("--items", "items_path", type=click.Path(exists=True), required=True)
@click.option("--model", required=True)
@click.option("--question-type", default=None)
@click.option("--domain", default=None)
@pass_ctx
def score_chat(ctx, items_path, model, question_type, domain):
    """Reference-guided relative scoring (1-10 judge scale, relative = 100*cand/ref)."""
    try:
        items = evalharness.load_eval_items(items_path)
        if question_type:
            items = [i for i in items if i.question_type == question_type]
        if domain:
            items = [i for i in items if i.domain == domain]
        backend = ctx.backend()
        template = ctx.template("chat_score")
        report = evalharness.score_open_chat(items, model,
                                             lambda r: genclient.call(r, backend),
                                             template)
        out = ctx.stage_dir("score-chat") / "chat_scores.json"
        out.write_text(report.to_json())
        ctx.write_manifest("score-chat", [items_path], [out])
        click.echo(json.dumps(report.aggregates))
    except (MedcurateError, OSError) as exc:
        _fail(exc)


@main.command("vqa-eval")
@click.option("--items", "items_path", type=click.Path(exists=True), required=True)
@click.option("--responses", "responses_path", type=click.Path(exists=True), required=True)
@click.option("--model", required=True)
@click.option("--domain", default=None)
@pass_ctx
def vqa_eval(ctx, items_path, responses_path, model, domain):
    """VQA metrics: closed-set accuracy and open-set token recall."""
    try:
        items = evalharness.load_eval_items(items_path)
        if domain:
            items = [i for i in items if i.domain == domain]
        responses = evalharness.load_responses(responses_path).get(model, {})
        result = {}
        if any(i.question_type == "closed" for i in items):
            result["closed_accuracy"] = evalharness.vqa_closed_accuracy(items, responses)
        if any(i.question_type == "open" for i in items):
            result["open_recall"] = evalharness.vqa_open_recall(items, responses)
        result["tokenization"] = "lowercase, strip punctuation, whitespace split"
        out = ctx.stage_dir("vqa-eval") / "vqa_metrics.json"
        out.write_text(json.dumps(result, indent=1))
        ctx.write_manifest("vqa-eval", [items_path, responses_path], [out])
        click.echo(json.dumps(result))
    except (MedcurateError, OSError) as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
