"""HTTP service for the clinician annotation queue.

Persistence is an append-only NDJSON event log; replaying the log
reconstructs the task table exactly (leases are transient and self-heal by
expiry). Candidate answer order is shuffled per task at import, with the
permutation recorded, and inverted at submission so stored preferences are
always in canonical A/B order.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.responses import PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles

from .preference import Choice, HumanPreference, dump_human_preference

DEFAULT_LEASE_SECONDS = 600


@dataclass
class AnnotationTask:
    task_id: str
    image_ref: str
    caption: str
    question: str
    answer_a: str
    answer_b: str
    swapped: bool
    created_at: float
    status: str = "pending"  # pending | assigned | done
    assigned_to: str | None = None
    lease_expires: float = 0.0
    annotations: list[dict] = field(default_factory=list)


def _invert_choice(choice: str, swapped: bool) -> str:
    if not swapped:
        return choice
    return {"First": "Second", "Second": "First"}.get(choice, choice)


class AnnotationStore:
    """Task table plus append-only log; all mutations serialized by one lock."""

    def __init__(self, log_path, lease_seconds: int = DEFAULT_LEASE_SECONDS,
                 redundancy: int = 1, seed: int | None = None, clock=time.time):
        self.log_path = log_path
        self.lease_seconds = lease_seconds
        self.redundancy = redundancy
        self.clock = clock
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self.tasks: dict[str, AnnotationTask] = {}
        self.order: list[str] = []
        self.preferences: list[HumanPreference] = []
        self._replay()

    # -- log ------------------------------------------------------------------

    def _append(self, event: dict):
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")

    def _replay(self):
        try:
            fh = open(self.log_path, encoding="utf-8")
        except FileNotFoundError:
            return
        with fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["event"] == "import":
                    t = event["task"]
                    task = AnnotationTask(**t)
                    self.tasks[task.task_id] = task
                    self.order.append(task.task_id)
                elif event["event"] == "annotate":
                    self._apply_annotation(
                        event["task_id"], event["choice"], event["annotator"],
                        event["timestamp"], record=True,
                    )

    # -- operations -------------------------------------------------------------

    def import_tasks(self, items: list[dict]) -> int:
        with self._lock:
            cleaned = []
            for item in items:
                for key in ("task_id", "image_ref", "caption", "question",
                            "answer_a", "answer_b"):
                    if not isinstance(item.get(key), str):
                        raise ValueError(f"missing or invalid field {key!r}")
                if item["task_id"] in self.tasks or any(
                    c.task_id == item["task_id"] for c in cleaned
                ):
                    raise KeyError(item["task_id"])
                cleaned.append(
                    AnnotationTask(
                        task_id=item["task_id"],
                        image_ref=item["image_ref"],
                        caption=item["caption"],
                        question=item["question"],
                        answer_a=item["answer_a"],
                        answer_b=item["answer_b"],
                        swapped=bool(self._rng.getrandbits(1)),
                        created_at=self.clock(),
                    )
                )
            for task in cleaned:
                self.tasks[task.task_id] = task
                self.order.append(task.task_id)
                self._append({"event": "import", "task": {
                    "task_id": task.task_id,
                    "image_ref": task.image_ref,
                    "caption": task.caption,
                    "question": task.question,
                    "answer_a": task.answer_a,
                    "answer_b": task.answer_b,
                    "swapped": task.swapped,
                    "created_at": task.created_at,
                }})
            return len(cleaned)

    def next_task(self, annotator: str) -> AnnotationTask | None:
        with self._lock:
            now = self.clock()
            for task_id in self.order:
                task = self.tasks[task_id]
                if task.status == "assigned" and task.lease_expires < now:
                    task.status = "pending"
                    task.assigned_to = None
                if task.status == "pending":
                    task.status = "assigned"
                    task.assigned_to = annotator
                    task.lease_expires = now + self.lease_seconds
                    return task
            return None

    def _apply_annotation(self, task_id: str, canonical_choice: str,
                          annotator: str, timestamp: int, record: bool):
        task = self.tasks[task_id]
        task.annotations.append(
            {"choice": canonical_choice, "annotator": annotator, "timestamp": timestamp}
        )
        if len(task.annotations) >= self.redundancy:
            task.status = "done"
            task.assigned_to = None
        else:
            task.status = "pending"
            task.assigned_to = None
        if record:
            self.preferences.append(
                HumanPreference(
                    task_id=task_id,
                    image_id=task.image_ref,
                    question=task.question,
                    answer_a=task.answer_a,
                    answer_b=task.answer_b,
                    choice=Choice(canonical_choice),
                    annotator=annotator,
                    timestamp=timestamp,
                )
            )

    def annotate(self, task_id: str, choice: str, annotator: str):
        """Returns True on success. Raises KeyError (unknown), PermissionError
        (lease conflict), ValueError (bad choice). Idempotent on identical repeat."""
        if choice not in ("First", "Second", "Both", "Neither"):
            raise ValueError(f"invalid choice {choice!r}")
        with self._lock:
            task = self.tasks.get(task_id)
            if task is None:
                raise KeyError(task_id)
            canonical = _invert_choice(choice, task.swapped)
            if task.status == "done":
                if any(
                    a["choice"] == canonical and a["annotator"] == annotator
                    for a in task.annotations
                ):
                    return True  # idempotent repeat
                raise PermissionError("task already done")
            if task.status != "assigned" or task.assigned_to != annotator:
                raise PermissionError("task not leased to this annotator")
            timestamp = int(self.clock())
            self._apply_annotation(task_id, canonical, annotator, timestamp, record=True)
            self._append({
                "event": "annotate",
                "task_id": task_id,
                "choice": canonical,
                "annotator": annotator,
                "timestamp": timestamp,
            })
            return True

    def export_ndjson(self) -> str:
        with self._lock:
            return "".join(dump_human_preference(p) + "\n" for p in self.preferences)

    def progress(self) -> dict:
        with self._lock:
            counts = {"pending": 0, "assigned": 0, "done": 0}
            now = self.clock()
            per_annotator: dict[str, int] = {}
            for task in self.tasks.values():
                status = task.status
                if status == "assigned" and task.lease_expires < now:
                    status = "pending"
                counts[status] += 1
                for a in task.annotations:
                    per_annotator[a["annotator"]] = per_annotator.get(a["annotator"], 0) + 1
            counts["per_annotator"] = per_annotator
            counts["total"] = len(self.tasks)
            return counts


def task_view(task: AnnotationTask, progress: dict) -> dict:
    """Wire view: answers in presented (shuffled) order, shuffle metadata hidden."""
    a, b = task.answer_a, task.answer_b
    if task.swapped:
        a, b = b, a
    return {
        "task_id": task.task_id,
        "image_ref": task.image_ref,
        "caption": task.caption,
        "question": task.question,
        "answer_a": a,
        "answer_b": b,
        "progress": progress,
    }


def create_app(store: AnnotationStore, token: str | None = None,
               static_dir=None) -> FastAPI:
    app = FastAPI(title="medcurate annotation service")

    def check_token(provided):
        if token is not None and provided != token:
            raise HTTPException(status_code=401, detail="bad token")

    @app.post("/tasks/import")
    async def import_tasks(request: Request,
                           x_annotator_token: str | None = Header(default=None)):
        check_token(x_annotator_token)
        items = await request.json()
        try:
            n = store.import_tasks(items)
        except KeyError as exc:
            raise HTTPException(status_code=409, detail=f"duplicate task_id {exc}")
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"imported": n}

    @app.get("/tasks/next")
    def next_task(annotator: str,
                  x_annotator_token: str | None = Header(default=None)):
        check_token(x_annotator_token)
        task = store.next_task(annotator)
        if task is None:
            return Response(status_code=204)
        return task_view(task, store.progress())

    @app.post("/tasks/{task_id}/annotation")
    async def annotate(task_id: str, request: Request,
                       x_annotator_token: str | None = Header(default=None)):
        check_token(x_annotator_token)
        body = await request.json()
        try:
            store.annotate(task_id, body.get("choice"), body.get("annotator", ""))
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown task")
        except PermissionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True}

    @app.get("/export")
    def export(x_annotator_token: str | None = Header(default=None)):
        check_token(x_annotator_token)
        return PlainTextResponse(store.export_ndjson(), media_type="application/x-ndjson")

    @app.get("/progress")
    def progress(x_annotator_token: str | None = Header(default=None)):
        check_token(x_annotator_token)
        return store.progress()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
