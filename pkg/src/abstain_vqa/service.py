"""Minimal HTTP service feeding the annotation UI.

Endpoints:
    GET  /tasks/next?worker=ID  -- lease the next open task (10 min default)
    POST /responses             -- submit a validated survey response
    GET  /progress              -- task/response counters
    GET  /consensus             -- majority-vote labels for settled tasks

Task leasing is the only shared mutable state; it is updated atomically per
task under one lock, and expired leases return to the pool. Submission is
idempotent per (task, worker).
"""

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware

from .annotation import (
    AnnotationTask,
    AnnotatorResponse,
    ConsensusValue,
    ResponseValidationError,
    consensus_answer,
    majority_vote,
)

__all__ = ["TaskStore", "create_app", "load_tasks_jsonl"]

DEFAULT_LEASE_SECONDS = 600.0


@dataclass
class TaskStore:
    """In-memory task pool with slot-based leasing and idempotent submission.

    A task needs ``annotations_per_task`` responses from distinct workers, so
    it can be leased to that many workers concurrently; leasing prevents
    over-assignment (more simultaneous workers than outstanding slots) and
    re-assignment to a worker who already responded.
    """

    tasks: list[AnnotationTask]
    annotations_per_task: int = 3
    lease_seconds: float = DEFAULT_LEASE_SECONDS
    clock: Callable[[], float] = time.monotonic
    responses_path: str | Path | None = None

    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _leases: dict[str, dict[str, float]] = field(default_factory=dict, repr=False)
    _responses: dict[tuple[str, str], AnnotatorResponse] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self):
        self._by_id = {task.task_id: task for task in self.tasks}
        if len(self._by_id) != len(self.tasks):
            raise ValueError("duplicate task ids")

    # -- internals requiring the lock ------------------------------------

    def _responses_for(self, task_id: str) -> list[AnnotatorResponse]:
        return [r for (tid, _), r in self._responses.items() if tid == task_id]

    def _is_complete(self, task_id: str) -> bool:
        return len(self._responses_for(task_id)) >= self.annotations_per_task

    def _active_workers(self, task_id: str, now: float) -> dict[str, float]:
        leases = self._leases.get(task_id, {})
        return {
            worker: expiry
            for worker, expiry in leases.items()
            if expiry > now and (task_id, worker) not in self._responses
        }

    # -- public API -------------------------------------------------------

    def next_task(self, worker_id: str) -> AnnotationTask | None:
        """Lease the next task this worker can label, renewing an existing
        unexpired lease; None when nothing remains."""
        if not worker_id:
            raise ValueError("worker id required")
        with self._lock:
            now = self.clock()
            for task in self.tasks:
                active = self._active_workers(task.task_id, now)
                if worker_id in active:
                    self._leases[task.task_id][worker_id] = now + self.lease_seconds
                    return task
            for task in self.tasks:
                if self._is_complete(task.task_id):
                    continue
                if (task.task_id, worker_id) in self._responses:
                    continue
                active = self._active_workers(task.task_id, now)
                outstanding = self.annotations_per_task - len(
                    self._responses_for(task.task_id)
                )
                if len(active) >= outstanding:
                    continue
                self._leases.setdefault(task.task_id, {})[worker_id] = (
                    now + self.lease_seconds
                )
                return task
            return None

    def submit(self, response: AnnotatorResponse) -> str:
        """Store a response; returns "stored" or "duplicate" (idempotent)."""
        response.validate()
        with self._lock:
            if response.task_id not in self._by_id:
                raise KeyError(f"unknown task {response.task_id!r}")
            task = self._by_id[response.task_id]
            if response.answerable and response.chosen_answer is not None:
                if response.chosen_answer not in task.answer_options:
                    raise ResponseValidationError(
                        "chosen answer is not one of the task's options"
                    )
            key = (response.task_id, response.worker_id)
            if key in self._responses:
                return "duplicate"
            self._responses[key] = response
            self._leases.get(response.task_id, {}).pop(response.worker_id, None)
        if self.responses_path is not None:
            with Path(self.responses_path).open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(response.to_dict(), ensure_ascii=False) + "\n")
        return "stored"

    def progress(self) -> dict:
        with self._lock:
            now = self.clock()
            completed = sum(1 for t in self.tasks if self._is_complete(t.task_id))
            leased = sum(
                1 for t in self.tasks if self._active_workers(t.task_id, now)
            )
            return {
                "total_tasks": len(self.tasks),
                "completed_tasks": completed,
                "leased_tasks": leased,
                "responses": len(self._responses),
            }

    def consensus(self) -> list[dict]:
        """Majority-vote outcomes for every task with enough responses."""
        with self._lock:
            grouped = {
                t.task_id: self._responses_for(t.task_id)
                for t in self.tasks
                if len(self._responses_for(t.task_id)) >= 3
            }
        out = []
        for task_id, responses in grouped.items():
            label = majority_vote(responses)
            entry = label.to_dict()
            if label.label is not ConsensusValue.NO_CONSENSUS:
                entry["consensus_answer"] = consensus_answer(responses, label.label)
            out.append(entry)
        return out

    def all_responses(self) -> list[AnnotatorResponse]:
        with self._lock:
            return list(self._responses.values())


def load_tasks_jsonl(path: str | Path) -> list[AnnotationTask]:
    tasks = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                tasks.append(AnnotationTask.from_dict(json.loads(line)))
    return tasks


def create_app(store: TaskStore) -> FastAPI:
    app = FastAPI(title="annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/tasks/next")
    def tasks_next(worker: str = Query(..., min_length=1)):
        task = store.next_task(worker)
        if task is None:
            return {"task": None}
        return {"task": task.to_dict(), "lease_seconds": store.lease_seconds}

    @app.post("/responses")
    def post_response(payload: dict):
        try:
            response = AnnotatorResponse.from_dict(payload)
            status = store.submit(response)
        except (ResponseValidationError, ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"status": status}

    @app.get("/progress")
    def progress():
        return store.progress()

    @app.get("/consensus")
    def consensus():
        return {"labels": store.consensus()}

    return app
