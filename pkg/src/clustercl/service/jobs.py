"""In-memory job registry with a worker pool for background execution."""

from __future__ import annotations

import threading
import traceback
import uuid
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from typing import Callable

from .schemas import JobInfo


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class JobStore:
    def __init__(self, max_workers: int = 2):
        self._jobs: dict[str, JobInfo] = {}
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=max_workers)

    def submit(self, kind: str, fn: Callable[[], dict], wait: bool) -> JobInfo:
        """Run ``fn`` now (wait=True) or on the worker pool (wait=False)."""
        job = JobInfo(id=uuid.uuid4().hex[:12], kind=kind, status="queued", created_at=_now())
        with self._lock:
            self._jobs[job.id] = job
        if wait:
            self._run(job.id, fn)
        else:
            self._executor.submit(self._run, job.id, fn)
        return self.get(job.id)

    def get(self, job_id: str) -> JobInfo:
        with self._lock:
            if job_id not in self._jobs:
                raise KeyError(job_id)
            return self._jobs[job_id].model_copy()

    def list(self) -> list[JobInfo]:
        with self._lock:
            return [j.model_copy() for j in self._jobs.values()]

    def _run(self, job_id: str, fn: Callable[[], dict]) -> None:
        self._update(job_id, status="running", started_at=_now())
        try:
            result = fn()
        except Exception as exc:
            detail = f"{type(exc).__name__}: {exc}"
            self._update(job_id, status="failed", finished_at=_now(), error=detail)
            # full trace stays on the server log
            traceback.print_exc()
        else:
            self._update(job_id, status="succeeded", finished_at=_now(), result=result)

    def _update(self, job_id: str, **fields) -> None:
        with self._lock:
            job = self._jobs[job_id]
            self._jobs[job_id] = job.model_copy(update=fields)
