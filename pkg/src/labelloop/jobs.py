"""Background job execution for the service.

Machine-learning work runs outside the request path in a bounded worker
pool. A job targeting an annotation holds an exclusive write intent for its
duration; a second job on the same annotation stays queued until the first
releases it. Status is pollable and results are plain JSON.
"""

from __future__ import annotations

import threading
import traceback
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import JobNotFound, ValidationError

DEFAULT_WORKERS = 8

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"


@dataclass
class Job:
    id: str
    kind: str
    params: dict
    status: str = QUEUED
    progress: float = 0.0
    result: dict | None = None
    error: str | None = None
    detail: str | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def snapshot(self) -> dict:
        with self._lock:
            out = {
                "id": self.id, "type": self.kind, "status": self.status,
                "progress": self.progress, "result": self.result, "error": self.error,
            }
            if self.detail is not None:
                out["detail"] = self.detail
            return out

    def set(self, **kwargs):
        with self._lock:
            for key, value in kwargs.items():
                setattr(self, key, value)


class JobManager:
    def __init__(self, workers: int = DEFAULT_WORKERS):
        self._executor = ThreadPoolExecutor(max_workers=workers)
        self._jobs: dict[str, Job] = {}
        self._jobs_lock = threading.Lock()
        self._intents: dict[str, threading.Lock] = {}
        self._intents_lock = threading.Lock()

    def _intent(self, key: str) -> threading.Lock:
        with self._intents_lock:
            return self._intents.setdefault(key, threading.Lock())

    def submit(self, kind: str, params: dict, runner, write_intents=()) -> str:
        """Queue `runner(job)`; it runs once all write intents are acquired."""
        if not callable(runner):
            raise ValidationError(f"no runner for job type {kind!r}")
        job = Job(id=uuid.uuid4().hex[:12], kind=kind, params=params)
        with self._jobs_lock:
            self._jobs[job.id] = job
        intents = [self._intent(str(key)) for key in write_intents]

        def work():
            for intent in intents:
                intent.acquire()  # stay "queued" until the intent frees up
            job.set(status=RUNNING)
            try:
                result = runner(job)
                job.set(status=DONE, progress=1.0, result=result)
            except Exception as exc:  # surfaced via job status, not the pool
                job.set(status=FAILED, error=f"{type(exc).__name__}: {exc}",
                        detail=traceback.format_exc())
            finally:
                for intent in reversed(intents):
                    intent.release()

        self._executor.submit(work)
        return job.id

    def status(self, job_id: str) -> dict:
        with self._jobs_lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise JobNotFound(job_id)
        return job.snapshot()

    def wait(self, job_id: str, timeout: float = 60.0, poll_s: float = 0.02) -> dict:
        """Poll until the job leaves the queue/running states (test helper)."""
        import time

        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            state = self.status(job_id)
            if state["status"] in (DONE, FAILED):
                return state
            time.sleep(poll_s)
        raise TimeoutError(f"job {job_id} still {self.status(job_id)['status']}")

    def shutdown(self):
        self._executor.shutdown(wait=True)
