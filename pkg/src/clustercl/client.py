"""HTTP client for the service API.

Without a base URL the app runs in-process behind an ASGI test transport, so
single-machine workflows need no running server; pass ``base_url`` (or set
CLUSTERCL_SERVER) to target a live instance.
"""

from __future__ import annotations

import time

import httpx

from .errors import ClusterCLError


class ServiceError(ClusterCLError):
    """Request rejected or job failed on the service side."""


class ServiceClient:
    def __init__(self, base_url: str | None = None):
        if base_url:
            self._client = httpx.Client(base_url=base_url, timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def close(self) -> None:
        self._client.close()

    def health(self) -> dict:
        return self._request("GET", "/health")

    def get_job(self, job_id: str) -> dict:
        return self._request("GET", f"/jobs/{job_id}")

    def list_jobs(self) -> list[dict]:
        return self._request("GET", "/jobs")

    def run_job(self, path: str, payload: dict, wait: bool = True,
                poll_interval: float = 0.25) -> dict:
        """Submit a job and block until it finishes; returns the final JobInfo.

        Raises ServiceError if the request is rejected or the job fails.
        """
        job = self._request("POST", path, params={"wait": wait}, json=payload)
        while job["status"] in ("queued", "running"):
            time.sleep(poll_interval)
            job = self.get_job(job["id"])
        if job["status"] != "succeeded":
            raise ServiceError(job.get("error") or f"job {job['id']} failed")
        return job

    def _request(self, method: str, path: str, **kwargs) -> dict:
        response = self._client.request(method, path, **kwargs)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ServiceError(f"{method} {path} -> {response.status_code}: {detail}")
        return response.json()
