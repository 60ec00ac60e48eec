"""Worker processes for independent simulation runs."""

import json
import logging
import multiprocessing as mp
import queue
import time
from collections.abc import Sequence

from .errors import TuringHopfError, WorkerError

_LOGGER = logging.getLogger(__name__)

RESULT_TIMEOUT = 1800.0
JOIN_TIMEOUT = 5.0


def rss_kb():
    """Get RSS memory usage in KB (Linux only)."""
    try:
        with open("/proc/self/status") as f:
            for line in f:
                if line.startswith("VmRSS:"):
                    return int(line.split()[1])
    except Exception:
        return 0


def worker_main(source: str, job_queue: mp.Queue, result_queue: mp.Queue):
    """Worker process that rebuilds the model and runs simulation jobs until a None sentinel."""
    from .model import load_model
    from .simulate import run

    try:
        model = load_model(source)
    except Exception as e:
        result_queue.put_nowait((json.dumps({"status": "error", "index": None, "err": repr(e)}), None))
        return

    while True:
        try:
            job = job_queue.get(timeout=0.1)
        except queue.Empty:
            continue
        if job is None:
            break

        index, mu, cfg = job
        started = time.monotonic()
        try:
            trajectory = run(model, mu, cfg)
        except Exception as e:
            message = {"status": "error", "index": index, "err": repr(e)}
            if isinstance(e, TuringHopfError):
                message["code"] = e.code
                message["message"] = e.message
            result_queue.put_nowait((json.dumps(message), None))
            continue

        message = {
            "status": "done",
            "index": index,
            "seconds": time.monotonic() - started,
            "rss_kb": rss_kb(),
        }
        result_queue.put_nowait((json.dumps(message), trajectory))


def run_jobs(source: str, jobs: Sequence[tuple], workers: int) -> list:
    """Run (mu, SimConfig) jobs on spawned worker processes; results come back in job order."""
    ctx = mp.get_context("spawn")
    job_queue = ctx.Queue()
    result_queue = ctx.Queue()

    processes = [
        ctx.Process(target=worker_main, args=(source, job_queue, result_queue), daemon=True)
        for _ in range(min(workers, len(jobs)))
    ]
    for process in processes:
        process.start()
    _LOGGER.debug("Started %d simulation workers for %d jobs", len(processes), len(jobs))

    for index, (mu, cfg) in enumerate(jobs):
        job_queue.put((index, tuple(mu), cfg))
    for _ in processes:
        job_queue.put(None)

    results: list = [None] * len(jobs)
    try:
        for _ in jobs:
            try:
                raw, trajectory = result_queue.get(timeout=RESULT_TIMEOUT)
            except queue.Empty as e:
                raise WorkerError("Timed out waiting for a simulation worker", timeout=RESULT_TIMEOUT) from e
            message = json.loads(raw)
            if message["status"] == "error":
                raise WorkerError(
                    message.get("message", "Simulation worker failed"),
                    job=message["index"],
                    worker_code=message.get("code"),
                    err=message["err"],
                )
            _LOGGER.debug(
                "Job %d done in %.1fs (worker rss=%s kB)", message["index"], message["seconds"], message["rss_kb"]
            )
            results[message["index"]] = trajectory
    finally:
        for process in processes:
            process.join(timeout=JOIN_TIMEOUT)
            if process.is_alive():
                _LOGGER.warning("Worker %s did not exit, terminating", process.pid)
                process.terminate()
    return results
