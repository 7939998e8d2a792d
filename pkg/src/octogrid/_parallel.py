import os
from concurrent.futures import ThreadPoolExecutor

WORKERS_ENV = "OCTOGRID_WORKERS"


def default_workers() -> int:
    """Worker count from ``OCTOGRID_WORKERS``, else the CPU count."""
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1, got {env!r}")
        return n
    return os.cpu_count() or 1


def run_workers(kernel, worker_count: int, *args) -> None:
    """Run ``kernel(*args, wid)`` on ``worker_count`` threads and wait for all.

    Kernels are numba functions compiled with ``nogil=True``; each thread
    spends its whole life inside compiled code, so they run concurrently.
    """
    if worker_count < 1:
        raise ValueError(f"worker_count must be >= 1, got {worker_count}")
    if worker_count == 1:
        kernel(*args, 0)
        return
    with ThreadPoolExecutor(max_workers=worker_count) as pool:
        futures = [pool.submit(kernel, *args, wid) for wid in range(worker_count)]
        for f in futures:
            f.result()
