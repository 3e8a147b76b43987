"""Order-preserving task execution over a process pool."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def map_ordered(fn, tasks, workers: int = 1, chunksize: int | None = None) -> list:
    """``[fn(t) for t in tasks]``, optionally spread over ``workers`` processes.

    Results come back in task order whatever the schedule, so any reduction
    over them is independent of the worker count. ``fn`` must be picklable.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    if chunksize is None:
        chunksize = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunksize))
