# File: q2fmm_workers.py (Q2FMM)
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Sequence, Tuple

logger = logging.getLogger(__name__)

# --- Worker count from environment variable for sweep runs ---
DEFAULT_JOBS = int(os.getenv("Q2FMM_JOBS", "1"))


def run_parallel(func: Callable[..., Any], arg_tuples: Sequence[Tuple], jobs: int = DEFAULT_JOBS) -> List[Any]:
    """
    Runs func(*args) for every tuple, in-process when jobs == 1 and on a
    process pool otherwise. Results come back in input order, so the output
    does not depend on the worker count or on completion order.
    """
    if jobs <= 1 or len(arg_tuples) <= 1:
        return [func(*args) for args in arg_tuples]
    workers = min(jobs, len(arg_tuples))
    logger.info(f"Dispatching {len(arg_tuples)} sweep points to {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(func, *args) for args in arg_tuples]
        return [f.result() for f in futures]
