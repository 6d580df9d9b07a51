"""Bounded thread pool helpers.

FLEETRL_THREADS caps the worker count used anywhere the library fans out
(independent simulations in a sweep). Results are always returned in input
order so parallel and serial execution produce identical outputs.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "FLEETRL_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_thread_cap(requested: Optional[int] = None) -> int:
    """Resolve the worker count.

    Args:
        requested: Explicit count; None reads FLEETRL_THREADS (default 1)

    Returns:
        Worker count, at least 1
    """
    if requested is not None:
        return max(1, int(requested))

    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={raw!r}")
        return 1


def parallel_map(
    func: Callable[[T], R],
    items: Iterable[T],
    max_workers: Optional[int] = None,
) -> List[R]:
    """Apply ``func`` to every item, in parallel when the cap allows.

    Args:
        func: Function applied to each item
        items: Inputs
        max_workers: Worker cap; None defers to ``resolve_thread_cap``

    Returns:
        Results in the order of ``items``
    """
    work = list(items)
    workers = min(resolve_thread_cap(max_workers), max(1, len(work)))
    if workers == 1:
        return [func(item) for item in work]

    logger.debug(f"Running {len(work)} jobs on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, work))
