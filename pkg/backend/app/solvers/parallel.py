from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        from backend.app.config import default_threads

        return default_threads()
    if threads < 1:
        raise ValueError("threads must be a positive integer")
    return threads


def map_ordered(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """
    Apply ``fn`` to every item and return results in input order.

    Each item is processed independently by the same code, so the output does
    not depend on the number of worker threads. numpy releases the GIL inside
    its kernels, which is where the per-item work goes.
    """
    items = list(items)
    n_threads = resolve_threads(threads)
    if n_threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n_threads, len(items))) as executor:
        return list(executor.map(fn, items))
