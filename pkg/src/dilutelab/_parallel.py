"""Thread-budget resolution and an order-preserving task map."""
import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "DILUTELAB_THREADS"


def resolve_threads(threads=None):
    """Flag wins over the environment variable; default is one thread."""
    if threads is None:
        threads = os.environ.get(THREADS_ENV, 1)
    threads = int(threads)
    return max(1, threads)


def ordered_map(fn, items, threads=None):
    """``list(map(fn, items))`` on a thread pool; output keeps input order."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunks(n, size):
    """Fixed-size index ranges; independent of the thread budget."""
    return [range(i, min(i + size, n)) for i in range(0, n, size)]
