"""Order-preserving parallel map capped by ``POISON_CERT_THREADS``."""

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("POISON_CERT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def ordered_map(fn, items):
    """``list(map(fn, items))`` with results in input order regardless of schedule."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
