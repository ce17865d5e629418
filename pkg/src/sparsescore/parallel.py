"""Worker-count plumbing for column-parallel updates.

The cap comes from, in order: an explicit ``set_max_workers`` call (the CLI
wires its --threads flag here), the SPARSESCORE_THREADS environment
variable, then the machine's core count. Results are always merged in index
order, so outputs do not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_max_workers = None


def set_max_workers(n):
    global _max_workers
    _max_workers = None if n is None else max(1, int(n))


def get_max_workers():
    if _max_workers is not None:
        return _max_workers
    env = os.environ.get("SPARSESCORE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_indexed(fn, count):
    """fn(i) for i in range(count), results in index order."""
    workers = min(get_max_workers(), count)
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))
