"""Worker-count resolution: explicit argument, then TORIC_THREADS, then CPU count."""

import os

_override: int | None = None


def set_threads(n: int | None) -> None:
    global _override
    _override = n


def worker_count(requested: int | None = None) -> int:
    for value in (requested, _override, os.environ.get("TORIC_THREADS")):
        if value not in (None, ""):
            n = int(value)
            if n < 1:
                raise ValueError("thread count must be positive")
            return n
    return max(1, min(8, os.cpu_count() or 1))
