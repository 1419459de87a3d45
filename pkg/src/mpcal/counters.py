"""Process-wide tally of local linear system solutions."""

import threading


class SolveCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, k: int) -> None:
        with self._lock:
            self._count += int(k)

    @property
    def count(self) -> int:
        return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0


SOLVES = SolveCounter()
