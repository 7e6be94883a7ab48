"""Wall-clock timing with a discarded warm-up and median-of-repetitions."""
from __future__ import annotations

import statistics
import time

MIN_TICKS = 100


def time_call(fn, reps: int, clock=time.perf_counter) -> tuple[float, list[float]]:
    """Median seconds per call of ``fn`` over ``reps`` timed repetitions.

    One warm-up call is discarded. A repetition that spans fewer than
    ``MIN_TICKS`` clock ticks is redone with twice as many inner calls.
    """
    resolution = time.get_clock_info("perf_counter").resolution if clock is time.perf_counter else 1e-9
    fn()
    number = 1
    samples = []
    while len(samples) < reps:
        start = clock()
        for _ in range(number):
            fn()
        elapsed = clock() - start
        if elapsed < MIN_TICKS * resolution:
            number *= 2
            samples.clear()
            continue
        samples.append(elapsed / number)
    return statistics.median(samples), samples
