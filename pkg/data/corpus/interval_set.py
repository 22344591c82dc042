"""Sorted, non-overlapping integer intervals with union, difference and lookup."""

import bisect
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Tuple


@dataclass(frozen=True, order=True)
class Interval:
    start: int
    end: int  # exclusive

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"invalid interval [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def __contains__(self, point: int) -> bool:
        return self.start <= point < self.end

    def overlaps(self, other: "Interval") -> bool:
        return self.start < other.end and other.start < self.end

    def touches(self, other: "Interval") -> bool:
        return self.start <= other.end and other.start <= self.end

    def intersection(self, other: "Interval") -> Optional["Interval"]:
        start = max(self.start, other.start)
        end = min(self.end, other.end)
        if start >= end:
            return None
        return Interval(start, end)


class IntervalSet:
    """A set of integers stored as sorted disjoint half-open intervals."""

    def __init__(self, intervals: Iterable[Tuple[int, int]] = ()):
        self._starts: List[int] = []
        self._ends: List[int] = []
        for start, end in intervals:
            self.add(start, end)

    def __iter__(self) -> Iterator[Interval]:
        for start, end in zip(self._starts, self._ends):
            yield Interval(start, end)

    def __len__(self) -> int:
        return len(self._starts)

    def __bool__(self) -> bool:
        return bool(self._starts)

    def total_length(self) -> int:
        return sum(end - start for start, end in zip(self._starts, self._ends))

    def __contains__(self, point: int) -> bool:
        i = bisect.bisect_right(self._starts, point) - 1
        return i >= 0 and point < self._ends[i]

    def add(self, start: int, end: int) -> None:
        if start >= end:
            return
        lo = bisect.bisect_left(self._ends, start)
        hi = bisect.bisect_right(self._starts, end)
        if lo < hi:
            start = min(start, self._starts[lo])
            end = max(end, self._ends[hi - 1])
        self._starts[lo:hi] = [start]
        self._ends[lo:hi] = [end]

    def remove(self, start: int, end: int) -> None:
        if start >= end:
            return
        lo = bisect.bisect_right(self._ends, start)
        hi = bisect.bisect_left(self._starts, end)
        if lo >= hi:
            return
        new_starts: List[int] = []
        new_ends: List[int] = []
        if self._starts[lo] < start:
            new_starts.append(self._starts[lo])
            new_ends.append(start)
        if self._ends[hi - 1] > end:
            new_starts.append(end)
            new_ends.append(self._ends[hi - 1])
        self._starts[lo:hi] = new_starts
        self._ends[lo:hi] = new_ends

    def union(self, other: "IntervalSet") -> "IntervalSet":
        result = IntervalSet(zip(self._starts, self._ends))
        for interval in other:
            result.add(interval.start, interval.end)
        return result

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        result = IntervalSet(zip(self._starts, self._ends))
        for interval in other:
            result.remove(interval.start, interval.end)
        return result

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        result = IntervalSet()
        a = list(self)
        b = list(other)
        i = j = 0
        while i < len(a) and j < len(b):
            overlap = a[i].intersection(b[j])
            if overlap is not None:
                result.add(overlap.start, overlap.end)
            if a[i].end < b[j].end:
                i += 1
            else:
                j += 1
        return result

    def gaps(self, start: int, end: int) -> List[Interval]:
        """Intervals inside [start, end) that are not covered by the set."""
        missing = IntervalSet([(start, end)]).difference(self)
        return list(missing)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._starts == other._starts and self._ends == other._ends

    def __repr__(self) -> str:
        parts = ", ".join(f"[{s}, {e})" for s, e in zip(self._starts, self._ends))
        return f"IntervalSet({parts})"


def merge_ranges(ranges: Iterable[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Merge possibly overlapping (start, end) pairs into a sorted disjoint list."""
    merged: List[Tuple[int, int]] = []
    for start, end in sorted(ranges):
        if merged and start <= merged[-1][1]:
            last_start, last_end = merged[-1]
            merged[-1] = (last_start, max(last_end, end))
        else:
            merged.append((start, end))
    return merged


if __name__ == "__main__":
    busy = IntervalSet([(9, 12), (13, 17)])
    busy.add(11, 14)
    print(busy, busy.total_length())
    print(busy.gaps(8, 20))
    print(merge_ranges([(5, 8), (1, 3), (2, 6), (10, 11)]))
