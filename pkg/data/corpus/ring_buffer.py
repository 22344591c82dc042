"""Fixed-size ring buffer with running statistics for streaming measurements."""

import math
from typing import Generic, Iterator, List, Optional, TypeVar

T = TypeVar("T")


class RingBuffer(Generic[T]):
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self._items: List[Optional[T]] = [None] * capacity
        self._start = 0
        self._size = 0

    @property
    def capacity(self) -> int:
        return len(self._items)

    def __len__(self) -> int:
        return self._size

    def is_full(self) -> bool:
        return self._size == self.capacity

    def append(self, item: T) -> Optional[T]:
        """Append an item, returning the item that fell off the front (if any)."""
        if self.is_full():
            dropped = self._items[self._start]
            self._items[self._start] = item
            self._start = (self._start + 1) % self.capacity
            return dropped
        self._items[(self._start + self._size) % self.capacity] = item
        self._size += 1
        return None

    def popleft(self) -> T:
        if not self._size:
            raise IndexError("pop from an empty ring buffer")
        item = self._items[self._start]
        self._items[self._start] = None
        self._start = (self._start + 1) % self.capacity
        self._size -= 1
        return item

    def __getitem__(self, index: int) -> T:
        if index < 0:
            index += self._size
        if not 0 <= index < self._size:
            raise IndexError("ring buffer index out of range")
        return self._items[(self._start + index) % self.capacity]

    def __iter__(self) -> Iterator[T]:
        for i in range(self._size):
            yield self._items[(self._start + i) % self.capacity]

    def to_list(self) -> List[T]:
        return list(self)

    def __repr__(self) -> str:
        return f"RingBuffer({self.capacity}, {self.to_list()!r})"


class RollingStats:
    """Mean, variance, minimum and maximum over the last `window` samples."""

    def __init__(self, window: int):
        self._buffer: RingBuffer[float] = RingBuffer(window)
        self._sum = 0.0
        self._sum_sq = 0.0

    def push(self, value: float) -> None:
        dropped = self._buffer.append(value)
        self._sum += value
        self._sum_sq += value * value
        if dropped is not None:
            self._sum -= dropped
            self._sum_sq -= dropped * dropped

    @property
    def count(self) -> int:
        return len(self._buffer)

    @property
    def mean(self) -> float:
        return self._sum / self.count if self.count else math.nan

    @property
    def variance(self) -> float:
        n = self.count
        if n < 2:
            return 0.0
        return max(0.0, (self._sum_sq - self._sum * self._sum / n) / (n - 1))

    @property
    def stddev(self) -> float:
        return math.sqrt(self.variance)

    @property
    def minimum(self) -> float:
        return min(self._buffer) if self.count else math.nan

    @property
    def maximum(self) -> float:
        return max(self._buffer) if self.count else math.nan

    def summary(self) -> str:
        return (f"n={self.count} mean={self.mean:.3f} sd={self.stddev:.3f} "
                f"min={self.minimum:.3f} max={self.maximum:.3f}")


def moving_average(values: List[float], window: int) -> List[float]:
    stats = RollingStats(window)
    averages = []
    for value in values:
        stats.push(value)
        averages.append(stats.mean)
    return averages


if __name__ == "__main__":
    buffer = RingBuffer(4)
    for i in range(7):
        buffer.append(i)
    print(buffer, buffer[0], buffer[-1])
    stats = RollingStats(5)
    for reading in [12.0, 11.5, 13.2, 12.8, 40.0, 12.1, 11.9]:
        stats.push(reading)
        print(stats.summary())
    print(moving_average([1, 2, 3, 4, 5, 6], 3))
