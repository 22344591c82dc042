"""A small least-recently-used cache built on a dict and a doubly linked list."""

from typing import Any, Dict, Hashable, Iterator, Optional, Tuple


class _Node:
    __slots__ = ("key", "value", "prev", "next")

    def __init__(self, key: Hashable = None, value: Any = None):
        self.key = key
        self.value = value
        self.prev: Optional["_Node"] = None
        self.next: Optional["_Node"] = None


class LRUCache:
    """Mapping with a fixed capacity that evicts the least recently used entry."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._map: Dict[Hashable, _Node] = {}
        self._head = _Node()
        self._tail = _Node()
        self._head.next = self._tail
        self._tail.prev = self._head
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._map)

    def __contains__(self, key: Hashable) -> bool:
        return key in self._map

    def _unlink(self, node: _Node) -> None:
        node.prev.next = node.next
        node.next.prev = node.prev

    def _push_front(self, node: _Node) -> None:
        node.prev = self._head
        node.next = self._head.next
        self._head.next.prev = node
        self._head.next = node

    def get(self, key: Hashable, default: Any = None) -> Any:
        node = self._map.get(key)
        if node is None:
            self.misses += 1
            return default
        self.hits += 1
        self._unlink(node)
        self._push_front(node)
        return node.value

    def put(self, key: Hashable, value: Any) -> Optional[Tuple[Hashable, Any]]:
        """Insert or update a key. Returns the evicted (key, value) pair, if any."""
        node = self._map.get(key)
        if node is not None:
            node.value = value
            self._unlink(node)
            self._push_front(node)
            return None
        node = _Node(key, value)
        self._map[key] = node
        self._push_front(node)
        if len(self._map) > self.capacity:
            oldest = self._tail.prev
            self._unlink(oldest)
            del self._map[oldest.key]
            return oldest.key, oldest.value
        return None

    def pop(self, key: Hashable, default: Any = None) -> Any:
        node = self._map.pop(key, None)
        if node is None:
            return default
        self._unlink(node)
        return node.value

    def clear(self) -> None:
        self._map.clear()
        self._head.next = self._tail
        self._tail.prev = self._head

    def keys(self) -> Iterator[Hashable]:
        node = self._head.next
        while node is not self._tail:
            yield node.key
            node = node.next

    def items(self) -> Iterator[Tuple[Hashable, Any]]:
        node = self._head.next
        while node is not self._tail:
            yield node.key, node.value
            node = node.next

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def __repr__(self) -> str:
        entries = ", ".join(f"{k!r}: {v!r}" for k, v in self.items())
        return f"LRUCache({self.capacity}, {{{entries}}})"


def memoize(capacity: int = 128):
    """Decorator that caches results of a function of hashable positional arguments."""

    def decorator(func):
        cache = LRUCache(capacity)
        sentinel = object()

        def wrapper(*args):
            result = cache.get(args, sentinel)
            if result is sentinel:
                result = func(*args)
                cache.put(args, result)
            return result

        wrapper.cache = cache
        wrapper.__name__ = func.__name__
        wrapper.__doc__ = func.__doc__
        return wrapper

    return decorator


@memoize(capacity=256)
def fibonacci(n: int) -> int:
    if n < 2:
        return n
    return fibonacci(n - 1) + fibonacci(n - 2)


if __name__ == "__main__":
    cache = LRUCache(3)
    for word in ["alpha", "beta", "gamma", "alpha", "delta", "beta"]:
        evicted = cache.put(word, len(word))
        if evicted:
            print("evicted", evicted)
    print(cache)
    print(fibonacci(80), fibonacci.cache.hit_rate)
