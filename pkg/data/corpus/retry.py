"""Retry helpers with exponential backoff, jitter and a simple circuit breaker."""

import functools
import logging
import random
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Type, TypeVar

logger = logging.getLogger(__name__)
T = TypeVar("T")


@dataclass
class Backoff:
    initial: float = 0.1
    factor: float = 2.0
    maximum: float = 10.0
    jitter: float = 0.1

    def delay(self, attempt: int, rng: Optional[random.Random] = None) -> float:
        base = min(self.maximum, self.initial * self.factor ** attempt)
        spread = base * self.jitter
        rng = rng or random
        return max(0.0, base + rng.uniform(-spread, spread))


class RetryError(Exception):
    def __init__(self, attempts: int, last: BaseException):
        super().__init__(f"gave up after {attempts} attempts: {last!r}")
        self.attempts = attempts
        self.last = last


def retry(attempts: int = 3, exceptions: Tuple[Type[BaseException], ...] = (Exception,),
          backoff: Optional[Backoff] = None, sleep: Callable[[float], None] = time.sleep):
    backoff = backoff or Backoff()

    def decorator(func: Callable[..., T]) -> Callable[..., T]:
        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> T:
            last: Optional[BaseException] = None
            for attempt in range(attempts):
                try:
                    return func(*args, **kwargs)
                except exceptions as exc:
                    last = exc
                    if attempt == attempts - 1:
                        break
                    wait = backoff.delay(attempt)
                    logger.warning("%s failed (%s), retrying in %.2fs", func.__name__, exc, wait)
                    sleep(wait)
            raise RetryError(attempts, last)

        return wrapper

    return decorator


class CircuitOpen(Exception):
    pass


class CircuitBreaker:
    """Opens after `threshold` consecutive failures and half-opens after `cooldown` seconds."""

    def __init__(self, threshold: int = 5, cooldown: float = 30.0, clock: Callable[[], float] = time.monotonic):
        self.threshold = threshold
        self.cooldown = cooldown
        self.clock = clock
        self.failures = 0
        self.opened_at: Optional[float] = None

    @property
    def state(self) -> str:
        if self.opened_at is None:
            return "closed"
        if self.clock() - self.opened_at >= self.cooldown:
            return "half-open"
        return "open"

    def call(self, func: Callable[..., T], *args, **kwargs) -> T:
        if self.state == "open":
            raise CircuitOpen("circuit is open")
        try:
            result = func(*args, **kwargs)
        except Exception:
            self.failures += 1
            if self.failures >= self.threshold or self.state == "half-open":
                self.opened_at = self.clock()
            raise
        self.failures = 0
        self.opened_at = None
        return result


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    calls = {"n": 0}

    @retry(attempts=4, exceptions=(ConnectionError,), sleep=lambda s: None)
    def flaky() -> str:
        calls["n"] += 1
        if calls["n"] < 3:
            raise ConnectionError("connection reset")
        return "ok"

    print(flaky(), calls)
    now = [0.0]
    breaker = CircuitBreaker(threshold=2, cooldown=5, clock=lambda: now[0])
    for _ in range(3):
        try:
            breaker.call(lambda: 1 / 0)
        except (ZeroDivisionError, CircuitOpen) as exc:
            print(type(exc).__name__, breaker.state)
    now[0] = 6.0
    print(breaker.state, breaker.call(lambda: "recovered"), breaker.state)
