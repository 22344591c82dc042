"""Synchronous publish/subscribe event bus with priorities and wildcard topics."""

import fnmatch
import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

logger = logging.getLogger(__name__)

Handler = Callable[["Event"], Any]


@dataclass
class Event:
    topic: str
    payload: Dict[str, Any] = field(default_factory=dict)
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


@dataclass(order=True)
class _Subscription:
    priority: int
    order: int
    pattern: str = field(compare=False)
    handler: Handler = field(compare=False)
    once: bool = field(default=False, compare=False)


class EventBus:
    def __init__(self):
        self._subscriptions: List[_Subscription] = []
        self._counter = itertools.count()
        self.delivered: Dict[str, int] = defaultdict(int)

    def subscribe(self, pattern: str, handler: Handler, priority: int = 0, once: bool = False) -> Callable[[], None]:
        """Register a handler. Lower priority values run first. Returns an unsubscribe callable."""
        subscription = _Subscription(priority, next(self._counter), pattern, handler, once)
        self._subscriptions.append(subscription)
        self._subscriptions.sort()

        def unsubscribe() -> None:
            if subscription in self._subscriptions:
                self._subscriptions.remove(subscription)

        return unsubscribe

    def on(self, pattern: str, priority: int = 0):
        def decorator(handler: Handler) -> Handler:
            self.subscribe(pattern, handler, priority)
            return handler

        return decorator

    def publish(self, topic: str, **payload: Any) -> Event:
        event = Event(topic, payload)
        for subscription in list(self._subscriptions):
            if not fnmatch.fnmatchcase(topic, subscription.pattern):
                continue
            try:
                subscription.handler(event)
            except Exception:
                logger.exception("handler for %s failed", topic)
            self.delivered[topic] += 1
            if subscription.once:
                self._subscriptions.remove(subscription)
            if event.cancelled:
                break
        return event

    def handlers_for(self, topic: str) -> List[Handler]:
        return [s.handler for s in self._subscriptions if fnmatch.fnmatchcase(topic, s.pattern)]

    def clear(self) -> None:
        self._subscriptions.clear()
        self.delivered.clear()


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    bus = EventBus()
    audit = []

    @bus.on("order.*", priority=10)
    def record(event: Event) -> None:
        audit.append((event.topic, event.payload))

    @bus.on("order.created")
    def validate(event: Event) -> None:
        if event.payload.get("quantity", 0) <= 0:
            event.cancel()

    bus.subscribe("order.shipped", lambda e: print("shipped", e.payload), once=True)
    bus.publish("order.created", quantity=3)
    bus.publish("order.created", quantity=0)
    bus.publish("order.shipped", tracking="X12")
    bus.publish("order.shipped", tracking="X13")
    print(audit)
    print(dict(bus.delivered))
