"""Declarative finite state machine with guards, actions and transition history."""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

Guard = Callable[[Dict[str, Any]], bool]
Action = Callable[[Dict[str, Any]], None]


class TransitionError(Exception):
    pass


@dataclass
class Transition:
    source: str
    event: str
    target: str
    guard: Optional[Guard] = None
    action: Optional[Action] = None


@dataclass
class StateMachine:
    initial: str
    transitions: List[Transition] = field(default_factory=list)
    final_states: Tuple[str, ...] = ()

    def __post_init__(self):
        self.state = self.initial
        self.context: Dict[str, Any] = {}
        self.history: List[Tuple[str, str, str]] = []
        self._table: Dict[Tuple[str, str], List[Transition]] = {}
        for transition in self.transitions:
            self._table.setdefault((transition.source, transition.event), []).append(transition)

    def add(self, source: str, event: str, target: str, guard: Optional[Guard] = None,
            action: Optional[Action] = None) -> "StateMachine":
        transition = Transition(source, event, target, guard, action)
        self.transitions.append(transition)
        self._table.setdefault((source, event), []).append(transition)
        return self

    @property
    def states(self) -> List[str]:
        names = {self.initial}
        for transition in self.transitions:
            names.add(transition.source)
            names.add(transition.target)
        return sorted(names)

    def available_events(self) -> List[str]:
        return sorted({event for (source, event) in self._table if source == self.state})

    def can(self, event: str) -> bool:
        return any(t.guard is None or t.guard(self.context) for t in self._table.get((self.state, event), []))

    def fire(self, event: str, **data: Any) -> str:
        if self.state in self.final_states:
            raise TransitionError(f"machine already finished in {self.state!r}")
        self.context.update(data)
        for transition in self._table.get((self.state, event), []):
            if transition.guard is not None and not transition.guard(self.context):
                continue
            if transition.action is not None:
                transition.action(self.context)
            self.history.append((self.state, event, transition.target))
            self.state = transition.target
            return self.state
        raise TransitionError(f"no transition from {self.state!r} on {event!r}")

    def reset(self) -> None:
        self.state = self.initial
        self.context.clear()
        self.history.clear()

    def to_dot(self) -> str:
        lines = ["digraph fsm {", "  rankdir=LR;"]
        for name in self.states:
            shape = "doublecircle" if name in self.final_states else "circle"
            lines.append(f'  "{name}" [shape={shape}];')
        for t in self.transitions:
            lines.append(f'  "{t.source}" -> "{t.target}" [label="{t.event}"];')
        lines.append("}")
        return "\n".join(lines)


def turnstile() -> StateMachine:
    machine = StateMachine(initial="locked")
    machine.add("locked", "coin", "unlocked", action=lambda ctx: ctx.update(coins=ctx.get("coins", 0) + 1))
    machine.add("locked", "push", "locked")
    machine.add("unlocked", "push", "locked", action=lambda ctx: ctx.update(passes=ctx.get("passes", 0) + 1))
    machine.add("unlocked", "coin", "unlocked")
    return machine


def order_workflow() -> StateMachine:
    machine = StateMachine(initial="draft", final_states=("delivered", "cancelled"))
    machine.add("draft", "submit", "pending", guard=lambda ctx: bool(ctx.get("items")))
    machine.add("pending", "pay", "paid", guard=lambda ctx: ctx.get("amount", 0) >= ctx.get("total", 0))
    machine.add("pending", "cancel", "cancelled")
    machine.add("paid", "ship", "shipped")
    machine.add("shipped", "deliver", "delivered")
    return machine


if __name__ == "__main__":
    gate = turnstile()
    for event in ["push", "coin", "push", "coin", "coin", "push"]:
        gate.fire(event)
    print(gate.state, gate.context, len(gate.history))
    order = order_workflow()
    order.fire("submit", items=["book"], total=30)
    print(order.can("pay"), order.available_events())
    order.fire("pay", amount=30)
    order.fire("ship")
    order.fire("deliver")
    print(order.history)
    print(order.to_dot())
