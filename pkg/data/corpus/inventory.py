"""In-memory inventory with stock movements, reservations and reorder reports."""

from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from enum import Enum
from typing import Dict, Iterable, List, Optional


class MovementKind(Enum):
    RECEIVE = "receive"
    SHIP = "ship"
    ADJUST = "adjust"
    RETURN = "return"


@dataclass(frozen=True)
class Product:
    sku: str
    name: str
    unit_price: Decimal
    reorder_level: int = 10
    reorder_quantity: int = 50


@dataclass
class Movement:
    sku: str
    kind: MovementKind
    quantity: int
    day: date
    note: str = ""


class InsufficientStock(Exception):
    def __init__(self, sku: str, requested: int, available: int):
        super().__init__(f"{sku}: requested {requested}, only {available} available")
        self.sku = sku
        self.requested = requested
        self.available = available


@dataclass
class Inventory:
    products: Dict[str, Product] = field(default_factory=dict)
    on_hand: Dict[str, int] = field(default_factory=lambda: defaultdict(int))
    reserved: Dict[str, int] = field(default_factory=lambda: defaultdict(int))
    movements: List[Movement] = field(default_factory=list)

    def register(self, product: Product) -> None:
        if product.sku in self.products:
            raise ValueError(f"duplicate sku {product.sku}")
        self.products[product.sku] = product

    def _product(self, sku: str) -> Product:
        try:
            return self.products[sku]
        except KeyError:
            raise KeyError(f"unknown sku {sku}") from None

    def available(self, sku: str) -> int:
        return self.on_hand[sku] - self.reserved[sku]

    def receive(self, sku: str, quantity: int, day: Optional[date] = None, note: str = "") -> None:
        self._product(sku)
        if quantity <= 0:
            raise ValueError("quantity must be positive")
        self.on_hand[sku] += quantity
        self.movements.append(Movement(sku, MovementKind.RECEIVE, quantity, day or date.today(), note))

    def reserve(self, sku: str, quantity: int) -> None:
        available = self.available(sku)
        if quantity > available:
            raise InsufficientStock(sku, quantity, available)
        self.reserved[sku] += quantity

    def release(self, sku: str, quantity: int) -> None:
        self.reserved[sku] = max(0, self.reserved[sku] - quantity)

    def ship(self, sku: str, quantity: int, day: Optional[date] = None) -> None:
        if quantity > self.on_hand[sku]:
            raise InsufficientStock(sku, quantity, self.on_hand[sku])
        self.on_hand[sku] -= quantity
        self.reserved[sku] = max(0, self.reserved[sku] - quantity)
        self.movements.append(Movement(sku, MovementKind.SHIP, -quantity, day or date.today()))

    def adjust(self, sku: str, counted: int, day: Optional[date] = None) -> int:
        delta = counted - self.on_hand[sku]
        if delta:
            self.on_hand[sku] = counted
            self.movements.append(Movement(sku, MovementKind.ADJUST, delta, day or date.today(), "stock count"))
        return delta

    def valuation(self) -> Decimal:
        return sum((self.products[sku].unit_price * qty for sku, qty in self.on_hand.items()), Decimal("0"))

    def reorder_report(self) -> List[Dict[str, object]]:
        rows = []
        for sku, product in sorted(self.products.items()):
            available = self.available(sku)
            if available <= product.reorder_level:
                rows.append({"sku": sku, "name": product.name, "available": available,
                             "order": product.reorder_quantity})
        return rows

    def history(self, sku: str, kinds: Iterable[MovementKind] = tuple(MovementKind)) -> List[Movement]:
        wanted = set(kinds)
        return [m for m in self.movements if m.sku == sku and m.kind in wanted]


def format_report(rows: List[Dict[str, object]]) -> str:
    if not rows:
        return "nothing to reorder"
    header = f"{'sku':<8}{'name':<20}{'available':>10}{'order':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(f"{row['sku']:<8}{row['name']:<20}{row['available']:>10}{row['order']:>8}")
    return "\n".join(lines)


if __name__ == "__main__":
    inv = Inventory()
    inv.register(Product("A100", "hex bolts", Decimal("0.12"), reorder_level=200, reorder_quantity=1000))
    inv.register(Product("B200", "wing nuts", Decimal("0.30")))
    inv.receive("A100", 500, note="initial")
    inv.receive("B200", 40)
    inv.reserve("A100", 350)
    inv.ship("A100", 300)
    inv.adjust("B200", 8)
    print(inv.valuation())
    print(format_report(inv.reorder_report()))
    try:
        inv.reserve("B200", 20)
    except InsufficientStock as exc:
        print("error:", exc)
