"""Exact rational arithmetic with continued fractions and best approximations."""

import math
from functools import total_ordering
from typing import Iterator, List, Tuple, Union

Number = Union[int, "Rational"]


@total_ordering
class Rational:
    __slots__ = ("num", "den")

    def __init__(self, num: int, den: int = 1):
        if den == 0:
            raise ZeroDivisionError("denominator must not be zero")
        if den < 0:
            num, den = -num, -den
        g = math.gcd(num, den)
        self.num = num // g
        self.den = den // g

    @staticmethod
    def _coerce(value: Number) -> "Rational":
        if isinstance(value, Rational):
            return value
        if isinstance(value, int):
            return Rational(value)
        raise TypeError(f"cannot convert {type(value).__name__} to Rational")

    def __add__(self, other: Number) -> "Rational":
        other = self._coerce(other)
        return Rational(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self) -> "Rational":
        return Rational(-self.num, self.den)

    def __sub__(self, other: Number) -> "Rational":
        return self + (-self._coerce(other))

    def __rsub__(self, other: Number) -> "Rational":
        return self._coerce(other) - self

    def __mul__(self, other: Number) -> "Rational":
        other = self._coerce(other)
        return Rational(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "Rational":
        other = self._coerce(other)
        return Rational(self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other: Number) -> "Rational":
        return self._coerce(other) / self

    def __pow__(self, exponent: int) -> "Rational":
        if exponent < 0:
            return Rational(self.den ** -exponent, self.num ** -exponent)
        return Rational(self.num ** exponent, self.den ** exponent)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, int):
            other = Rational(other)
        if not isinstance(other, Rational):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __lt__(self, other: Number) -> bool:
        other = self._coerce(other)
        return self.num * other.den < other.num * self.den

    def __hash__(self) -> int:
        return hash((self.num, self.den))

    def __float__(self) -> float:
        return self.num / self.den

    def __repr__(self) -> str:
        return f"Rational({self.num}, {self.den})"

    def __str__(self) -> str:
        return str(self.num) if self.den == 1 else f"{self.num}/{self.den}"

    def continued_fraction(self) -> List[int]:
        terms = []
        num, den = self.num, self.den
        while den:
            q, r = divmod(num, den)
            terms.append(q)
            num, den = den, r
        return terms

    @classmethod
    def from_continued_fraction(cls, terms: List[int]) -> "Rational":
        value = cls(terms[-1])
        for term in reversed(terms[:-1]):
            value = term + 1 / value
        return value


def convergents(terms: List[int]) -> Iterator[Tuple[int, int]]:
    p_prev, p = 1, terms[0]
    q_prev, q = 0, 1
    yield p, q
    for a in terms[1:]:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        yield p, q


def best_approximation(x: float, max_den: int) -> Rational:
    """Closest fraction to x whose denominator does not exceed max_den."""
    terms = []
    value = x
    for _ in range(40):
        a = math.floor(value)
        terms.append(a)
        frac = value - a
        if frac < 1e-12:
            break
        value = 1 / frac
    best = Rational(terms[0])
    for p, q in convergents(terms):
        if q > max_den:
            break
        best = Rational(p, q)
    return best


if __name__ == "__main__":
    a = Rational(3, 4)
    b = Rational(5, 6)
    print(a + b, a - b, a * b, a / b, a ** -2)
    print(Rational(415, 93).continued_fraction())
    print(best_approximation(math.pi, 1000), best_approximation(math.e, 100))
