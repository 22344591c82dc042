"""Dense matrices as lists of lists: products, determinants, inverses and solving."""

from fractions import Fraction
from typing import List, Sequence, Tuple

Matrix = List[List[float]]


def shape(a: Matrix) -> Tuple[int, int]:
    return len(a), len(a[0]) if a else 0


def zeros(rows: int, cols: int) -> Matrix:
    return [[0.0] * cols for _ in range(rows)]


def identity(n: int) -> Matrix:
    result = zeros(n, n)
    for i in range(n):
        result[i][i] = 1.0
    return result


def transpose(a: Matrix) -> Matrix:
    return [list(row) for row in zip(*a)]


def matmul(a: Matrix, b: Matrix) -> Matrix:
    rows, inner = shape(a)
    inner_b, cols = shape(b)
    if inner != inner_b:
        raise ValueError(f"shape mismatch: {shape(a)} x {shape(b)}")
    bt = transpose(b)
    return [[sum(x * y for x, y in zip(row, col)) for col in bt] for row in a]


def add(a: Matrix, b: Matrix) -> Matrix:
    if shape(a) != shape(b):
        raise ValueError("shape mismatch")
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def scale(a: Matrix, k: float) -> Matrix:
    return [[k * x for x in row] for row in a]


def lu_decompose(a: Matrix) -> Tuple[Matrix, Matrix, List[int], int]:
    """Doolittle LU with partial pivoting. Returns (L, U, permutation, sign)."""
    n, m = shape(a)
    if n != m:
        raise ValueError("LU needs a square matrix")
    u = [list(map(float, row)) for row in a]
    lower = identity(n)
    perm = list(range(n))
    sign = 1
    for k in range(n):
        pivot = max(range(k, n), key=lambda r: abs(u[r][k]))
        if abs(u[pivot][k]) < 1e-12:
            raise ValueError("matrix is singular")
        if pivot != k:
            u[k], u[pivot] = u[pivot], u[k]
            perm[k], perm[pivot] = perm[pivot], perm[k]
            for j in range(k):
                lower[k][j], lower[pivot][j] = lower[pivot][j], lower[k][j]
            sign = -sign
        for i in range(k + 1, n):
            factor = u[i][k] / u[k][k]
            lower[i][k] = factor
            for j in range(k, n):
                u[i][j] -= factor * u[k][j]
    return lower, u, perm, sign


def determinant(a: Matrix) -> float:
    try:
        _, u, _, sign = lu_decompose(a)
    except ValueError:
        return 0.0
    result = float(sign)
    for i in range(len(u)):
        result *= u[i][i]
    return result


def solve(a: Matrix, b: Sequence[float]) -> List[float]:
    lower, u, perm, _ = lu_decompose(a)
    n = len(a)
    y = [0.0] * n
    for i in range(n):
        y[i] = b[perm[i]] - sum(lower[i][j] * y[j] for j in range(i))
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - sum(u[i][j] * x[j] for j in range(i + 1, n))) / u[i][i]
    return x


def inverse(a: Matrix) -> Matrix:
    n = len(a)
    columns = [solve(a, [1.0 if i == j else 0.0 for i in range(n)]) for j in range(n)]
    return transpose(columns)


def exact_determinant(a: Sequence[Sequence[int]]) -> Fraction:
    """Fraction-based elimination for integer matrices."""
    m = [[Fraction(x) for x in row] for row in a]
    n = len(m)
    det = Fraction(1)
    for k in range(n):
        pivot = next((r for r in range(k, n) if m[r][k] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != k:
            m[k], m[pivot] = m[pivot], m[k]
            det = -det
        det *= m[k][k]
        for i in range(k + 1, n):
            factor = m[i][k] / m[k][k]
            for j in range(k, n):
                m[i][j] -= factor * m[k][j]
    return det


def pretty(a: Matrix, digits: int = 3) -> str:
    return "\n".join("  ".join(f"{x:>{digits + 6}.{digits}f}" for x in row) for row in a)


if __name__ == "__main__":
    a = [[4.0, 3.0, 2.0], [2.0, 1.0, 3.0], [3.0, 2.0, 1.0]]
    print(pretty(matmul(a, inverse(a))))
    print(determinant(a), exact_determinant([[4, 3, 2], [2, 1, 3], [3, 2, 1]]))
    print(solve(a, [25.0, 10.0, 16.0]))
