"""Greedy and minimum-raggedness paragraph wrapping plus simple justification."""

import re
from typing import List

_WORD = re.compile(r"\S+")


def split_words(text: str) -> List[str]:
    return _WORD.findall(text)


def wrap_greedy(text: str, width: int) -> List[str]:
    if width <= 0:
        raise ValueError("width must be positive")
    lines: List[str] = []
    current: List[str] = []
    length = 0
    for word in split_words(text):
        extra = len(word) + (1 if current else 0)
        if current and length + extra > width:
            lines.append(" ".join(current))
            current, length = [word], len(word)
        else:
            current.append(word)
            length += extra
    if current:
        lines.append(" ".join(current))
    return lines


def wrap_balanced(text: str, width: int) -> List[str]:
    """Dynamic programming wrap that minimizes the sum of squared trailing spaces."""
    words = split_words(text)
    n = len(words)
    if n == 0:
        return []
    cost = [0.0] * (n + 1)
    breaks = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        best = float("inf")
        length = -1
        for j in range(i, n):
            length += len(words[j]) + 1
            if length > width and j > i:
                break
            slack = width - length
            penalty = 0.0 if j == n - 1 else float(slack * slack)
            if penalty + cost[j + 1] < best:
                best = penalty + cost[j + 1]
                breaks[i] = j + 1
        cost[i] = best
    lines = []
    i = 0
    while i < n:
        j = breaks[i]
        lines.append(" ".join(words[i:j]))
        i = j
    return lines


def justify(line: str, width: int) -> str:
    words = line.split()
    if len(words) < 2:
        return line.ljust(width)
    gaps = len(words) - 1
    spaces = width - sum(len(w) for w in words)
    base, extra = divmod(spaces, gaps)
    pieces = []
    for i, word in enumerate(words[:-1]):
        pieces.append(word)
        pieces.append(" " * (base + (1 if i < extra else 0)))
    pieces.append(words[-1])
    return "".join(pieces)


def format_paragraph(text: str, width: int = 60, balanced: bool = True, justified: bool = False) -> str:
    lines = wrap_balanced(text, width) if balanced else wrap_greedy(text, width)
    if justified:
        lines = [justify(line, width) for line in lines[:-1]] + lines[-1:]
    return "\n".join(lines)


def indent_block(text: str, prefix: str = "    ") -> str:
    return "\n".join(prefix + line if line.strip() else line for line in text.splitlines())


def dedent_block(text: str) -> str:
    lines = text.splitlines()
    margins = [len(line) - len(line.lstrip()) for line in lines if line.strip()]
    margin = min(margins) if margins else 0
    return "\n".join(line[margin:] for line in lines)


if __name__ == "__main__":
    sample = ("The quick brown fox jumps over the lazy dog while the cat watches from the warm "
              "windowsill and the radio plays an old song about rivers and trains.")
    print(format_paragraph(sample, 30, balanced=False))
    print()
    print(format_paragraph(sample, 30))
    print()
    print(format_paragraph(sample, 30, justified=True))
    print(indent_block("a\n\nb"))
