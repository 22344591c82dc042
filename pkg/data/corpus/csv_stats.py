"""Column statistics and group-by aggregation for CSV text."""

import csv
import io
import math
import statistics
from collections import defaultdict
from typing import Callable, Dict, Iterable, List, Optional


def read_rows(text: str, delimiter: str = ",") -> List[Dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text), delimiter=delimiter))


def to_number(value: str) -> Optional[float]:
    value = value.strip()
    if not value:
        return None
    try:
        return float(value.replace("_", ""))
    except ValueError:
        return None


def numeric_column(rows: Iterable[Dict[str, str]], name: str) -> List[float]:
    values = []
    for row in rows:
        number = to_number(row.get(name, ""))
        if number is not None and not math.isnan(number):
            values.append(number)
    return values


def describe(values: List[float]) -> Dict[str, float]:
    if not values:
        return {"count": 0}
    ordered = sorted(values)
    summary = {
        "count": len(values),
        "mean": statistics.fmean(values),
        "min": ordered[0],
        "max": ordered[-1],
        "median": statistics.median(ordered),
    }
    if len(values) > 1:
        summary["stdev"] = statistics.stdev(values)
        q1, _, q3 = statistics.quantiles(ordered, n=4)
        summary["iqr"] = q3 - q1
    return summary


def group_by(rows: Iterable[Dict[str, str]], key: str, column: str,
             reducer: Callable[[List[float]], float] = statistics.fmean) -> Dict[str, float]:
    groups: Dict[str, List[float]] = defaultdict(list)
    for row in rows:
        number = to_number(row.get(column, ""))
        if number is not None:
            groups[row.get(key, "")].append(number)
    return {name: reducer(values) for name, values in sorted(groups.items())}


def pivot(rows: Iterable[Dict[str, str]], row_key: str, col_key: str, value: str) -> Dict[str, Dict[str, float]]:
    table: Dict[str, Dict[str, float]] = defaultdict(dict)
    for row in rows:
        number = to_number(row.get(value, ""))
        if number is None:
            continue
        cell = table[row[row_key]]
        cell[row[col_key]] = cell.get(row[col_key], 0.0) + number
    return dict(table)


def render_table(table: Dict[str, Dict[str, float]]) -> str:
    columns = sorted({c for row in table.values() for c in row})
    width = max([len(c) for c in columns] + [8])
    lines = [" " * 12 + "".join(f"{c:>{width + 2}}" for c in columns)]
    for name in sorted(table):
        cells = "".join(f"{table[name].get(c, 0.0):>{width + 2}.2f}" for c in columns)
        lines.append(f"{name:<12}{cells}")
    return "\n".join(lines)


def outliers(values: List[float], k: float = 1.5) -> List[float]:
    if len(values) < 4:
        return []
    q1, _, q3 = statistics.quantiles(sorted(values), n=4)
    spread = q3 - q1
    low, high = q1 - k * spread, q3 + k * spread
    return [v for v in values if v < low or v > high]


SAMPLE = """region,quarter,product,revenue
north,Q1,widgets,1200
north,Q2,widgets,1350
south,Q1,widgets,900
south,Q2,gadgets,400
north,Q1,gadgets,700
east,Q2,widgets,15000
east,Q1,gadgets,
"""

if __name__ == "__main__":
    rows = read_rows(SAMPLE)
    revenue = numeric_column(rows, "revenue")
    print(describe(revenue))
    print(group_by(rows, "region", "revenue", reducer=sum))
    print(render_table(pivot(rows, "region", "quarter", "revenue")))
    print(outliers(revenue))
