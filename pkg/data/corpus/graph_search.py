"""Breadth-first, depth-first, Dijkstra and topological sort on adjacency maps."""

import heapq
from collections import defaultdict, deque
from typing import Dict, Hashable, Iterable, List, Optional, Set, Tuple

Node = Hashable


class Graph:
    def __init__(self, directed: bool = False):
        self.directed = directed
        self._edges: Dict[Node, Dict[Node, float]] = defaultdict(dict)

    def add_node(self, node: Node) -> None:
        self._edges.setdefault(node, {})

    def add_edge(self, u: Node, v: Node, weight: float = 1.0) -> None:
        if weight < 0:
            raise ValueError("negative weights are not supported")
        self._edges[u][v] = weight
        self.add_node(v)
        if not self.directed:
            self._edges[v][u] = weight

    def nodes(self) -> List[Node]:
        return list(self._edges)

    def neighbors(self, node: Node) -> Iterable[Tuple[Node, float]]:
        return self._edges.get(node, {}).items()

    def edge_count(self) -> int:
        total = sum(len(targets) for targets in self._edges.values())
        return total if self.directed else total // 2

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Node, Node]], directed: bool = False) -> "Graph":
        graph = cls(directed=directed)
        for u, v in pairs:
            graph.add_edge(u, v)
        return graph


def bfs_order(graph: Graph, start: Node) -> List[Node]:
    seen = {start}
    order = []
    queue = deque([start])
    while queue:
        node = queue.popleft()
        order.append(node)
        for neighbor, _ in graph.neighbors(node):
            if neighbor not in seen:
                seen.add(neighbor)
                queue.append(neighbor)
    return order


def dfs_order(graph: Graph, start: Node) -> List[Node]:
    seen: Set[Node] = set()
    order = []
    stack = [start]
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        order.append(node)
        neighbors = [n for n, _ in graph.neighbors(node)]
        for neighbor in reversed(neighbors):
            if neighbor not in seen:
                stack.append(neighbor)
    return order


def shortest_path(graph: Graph, source: Node, target: Node) -> Optional[Tuple[float, List[Node]]]:
    """Dijkstra's algorithm. Returns (distance, path) or None when unreachable."""
    dist: Dict[Node, float] = {source: 0.0}
    previous: Dict[Node, Node] = {}
    heap = [(0.0, 0, source)]
    counter = 1
    visited: Set[Node] = set()
    while heap:
        d, _, node = heapq.heappop(heap)
        if node in visited:
            continue
        visited.add(node)
        if node == target:
            path = [node]
            while path[-1] != source:
                path.append(previous[path[-1]])
            return d, path[::-1]
        for neighbor, weight in graph.neighbors(node):
            candidate = d + weight
            if candidate < dist.get(neighbor, float("inf")):
                dist[neighbor] = candidate
                previous[neighbor] = node
                heapq.heappush(heap, (candidate, counter, neighbor))
                counter += 1
    return None


def topological_sort(graph: Graph) -> List[Node]:
    """Kahn's algorithm; raises ValueError when the graph has a cycle."""
    if not graph.directed:
        raise ValueError("topological sort needs a directed graph")
    indegree: Dict[Node, int] = {node: 0 for node in graph.nodes()}
    for node in graph.nodes():
        for neighbor, _ in graph.neighbors(node):
            indegree[neighbor] += 1
    ready = deque(sorted((n for n, d in indegree.items() if d == 0), key=str))
    order = []
    while ready:
        node = ready.popleft()
        order.append(node)
        for neighbor, _ in graph.neighbors(node):
            indegree[neighbor] -= 1
            if indegree[neighbor] == 0:
                ready.append(neighbor)
    if len(order) != len(indegree):
        raise ValueError("graph contains a cycle")
    return order


def connected_components(graph: Graph) -> List[List[Node]]:
    seen: Set[Node] = set()
    components = []
    for node in graph.nodes():
        if node in seen:
            continue
        component = bfs_order(graph, node)
        seen.update(component)
        components.append(component)
    return components


if __name__ == "__main__":
    g = Graph()
    for u, v, w in [("a", "b", 4), ("a", "c", 1), ("c", "b", 2), ("b", "d", 5), ("c", "d", 8)]:
        g.add_edge(u, v, w)
    print(bfs_order(g, "a"))
    print(dfs_order(g, "a"))
    print(shortest_path(g, "a", "d"))
    dag = Graph.from_pairs([("shirt", "tie"), ("tie", "jacket"), ("pants", "shoes"), ("pants", "belt"),
                            ("belt", "jacket"), ("socks", "shoes")], directed=True)
    print(topological_sort(dag))
