"""Prefix tree supporting insertion, deletion, prefix search and autocompletion."""

from typing import Dict, Iterator, List, Optional, Tuple


class TrieNode:
    __slots__ = ("children", "terminal", "count")

    def __init__(self):
        self.children: Dict[str, "TrieNode"] = {}
        self.terminal = False
        self.count = 0


class Trie:
    def __init__(self, words: Optional[List[str]] = None):
        self.root = TrieNode()
        self._size = 0
        for word in words or []:
            self.insert(word)

    def __len__(self) -> int:
        return self._size

    def insert(self, word: str) -> bool:
        """Add a word; returns False if it was already present."""
        node = self.root
        path = [node]
        for ch in word:
            node = node.children.setdefault(ch, TrieNode())
            path.append(node)
        if node.terminal:
            return False
        node.terminal = True
        for visited in path:
            visited.count += 1
        self._size += 1
        return True

    def _find(self, prefix: str) -> Optional[TrieNode]:
        node = self.root
        for ch in prefix:
            node = node.children.get(ch)
            if node is None:
                return None
        return node

    def __contains__(self, word: str) -> bool:
        node = self._find(word)
        return node is not None and node.terminal

    def count_prefix(self, prefix: str) -> int:
        node = self._find(prefix)
        return node.count if node else 0

    def remove(self, word: str) -> bool:
        node = self.root
        path: List[Tuple[TrieNode, str]] = []
        for ch in word:
            child = node.children.get(ch)
            if child is None:
                return False
            path.append((node, ch))
            node = child
        if not node.terminal:
            return False
        node.terminal = False
        self.root.count -= 1
        for parent, ch in path:
            child = parent.children[ch]
            child.count -= 1
            if child.count == 0:
                del parent.children[ch]
                break
        self._size -= 1
        return True

    def _walk(self, node: TrieNode, prefix: str) -> Iterator[str]:
        if node.terminal:
            yield prefix
        for ch in sorted(node.children):
            yield from self._walk(node.children[ch], prefix + ch)

    def words(self) -> List[str]:
        return list(self._walk(self.root, ""))

    def complete(self, prefix: str, limit: int = 10) -> List[str]:
        node = self._find(prefix)
        if node is None:
            return []
        results = []
        for word in self._walk(node, prefix):
            results.append(word)
            if len(results) >= limit:
                break
        return results

    def longest_common_prefix(self) -> str:
        node = self.root
        prefix = []
        while len(node.children) == 1 and not node.terminal:
            ch, node = next(iter(node.children.items()))
            prefix.append(ch)
        return "".join(prefix)


if __name__ == "__main__":
    keywords = ["def", "del", "default", "defer", "import", "in", "int", "isinstance", "is"]
    trie = Trie(keywords)
    print(len(trie), trie.complete("de"), trie.count_prefix("i"))
    trie.remove("defer")
    print(trie.words())
    print(Trie(["interval", "internal", "interface"]).longest_common_prefix())
