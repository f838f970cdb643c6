"""Byte-alphabet trie with insert-or-detect-duplicate semantics.

Keys are arbitrary non-empty byte strings. End-of-key nodes carry a group
handle so the dedup engine can map a Duplicate outcome straight to the
representative request. Suffix-merging compression into a DAG is available
for frozen tries.
"""

from __future__ import annotations

from typing import Iterator, NamedTuple, Optional


class InsertOutcome(NamedTuple):
    created: bool
    group: int


class TrieNode:
    __slots__ = ("children", "is_end", "group_ref")

    def __init__(self):
        self.children: dict[int, TrieNode] = {}
        self.is_end = False
        self.group_ref: Optional[int] = None


class Trie:
    """Single-writer byte trie; reads may be shared once mutation stops.

    ``visits`` counts node steps taken by insert/contains/find, so the
    O(key length) work bound can be asserted directly.
    """

    def __init__(self):
        self.root = TrieNode()
        self.key_count = 0
        self.node_count = 1
        self.max_depth = 0
        self.visits = 0
        self._next_group = 0

    def insert(self, seq: bytes) -> InsertOutcome:
        """Insert seq; returns (created=False, existing group) on duplicate."""
        if not seq:
            raise ValueError("empty sequence")
        node = self.root
        for b in seq:
            self.visits += 1
            child = node.children.get(b)
            if child is None:
                child = TrieNode()
                node.children[b] = child
                self.node_count += 1
            node = child
        if node.is_end:
            return InsertOutcome(False, node.group_ref)
        node.is_end = True
        node.group_ref = self._next_group
        self._next_group += 1
        self.key_count += 1
        if len(seq) > self.max_depth:
            self.max_depth = len(seq)
        return InsertOutcome(True, node.group_ref)

    def find(self, seq: bytes) -> Optional[int]:
        """Group handle for seq, or None if seq was never inserted."""
        node = self.root
        for b in seq:
            self.visits += 1
            node = node.children.get(b)
            if node is None:
                return None
        if not node.is_end:
            return None
        return node.group_ref

    def contains(self, seq: bytes) -> bool:
        return self.find(seq) is not None

    def stats(self) -> dict:
        return {
            "key_count": self.key_count,
            "node_count": self.node_count,
            "max_depth": self.max_depth,
        }

    def keys(self) -> Iterator[bytes]:
        """All inserted keys, lexicographically."""
        stack = [(self.root, b"")]
        while stack:
            node, prefix = stack.pop()
            if node.is_end:
                yield prefix
            for b in sorted(node.children, reverse=True):
                stack.append((node.children[b], prefix + bytes([b])))

    def compress(self) -> "CompressedDag":
        """Merge structurally identical subtrees bottom-up into a DAG.

        The trie must be frozen; the DAG accepts exactly the same key set
        with node count never exceeding the trie's.
        """
        memo: dict[tuple, DagNode] = {}

        def build(node: TrieNode) -> DagNode:
            children = tuple(
                (b, build(node.children[b])) for b in sorted(node.children)
            )
            sig = (node.is_end, tuple((b, id(c)) for b, c in children))
            merged = memo.get(sig)
            if merged is None:
                merged = DagNode(dict(children), node.is_end)
                memo[sig] = merged
            return merged

        root = build(self.root)
        return CompressedDag(root, len(memo))


class DagNode:
    __slots__ = ("children", "is_end")

    def __init__(self, children: dict[int, "DagNode"], is_end: bool):
        self.children = children
        self.is_end = is_end


class CompressedDag:
    """Read-only minimized form of a trie."""

    def __init__(self, root: DagNode, node_count: int):
        self.root = root
        self.node_count = node_count

    def contains(self, seq: bytes) -> bool:
        node = self.root
        for b in seq:
            node = node.children.get(b)
            if node is None:
                return False
        return node.is_end

    def keys(self) -> Iterator[bytes]:
        stack = [(self.root, b"")]
        while stack:
            node, prefix = stack.pop()
            if node.is_end:
                yield prefix
            for b in sorted(node.children, reverse=True):
                stack.append((node.children[b], prefix + bytes([b])))
