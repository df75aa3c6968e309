"""Label hierarchy parsing, validation, and queries.

A hierarchy is a forest of labels. Ids are assigned breadth-first in
document order, so every level occupies a contiguous id range and
per-level slicing is cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml


class HierarchyError(ValueError):
    """Raised for structurally invalid hierarchy documents or queries."""


@dataclass(frozen=True)
class LabelHierarchy:
    """Immutable view of a parsed label forest.

    labels: label names, index == label id (M = len(labels))
    parent_of: child id -> parent id (level-1 labels absent)
    level_of: label id -> 1-based level index
    leaf_ids: ids with no children, in id order
    level_sizes: number of labels per level, index 0 == level 1
    """

    labels: tuple[str, ...]
    parent_of: dict[int, int]
    level_of: dict[int, int]
    leaf_ids: tuple[int, ...]
    level_sizes: tuple[int, ...]
    _index: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._index:
            object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.labels)})

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def num_levels(self) -> int:
        return len(self.level_sizes)

    def id_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise HierarchyError(f"unknown label name: {name!r}") from None

    def children_of(self, label_id: int) -> list[int]:
        return [c for c, p in self.parent_of.items() if p == label_id]

    def ancestors_of(self, label_id: int) -> list[int]:
        """Parent chain from immediate parent up to the level-1 root."""
        chain = []
        cur = label_id
        while cur in self.parent_of:
            cur = self.parent_of[cur]
            chain.append(cur)
        return chain

    def level_slice(self, level: int) -> slice:
        """Contiguous id range of a 1-based level."""
        if not 1 <= level <= self.num_levels:
            raise HierarchyError(f"level {level} out of range 1..{self.num_levels}")
        start = sum(self.level_sizes[: level - 1])
        return slice(start, start + self.level_sizes[level - 1])

    def leaf_level_of(self, leaf_id: int, level: int) -> int:
        """Ancestor of a leaf at the given level (the leaf itself if it sits there)."""
        if self.level_of[leaf_id] == level:
            return leaf_id
        for anc in self.ancestors_of(leaf_id):
            if self.level_of[anc] == level:
                return anc
        raise HierarchyError(f"leaf {leaf_id} has no ancestor at level {level}")

    def validate(self):
        m = self.num_labels
        if len(set(self.labels)) != m:
            raise HierarchyError("label names not unique")
        if not self.leaf_ids:
            raise HierarchyError("hierarchy has no leaves")
        if sum(self.level_sizes) != m:
            raise HierarchyError("level sizes do not sum to label count")
        for child, parent in self.parent_of.items():
            if self.level_of[child] != self.level_of[parent] + 1:
                raise HierarchyError(
                    f"level of {self.labels[child]!r} is not parent level + 1"
                )
        for i in range(m):
            seen = {i}
            cur = i
            while cur in self.parent_of:
                cur = self.parent_of[cur]
                if cur in seen:
                    raise HierarchyError("cycle detected")
                seen.add(cur)
            if self.level_of[cur] != 1:
                raise HierarchyError(f"chain from {self.labels[i]!r} does not reach level 1")


class LabelVector:
    """Binary assignment over all hierarchy labels, ancestor-closed by construction."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        self.bits = np.asarray(bits, dtype=np.uint8)

    def __len__(self):
        return self.bits.shape[0]

    def __eq__(self, other):
        return isinstance(other, LabelVector) and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"LabelVector(active={self.active_ids()})"

    def active_ids(self) -> list[int]:
        return np.flatnonzero(self.bits).tolist()

    def is_closed(self, h: LabelHierarchy) -> bool:
        for c, p in h.parent_of.items():
            if self.bits[c] and not self.bits[p]:
                return False
        return True


@dataclass(frozen=True)
class EdgeList:
    """Directed (source, target) pairs over hierarchy node ids."""

    edges: tuple[tuple[int, int], ...]
    includes_reverse: bool
    includes_self_loops: bool

    def __len__(self):
        return len(self.edges)


def _child_items(value, parent: str) -> list[tuple[str, object]]:
    """Normalize a node's children to (name, subtree) pairs.

    Accepts a mapping, a list whose entries are scalars or single-key
    mappings, or None for no children.
    """
    if value is None:
        return []
    if isinstance(value, dict):
        items = list(value.items())
    elif isinstance(value, list):
        items = []
        for entry in value:
            if isinstance(entry, str):
                items.append((entry, None))
            elif isinstance(entry, dict) and len(entry) == 1:
                items.append(next(iter(entry.items())))
            else:
                raise HierarchyError(
                    f"malformed child entry under {parent!r}: {entry!r}"
                )
    else:
        raise HierarchyError(f"malformed children of {parent!r}: {value!r}")
    for name, _ in items:
        if not isinstance(name, str) or not name:
            raise HierarchyError(f"label name under {parent!r} is not a string: {name!r}")
    return items


def parse_hierarchy(text: str) -> LabelHierarchy:
    """Parse a YAML hierarchy document into a LabelHierarchy.

    Ids are assigned breadth-first in document order. A single top-level
    "Root" key is treated as a synthetic wrapper and stripped.
    """
    doc = yaml.safe_load(text)
    if doc is None or doc == {} or doc == []:
        raise HierarchyError("empty document")
    if isinstance(doc, dict) and len(doc) == 1 and next(iter(doc)) == "Root":
        doc = doc["Root"]
        if doc is None:
            raise HierarchyError("empty document")

    labels: list[str] = []
    parent_of: dict[int, int] = {}
    level_of: dict[int, int] = {}
    level_sizes: list[int] = []
    first_parent: dict[str, int | None] = {}

    queue = [(name, sub, None) for name, sub in _child_items(doc, "Root")]
    if not queue:
        raise HierarchyError("empty document")
    level = 1
    while queue:
        next_queue = []
        for name, subtree, parent_id in queue:
            # a name reappearing on its own ancestor chain is a true cycle
            cur = parent_id
            while cur is not None:
                if labels[cur] == name:
                    raise HierarchyError("cycle detected")
                cur = parent_of.get(cur)
            if name in first_parent:
                if first_parent[name] != parent_id:
                    raise HierarchyError(f"child listed under two parents: {name!r}")
                raise HierarchyError(f"duplicate label name: {name!r}")
            label_id = len(labels)
            labels.append(name)
            first_parent[name] = parent_id
            level_of[label_id] = level
            if parent_id is not None:
                parent_of[label_id] = parent_id
            next_queue.append((label_id, subtree))
        level_sizes.append(len(queue))
        queue = []
        for label_id, subtree in next_queue:
            for child_name, child_sub in _child_items(subtree, labels[label_id]):
                queue.append((child_name, child_sub, label_id))
        level += 1

    parents = set(parent_of.values())
    leaf_ids = tuple(i for i in range(len(labels)) if i not in parents)
    h = LabelHierarchy(
        labels=tuple(labels),
        parent_of=parent_of,
        level_of=level_of,
        leaf_ids=leaf_ids,
        level_sizes=tuple(level_sizes),
    )
    h.validate()
    return h


def serialize_hierarchy(h: LabelHierarchy) -> str:
    """Canonical YAML for a hierarchy; parse(serialize(h)) reproduces h."""
    children: dict[int, list[int]] = {i: [] for i in range(h.num_labels)}
    roots: list[int] = []
    for i in range(h.num_labels):
        if i in h.parent_of:
            children[h.parent_of[i]].append(i)
        else:
            roots.append(i)

    def subtree(ids: list[int]):
        if all(not children[i] for i in ids):
            return [h.labels[i] for i in ids]
        return {h.labels[i]: (subtree(children[i]) if children[i] else None) for i in ids}

    doc = {"Root": subtree(roots)}
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def ancestor_closure(leaf_names, h: LabelHierarchy) -> LabelVector:
    """Label vector with the named leaves and all their ancestors active."""
    bits = np.zeros(h.num_labels, dtype=np.uint8)
    for name in leaf_names:
        label_id = h.id_of(name)
        if label_id not in h.leaf_ids:
            raise HierarchyError(f"label {name!r} is not a leaf")
        bits[label_id] = 1
        for anc in h.ancestors_of(label_id):
            bits[anc] = 1
    return LabelVector(bits)


def build_edges(h: LabelHierarchy, add_reverse: bool = True,
                add_self_loops: bool = True) -> EdgeList:
    """Edge list over the M hierarchy nodes: parent->child links, optionally
    reversed and with self-loops appended."""
    edges = [(p, c) for c, p in sorted(h.parent_of.items())]
    if add_reverse:
        edges.extend([(c, p) for p, c in list(edges)])
    if add_self_loops:
        edges.extend([(i, i) for i in range(h.num_labels)])
    if len(set(edges)) != len(edges):
        raise HierarchyError("duplicate edges")
    return EdgeList(tuple(edges), add_reverse, add_self_loops)


def level_stats(dataset, h: LabelHierarchy) -> dict:
    """Per-level label cardinality (mean active labels per sample) and
    density (cardinality / level size).

    dataset: list of LabelVector or an (N, M) binary array.
    """
    if isinstance(dataset, np.ndarray):
        mat = dataset
    else:
        mat = np.stack([v.bits for v in dataset]) if dataset else np.zeros((0, h.num_labels))
    if mat.shape[0] == 0:
        raise HierarchyError("empty dataset")
    cardinality = []
    density = []
    for level in range(1, h.num_levels + 1):
        sl = h.level_slice(level)
        card = float(mat[:, sl].sum(axis=1).mean())
        cardinality.append(card)
        density.append(card / h.level_sizes[level - 1])
    return {"cardinality": cardinality, "density": density}
