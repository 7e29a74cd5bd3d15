"""Aggregation trees, summing matrices and their Kronecker extension.

Vectorisation contract used everywhere in this package: a time slice ``Y_t``
of shape ``(n, m)`` (nodes x variables) is flattened column-wise, so entries
``0..n-1`` hold variable 0 at every node, ``n..2n-1`` variable 1, and so on.
Use :func:`vec` / :func:`unvec` rather than reshaping by hand.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

__all__ = [
    "HierarchyError",
    "NodeTree",
    "Hierarchy",
    "MultiPanel",
    "build_hierarchy",
    "constraint_matrices",
    "kron_extend",
    "aggregate_bottom",
    "vec",
    "unvec",
    "load_hierarchy",
    "dump_hierarchy",
    "example_tree",
    "coherence_violation",
]


class HierarchyError(ValueError):
    """Raised for structurally invalid trees or shape mismatches."""


def vec(Y: np.ndarray) -> np.ndarray:
    """Stack the columns of ``Y`` (..., n, m) into (..., n*m), variable-major."""
    Y = np.asarray(Y)
    return np.swapaxes(Y, -1, -2).reshape(*Y.shape[:-2], Y.shape[-1] * Y.shape[-2])


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`vec`: (..., n*m) -> (..., n, m)."""
    v = np.asarray(v)
    m = v.shape[-1] // n
    if m * n != v.shape[-1]:
        raise HierarchyError(f"length {v.shape[-1]} is not a multiple of n={n}")
    return np.swapaxes(v.reshape(*v.shape[:-1], m, n), -1, -2)


@dataclass(frozen=True)
class NodeTree:
    """Ordered node list plus parent links.

    ``nodes`` must be level-major (all aggregates before all bottom nodes).
    Use :meth:`from_parents` to get that ordering from arbitrary input.
    """

    nodes: tuple[str, ...]
    parent: Mapping[str, str]
    labels: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_parents(
        cls,
        parents: Mapping[str, str | None] | Sequence[tuple[str, str | None]],
        labels: Mapping[str, str] | None = None,
    ) -> "NodeTree":
        """Build a tree from ``node -> parent`` pairs (``None`` marks the root).

        Aggregates come first ordered by depth, then bottom nodes ordered by
        depth; ties keep input order.
        """
        items = list(parents.items()) if isinstance(parents, Mapping) else list(parents)
        seen: dict[str, int] = {}
        for node, _ in items:
            if node in seen:
                raise HierarchyError(f"duplicate node {node!r}")
            seen[node] = len(seen)
        parent = {str(k): str(v) for k, v in items if v is not None}
        roots = [k for k, v in items if v is None]
        if len(roots) != 1:
            raise HierarchyError(f"expected exactly one root, found {roots or 'none'}")
        _check_links(list(seen), parent)
        depth = _depths(list(seen), parent)
        has_child = set(parent.values())
        agg = sorted((n for n in seen if n in has_child), key=lambda n: (depth[n], seen[n]))
        bottom = sorted((n for n in seen if n not in has_child), key=lambda n: (depth[n], seen[n]))
        return cls(tuple(agg + bottom), parent, dict(labels or {}))

    def children(self, node: str) -> list[str]:
        return [n for n in self.nodes if self.parent.get(n) == node]

    def label(self, node: str) -> str:
        return self.labels.get(node, node)


def _check_links(nodes: Sequence[str], parent: Mapping[str, str]) -> None:
    known = set(nodes)
    for child, par in parent.items():
        if child not in known:
            raise HierarchyError(f"parent given for unknown node {child!r}")
        if par not in known:
            raise HierarchyError(f"node {child!r} references unknown parent {par!r}")


def _depths(nodes: Sequence[str], parent: Mapping[str, str]) -> dict[str, int]:
    depth: dict[str, int] = {}
    for start in nodes:
        path: list[str] = []
        node = start
        while node not in depth and node in parent:
            if node in path:
                raise HierarchyError(f"cycle detected through node {node!r}")
            path.append(node)
            node = parent[node]
        depth.setdefault(node, 0)
        for p in reversed(path):
            depth[p] = depth[parent[p]] + 1
    return depth


@dataclass(frozen=True, eq=False)
class Hierarchy:
    """A validated tree with its summing matrix ``S`` (n x n_b) and ``A`` (n_a x n_b)."""

    tree: NodeTree
    S: np.ndarray
    A: np.ndarray

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def n_b(self) -> int:
        return self.S.shape[1]

    @property
    def n_a(self) -> int:
        return self.n - self.n_b

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.tree.nodes

    @property
    def bottom_nodes(self) -> tuple[str, ...]:
        return self.tree.nodes[self.n_a:]

    @property
    def aggregate_nodes(self) -> tuple[str, ...]:
        return self.tree.nodes[: self.n_a]


def build_hierarchy(tree: NodeTree) -> Hierarchy:
    """Validate ``tree`` and build ``S`` so that ``y = S @ b`` for every variable."""
    nodes = list(tree.nodes)
    if len(set(nodes)) != len(nodes):
        raise HierarchyError("duplicate node identifiers")
    if not nodes:
        raise HierarchyError("empty tree")
    parent = dict(tree.parent)
    _check_links(nodes, parent)
    roots = [n for n in nodes if n not in parent]
    if len(roots) != 1:
        raise HierarchyError(f"expected exactly one root, found {roots}")
    _depths(nodes, parent)  # raises on cycles

    has_child = set(parent.values())
    if len(nodes) == 1:
        raise HierarchyError(f"root {nodes[0]!r} has no children")
    first_leaf = next(i for i, n in enumerate(nodes) if n not in has_child)
    for node in nodes[first_leaf:]:
        if node in has_child:
            raise HierarchyError(f"bottom node {node!r} has children")
    agg, bottom = nodes[:first_leaf], nodes[first_leaf:]

    col = {b: j for j, b in enumerate(bottom)}
    row = {a: i for i, a in enumerate(agg)}
    A = np.zeros((len(agg), len(bottom)), dtype=np.int64)
    for b in bottom:
        node = b
        while node in parent:
            node = parent[node]
            A[row[node], col[b]] = 1
    S = np.vstack([A, np.eye(len(bottom), dtype=np.int64)])
    S.setflags(write=False)
    A.setflags(write=False)
    return Hierarchy(tree=tree, S=S, A=A)


def constraint_matrices(h: Hierarchy) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(J, C)`` with ``J = [0 | I_nb]`` and ``C = [I_na | -A]``."""
    J = np.hstack([np.zeros((h.n_b, h.n_a), dtype=np.int64), np.eye(h.n_b, dtype=np.int64)])
    C = np.hstack([np.eye(h.n_a, dtype=np.int64), -h.A])
    return J, C


def kron_extend(h: Hierarchy, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(S*, C*, J*)``: each single-variable matrix Kronecker'd with ``I_m``."""
    if int(m) != m or m < 1:
        raise ValueError(f"number of variables must be a positive integer, got {m!r}")
    eye = np.eye(int(m), dtype=np.int64)
    J, C = constraint_matrices(h)
    return np.kron(eye, h.S), np.kron(eye, C), np.kron(eye, J)


def coherence_violation(h: Hierarchy, Y: np.ndarray) -> np.ndarray:
    """Max-abs constraint violation ``||C* vec(Y_t)||_inf`` per leading index of Y (..., n, m)."""
    Y = np.asarray(Y, dtype=float)
    _, C = constraint_matrices(h)
    # C acts per variable block, so apply it to the node axis directly
    viol = np.einsum("an,...nm->...am", C, Y)
    return np.abs(viol).max(axis=(-2, -1)) if viol.size else np.zeros(Y.shape[:-2])


@dataclass(frozen=True, eq=False)
class MultiPanel:
    """Observations of shape (T, n, m) aligned with a hierarchy's node order."""

    data: np.ndarray
    node_order: tuple[str, ...]
    var_order: tuple[str, ...]
    t0: int | str = 0
    frequency: str = "index"
    coherent: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3:
            raise HierarchyError(f"panel data must be 3-d (T, n, m), got shape {data.shape}")
        if data.shape[1:] != (len(self.node_order), len(self.var_order)):
            raise HierarchyError(
                f"panel shape {data.shape} does not match {len(self.node_order)} nodes "
                f"x {len(self.var_order)} variables"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "node_order", tuple(self.node_order))
        object.__setattr__(self, "var_order", tuple(self.var_order))

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def m(self) -> int:
        return self.data.shape[2]

    def time_labels(self) -> list[str]:
        if self.frequency == "M":
            start = np.datetime64(str(self.t0), "M")
            return [str(start + k) for k in range(self.T)]
        return [str(int(self.t0) + k) for k in range(self.T)]

    def head(self, length: int) -> "MultiPanel":
        return MultiPanel(self.data[:length], self.node_order, self.var_order, self.t0, self.frequency, self.coherent)

    def check_coherent(self, h: Hierarchy) -> float:
        """Largest relative constraint violation; raises if the panel claims coherence but fails."""
        if self.node_order != h.nodes:
            raise HierarchyError("panel node order differs from hierarchy node order")
        worst = float(coherence_violation(h, self.data).max(initial=0.0))
        scale = 1.0 + float(np.abs(self.data).max(initial=0.0))
        if self.coherent and worst > 1e-8 * scale:
            raise HierarchyError(f"panel flagged coherent but violation is {worst:.3g}")
        return worst / scale


def aggregate_bottom(h: Hierarchy, B: np.ndarray, var_order: Sequence[str] | None = None) -> MultiPanel:
    """Sum bottom-level series ``B`` (T, n_b, m) up the tree into a coherent panel."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 3 or B.shape[1] != h.n_b:
        raise HierarchyError(f"bottom array must have shape (T, {h.n_b}, m), got {B.shape}")
    Y = np.einsum("nb,tbm->tnm", h.S.astype(float), B)
    m = B.shape[2]
    var_order = tuple(var_order) if var_order is not None else tuple(f"v{j + 1}" for j in range(m))
    panel = MultiPanel(Y, h.nodes, var_order, coherent=True)
    panel.check_coherent(h)
    return panel


def example_tree() -> NodeTree:
    """The three-level tree Total -> {A, B}, A -> {AA, AB}, B -> {BA, BB, BC}."""
    return NodeTree.from_parents(
        {"Total": None, "A": "Total", "B": "Total",
         "AA": "A", "AB": "A", "BA": "B", "BB": "B", "BC": "B"}
    )


# --- hierarchy file -----------------------------------------------------------
#
# YAML document:
#
#   nodes:
#     - name: Total
#     - name: A
#       parent: Total
#       label: Region A      # optional
#
# The root is the single entry without ``parent``.

def load_hierarchy(path: str | Path) -> Hierarchy:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise HierarchyError(f"{path}: expected a mapping with a 'nodes' list")
    pairs, labels = [], {}
    for i, entry in enumerate(doc["nodes"]):
        if not isinstance(entry, dict) or "name" not in entry:
            raise HierarchyError(f"{path}: node entry {i} needs a 'name'")
        name = str(entry["name"])
        par = entry.get("parent")
        pairs.append((name, None if par is None else str(par)))
        if "label" in entry:
            labels[name] = str(entry["label"])
    return build_hierarchy(NodeTree.from_parents(pairs, labels))


def dump_hierarchy(h: Hierarchy, path: str | Path) -> None:
    entries = []
    for node in h.nodes:
        entry: dict[str, str] = {"name": node}
        if node in h.tree.parent:
            entry["parent"] = h.tree.parent[node]
        if node in h.tree.labels:
            entry["label"] = h.tree.labels[node]
        entries.append(entry)
    Path(path).write_text(yaml.safe_dump({"nodes": entries}, sort_keys=False))
