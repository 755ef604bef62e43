"""Skeleton topology and the multi-hop attention support set.

A skeleton is an undirected tree over joints (the physical bones).
Spatial attention is restricted to joint pairs within a small graph
distance of each other; the support set lists those pairs in coordinate
form so attention can run as gather / scatter over its entries instead
of a dense joints x joints product.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigError, DataFormatError, GraphError, OutOfBoundsError
from .tensor import Tensor


@dataclass(frozen=True)
class SkeletonGraph:
    """Joint tree: `num_joints` nodes and exactly num_joints - 1 bones."""

    num_joints: int
    edges: tuple[tuple[int, int], ...]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        v = self.num_joints
        if v < 1:
            raise GraphError("skeleton needs at least one joint")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop at joint {i}")
            if not (0 <= i < v and 0 <= j < v):
                raise GraphError(f"edge ({i}, {j}) references a missing joint")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            seen.add(key)
        if len(self.edges) != v - 1:
            raise GraphError(
                f"{len(self.edges)} edges for {v} joints: a tree needs {v - 1}")
        if v > 1 and len(self._components()) != 1:
            raise GraphError("skeleton edges do not form a connected tree")

    def _components(self) -> list[set[int]]:
        unseen = set(range(self.num_joints))
        adj = self.adjacency()
        comps = []
        while unseen:
            root = unseen.pop()
            comp = {root}
            queue = deque([root])
            while queue:
                u = queue.popleft()
                for w in adj[u]:
                    if w in unseen:
                        unseen.remove(w)
                        comp.add(w)
                        queue.append(w)
            comps.append(comp)
        return comps

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_joints)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def hop_distances(self, source: int) -> np.ndarray:
        """BFS distance from `source` to every joint."""
        dist = np.full(self.num_joints, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        adj = self.adjacency()
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return dist


class AttentionSupport:
    """Ordered (query, key) joint pairs admitted by spatial attention.

    Pairs are sorted by (i, j) and always include the diagonal; the set is
    symmetric because hop distance is.
    """

    def __init__(self, num_joints: int, edge_index: np.ndarray):
        edge_index = np.asarray(edge_index, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((edge_index[:, 1], edge_index[:, 0]))
        self.num_joints = int(num_joints)
        self.edge_index = edge_index[order]
        self._row_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def num_entries(self) -> int:
        return self.edge_index.shape[0]

    def pair_rows(self, num_frames: int) -> tuple[np.ndarray, np.ndarray]:
        """Row indices into a [num_frames * V, ...] layout for every
        (frame, support pair): query rows and key rows."""
        cached = self._row_cache.get(num_frames)
        if cached is not None:
            return cached
        v = self.num_joints
        base = np.arange(num_frames, dtype=np.int64)[:, None] * v
        q_rows = (base + self.edge_index[None, :, 0]).ravel()
        k_rows = (base + self.edge_index[None, :, 1]).ravel()
        self._row_cache[num_frames] = (q_rows, k_rows)
        return q_rows, k_rows


def build_support(graph: SkeletonGraph, max_hops: int = 3) -> AttentionSupport:
    """All joint pairs within `max_hops` bones of each other (plus the
    diagonal, which is distance 0)."""
    if max_hops < 1:
        raise ConfigError(f"max_hops must be >= 1, got {max_hops}")
    pairs = []
    for i in range(graph.num_joints):
        dist = graph.hop_distances(i)
        for j in np.nonzero((dist >= 0) & (dist <= max_hops))[0]:
            pairs.append((i, int(j)))
    return AttentionSupport(graph.num_joints, np.array(pairs, dtype=np.int64))


def dense_mask(support: AttentionSupport, num_joints: int) -> Tensor:
    """0/1 mask with ones exactly at the support entries."""
    if support.edge_index.size and support.edge_index.max() >= num_joints:
        raise OutOfBoundsError("support references joints outside the mask")
    mask = np.zeros((num_joints, num_joints), dtype=np.float64)
    mask[support.edge_index[:, 0], support.edge_index[:, 1]] = 1.0
    return Tensor(mask)


def load_skeleton(path) -> SkeletonGraph:
    """Read a topology file: one `V <count>` header, one `E i j` per bone.

    Lines starting with '#' are comments.
    """
    num_joints = None
    edges: list[tuple[int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            try:
                if fields[0] == "V" and len(fields) == 2:
                    num_joints = int(fields[1])
                elif fields[0] == "E" and len(fields) == 3:
                    edges.append((int(fields[1]), int(fields[2])))
                else:
                    raise ValueError(f"unrecognized record {fields[0]!r}")
            except ValueError as e:
                raise DataFormatError(f"{path}:{lineno}: {e}") from None
    if num_joints is None:
        raise DataFormatError(f"{path}: missing 'V <count>' header")
    return SkeletonGraph(num_joints=num_joints, edges=tuple(edges))


def default_skeleton_path() -> str:
    """Path of the bundled 25-joint topology file."""
    return str(resources.files("star").joinpath("skeletons/ntu25.txt"))


def ntu25_graph() -> SkeletonGraph:
    return load_skeleton(default_skeleton_path())
