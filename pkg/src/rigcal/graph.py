"""Sparse connected co-visibility graph over all views.

Anchors are chosen by farthest point sampling in (1 - score) dissimilarity
and mutually connected; every other view links to its highest-score
neighbors; a maximum-score spanning tree repairs any remaining
disconnection. Ties always break toward the lowest view id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .errors import GraphDisconnected, UnknownView
from .pointmap import MatchSet, ViewRecord


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def validate_scores(scores: np.ndarray) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("score matrix must be square")
    if np.max(np.abs(s - s.T)) > 1e-12:
        raise ValueError("score matrix must be symmetric")
    if np.any(s < 0) or np.any(s > 1):
        raise ValueError("scores must lie in [0, 1]")
    return s


def build_graph(scores: np.ndarray, k_fps: int = 10, k_nn: int = 3,
                repair: bool = True) -> List[Tuple[int, int]]:
    """Select a sparse connected edge set from a co-visibility score matrix."""
    s = validate_scores(scores)
    n = s.shape[0]
    if n < 2:
        raise ValueError("need at least two views")
    if k_fps < 1 or k_nn < 1:
        raise ValueError("k_fps and k_nn must be >= 1")
    k_fps = min(k_fps, n)

    # farthest point sampling in 1 - s, seeded at view 0
    dissim = 1.0 - s
    anchors = [0]
    mind = dissim[0].copy()
    while len(anchors) < k_fps:
        mind[anchors] = -1.0
        best = int(np.argmax(mind))  # argmax breaks ties at lowest index
        anchors.append(best)
        mind = np.minimum(mind, dissim[best])
    anchor_set = set(anchors)

    edges = set()
    for i, a in enumerate(anchors):
        for b in anchors[i + 1:]:
            if a != b:
                edges.add((min(a, b), max(a, b)))

    for v in range(n):
        if v in anchor_set:
            continue
        order = np.lexsort((np.arange(n), -s[v]))  # score desc, id asc
        added = 0
        for u in order:
            if u == v or added >= k_nn:
                continue
            if s[v, u] <= 0:
                break
            edges.add((min(v, int(u)), max(v, int(u))))
            added += 1

    uf = _UnionFind(n)
    for a, b in edges:
        uf.union(a, b)
    components = len({uf.find(i) for i in range(n)})
    if components > 1:
        if not repair:
            raise GraphDisconnected("co-visibility graph is disconnected")
        # maximum-score spanning tree over all pairs (Kruskal, deterministic)
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
        pairs.sort(key=lambda e: (-s[e[0], e[1]], e[0], e[1]))
        for a, b in pairs:
            if uf.union(a, b):
                edges.add((a, b))

    return sorted(edges)


@dataclass
class SceneGraph:
    """Views as vertices, overlapping pairs as edges carrying match sets."""

    views: List[ViewRecord]
    edges: Dict[Tuple[int, int], MatchSet] = field(default_factory=dict)

    def __post_init__(self):
        ids = [v.view_id for v in self.views]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate view ids")
        keys = {(v.camera_id, v.pose_index) for v in self.views}
        if len(keys) != len(self.views):
            raise ValueError("duplicate (camera, pose index) pairs")
        id_set = set(ids)
        for (a, b), m in self.edges.items():
            if a == b:
                raise ValueError("self loop in scene graph")
            if a > b:
                raise ValueError("edges must be stored as (min, max)")
            if a not in id_set or b not in id_set:
                raise UnknownView(f"edge ({a}, {b}) references unknown view")
            if len(m) < 1:
                raise ValueError(f"edge ({a}, {b}) has no match pairs")

    def view(self, view_id: int) -> ViewRecord:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise UnknownView(f"no view with id {view_id}")

    def edges_of_view(self, view_id: int) -> List[Tuple[int, int]]:
        if view_id not in {v.view_id for v in self.views}:
            raise UnknownView(f"no view with id {view_id}")
        return sorted(e for e in self.edges if view_id in e)

    @property
    def camera_ids(self) -> List[int]:
        return sorted({v.camera_id for v in self.views})


def edges_of_view(g: SceneGraph, view_id: int):
    return g.edges_of_view(view_id)
