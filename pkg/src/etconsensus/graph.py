"""Directed weighted communication topology.

Edge weight ``a[i, j] > 0`` means agent ``i`` receives information from
agent ``j``; agent indices are 0-based everywhere inside the library (the
config layer translates to 1-based for users).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from . import matlib


@dataclass(frozen=True)
class DirectedGraph:
    """Weighted digraph over ``n_agents`` nodes given by its adjacency matrix."""

    weights: np.ndarray = field(repr=False)

    def __init__(self, weights):
        w = matlib.as_matrix(weights, name="adjacency weights")
        matlib.require_square(w, "adjacency weights")
        if w.shape[0] < 1:
            raise DimensionError("graph needs at least one agent")
        if (w < 0).any():
            raise DimensionError("adjacency weights must be nonnegative")
        if (np.diag(w) != 0).any():
            raise DimensionError("self-loops are not allowed (diagonal must be 0)")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n_agents: int, edges, default_weight: float = 1.0) -> "DirectedGraph":
        """Build from ``(receiver, sender)`` or ``(receiver, sender, weight)`` tuples."""
        w = np.zeros((n_agents, n_agents))
        for edge in edges:
            if len(edge) == 2:
                i, j = edge
                weight = default_weight
            elif len(edge) == 3:
                i, j, weight = edge
            else:
                raise DimensionError(f"edge {edge!r} must have 2 or 3 entries")
            if not (0 <= i < n_agents and 0 <= j < n_agents):
                raise IndexError(f"edge {edge!r} out of range for {n_agents} agents")
            w[i, j] = weight
        return cls(w)

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    def laplacian(self) -> np.ndarray:
        """Degree-minus-adjacency matrix; rows sum to zero."""
        return np.diag(self.weights.sum(axis=1)) - self.weights

    def in_neighbors(self, i: int) -> list[int]:
        """Agents agent ``i`` receives from."""
        self._check_index(i)
        return [int(j) for j in np.flatnonzero(self.weights[i] > 0)]

    def out_neighbors(self, j: int) -> list[int]:
        """Agents that receive from agent ``j`` (broadcast targets)."""
        self._check_index(j)
        return [int(i) for i in np.flatnonzero(self.weights[:, j] > 0)]

    def has_spanning_tree(self) -> bool:
        """True iff some root has a directed information path to every agent."""
        n = self.n_agents
        for root in range(n):
            if len(self._reachable(root)) == n:
                return True
        return False

    def _reachable(self, root: int) -> set[int]:
        seen = {root}
        stack = [root]
        while stack:
            u = stack.pop()
            for v in self.out_neighbors(u):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def _check_index(self, i: int) -> None:
        if not (0 <= i < self.n_agents):
            raise IndexError(f"agent index {i} out of range [0, {self.n_agents})")
