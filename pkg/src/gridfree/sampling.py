"""Seeded random connected systems.

Topology model: a uniformly random labelled spanning tree (random Pruefer
sequence) plus independent Bernoulli extra edges. Line susceptances,
communication weights and capacities are log-uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .network import laplacian

DEFAULT_EXTRA_EDGE_PROB = 0.3
DEFAULT_RANGE = (0.1, 10.0)


def log_uniform(rng: np.random.Generator, lo: float, hi: float, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def random_tree(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    if n < 2:
        return []
    if n == 2:
        return [(0, 1)]
    seq = rng.integers(0, n, size=n - 2).tolist()
    tree = nx.from_prufer_sequence(seq)
    return sorted((min(u, v), max(u, v)) for u, v in tree.edges())


def _non_tree_pairs(n, tree):
    used = set(tree)
    return [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in used]


def random_connected_edges(n, rng, p_extra=DEFAULT_EXTRA_EDGE_PROB):
    """Spanning tree plus each remaining pair with probability ``p_extra``."""
    tree = random_tree(n, rng)
    rest = _non_tree_pairs(n, tree)
    keep = rng.random(len(rest)) < p_extra
    return sorted(tree + [pair for pair, k in zip(rest, keep) if k])


def nested_edge_order(n, rng) -> list[tuple[int, int]]:
    """All pairs ordered as: a random spanning tree, then the rest shuffled.

    Any prefix of length ``>= n - 1`` is a connected graph, and prefixes are
    nested, so a single draw yields a family of graphs of increasing density.
    """
    tree = random_tree(n, rng)
    rest = _non_tree_pairs(n, tree)
    perm = rng.permutation(len(rest))
    return tree + [rest[k] for k in perm]


@dataclass(frozen=True, eq=False)
class SampledSystem:
    lines: list
    links: list
    capacities: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.capacities.size

    @property
    def B(self) -> np.ndarray:
        return laplacian(self.n_nodes, self.lines)

    @property
    def L_W(self) -> np.ndarray:
        return laplacian(self.n_nodes, self.links)

    @property
    def D_p(self) -> np.ndarray:
        return np.diag(1.0 / self.capacities)


def random_system(
    rng: np.random.Generator,
    n: int,
    susceptance_range=DEFAULT_RANGE,
    weight_range=DEFAULT_RANGE,
    capacity_range=DEFAULT_RANGE,
    p_extra: float = DEFAULT_EXTRA_EDGE_PROB,
) -> SampledSystem:
    """Independent random electrical network, communication graph and fleet."""
    e_pairs = random_connected_edges(n, rng, p_extra)
    b = log_uniform(rng, *susceptance_range, size=len(e_pairs))
    c_pairs = random_connected_edges(n, rng, p_extra)
    w = log_uniform(rng, *weight_range, size=len(c_pairs))
    caps = log_uniform(rng, *capacity_range, size=n)
    return SampledSystem(
        lines=[(i, j, float(x)) for (i, j), x in zip(e_pairs, b)],
        links=[(i, j, float(x)) for (i, j), x in zip(c_pairs, w)],
        capacities=caps,
    )
