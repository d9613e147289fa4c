"""Graph-derived matrices: susceptance Laplacian, communication Laplacian,
capacity scaling, Kron reduction and the uniform R/X frame transform.

Node indices are 0-based everywhere in this module. Scenario files are
1-based; the conversion happens in :mod:`gridfree.scenario`.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConnectivityError, ReductionError, ValidationError

Edge = tuple[int, int, float]


def _normalize_edges(n_nodes, edges, what):
    if not isinstance(n_nodes, (int, np.integer)) or n_nodes < 1:
        raise ValidationError(f"{what}: n_nodes must be a positive integer, got {n_nodes!r}")
    seen = set()
    out = []
    for k, edge in enumerate(edges):
        try:
            i, j, w = edge
        except (TypeError, ValueError):
            raise ValidationError(f"{what}[{k}]: expected (i, j, value), got {edge!r}") from None
        i, j, w = int(i), int(j), float(w)
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise ValidationError(f"{what}[{k}]: node index out of range 0..{n_nodes - 1}")
        if i == j:
            raise ValidationError(f"{what}[{k}]: self-loop at node {i}")
        if not (math.isfinite(w) and w > 0):
            raise ValidationError(f"{what}[{k}]: value must be finite and > 0, got {w!r}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValidationError(f"{what}[{k}]: duplicate entry for pair {key}")
        seen.add(key)
        out.append((i, j, w))
    return tuple(out)


def is_connected(graph) -> bool:
    """Breadth-first reachability test.

    ``graph`` may be an :class:`ElectricalNetwork`, a :class:`CommGraph`, or a
    square matrix whose non-zero off-diagonal entries are edges (adjacency or
    Laplacian form).
    """
    if hasattr(graph, "n_nodes"):
        n = graph.n_nodes
        nbrs = [[] for _ in range(n)]
        for i, j, _ in graph.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
    else:
        M = np.asarray(graph)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValidationError("adjacency must be a square matrix")
        n = M.shape[0]
        nz = (M != 0) | (M.T != 0)
        np.fill_diagonal(nz, False)
        nbrs = [np.flatnonzero(row).tolist() for row in nz]
    if n == 0:
        return False
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def laplacian(n_nodes: int, edges) -> np.ndarray:
    """Weighted graph Laplacian from an edge list ``(i, j, w)``."""
    M = np.zeros((n_nodes, n_nodes))
    for i, j, w in edges:
        M[i, j] -= w
        M[j, i] -= w
    # diagonal as the negated off-diagonal row sum keeps M @ 1 == 0 to rounding
    np.fill_diagonal(M, 0.0)
    np.fill_diagonal(M, -M.sum(axis=1))
    return M


def edges_from_laplacian(M, rtol: float = 1e-12) -> list[Edge]:
    """Inverse of :func:`laplacian`; off-diagonal entries below ``rtol`` of
    the largest magnitude are treated as absent."""
    M = np.asarray(M, dtype=float)
    scale = np.max(np.abs(M)) if M.size else 0.0
    out = []
    for i in range(M.shape[0]):
        for j in range(i + 1, M.shape[0]):
            w = -0.5 * (M[i, j] + M[j, i])
            if w > rtol * scale:
                out.append((i, j, float(w)))
    return out


@dataclass(frozen=True)
class ElectricalNetwork:
    """Lossless (or uniform R/X) electrical network.

    ``lines`` holds ``(i, j, b)`` with ``b`` the susceptance magnitude in
    per-unit. ``rx_angle`` is ``arctan(R/X)``, shared by every line.
    """

    n_nodes: int
    lines: tuple[Edge, ...]
    rx_angle: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "lines", _normalize_edges(self.n_nodes, self.lines, "lines"))
        if self.rx_angle is not None:
            phi = float(self.rx_angle)
            if not abs(phi) < math.pi / 2:
                raise ValidationError(f"rx_angle must satisfy |phi| < pi/2, got {phi!r}")
            object.__setattr__(self, "rx_angle", phi)
        if not is_connected(self):
            raise ConnectivityError("ElectricalNetwork not connected")

    @property
    def edges(self):
        return self.lines


@dataclass(frozen=True)
class CommGraph:
    """Symmetric neighbour-communication graph, one ``(i, j, w)`` per pair."""

    n_nodes: int
    weights: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", _normalize_edges(self.n_nodes, self.weights, "weights"))
        if not is_connected(self):
            raise ConnectivityError("CommGraph not connected")

    @property
    def edges(self):
        return self.weights


@dataclass(frozen=True)
class DerFleet:
    """Available capacities of the controllable DERs, one per node (p.u.)."""

    capacities: np.ndarray = field(repr=True)

    def __post_init__(self):
        c = np.array(self.capacities, dtype=float).reshape(-1)
        if c.size == 0:
            raise ValidationError("capacities must be non-empty")
        bad = np.flatnonzero(~(np.isfinite(c) & (c > 0)))
        if bad.size:
            raise ValidationError(f"capacities[{bad[0]}] must be finite and > 0, got {c[bad[0]]!r}")
        c.setflags(write=False)
        object.__setattr__(self, "capacities", c)

    @property
    def n_nodes(self) -> int:
        return self.capacities.size

    @property
    def D_p(self) -> np.ndarray:
        return np.diag(1.0 / self.capacities)


def build_susceptance_laplacian(net: ElectricalNetwork) -> np.ndarray:
    """Susceptance matrix ``B`` of the network: ``B[i, j] = -b``, rows sum to zero."""
    return laplacian(net.n_nodes, net.lines)


def build_comm_laplacian(graph: CommGraph) -> np.ndarray:
    """Laplacian ``L_W`` of the communication graph."""
    return laplacian(graph.n_nodes, graph.weights)


@dataclass(frozen=True)
class AdmittancePartition:
    """A Laplacian-structured admittance matrix and the nodes to keep.

    The retained nodes appear in the reduced matrix in the order given.
    """

    Y: np.ndarray
    retained: tuple[int, ...]

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
            raise ValidationError("Y must be square")
        scale = max(1.0, float(np.max(np.abs(Y)))) if Y.size else 1.0
        if np.max(np.abs(Y - Y.T), initial=0.0) > 1e-12 * scale:
            raise ValidationError("Y must be symmetric")
        if np.max(np.abs(Y.sum(axis=1)), initial=0.0) > 1e-9 * scale:
            raise ValidationError("rows of Y must sum to zero")
        retained = tuple(int(k) for k in self.retained)
        n = Y.shape[0]
        if not retained:
            raise ValidationError("retained node set is empty")
        if len(set(retained)) != len(retained) or not all(0 <= k < n for k in retained):
            raise ValidationError("retained nodes must be unique indices in range")
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "retained", retained)

    @property
    def eliminated(self) -> tuple[int, ...]:
        keep = set(self.retained)
        return tuple(k for k in range(self.Y.shape[0]) if k not in keep)


def kron_reduce(part: AdmittancePartition) -> np.ndarray:
    """Eliminate zero-injection nodes: ``Y11 - Y12 @ inv(Y22) @ Y21``.

    Raises
    ------
    ReductionError
        If the eliminated block is singular, e.g. an eliminated node that is
        isolated from the rest of the network.
    """
    keep = list(part.retained)
    drop = list(part.eliminated)
    Y = part.Y
    Y11 = Y[np.ix_(keep, keep)]
    if not drop:
        return Y11.copy()
    Y12 = Y[np.ix_(keep, drop)]
    Y22 = Y[np.ix_(drop, drop)]
    try:
        scipy.linalg.cho_factor(Y22)  # positive-definiteness check only
    except np.linalg.LinAlgError:
        raise ReductionError("Y22 block is not positive definite (singular elimination)") from None
    if np.linalg.cond(Y22) > 1e13:
        raise ReductionError("Y22 block is numerically singular")
    # LU keeps simple cases exact (series law gives exactly b1*b2/(b1+b2))
    Y_eq = Y11 - Y12 @ np.linalg.solve(Y22, Y12.T)
    return 0.5 * (Y_eq + Y_eq.T)


def frame_transform_laplacian(B, phi: float) -> np.ndarray:
    """Effective susceptance Laplacian after the uniform-R/X frame rotation.

    The conductance matrix is implied by the uniform ratio, ``G = -B tan(phi)``,
    which makes the active/reactive coupling blocks cancel; the result is
    ``B cos(phi) - G sin(phi)``, i.e. ``B / cos(phi)``.
    """
    phi = float(phi)
    if not abs(phi) < math.pi / 2:
        raise ValidationError(f"rx angle must satisfy |phi| < pi/2, got {phi!r}")
    B = np.asarray(B, dtype=float)
    G = -B * math.tan(phi)
    coupling = B * math.sin(phi) + G * math.cos(phi)
    scale = max(1.0, float(np.max(np.abs(B)))) if B.size else 1.0
    if np.max(np.abs(coupling), initial=0.0) > 1e-12 * scale:
        raise ValidationError("active/reactive coupling does not cancel for this B and phi")
    return B * math.cos(phi) - G * math.sin(phi)
