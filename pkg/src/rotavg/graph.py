"""Camera graphs and the block-symmetric measurement matrix.

A camera graph has vertices 1..n and undirected edges (i, j) with i < j,
each carrying a 3x3 rotation measurement that models R_j R_i^T for the
unknown absolute rotations. The measurement matrix is the 3n x 3n block
matrix with block (i, j) = measurement(i, j)^T for i < j, block (j, i) its
transpose, and zero diagonal blocks; it is stored column-sparse so that
fetching one block column costs O(deg(k)).
"""

import heapq
from dataclasses import dataclass

import numpy as np

from . import so3
from .errors import DisconnectedGraphError, InvalidGraphError

ROTATION_TOL = 1e-9


class CameraGraph:
    """Vertex count plus a canonicalised, validated edge list.

    Edges are canonicalised to i < j at ingestion: an input edge (j, i, Q)
    with j > i is stored as (i, j, Q^T), consistent with the measurement
    model where swapping endpoints transposes the relative rotation.
    Duplicate pairs and self-loops are rejected.
    """

    def __init__(self, n: int, edges):
        ei, ej, rots = [], [], []
        for a, b, R in edges:
            ei.append(int(a))
            ej.append(int(b))
            rots.append(np.asarray(R, dtype=float))
        rot = np.asarray(rots, dtype=float) if rots else np.empty((0, 3, 3))
        self._init_from_arrays(n, np.asarray(ei, np.int64), np.asarray(ej, np.int64), rot)

    @classmethod
    def from_arrays(cls, n: int, edge_i, edge_j, edge_rot) -> "CameraGraph":
        """Construct from parallel arrays without a per-edge Python loop."""
        g = cls.__new__(cls)
        g._init_from_arrays(
            n,
            np.array(edge_i, dtype=np.int64),
            np.array(edge_j, dtype=np.int64),
            np.array(edge_rot, dtype=float),
        )
        return g

    def _init_from_arrays(self, n, edge_i, edge_j, edge_rot):
        if n < 1:
            raise InvalidGraphError(f"vertex count must be >= 1, got {n}")
        self.n = int(n)
        swap = edge_i > edge_j
        if np.any(swap):
            edge_i, edge_j = (
                np.where(swap, edge_j, edge_i),
                np.where(swap, edge_i, edge_j),
            )
            edge_rot = edge_rot.copy()
            edge_rot[swap] = edge_rot[swap].transpose(0, 2, 1)
        self.edge_i = edge_i
        self.edge_j = edge_j
        self.edge_rot = edge_rot if edge_rot.size else np.empty((0, 3, 3))
        self._validate()
        for a in (self.edge_i, self.edge_j, self.edge_rot):
            a.setflags(write=False)

    def _validate(self):
        m = self.edge_i.size
        if self.edge_rot.shape != (m, 3, 3):
            raise InvalidGraphError("every edge needs a 3x3 measurement")
        if m == 0:
            return
        if self.edge_i.min() < 1 or self.edge_j.max() > self.n:
            raise InvalidGraphError("edge endpoint outside 1..n")
        if np.any(self.edge_i == self.edge_j):
            raise InvalidGraphError("self-loop edge")
        keys = self.edge_i * (self.n + 1) + self.edge_j
        if np.unique(keys).size != m:
            raise InvalidGraphError("duplicate edge pair")
        rtr = np.einsum("eji,ejk->eik", self.edge_rot, self.edge_rot)
        ortho_dev = np.max(np.abs(rtr - np.eye(3)))
        det_dev = np.max(np.abs(np.linalg.det(self.edge_rot) - 1.0))
        if ortho_dev > ROTATION_TOL or det_dev > ROTATION_TOL:
            bad = int(
                np.argmax(np.max(np.abs(rtr - np.eye(3)), axis=(1, 2)))
            )
            raise InvalidGraphError(
                f"measurement on edge ({self.edge_i[bad]}, {self.edge_j[bad]}) "
                f"violates rotation invariants "
                f"(orthogonality dev {ortho_dev:.2e}, det dev {det_dev:.2e})"
            )

    @property
    def m(self) -> int:
        return int(self.edge_i.size)

    def edges(self):
        """Iterate (i, j, R) with i < j."""
        for a, b, R in zip(self.edge_i, self.edge_j, self.edge_rot):
            yield int(a), int(b), R

    def degrees(self) -> np.ndarray:
        """Vertex degrees, 1-based in entry v-1."""
        return np.bincount(
            np.concatenate([self.edge_i, self.edge_j]), minlength=self.n + 1
        )[1:]


def _csr_adjacency(edge_i, edge_j, n):
    """Both-direction adjacency as (neighbour array, offsets) in CSR form."""
    src = np.concatenate([edge_i, edge_j])
    dst = np.concatenate([edge_j, edge_i])
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    offsets = np.searchsorted(src, np.arange(1, n + 2))
    return dst, offsets


def _bfs_reachable(nbr, offsets, n, start=1):
    visited = np.zeros(n + 1, dtype=bool)
    visited[start] = True
    frontier = np.array([start], dtype=np.int64)
    while frontier.size:
        starts = offsets[frontier - 1]
        counts = offsets[frontier] - starts
        total = int(counts.sum())
        if total == 0:
            break
        base = np.repeat(starts, counts)
        step = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        cand = nbr[base + step]
        cand = cand[~visited[cand]]
        if cand.size == 0:
            break
        frontier = np.unique(cand)
        visited[frontier] = True
    return visited[1:]


def check_connected(g: CameraGraph) -> bool:
    """True iff a graph search from vertex 1 reaches all n vertices."""
    if g.n == 1:
        return True
    if g.m == 0:
        return False
    nbr, offsets = _csr_adjacency(g.edge_i, g.edge_j, g.n)
    return bool(np.all(_bfs_reachable(nbr, offsets, g.n)))


@dataclass
class BlockColumn:
    """One block column of the measurement matrix.

    Only neighbour blocks are materialised; block k itself is zero and all
    non-neighbour blocks are implicitly zero. Arrays are read-only views
    into the parent matrix.
    """

    n: int
    k: int
    indices: np.ndarray  # 1-based neighbour ids, sorted ascending
    blocks: np.ndarray  # (deg, 3, 3), blocks[t] = block(indices[t], k)

    def block(self, i: int) -> np.ndarray:
        pos = np.searchsorted(self.indices, i)
        if pos < self.indices.size and self.indices[pos] == i:
            return self.blocks[pos]
        return np.zeros((3, 3))

    def to_dense(self) -> np.ndarray:
        """Full column as an (n, 3, 3) stack (tests and small problems only)."""
        W = np.zeros((self.n, 3, 3))
        W[self.indices - 1] = self.blocks
        return W


class MeasurementMatrix:
    """Block-symmetric 3n x 3n measurement matrix with sparse column access.

    Stored as per-vertex block lists for both orientations so column(k) is
    O(deg(k)); immutable after construction.
    """

    def __init__(self, g: CameraGraph):
        self.n = g.n
        self.m = g.m
        self.edge_i = g.edge_i
        self.edge_j = g.edge_j
        self.edge_rot = g.edge_rot
        # Edge (i, j, Q) contributes block(i, j) = Q^T to column j and
        # block(j, i) = Q to column i.
        owners = np.concatenate([g.edge_j, g.edge_i])
        rows = np.concatenate([g.edge_i, g.edge_j])
        blocks = (
            np.concatenate([g.edge_rot.transpose(0, 2, 1), g.edge_rot])
            if g.m
            else np.empty((0, 3, 3))
        )
        order = np.lexsort((rows, owners))
        self._rows = rows[order]
        self._blocks = np.ascontiguousarray(blocks[order])
        # _offsets[k-1]:_offsets[k] is the slice of column k (1-based k).
        self._offsets = np.searchsorted(owners[order], np.arange(1, self.n + 2))
        for a in (self._rows, self._blocks, self._offsets):
            a.setflags(write=False)
        self.degrees = np.diff(self._offsets)

    def column(self, k: int) -> BlockColumn:
        """The k-th block column as sparse neighbour blocks."""
        if not 1 <= k <= self.n:
            raise IndexError(f"vertex id {k} outside 1..{self.n}")
        lo, hi = self._offsets[k - 1], self._offsets[k]
        return BlockColumn(
            n=self.n, k=k, indices=self._rows[lo:hi], blocks=self._blocks[lo:hi]
        )

    def block(self, a: int, b: int) -> np.ndarray:
        """Block (a, b); zero when a and b are not neighbours or a == b."""
        col = self.column(b)
        return col.block(a)

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        if self.m == 0:
            return False
        return bool(
            np.all(_bfs_reachable(self._rows, self._offsets, self.n))
        )

    def to_dense(self) -> np.ndarray:
        """Dense 3n x 3n matrix (tests and small problems only)."""
        M = np.zeros((3 * self.n, 3 * self.n))
        for k in range(1, self.n + 1):
            col = self.column(k)
            for i, B in zip(col.indices, col.blocks):
                M[3 * (i - 1) : 3 * i, 3 * (k - 1) : 3 * k] = B
        return M


def build_measurement_matrix(g: CameraGraph) -> MeasurementMatrix:
    """Assemble the block-symmetric measurement matrix of a camera graph."""
    return MeasurementMatrix(g)


def graph_density(n: int, m: int) -> float:
    """Normalised edge count between the cycle (0) and complete (1) graphs.

    density = (m - E_min) / (E_max - E_min) with E_min = n (cycle) and
    E_max = n(n-1)/2 (complete).
    """
    if n < 3:
        raise ValueError(f"density needs n >= 3, got n={n}")
    e_min = n
    e_max = n * (n - 1) // 2
    if not e_min <= m <= e_max:
        raise ValueError(f"edge count {m} outside [{e_min}, {e_max}] for n={n}")
    return (m - e_min) / (e_max - e_min)


def spanning_tree_init(g: CameraGraph, seed: int) -> np.ndarray:
    """Initial absolute rotations chained along a random spanning tree.

    Vertex 1 is the root with the identity; every tree child takes the
    rotation implied by its parent and the connecting measurement. The tree
    is grown by a random-priority search (each discovered incidence gets an
    i.i.d. uniform priority; the frontier pops the smallest), deterministic
    for a fixed seed.

    Raises:
        DisconnectedGraphError: some vertex is unreachable from vertex 1.
    """
    if not check_connected(g):
        raise DisconnectedGraphError("spanning tree requires a connected graph")
    rng = np.random.Generator(np.random.Philox(seed))
    adj = [[] for _ in range(g.n + 1)]
    for e in range(g.m):
        a, b = int(g.edge_i[e]), int(g.edge_j[e])
        adj[a].append((b, e))
        adj[b].append((a, e))
    R = np.zeros((g.n, 3, 3))
    R[0] = np.eye(3)
    seen = np.zeros(g.n + 1, dtype=bool)
    seen[1] = True
    heap = []
    counter = 0
    for b, e in adj[1]:
        heapq.heappush(heap, (rng.random(), counter, 1, b, e))
        counter += 1
    while heap:
        _, _, parent, child, e = heapq.heappop(heap)
        if seen[child]:
            continue
        seen[child] = True
        Q = g.edge_rot[e]
        if child == g.edge_j[e]:
            R[child - 1] = Q @ R[parent - 1]
        else:
            R[child - 1] = Q.T @ R[parent - 1]
        for b, e2 in adj[child]:
            if not seen[b]:
                heapq.heappush(heap, (rng.random(), counter, child, b, e2))
                counter += 1
    return R


def laplacian(g: CameraGraph) -> np.ndarray:
    """Dense unweighted graph Laplacian (desk-scale diagnostic)."""
    L = np.zeros((g.n, g.n))
    i0 = g.edge_i - 1
    j0 = g.edge_j - 1
    L[i0, j0] = -1.0
    L[j0, i0] = -1.0
    np.fill_diagonal(L, g.degrees())
    return L


def fiedler_value(g: CameraGraph) -> float:
    """Second-smallest Laplacian eigenvalue (dense symmetric eigensolve)."""
    w = np.linalg.eigvalsh(laplacian(g))
    return float(w[1])


def alpha_max(g: CameraGraph) -> float:
    """Per-edge angular-residual bound under which the relaxation is tight.

    General graphs use the spectral bound
    2*arcsin(sqrt(1/4 + lambda_2 / (2*d_max)) - 1/2) from the Fiedler value
    and the maximum degree. A simple cycle (connected, all degrees 2) gets
    the exact bound pi/n, which is far less conservative than the spectral
    formula there.

    Desk-scale diagnostic only: the dense eigensolve is O(n^3).

    Raises:
        DisconnectedGraphError: the bound is vacuous on disconnected graphs.
    """
    if not check_connected(g):
        raise DisconnectedGraphError("alpha_max requires a connected graph")
    deg = g.degrees()
    if g.n >= 3 and np.all(deg == 2):
        return float(np.pi / g.n)
    lam2 = fiedler_value(g)
    if lam2 <= 1e-12:
        raise DisconnectedGraphError("Fiedler value is numerically zero")
    d_max = float(deg.max())
    return float(2.0 * np.arcsin(np.sqrt(0.25 + lam2 / (2.0 * d_max)) - 0.5))


def identity_stack(n: int) -> np.ndarray:
    """(n, 3, 3) stack of identity rotations."""
    return np.broadcast_to(np.eye(3), (n, 3, 3)).copy()


def random_stack(n: int, seed: int) -> np.ndarray:
    """(n, 3, 3) stack of uniformly random rotations, Philox-seeded."""
    return so3.random_rotations(n, np.random.Generator(np.random.Philox(seed)))
