"""Directed weighted graphs, Laplacian algebra, and the consensus-subspace split.

Edge convention: a_ij > 0 means agent i receives information from agent j, so
the neighbor set N_i is the set of sources agent i listens to.  A (directed)
spanning tree exists when some root node can propagate its information to
every other node along the receiving direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError, InvalidAdjacencyError


@dataclass(frozen=True)
class NetworkTopology:
    n: int
    adjacency: np.ndarray
    laplacian: np.ndarray
    neighbor_sets: tuple

    def neighbors(self, i: int) -> frozenset:
        return self.neighbor_sets[i]


@dataclass(frozen=True)
class LaplacianDecomposition:
    """Split of R^n into the consensus direction and its complement.

    T = [r^T; W] with T^{-1} = [1, U] block-diagonalizes L as blkdiag(0, H),
    H = W L U.  r is the left null vector of L normalized so r^T 1 = 1.
    """

    r: np.ndarray
    W: np.ndarray
    U: np.ndarray
    H: np.ndarray

    @property
    def T(self) -> np.ndarray:
        return np.vstack([self.r[None, :], self.W])

    @property
    def T_inv(self) -> np.ndarray:
        n = self.r.shape[0]
        return np.hstack([np.ones((n, 1)), self.U])


def build_topology(adjacency) -> NetworkTopology:
    """Validate an adjacency matrix and derive Laplacian and neighbor sets."""
    A = np.array(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidAdjacencyError(f"adjacency must be square, got shape {A.shape}")
    if np.any(A < 0):
        raise InvalidAdjacencyError("adjacency entries must be nonnegative")
    if np.any(np.diag(A) != 0):
        raise InvalidAdjacencyError("adjacency diagonal must be zero")
    n = A.shape[0]
    L = -A.copy()
    # The diagonal carries the (negated) off-diagonal row sum, so L 1 = 0 by
    # construction; whenever the weight sums incur no rounding the row sums
    # of the stored matrix are exactly zero in any evaluation order.
    np.fill_diagonal(L, A.sum(axis=1))
    neighbor_sets = tuple(frozenset(int(j) for j in np.nonzero(A[i])[0]) for i in range(n))
    return NetworkTopology(n=n, adjacency=A, laplacian=L, neighbor_sets=neighbor_sets)


def default_topology_6() -> NetworkTopology:
    """Six-node demonstration topology.

    Receiver <- source edges, all weights 1:
    3<-1, 2<-3, 4<-3, 5<-3, 4<-5, 1<-2, 6<-5.
    """
    A = np.zeros((6, 6))
    for recv, src in [(3, 1), (2, 3), (4, 3), (5, 3), (4, 5), (1, 2), (6, 5)]:
        A[recv - 1, src - 1] = 1.0
    return build_topology(A)


def has_spanning_tree(topology: NetworkTopology) -> bool:
    """True iff some root node reaches every node along source->receiver edges."""
    n = topology.n
    # receivers[j] = set of i with a_ij > 0, i.e. who j propagates to.
    receivers = [np.nonzero(topology.adjacency[:, j])[0] for j in range(n)]
    for root in range(n):
        seen = np.zeros(n, dtype=bool)
        stack = [root]
        seen[root] = True
        while stack:
            j = stack.pop()
            for i in receivers[j]:
                if not seen[i]:
                    seen[i] = True
                    stack.append(int(i))
        if seen.all():
            return True
    return False


def decompose(topology: NetworkTopology, tol: float = 1e-10) -> LaplacianDecomposition:
    """Compute (r, W, U, H) for a topology satisfying the spanning-tree condition.

    W is an orthonormal row basis of {v : v . 1 = 0}; U is read off the inverse
    of T = [r^T; W].  All defining identities are re-verified to `tol`.
    """
    if not has_spanning_tree(topology):
        raise DecompositionError("graph has no directed spanning tree; H undefined")
    L = topology.laplacian
    n = topology.n

    # Left null vector of L from the smallest singular direction.
    _, s, vh = np.linalg.svd(L.T)
    r = vh[-1]
    nz = np.nonzero(np.abs(r) > 1e-12)[0]
    if nz.size and r[nz[0]] < 0:
        r = -r
    total = r.sum()
    if abs(total) < 1e-12:
        raise DecompositionError("left null vector orthogonal to 1; cannot normalize")
    r = r / total

    # Orthonormal basis of the zero-sum subspace (rows of W).
    ones = np.ones((n, 1)) / np.sqrt(n)
    q, _ = np.linalg.qr(np.hstack([ones, np.eye(n)[:, : n - 1]]))
    W = q[:, 1:].T

    T = np.vstack([r[None, :], W])
    cond = np.linalg.cond(T)
    if cond > 1e12:
        raise DecompositionError(f"T is ill-conditioned (cond {cond:.3e})")
    T_inv = np.linalg.inv(T)
    U = T_inv[:, 1:]
    H = W @ L @ U

    block = T @ L @ T_inv
    target = np.zeros_like(block)
    target[1:, 1:] = H
    if np.linalg.norm(block - target) > tol * max(1.0, np.linalg.norm(L)):
        raise DecompositionError("T L T^-1 is not block diagonal to tolerance")
    if np.min(np.linalg.eigvals(H).real) <= 0:
        raise DecompositionError("H has an eigenvalue with nonpositive real part")
    return LaplacianDecomposition(r=r, W=W, U=U, H=H)
