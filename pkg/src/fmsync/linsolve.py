"""Small dense linear-algebra kernel: Lyapunov and Riccati solves, spectra.

Everything here operates on matrices of single-digit dimension (the oscillator
state is 2- or 3-dimensional, the consensus block at most ~20), so the
Lyapunov equation is solved by plain Kronecker vectorization and the Riccati
equation by Hamiltonian invariant-subspace extraction polished with
Kleinman-Newton steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConditioningError, ConvergenceError, NoStableSolutionError, SynthesisInfeasibleError


@dataclass(frozen=True)
class SymmetricPD:
    """A symmetric positive definite matrix with its extreme eigenvalues."""

    matrix: np.ndarray
    eig_min: float = field(default=0.0)
    eig_max: float = field(default=0.0)

    @staticmethod
    def from_matrix(matrix: np.ndarray) -> "SymmetricPD":
        matrix = np.asarray(matrix, dtype=float)
        matrix = 0.5 * (matrix + matrix.T)
        eigs = np.linalg.eigvalsh(matrix)
        if eigs[0] <= 0.0:
            raise NoStableSolutionError(
                f"matrix is not positive definite (min eigenvalue {eigs[0]:.3e})"
            )
        return SymmetricPD(matrix=matrix, eig_min=float(eigs[0]), eig_max=float(eigs[-1]))

    @property
    def condition_ratio(self) -> float:
        return self.eig_max / self.eig_min


def condition_ratio(P: SymmetricPD | np.ndarray) -> float:
    """Ratio of the largest to the smallest eigenvalue of a PD matrix."""
    if not isinstance(P, SymmetricPD):
        P = SymmetricPD.from_matrix(P)
    return P.condition_ratio


def is_hurwitz(A: np.ndarray) -> bool:
    """True iff every eigenvalue of A has strictly negative real part."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return bool(np.max(np.linalg.eigvals(A).real) < 0.0)


def solve_lyapunov(A: np.ndarray, R: np.ndarray) -> SymmetricPD:
    """Solve P A + A^T P = -R for P > 0, with A Hurwitz and R symmetric PD.

    Vectorized form: (A^T (x) I + I (x) A^T) vec(P) = -vec(R).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    k = A.shape[0]
    if A.shape != (k, k) or R.shape != (k, k):
        raise ConditioningError(f"shape mismatch: A {A.shape}, R {R.shape}")
    if not is_hurwitz(A):
        raise NoStableSolutionError(
            f"A is not Hurwitz (max Re eig = {np.max(np.linalg.eigvals(A).real):.3e})"
        )
    eye = np.eye(k)
    lhs = np.kron(A.T, eye) + np.kron(eye, A.T)
    try:
        vec_p = np.linalg.solve(lhs, -R.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"Lyapunov vectorized system singular: {exc}") from exc
    P = vec_p.reshape((k, k), order="F")
    P = 0.5 * (P + P.T)
    residual = np.linalg.norm(P @ A + A.T @ P + R, "fro")
    if residual >= 1e-9 * (1.0 + np.linalg.norm(R, "fro")):
        raise ConditioningError(f"Lyapunov residual too large: {residual:.3e}")
    return SymmetricPD.from_matrix(P)


def _is_stabilizable(S: np.ndarray, B: np.ndarray) -> bool:
    """PBH test: rank [S - lam I, B] = p for every eigenvalue with Re lam >= 0."""
    p = S.shape[0]
    for lam in np.linalg.eigvals(S):
        if lam.real >= -1e-12:
            pencil = np.hstack([S - lam * np.eye(p), B.astype(complex)])
            if np.linalg.matrix_rank(pencil, tol=1e-10) < p:
                return False
    return True


def riccati_residual(S: np.ndarray, B: np.ndarray, lambda_star: float,
                     epsilon: float, G: np.ndarray) -> float:
    S = np.atleast_2d(np.asarray(S, dtype=float))
    B = np.asarray(B, dtype=float).reshape(S.shape[0], -1)
    return float(np.linalg.norm(
        S.T @ G + G @ S - lambda_star * G @ B @ B.T @ G + epsilon * np.eye(S.shape[0]),
        "fro"))


def solve_riccati(S: np.ndarray, B: np.ndarray, lambda_star: float,
                  epsilon: float, tol: float = 1e-8) -> SymmetricPD:
    """Solve S^T G + G S - lambda_star G B B^T G + epsilon I = 0 for G > 0.

    The stabilizing solution is extracted from the stable invariant subspace of
    the Hamiltonian matrix, then polished by Kleinman-Newton iterations on
    Lyapunov equations until the residual contract (Frobenius norm < tol) holds.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    p = S.shape[0]
    B = np.asarray(B, dtype=float).reshape(p, -1)
    if lambda_star <= 0 or epsilon <= 0:
        raise SynthesisInfeasibleError("lambda_star and epsilon must be positive")
    if not _is_stabilizable(S, B):
        raise SynthesisInfeasibleError("(S, B) is not stabilizable")

    # Hamiltonian for A = S, R = lambda* B B^T, Q = epsilon I.
    R = lambda_star * B @ B.T
    ham = np.block([[S, -R], [-epsilon * np.eye(p), -S.T]])
    T, Z, sdim = scipy.linalg.schur(ham, sort=lambda w: w.real < 0.0, output="real")
    if sdim != p:
        raise SynthesisInfeasibleError(
            f"Hamiltonian stable subspace has dimension {sdim}, expected {p}")
    X1 = Z[:p, :p]
    X2 = Z[p:, :p]
    try:
        G = np.linalg.solve(X1.T, X2.T).T
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"invariant subspace basis singular: {exc}") from exc
    G = 0.5 * (G + G.T)

    # Kleinman-Newton polish: closed loop A_k = S - lambda* B B^T G_k,
    # solve A_k^T G + G A_k = -(epsilon I + lambda* G_k B B^T G_k).
    log = [riccati_residual(S, B, lambda_star, epsilon, G)]
    for _ in range(30):
        if log[-1] < tol:
            break
        A_cl = S - R @ G
        if not is_hurwitz(A_cl):
            raise ConvergenceError("Kleinman iterate lost stabilizing property", log)
        rhs = epsilon * np.eye(p) + G @ R @ G
        G = solve_lyapunov(A_cl, rhs).matrix
        log.append(riccati_residual(S, B, lambda_star, epsilon, G))
    if log[-1] >= tol:
        raise ConvergenceError(
            f"Riccati iteration stalled at residual {log[-1]:.3e}", log)
    if not is_hurwitz(S - R @ G):
        raise ConvergenceError("converged G is not stabilizing", log)
    return SymmetricPD.from_matrix(G)
