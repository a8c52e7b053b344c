"""Dilation of semi-classical stochastic operator matrices to matrix unit systems.

Given ``E[x, a, a']`` on ``H`` (block-diagonal in ``x``), build an isometry
``V: H -> K`` and matrix unit systems ``Et[x, a, a']`` on ``K`` with
``V^* Et[x, a, a'] V = E[x, a, a']``.  Inputs are processed one at a time:

1. factor the current block matrix as ``F[a, a'] = V_a^* V_{a'}`` and dilate
   it to ``I_K (x) eps_{a,a'}`` through the column isometry ``h -> sum_a V_a h (x) e_a``;
2. push the next input forward through the isometry built so far, pad the
   first diagonal block with the complement projection, and repeat;
3. conjugate the systems already built by the new isometry and fill the
   complement of its range with ``I_{K_0} (x) eps_{a,a'}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlations import (MatrixUnitSystemFamily, QnsCorrelation, StochasticOperatorMatrix,
                           from_som_pair)
from .tensor_core import RANK_TOL, hermitian_part

A0 = 0  # distinguished answer index used for padding


class DilationError(RuntimeError):
    """Internal bookkeeping failure during the dilation."""


@dataclass(eq=False)
class DilationResult:
    V: np.ndarray
    systems: MatrixUnitSystemFamily
    step_dims: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.V.shape[0]

    def isometry_defect(self) -> float:
        return float(np.abs(self.V.conj().T @ self.V - np.eye(self.V.shape[1])).max())

    def compression_error(self, E: StochasticOperatorMatrix) -> float:
        d = E.diagonal_blocks
        comp = self.V.conj().T @ self.systems.systems @ self.V
        return float(np.abs(comp - d).max())


def _block_matrix(F: np.ndarray) -> np.ndarray:
    """``F[a, a', i, j]`` to the matrix over ``(a, i), (a', j)``."""
    A, _, k, _ = F.shape
    return F.transpose(0, 2, 1, 3).reshape(A * k, A * k)


def column_isometry_factorization(F, tol: float = 1e-9, trim: bool = True) -> np.ndarray:
    """Operators ``V_a: C^k -> C^r`` with ``V_a^* V_{a'} = F[a, a']``.

    ``F`` has shape ``(A, A, k, k)``, is PSD as a block matrix and satisfies
    ``sum_a F[a, a] = I``.  The factor is read off the Hermitian square root of
    the block matrix; with ``trim`` only its range is kept (``r = rank``).
    Returns an array of shape ``(A, r, k)``.
    """
    F = np.asarray(F, dtype=np.complex128)
    A, _, k, _ = F.shape
    big = _block_matrix(F)
    if np.abs(big - big.conj().T).max() > tol:
        raise ValueError("block matrix is not Hermitian")
    w, U = np.linalg.eigh(hermitian_part(big))
    scale = max(1.0, float(np.abs(w).max()))
    if w[0] < -tol * scale:
        raise ValueError(f"block matrix is not PSD (min eigenvalue {w[0]:.3e})")
    if np.abs(np.einsum("aaij->ij", F) - np.eye(k)).max() > tol:
        raise ValueError("diagonal blocks do not sum to the identity")
    w = np.clip(w, 0, None)
    if trim:
        keep = w > RANK_TOL * scale
        # rows of sqrt(w) U^* span the same Gram matrix as the full square root
        R = np.sqrt(w[keep])[:, None] * U[:, keep].conj().T
    else:
        R = (U * np.sqrt(w)) @ U.conj().T
    return R.reshape(R.shape[0], A, k).transpose(1, 0, 2).copy()


def _stack(Va: np.ndarray) -> np.ndarray:
    """Column operator ``h -> sum_a V_a h (x) e_a`` into ``K (x) C^A`` (K-index major)."""
    A, r, k = Va.shape
    return Va.transpose(1, 0, 2).reshape(r * A, k)


def _mus_on(r: int, A: int) -> np.ndarray:
    """``I_r (x) eps_{a,a'}`` as an array ``(A, A, rA, rA)``."""
    out = np.zeros((A, A, r * A, r * A), dtype=np.complex128)
    for a in range(A):
        for b in range(A):
            E = np.zeros((A, A))
            E[a, b] = 1
            out[a, b] = np.kron(np.eye(r), E)
    return out


def _is_mus(F: np.ndarray, tol: float) -> bool:
    return MatrixUnitSystemFamily(F[None]).residual() <= tol


def dilate_semiclassical(E: StochasticOperatorMatrix, tol: float = 1e-9) -> DilationResult:
    """Run the inductive dilation on a semi-classical SOM."""
    if not E.semi_classical:
        raise ValueError("dilation needs a semi-classical stochastic operator matrix")
    E.validate(tol)
    d = E.diagonal_blocks
    X, A, k = E.shape
    V = np.eye(k, dtype=np.complex128)
    systems: list[np.ndarray] = []
    step_dims = []
    for x in range(X):
        dim = V.shape[0]
        F = V @ d[x] @ V.conj().T
        P = V @ V.conj().T
        F[A0, A0] += np.eye(dim) - P
        if _is_mus(F, tol):
            # already a matrix unit system on the current space: no new isometry needed
            systems.append(F)
            step_dims.append(dim)
            continue
        Va = column_isometry_factorization(F, tol)
        r = Va.shape[1]
        W = _stack(Va)  # isometry from the current space into C^r (x) C^A
        new_dim = r * A
        Pk = W @ W.conj().T
        comp_dim = new_dim - dim
        if systems:
            if comp_dim < 0 or comp_dim % A:
                raise DilationError(f"complement of dimension {comp_dim} is not a multiple of |A|={A} "
                                    f"(step {x}, rank {r}, previous dimension {dim})")
            # orthonormal basis of ran(I - Pk), identified with K_0 (x) C^A
            wq, Uq = np.linalg.eigh(hermitian_part(np.eye(new_dim) - Pk))
            Q = Uq[:, wq > 0.5]
            if Q.shape[1] != comp_dim:
                raise DilationError(f"complement rank {Q.shape[1]} differs from expected {comp_dim}")
            fill = Q @ _mus_on(comp_dim // A, A) @ Q.conj().T
            systems = [W @ S @ W.conj().T + fill for S in systems]
        systems.append(_mus_on(r, A))
        V = W @ V
        step_dims.append(new_dim)
    return DilationResult(V, MatrixUnitSystemFamily(np.stack(systems)), step_dims)


def quantum_cqns_via_reps(E: StochasticOperatorMatrix, F: StochasticOperatorMatrix, xi,
                          tol: float = 1e-9):
    """Dilate both sides, push the state through ``V (x) W`` and rebuild the
    correlation from the matrix unit systems.

    Returns ``(systems_E, systems_F, xi_dilated, correlation)``.
    """
    dE = dilate_semiclassical(E, tol)
    dF = dilate_semiclassical(F, tol)
    xi = np.asarray(xi, dtype=np.complex128).reshape(-1)
    xi2 = np.kron(dE.V, dF.V) @ xi
    gamma = from_som_pair(dE.systems.as_som(), dF.systems.as_som(), xi2)
    return dE.systems, dF.systems, xi2, gamma.to_cqns()
