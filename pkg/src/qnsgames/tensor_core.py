"""Dense linear-algebra primitives shared by every other module.

Conventions used throughout the package:

* Matrices are complex ``numpy`` arrays.  A composite index over
  ``H1 (x) H2`` is row-major with the first leg major, so the pair
  ``(i, j)`` sits at position ``i * d2 + j``.  This is what ``np.kron``
  and ``reshape`` produce.
* Dual spaces are never materialised.  A pairing ``<rho, omega^d>`` is
  always evaluated as ``Tr(rho @ omega)``.
* Rank decisions use a relative singular-value threshold ``RANK_TOL``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

RANK_TOL = 1e-10


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-d complex array, raising on anything else."""
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {M.shape}")
    return M


def matrix_unit(i: int, j: int, n: int, m: int | None = None) -> np.ndarray:
    """``eps_{i,j}`` in an ``n x m`` matrix space (``m`` defaults to ``n``)."""
    ret = np.zeros((n, n if m is None else m), dtype=np.complex128)
    ret[i, j] = 1
    return ret


def basis_vector(i: int, n: int) -> np.ndarray:
    ret = np.zeros(n, dtype=np.complex128)
    ret[i] = 1
    return ret


def kron(*mats) -> np.ndarray:
    """Kronecker product of any number of matrices or vectors, first factor major."""
    if len(mats) == 0:
        raise ValueError("kron needs at least one factor")
    ret = np.asarray(mats[0], dtype=np.complex128)
    for M in mats[1:]:
        ret = np.kron(ret, np.asarray(M, dtype=np.complex128))
    return ret


def _split_dims(M: np.ndarray, dims: tuple[int, int]) -> tuple[int, int]:
    d1, d2 = int(dims[0]), int(dims[1])
    if M.shape != (d1 * d2, d1 * d2):
        raise ValueError(f"matrix of shape {M.shape} does not act on a {d1}x{d2} composite space")
    return d1, d2


def partial_trace(M, leg: str, dims: tuple[int, int]) -> np.ndarray:
    """Trace out the ``'first'`` or ``'second'`` tensor leg of an operator on ``H1 (x) H2``.

    :param M: square matrix of size ``d1*d2``
    :param leg: which leg to remove
    :param dims: ``(d1, d2)``
    :return: operator on the remaining leg
    """
    M = as_matrix(M)
    d1, d2 = _split_dims(M, dims)
    T = M.reshape(d1, d2, d1, d2)
    if leg == "first":
        return np.einsum("iaib->ab", T)
    if leg == "second":
        return np.einsum("aibi->ab", T)
    raise ValueError(f"leg must be 'first' or 'second', got {leg!r}")


def slice_map(M, omega) -> np.ndarray:
    """Slice map ``L_omega`` determined by ``L_omega(S (x) T) = Tr(S omega^t) T``.

    The first leg has the size of ``omega``; ``L_I`` is the partial trace over it.
    """
    M = as_matrix(M)
    omega = as_matrix(omega, "omega")
    d1 = omega.shape[0]
    if omega.shape != (d1, d1) or M.shape[0] % d1 != 0:
        raise ValueError("slice_map: dimension mismatch")
    d2 = M.shape[0] // d1
    _split_dims(M, (d1, d2))
    return np.einsum("aibj,ab->ij", M.reshape(d1, d2, d1, d2), omega)


def diag_expectation(M) -> np.ndarray:
    """Conditional expectation onto the diagonal matrices."""
    M = as_matrix(M)
    return np.diag(np.diag(M))


def vectorize(T, normalize: bool = False) -> np.ndarray:
    """Vector with entry ``T[a, b]`` at composite position ``(a, b)``.

    With ``normalize`` the result is scaled to unit norm; the zero matrix is
    rejected in that case.  Satisfies ``(R (x) S) vec(T) = vec(R T S^t)``.
    """
    T = as_matrix(T)
    if T.shape[0] != T.shape[1]:
        raise ValueError("vectorize expects a square matrix")
    v = T.reshape(-1).copy()
    if normalize:
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValueError("cannot normalize the vectorization of the zero matrix")
        v = v / nrm
    return v


def _square_side(length: int) -> int:
    n = int(round(np.sqrt(length)))
    if n * n != length:
        raise ValueError(f"vector length {length} is not a perfect square")
    return n


def devectorize(v) -> np.ndarray:
    """Inverse of :func:`vectorize` (without normalization)."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    n = _square_side(v.size)
    return v.reshape(n, n).copy()


def entangled_constants(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(m_n, J_n, Jcl_n)``.

    ``m_n = n^{-1/2} sum_x e_x (x) e_x``, ``J_n = m_n m_n^*`` and
    ``Jcl_n = sum_x eps_{xx} (x) eps_{xx}``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    m = vectorize(np.eye(n), normalize=True)
    J = np.outer(m, m.conj())
    Jcl = np.diag(vectorize(np.eye(n))).astype(np.complex128)
    return m, J, Jcl


def theta_map(v) -> np.ndarray:
    """Matrix of ``theta(v)`` from the dual basis ``e_z^d`` to the basis ``e_z``.

    ``theta(xi (x) eta)(zeta^d) = <xi, zeta> eta``, so ``e_x (x) e_y`` goes to the
    matrix with a single one in row ``y``, column ``x``.
    """
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    n = _square_side(v.size)
    return v.reshape(n, n).T.copy()


def theta_untwist(v) -> np.ndarray:
    """``theta(v) U^{-1}`` as an ordinary matrix, where ``U e_z^d = e_z``.

    Since ``U^{-1}`` sends ``e_z`` to ``e_z^d``, the matrix coincides entrywise
    with :func:`theta_map`; ``theta_untwist(e_x (x) e_y) = eps_{y,x}``.
    """
    return theta_map(v)


def flip(v) -> np.ndarray:
    """Swap the two tensor legs of a vector in ``C^Z (x) C^Z``."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    n = _square_side(v.size)
    return v.reshape(n, n).T.reshape(-1).copy()


def skew_functional(v) -> complex:
    """``<v, sum_z e_z (x) e_z>``, i.e. the sum of the diagonal coefficients."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    n = _square_side(v.size)
    return complex(np.trace(v.reshape(n, n)))


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis of a subspace of ``C^ambient_dim``, stored as columns."""

    ambient_dim: int
    vectors: np.ndarray
    tol: float = RANK_TOL
    _proj: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=np.complex128).reshape(self.ambient_dim, -1)
        object.__setattr__(self, "vectors", V)
        gram = V.conj().T @ V
        if V.shape[1] and np.abs(gram - np.eye(V.shape[1])).max() > max(self.tol, 1e-9):
            raise ValueError("SubspaceBasis vectors are not orthonormal")
        object.__setattr__(self, "_proj", V @ V.conj().T)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self._proj.copy()

    def __len__(self):
        return self.dim

    def __iter__(self):
        return iter(self.vectors.T)


def orthonormalize(vectors, ambient_dim: int | None = None, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the span of ``vectors`` via thresholded SVD."""
    vectors = list(vectors)
    if len(vectors) == 0:
        if ambient_dim is None:
            raise ValueError("ambient_dim is required for an empty spanning set")
        return np.zeros((ambient_dim, 0), dtype=np.complex128)
    A = np.stack([np.asarray(v, dtype=np.complex128).reshape(-1) for v in vectors], axis=1)
    if ambient_dim is not None and A.shape[0] != ambient_dim:
        raise ValueError("vector length does not match ambient_dim")
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((A.shape[0], 0), dtype=np.complex128)
    r = int(np.sum(s > tol * s[0]))
    return U[:, :r]


def subspace_projector(vectors, ambient_dim: int | None = None,
                       tol: float = RANK_TOL) -> tuple[SubspaceBasis, np.ndarray]:
    """Orthonormalize a spanning set and return the basis with its orthogonal projector."""
    Q = orthonormalize(vectors, ambient_dim, tol)
    basis = SubspaceBasis(Q.shape[0], Q, tol)
    return basis, basis.projector


def subspace_contains(basis: SubspaceBasis, candidate, tol: float = RANK_TOL) -> bool:
    """True iff ``||(I - P) c|| <= tol * ||c||``."""
    c = np.asarray(candidate, dtype=np.complex128).reshape(-1)
    if c.size != basis.ambient_dim:
        raise ValueError("candidate dimension does not match the subspace")
    resid = c - basis.vectors @ (basis.vectors.conj().T @ c)
    return bool(np.linalg.norm(resid) <= tol * np.linalg.norm(c))


def hermitian_part(M) -> np.ndarray:
    M = as_matrix(M)
    return (M + M.conj().T) / 2


def is_psd(M, tol: float = 1e-9) -> bool:
    """Hermitian within ``tol`` and minimum eigenvalue ``>= -tol``."""
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        return False
    if M.size == 0:
        return True
    if np.abs(M - M.conj().T).max() > tol:
        return False
    return bool(np.linalg.eigvalsh(hermitian_part(M))[0] >= -tol)


def psd_sqrt(M, tol: float = 1e-10) -> np.ndarray:
    """Hermitian square root; eigenvalues in ``[-tol, 0)`` are clipped to zero."""
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("psd_sqrt expects a square matrix")
    w, U = np.linalg.eigh(hermitian_part(M))
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.size and w[0] < -tol * scale:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0, None)
    return (U * np.sqrt(w)) @ U.conj().T


def is_projection(M, tol: float = 1e-10) -> bool:
    """Self-adjoint idempotent within ``tol``."""
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        return False
    if M.size == 0:
        return True
    return bool(np.abs(M - M.conj().T).max() <= tol and np.abs(M @ M - M).max() <= tol)


def projection_leq(P, Q, tol: float = 1e-10) -> bool:
    """Order on projections: ``P <= Q`` iff ``Q P = P``."""
    P = as_matrix(P)
    Q = as_matrix(Q)
    return bool(np.abs(Q @ P - P).max(initial=0.0) <= tol)


def range_projector(M, tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto the column space of ``M``."""
    M = as_matrix(M)
    Q = orthonormalize(list(M.T), M.shape[0], tol)
    return Q @ Q.conj().T


def intersect_projections(projs: Sequence[np.ndarray], n: int, tol: float = RANK_TOL) -> np.ndarray:
    """Projector onto the intersection of the ranges of the given projectors."""
    if len(projs) == 0:
        return np.eye(n, dtype=np.complex128)
    # the intersection is the kernel of sum_i (I - P_i), a PSD matrix
    K = sum(np.eye(n) - as_matrix(P) for P in projs)
    w, U = np.linalg.eigh(hermitian_part(K))
    keep = w <= tol * max(1.0, len(projs))
    V = U[:, keep]
    return V @ V.conj().T


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Gaussian matrix."""
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def haar_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Random isometry ``C^cols -> C^rows`` (first columns of a Haar unitary)."""
    if cols > rows:
        raise ValueError("an isometry needs rows >= cols")
    return haar_unitary(rows, rng)[:, :cols]
