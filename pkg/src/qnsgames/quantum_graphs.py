"""Quantum graphs as symmetric skew subspaces of ``C^X (x) C^X``.

Everything twisted is handled in untwisted form: a subspace ``U`` is turned into
the matrix space ``{theta_untwist(v) : v in U}``, which is transpose-closed and
traceless.  Homomorphisms are tested through inclusions of Kraus compressions
``M_j^* (B (x) I_k) M_i`` in the target anti-system.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .correlations import QnsCorrelation, StochasticOperatorMatrix, tracial_from_som
from .graph import Graph, is_homomorphism
from .tensor_core import (RANK_TOL, SubspaceBasis, as_matrix, basis_vector, entangled_constants,
                          flip, hermitian_part, orthonormalize, skew_functional, theta_untwist,
                          vectorize)

TOL = 1e-10


@dataclass(eq=False)
class SymmetricSkewSubspace:
    """Subspace of ``C^n (x) C^n`` given by an orthonormal basis."""

    n: int
    basis: SubspaceBasis

    @classmethod
    def from_vectors(cls, n: int, vectors, validate: bool = True) -> "SymmetricSkewSubspace":
        Q = orthonormalize(list(vectors), n * n)
        U = cls(n, SubspaceBasis(n * n, Q))
        if validate:
            U.validate()
        return U

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def projector(self) -> np.ndarray:
        return self.basis.projector

    def residuals(self) -> dict:
        vs = list(self.basis)
        skew = max((abs(skew_functional(v)) for v in vs), default=0.0)
        Q = self.basis.vectors
        sym = 0.0
        for v in vs:
            w = flip(v)
            sym = max(sym, float(np.linalg.norm(w - Q @ (Q.conj().T @ w))))
        return {"skew": float(skew), "symmetric": sym}

    def validate(self, tol: float = TOL) -> None:
        r = self.residuals()
        if r["skew"] > tol:
            raise ValueError(f"subspace is not skew (residual {r['skew']:.3e})")
        if r["symmetric"] > tol:
            raise ValueError(f"subspace is not flip-invariant (residual {r['symmetric']:.3e})")

    def to_json(self) -> dict:
        from .io import matrix_to_json
        return {"n": self.n, "basis": [matrix_to_json(v.reshape(-1, 1)) for v in self.basis]}


def from_graph(G: Graph) -> SymmetricSkewSubspace:
    """``span{e_x (x) e_y : x ~ y}``."""
    n = G.n
    vs = [np.kron(basis_vector(x, n), basis_vector(y, n)) for x, y in G.directed_edges()]
    return SymmetricSkewSubspace.from_vectors(n, vs)


def entangled_complement(A: int) -> SymmetricSkewSubspace:
    """Orthogonal complement of ``m_A`` in ``C^A (x) C^A``."""
    m, J, _ = entangled_constants(A)
    w, U = np.linalg.eigh(np.eye(A * A) - J)
    return SymmetricSkewSubspace(A, SubspaceBasis(A * A, U[:, w > 0.5]))


def tensor_with_me(U: SymmetricSkewSubspace, Z: int) -> SymmetricSkewSubspace:
    """Basis ``shuffle(xi (x) m_Z)`` in ``(C^X (x) C^Z) (x) (C^X (x) C^Z)``."""
    if Z < 1:
        raise ValueError("|Z| must be positive")
    m, _, _ = entangled_constants(Z)
    X = U.n
    vs = []
    for v in U.basis:
        t = np.kron(v, m).reshape(X, X, Z, Z).transpose(0, 2, 1, 3).reshape(-1)
        vs.append(t)
    return SymmetricSkewSubspace.from_vectors(X * Z, vs)


@dataclass(eq=False)
class OperatorAntiSystem:
    """Transpose-closed traceless subspace of ``M_size`` (Hilbert-Schmidt basis kept)."""

    size: int
    basis: list

    def __post_init__(self):
        self.basis = [as_matrix(B) for B in self.basis]
        self._Q = orthonormalize([B.reshape(-1) for B in self.basis], self.size ** 2)

    @property
    def dim(self) -> int:
        return self._Q.shape[1]

    @property
    def orthonormal_basis(self) -> np.ndarray:
        """Columns: orthonormal vectorized basis."""
        return self._Q

    def contains(self, T, tol: float = TOL) -> bool:
        t = as_matrix(T).reshape(-1)
        r = t - self._Q @ (self._Q.conj().T @ t)
        return bool(np.linalg.norm(r) <= tol * max(1.0, np.linalg.norm(t)))

    def residuals(self) -> dict:
        tr = max((abs(np.trace(B)) for B in self.basis), default=0.0)
        tp = 0.0
        for B in self.basis:
            t = B.T.reshape(-1)
            tp = max(tp, float(np.linalg.norm(t - self._Q @ (self._Q.conj().T @ t))))
        return {"traceless": float(tr), "transpose_closed": tp}

    def validate(self, tol: float = TOL) -> None:
        r = self.residuals()
        if r["traceless"] > tol or r["transpose_closed"] > tol:
            raise ValueError(f"not an operator anti-system: {r}")


def antisystem_of(U: SymmetricSkewSubspace) -> OperatorAntiSystem:
    return OperatorAntiSystem(U.n, [theta_untwist(v) for v in U.basis])


def graph_antisystem(G: Graph) -> OperatorAntiSystem:
    """``span{eps_{x,y} : x ~ y}``."""
    n = G.n
    mats = []
    for x, y in G.directed_edges():
        E = np.zeros((n, n), dtype=np.complex128)
        E[x, y] = 1
        mats.append(E)
    return OperatorAntiSystem(n, mats)


def traceless_antisystem(A: int) -> OperatorAntiSystem:
    """All traceless matrices in ``M_A``."""
    mats = []
    for a in range(A):
        for b in range(A):
            if a != b:
                E = np.zeros((A, A), dtype=np.complex128)
                E[a, b] = 1
                mats.append(E)
    for a in range(1, A):
        D = np.zeros((A, A), dtype=np.complex128)
        D[0, 0], D[a, a] = 1, -1
        mats.append(D)
    return OperatorAntiSystem(A, mats)


@dataclass(eq=False)
class KrausFamily:
    """Operators ``M_i: C^in -> C^out`` (array ``(m, out, in)``) of the map
    ``psi(T) = sum_i M_i T M_i^*`` from ``M_in`` to ``M_out``.

    ``psi`` is required to be unital, ``sum_i M_i M_i^* = I``.  Equivalently
    the channel with Kraus operators ``M_i^t`` (from ``M_out`` to ``M_in``) is
    trace preserving.
    """

    ops: np.ndarray

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=np.complex128)
        if ops.ndim == 2:
            ops = ops[None]
        if ops.ndim != 3:
            raise ValueError("Kraus operators must be an array of shape (m, out, in)")
        self.ops = ops

    @property
    def n_in(self) -> int:
        return self.ops.shape[2]

    @property
    def n_out(self) -> int:
        return self.ops.shape[1]

    def __len__(self):
        return self.ops.shape[0]

    def unitality_defect(self) -> float:
        S = np.einsum("ipa,iqa->pq", self.ops, self.ops.conj())
        return float(np.abs(S - np.eye(self.n_out)).max())

    def validate(self, tol: float = 1e-9) -> None:
        d = self.unitality_defect()
        if d > tol:
            raise ValueError(f"Kraus family is not unital (defect {d:.3e})")

    def apply(self, T) -> np.ndarray:
        T = as_matrix(T)
        return np.einsum("ipa,ab,iqb->pq", self.ops, T, self.ops.conj())

    def unit_images(self) -> np.ndarray:
        """``psi(eps_{a,b})`` for all ``a, b``; shape ``(in, in, out, out)``."""
        return np.einsum("ipa,iqb->abpq", self.ops, self.ops.conj())

    def induced_channel_ops(self) -> np.ndarray:
        return np.transpose(self.ops, (0, 2, 1)).copy()

    @classmethod
    def from_unit_images(cls, images, tol: float = RANK_TOL) -> "KrausFamily":
        """Kraus operators of a CP map given ``psi(eps_{a,b})`` (shape ``(A, A, N, N)``)."""
        images = np.asarray(images, dtype=np.complex128)
        A, _, N, _ = images.shape
        C = images.transpose(0, 2, 1, 3).reshape(A * N, A * N)
        w, U = np.linalg.eigh(hermitian_part(C))
        scale = max(1.0, float(np.abs(w).max()))
        if w[0] < -1e-9 * scale:
            raise ValueError(f"map is not completely positive (min Choi eigenvalue {w[0]:.3e})")
        keep = w > tol * scale
        vs = U[:, keep] * np.sqrt(w[keep])
        ops = vs.T.reshape(-1, A, N).transpose(0, 2, 1)
        return cls(ops)

    def to_json(self) -> dict:
        from .io import matrix_to_json
        return {"in": self.n_in, "out": self.n_out, "ops": [matrix_to_json(M) for M in self.ops]}


@dataclass
class HomCheckReport:
    verdict: bool
    max_residual: float
    worst: Optional[tuple] = None  # (basis index, i, j)


def hom_check(S: OperatorAntiSystem, T: OperatorAntiSystem, K: KrausFamily,
              tol: float = 1e-9) -> HomCheckReport:
    """Test ``M_j^* (B (x) I_k) M_i in T`` for every basis element ``B`` of ``S``.

    ``K`` maps ``C^|T|`` into ``C^|S| (x) C^k``; ``k = 1`` is the plain case.
    The residual of each compression is its distance to ``T`` divided by
    ``max(1, norm)``.
    """
    if K.n_in != T.size or K.n_out % S.size:
        raise ValueError(f"Kraus dims (in={K.n_in}, out={K.n_out}) do not fit S on {S.size} and T on {T.size}")
    k = K.n_out // S.size
    if len(S.basis) == 0:
        return HomCheckReport(True, 0.0)
    Bs = np.stack(S.basis)
    if k > 1:
        Bs = np.einsum("spq,ij->spiqj", Bs, np.eye(k)).reshape(len(S.basis), S.size * k, S.size * k)
    M = K.ops
    Mh = np.conj(np.swapaxes(M, 1, 2))
    # Y[s, i, j] = M_j^* B_s M_i
    Y = Mh[None, None] @ Bs[:, None, None] @ M[None, :, None]
    flat = Y.reshape(-1, T.size * T.size)
    Q = T.orthonormal_basis
    res = flat - (flat @ Q.conj()) @ Q.T
    nr = np.linalg.norm(res, axis=1) / np.maximum(1.0, np.linalg.norm(flat, axis=1))
    idx = int(np.argmax(nr))
    s, i, j = np.unravel_index(idx, Y.shape[:3])
    return HomCheckReport(bool(nr[idx] <= tol), float(nr[idx]), (int(s), int(i), int(j)))


def deterministic_kraus(f: Sequence[int], n_src: int, n_dst: int) -> KrausFamily:
    """Kraus family ``M_x = e_x e_{f(x)}^*`` (``C^dst -> C^src``) of a vertex map."""
    ops = np.zeros((n_src, n_src, n_dst), dtype=np.complex128)
    for x, y in enumerate(f):
        ops[x, x, y] = 1
    return KrausFamily(ops)


def classical_hom_channel(f: Sequence[int], G: Graph, H: Graph) -> KrausFamily:
    """Kraus family of the deterministic map given by a graph homomorphism ``f: G -> H``."""
    if not is_homomorphism(f, G, H):
        raise ValueError("vertex map is not a graph homomorphism")
    return deterministic_kraus(f, G.n, H.n)


def som_from_kraus(K: KrausFamily, X: int) -> StochasticOperatorMatrix:
    """``E[x, x', a, b]`` = block ``(x, x')`` of ``psi(eps_{a,b})`` in ``M_X (x) M_Z``."""
    if K.n_out % X:
        raise ValueError("output dimension is not a multiple of |X|")
    Z = K.n_out // X
    A = K.n_in
    img = K.unit_images().reshape(A, A, X, Z, X, Z)
    blocks = img.transpose(2, 4, 0, 1, 3, 5)
    return StochasticOperatorMatrix(blocks)


def strategy_from_kraus(K: KrausFamily, X: int, tol: float = 1e-9) -> QnsCorrelation:
    """Correlation ``Gamma(eps_{x,x'} (x) eps_{y,y'}) = (tr_Z(E[x,x',a,a'] E[y',y,b',b]))``
    built from the stochastic operator matrix ``E`` of ``psi``."""
    E = som_from_kraus(K, X)
    E.validate(tol)
    return tracial_from_som(E)
