"""No-signalling correlations as channels ``M_XY -> M_AB`` and their constructions.

A full correlation is stored by its Choi matrix with row index ``(x, y, a, b)``
and column index ``(x', y', a', b')``, so that the ``(x, x', y, y')`` block is
``Gamma(eps_{x,x'} (x) eps_{y,y'})``.  A classical-input correlation only needs
the blocks ``Gamma(eps_xx (x) eps_yy)`` and is stored as those blocks.

All traces on auxiliary spaces are normalized (``tr_n = Tr / n``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .games import Rule, SupportRuleGame
from .tensor_core import (as_matrix, entangled_constants, haar_isometry, haar_unitary,
                          hermitian_part, kron, matrix_unit, vectorize)

TOL = 1e-9


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hermitian_part(M))[0])


def _traceless_basis_diag(n: int):
    """Traceless diagonal basis ``eps_00 - eps_xx`` as (label, weights) pairs."""
    out = []
    for x in range(1, n):
        w = np.zeros(n)
        w[0], w[x] = 1, -1
        out.append((f"e{0}{0}-e{x}{x}", w))
    return out


@dataclass
class NsReport:
    """Outcome of the no-signalling check.

    ``condition`` is ``'qns1'`` (``Tr_A Gamma(rho_X (x) rho_Y) = 0`` for traceless
    ``rho_X``) or ``'qns2'`` (``Tr_B Gamma(rho_X (x) rho_Y) = 0`` for traceless
    ``rho_Y``); ``rho_x``/``rho_y`` label the worst basis pair and ``marginal``
    is the offending marginal.
    """

    ok: bool
    max_violation: float
    condition: Optional[str] = None
    rho_x: Optional[str] = None
    rho_y: Optional[str] = None
    marginal: Optional[np.ndarray] = None

    def to_json(self) -> dict:
        from .io import matrix_to_json
        return {"ok": self.ok, "max_violation": self.max_violation, "condition": self.condition,
                "rho_x": self.rho_x, "rho_y": self.rho_y,
                "marginal": None if self.marginal is None else matrix_to_json(self.marginal)}


def _worst(cands, tol):
    """Pick the first candidate with the largest norm from (norm, cond, lx, ly, M) tuples."""
    best = None
    for c in cands:
        if best is None or c[0] > best[0]:
            best = c
    if best is None:
        return NsReport(True, 0.0)
    nrm, cond, lx, ly, M = best
    return NsReport(bool(nrm <= tol), float(nrm), cond, lx, ly, M)


class QnsCorrelation:
    """Linear map ``M_XY -> M_AB`` given by its Choi matrix (leg order ``x, y, a, b``)."""

    classical_inputs = False

    def __init__(self, dims, choi):
        self.dims = tuple(int(d) for d in dims)
        X, Y, A, B = self.dims
        self.choi = as_matrix(choi, "choi")
        if self.choi.shape != (X * Y * A * B,) * 2:
            raise ValueError(f"Choi matrix of shape {self.choi.shape} does not match dims {self.dims}")

    def __repr__(self):
        return f"QnsCorrelation(dims={self.dims})"

    @property
    def tensor(self) -> np.ndarray:
        """Choi matrix as an 8-index array ``[x, y, a, b, x', y', a', b']``."""
        return self.choi.reshape(self.dims * 2)

    def _blocks(self) -> np.ndarray:
        X, Y, A, B = self.dims
        return self.choi.reshape(X * Y, A * B, X * Y, A * B)

    def block(self, x: int, xp: int, y: int, yp: int) -> np.ndarray:
        """``Gamma(eps_{x,x'} (x) eps_{y,y'})``."""
        X, Y, A, B = self.dims
        return self._blocks()[x * Y + y, :, xp * Y + yp, :].copy()

    def apply(self, rho) -> np.ndarray:
        X, Y, A, B = self.dims
        rho = as_matrix(rho, "rho")
        if rho.shape != (X * Y, X * Y):
            raise ValueError(f"input of shape {rho.shape} does not match X*Y = {X * Y}")
        return np.einsum("pq,pmqn->mn", rho, self._blocks())

    def apply_diagonal(self, w) -> np.ndarray:
        """``sum_p w[p] Gamma(eps_pp)`` over composite inputs ``p = (x, y)``."""
        w = np.asarray(w).reshape(-1)
        return np.einsum("p,pmpn->mn", w, self._blocks())

    def channel_report(self, tol: float = TOL) -> dict:
        X, Y, A, B = self.dims
        herm = float(np.abs(self.choi - self.choi.conj().T).max())
        mineig = _min_eig(self.choi)
        tr = np.einsum("pmqm->pq", self._blocks())
        defect = float(np.abs(tr - np.eye(X * Y)).max())
        return {"channel": bool(herm <= tol and mineig >= -tol and defect <= tol),
                "hermiticity_defect": herm, "min_eigenvalue": mineig, "trace_defect": defect}

    def is_channel(self, tol: float = TOL) -> bool:
        return self.channel_report(tol)["channel"]

    def ns_report(self, tol: float = TOL) -> NsReport:
        X, Y, A, B = self.dims
        T = self.tensor
        # marg_b[x,x',y,y'] = Tr_A Gamma(eps_xx' (x) eps_yy'), marg_a likewise over B
        marg_b = np.einsum("xyabXYaB->xXyYbB", T)
        marg_a = np.einsum("xyabXYAb->xXyYaA", T)
        cands = []
        rx_list = [(f"e{x}{xp}", ("off", x, xp)) for x in range(X) for xp in range(X) if x != xp]
        rx_list += [(lab, ("diag", w)) for lab, w in _traceless_basis_diag(X)]
        for lx, spec in rx_list:
            for y in range(Y):
                for yp in range(Y):
                    if spec[0] == "off":
                        M = marg_b[spec[1], spec[2], y, yp]
                    else:
                        M = np.einsum("x,xbc->bc", spec[1], marg_b[np.arange(X), np.arange(X), y, yp])
                    cands.append((float(np.abs(M).max()), "qns1", lx, f"e{y}{yp}", M))
        ry_list = [(f"e{y}{yp}", ("off", y, yp)) for y in range(Y) for yp in range(Y) if y != yp]
        ry_list += [(lab, ("diag", w)) for lab, w in _traceless_basis_diag(Y)]
        for x in range(X):
            for xp in range(X):
                for ly, spec in ry_list:
                    if spec[0] == "off":
                        M = marg_a[x, xp, spec[1], spec[2]]
                    else:
                        M = np.einsum("y,yac->ac", spec[1], marg_a[x, xp, np.arange(Y), np.arange(Y)])
                    cands.append((float(np.abs(M).max()), "qns2", f"e{x}{xp}", ly, M))
        return _worst(cands, tol)

    def is_no_signalling(self, tol: float = TOL) -> bool:
        return self.ns_report(tol).ok

    def to_cqns(self) -> "CqnsCorrelation":
        """Restriction to diagonal inputs."""
        X, Y, A, B = self.dims
        C = self._blocks()
        blocks = np.stack([C[p, :, p, :] for p in range(X * Y)]).reshape(X, Y, A * B, A * B)
        return CqnsCorrelation(self.dims, blocks)


class CqnsCorrelation:
    """Channel ``D_XY -> M_AB`` stored as the blocks ``Gamma(eps_xx (x) eps_yy)``.

    Applied to a general input it first takes the diagonal, so it also acts as
    its canonical extension ``Gamma o Delta``.
    """

    classical_inputs = True

    def __init__(self, dims, blocks):
        self.dims = tuple(int(d) for d in dims)
        X, Y, A, B = self.dims
        blocks = np.asarray(blocks, dtype=np.complex128)
        if blocks.shape != (X, Y, A * B, A * B):
            raise ValueError(f"blocks of shape {blocks.shape} do not match dims {self.dims}")
        self.blocks = blocks

    def __repr__(self):
        return f"CqnsCorrelation(dims={self.dims})"

    def block(self, x: int, y: int) -> np.ndarray:
        return self.blocks[x, y].copy()

    def apply_diagonal(self, w) -> np.ndarray:
        X, Y, A, B = self.dims
        w = np.asarray(w).reshape(X, Y)
        return np.einsum("xy,xymn->mn", w, self.blocks)

    def apply(self, rho) -> np.ndarray:
        X, Y, A, B = self.dims
        rho = as_matrix(rho, "rho")
        if rho.shape != (X * Y, X * Y):
            raise ValueError(f"input of shape {rho.shape} does not match X*Y = {X * Y}")
        return self.apply_diagonal(np.diag(rho))

    def channel_report(self, tol: float = TOL) -> dict:
        b = self.blocks
        herm = float(np.abs(b - np.conj(np.swapaxes(b, -1, -2))).max())
        mineig = float(np.linalg.eigvalsh((b + np.conj(np.swapaxes(b, -1, -2))) / 2)[..., 0].min())
        defect = float(np.abs(np.trace(b, axis1=-2, axis2=-1) - 1).max())
        return {"channel": bool(herm <= tol and mineig >= -tol and defect <= tol),
                "hermiticity_defect": herm, "min_eigenvalue": mineig, "trace_defect": defect}

    def is_channel(self, tol: float = TOL) -> bool:
        return self.channel_report(tol)["channel"]

    def ns_report(self, tol: float = TOL) -> NsReport:
        X, Y, A, B = self.dims
        b = self.blocks.reshape(X, Y, A, B, A, B)
        marg_b = np.einsum("xyabac->xybc", b)
        marg_a = np.einsum("xyabcb->xyac", b)
        cands = []
        for lx, w in _traceless_basis_diag(X):
            for y in range(Y):
                M = np.einsum("x,xbc->bc", w, marg_b[:, y])
                cands.append((float(np.abs(M).max()), "qns1", lx, f"e{y}{y}", M))
        for x in range(X):
            for ly, w in _traceless_basis_diag(Y):
                M = np.einsum("y,yac->ac", w, marg_a[x])
                cands.append((float(np.abs(M).max()), "qns2", f"e{x}{x}", ly, M))
        return _worst(cands, tol)

    def is_no_signalling(self, tol: float = TOL) -> bool:
        return self.ns_report(tol).ok

    def extend(self) -> QnsCorrelation:
        """Choi matrix of ``Gamma o Delta_XY``."""
        X, Y, A, B = self.dims
        C = np.zeros((X * Y, A * B, X * Y, A * B), dtype=np.complex128)
        flat = self.blocks.reshape(X * Y, A * B, A * B)
        for p in range(X * Y):
            C[p, :, p, :] = flat[p]
        return QnsCorrelation(self.dims, C.reshape(X * Y * A * B, -1))

    @property
    def choi(self) -> np.ndarray:
        return self.extend().choi


def is_channel(gamma, tol: float = TOL) -> bool:
    return gamma.is_channel(tol)


def is_no_signalling(gamma, tol: float = TOL) -> bool:
    return gamma.is_no_signalling(tol)


def no_signalling_report(gamma, tol: float = TOL) -> NsReport:
    return gamma.ns_report(tol)


def apply(gamma, rho) -> np.ndarray:
    return gamma.apply(rho)


def extend_cq_to_q(gamma: CqnsCorrelation) -> QnsCorrelation:
    return gamma.extend()


def choi_from_blocks(dims, blocks) -> QnsCorrelation:
    """Assemble a correlation from ``Gamma(eps_{x,x'} (x) eps_{y,y'})``.

    ``blocks`` is either a callable ``(x, x', y, y') -> AB x AB matrix`` or an
    array of shape ``(X, X, Y, Y, A*B, A*B)``.
    """
    X, Y, A, B = (int(d) for d in dims)
    if callable(blocks):
        fn = blocks
    else:
        arr = np.asarray(blocks, dtype=np.complex128)
        if arr.shape != (X, X, Y, Y, A * B, A * B):
            raise ValueError("block array has the wrong shape")
        fn = lambda x, xp, y, yp: arr[x, xp, y, yp]
    C = np.zeros((X, Y, A * B, X, Y, A * B), dtype=np.complex128)
    for x in range(X):
        for xp in range(X):
            for y in range(Y):
                for yp in range(Y):
                    C[x, y, :, xp, yp, :] = as_matrix(fn(x, xp, y, yp))
    return QnsCorrelation((X, Y, A, B), C.reshape(X * Y * A * B, -1))


def cqns_from_blocks(dims, blocks) -> CqnsCorrelation:
    """Classical-input correlation from a callable ``(x, y) -> block`` or an array."""
    X, Y, A, B = (int(d) for d in dims)
    if callable(blocks):
        arr = np.stack([np.stack([as_matrix(blocks(x, y)) for y in range(Y)]) for x in range(X)])
    else:
        arr = np.asarray(blocks, dtype=np.complex128)
    return CqnsCorrelation((X, Y, A, B), arr)


# ---------------------------------------------------------------- single-party channels

@dataclass(eq=False)
class LocalChannel:
    """Single-party map ``M_in -> M_out`` stored by its Choi matrix over ``(x, a)``."""

    choi: np.ndarray
    n_in: int
    n_out: int

    def __post_init__(self):
        self.choi = as_matrix(self.choi, "choi")
        if self.choi.shape != (self.n_in * self.n_out,) * 2:
            raise ValueError("Choi matrix does not match the stated dimensions")

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], n_in: int, n_out: int) -> "LocalChannel":
        C = np.zeros((n_in, n_out, n_in, n_out), dtype=np.complex128)
        for x in range(n_in):
            for xp in range(n_in):
                C[x, :, xp, :] = fn(matrix_unit(x, xp, n_in))
        return cls(C.reshape(n_in * n_out, n_in * n_out), n_in, n_out)

    @classmethod
    def identity(cls, n: int) -> "LocalChannel":
        return cls.from_function(lambda r: r, n, n)

    @classmethod
    def replacement(cls, sigma, n_in: int) -> "LocalChannel":
        sigma = as_matrix(sigma)
        return cls.from_function(lambda r: np.trace(r) * sigma, n_in, sigma.shape[0])

    @classmethod
    def from_kraus(cls, ops, n_in: int) -> "LocalChannel":
        ops = [as_matrix(K) for K in ops]
        return cls.from_function(lambda r: sum(K @ r @ K.conj().T for K in ops), n_in, ops[0].shape[0])

    def apply(self, rho) -> np.ndarray:
        C = self.choi.reshape(self.n_in, self.n_out, self.n_in, self.n_out)
        return np.einsum("pq,pmqn->mn", as_matrix(rho), C)


def local_from_channels(pairs: Sequence) -> QnsCorrelation:
    """Convex combination ``sum_i lambda_i Phi_i (x) Psi_i`` of product channels.

    Each pair is ``(Phi, Psi, weight)`` with :class:`LocalChannel` entries and
    nonnegative weights summing to one.
    """
    if len(pairs) == 0:
        raise ValueError("need at least one pair")
    ws = np.array([float(p[2]) for p in pairs])
    if np.any(ws < 0) or abs(ws.sum() - 1) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to one")
    phi0, psi0, _ = pairs[0]
    dims = (phi0.n_in, psi0.n_in, phi0.n_out, psi0.n_out)
    X, Y, A, B = dims
    total = np.zeros((X, Y, A, B) * 2, dtype=np.complex128)
    for phi, psi, w in pairs:
        if (phi.n_in, psi.n_in, phi.n_out, psi.n_out) != dims:
            raise ValueError("all pairs must share the same dimensions")
        P = phi.choi.reshape(X, A, X, A)
        S = psi.choi.reshape(Y, B, Y, B)
        total += float(w) * np.einsum("xaXA,ybYB->xyabXYAB", P, S)
    return QnsCorrelation(dims, total.reshape(X * Y * A * B, -1))


def local_from_orthogonal_rep(vectors) -> CqnsCorrelation:
    """``Gamma(eps_xx (x) eps_yy) = (xi_x xi_x^*) (x) (conj(xi_y) conj(xi_y)^*)``."""
    V = np.asarray(vectors, dtype=np.complex128)
    if V.ndim != 2:
        raise ValueError("vectors must be given as an array of shape (|X|, |A|)")
    if np.abs(np.linalg.norm(V, axis=1) - 1).max() > 1e-9:
        raise ValueError("orthogonal representation vectors must be unit vectors")
    X, A = V.shape
    P = np.einsum("xa,xb->xab", V, V.conj())
    blocks = np.einsum("xab,ycd->xyacbd", P, P.conj()).reshape(X, X, A * A, A * A)
    return CqnsCorrelation((X, X, A, A), blocks)


# ---------------------------------------------------------------- representation types

@dataclass(eq=False)
class StochasticOperatorMatrix:
    """Blocks ``E[x, x', a, a']`` in ``M_k``; array shape ``(X, X, A, A, k, k)``."""

    blocks: np.ndarray
    semi_classical: bool = False

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=np.complex128)
        if self.blocks.ndim != 6:
            raise ValueError("SOM blocks must have shape (X, X, A, A, k, k)")

    @classmethod
    def from_semiclassical(cls, diag_blocks) -> "StochasticOperatorMatrix":
        """Build from ``E[x, a, a']`` (shape ``(X, A, A, k, k)``)."""
        d = np.asarray(diag_blocks, dtype=np.complex128)
        X, A, _, k, _ = d.shape
        full = np.zeros((X, X, A, A, k, k), dtype=np.complex128)
        for x in range(X):
            full[x, x] = d[x]
        return cls(full, True)

    @property
    def shape(self):
        X, _, A, _, k, _ = self.blocks.shape
        return X, A, k

    @property
    def aux_dim(self) -> int:
        return self.blocks.shape[-1]

    @property
    def diagonal_blocks(self) -> np.ndarray:
        X = self.blocks.shape[0]
        return np.stack([self.blocks[x, x] for x in range(X)])

    def assembled(self) -> np.ndarray:
        X, A, k = self.shape
        return self.blocks.transpose(0, 2, 4, 1, 3, 5).reshape(X * A * k, X * A * k)

    def residuals(self) -> dict:
        X, A, k = self.shape
        big = self.assembled()
        tr = np.einsum("xXaaij->xXij", self.blocks)
        target = np.einsum("xX,ij->xXij", np.eye(X), np.eye(k))
        off = 0.0
        for x in range(X):
            for xp in range(X):
                if x != xp:
                    off = max(off, float(np.abs(self.blocks[x, xp]).max()))
        return {"min_eigenvalue": _min_eig(big),
                "hermiticity": float(np.abs(big - big.conj().T).max()),
                "partial_trace": float(np.abs(tr - target).max()),
                "off_diagonal": off}

    def validate(self, tol: float = TOL) -> None:
        r = self.residuals()
        if r["min_eigenvalue"] < -tol or r["hermiticity"] > tol:
            raise ValueError(f"SOM block matrix is not PSD: {r}")
        if r["partial_trace"] > tol:
            raise ValueError(f"SOM diagonal sums are not the identity: {r}")
        if self.semi_classical and r["off_diagonal"] > tol:
            raise ValueError("semi-classical SOM has nonzero off-diagonal input blocks")


@dataclass(eq=False)
class MatrixUnitSystemFamily:
    """Systems ``e[x, a, a']`` in ``M_n``; array shape ``(X, A, A, n, n)``."""

    systems: np.ndarray

    def __post_init__(self):
        self.systems = np.asarray(self.systems, dtype=np.complex128)
        if self.systems.ndim != 5:
            raise ValueError("systems must have shape (X, A, A, n, n)")

    @property
    def shape(self):
        X, A, _, n, _ = self.systems.shape
        return X, A, n

    @property
    def n(self) -> int:
        return self.systems.shape[-1]

    def residual(self) -> float:
        """Largest violation of the matrix-unit relations."""
        e = self.systems
        X, A, n = self.shape
        r1 = 0.0
        for b in range(A):
            for c in range(A):
                # e[x,a,b] e[x,c,d] for all a, d at once
                prod = e[:, :, b][:, :, None] @ e[:, c][:, None, :]
                target = e if b == c else 0
                r1 = max(r1, float(np.abs(prod - target).max()))
        r2 = np.abs(e - np.conj(np.transpose(e, (0, 2, 1, 4, 3)))).max()
        r3 = np.abs(np.einsum("xaaij->xij", e) - np.eye(n)).max()
        return float(max(r1, r2, r3))

    def validate(self, tol: float = TOL) -> None:
        r = self.residual()
        if r > tol:
            raise ValueError(f"matrix unit relations fail with residual {r:.3e}")

    def as_som(self) -> StochasticOperatorMatrix:
        return StochasticOperatorMatrix.from_semiclassical(self.systems)

    def block_matrix(self, x: int) -> np.ndarray:
        """``sum_{a,a'} eps_{a,a'} (x) e[x,a,a']`` in ``M_A (x) M_n``."""
        X, A, n = self.shape
        return self.systems[x].transpose(0, 2, 1, 3).reshape(A * n, A * n)


def canonical_matrix_units(A: int, k: int = 1, X: int = 1) -> MatrixUnitSystemFamily:
    """``e[x, a, a'] = eps_{a,a'} (x) I_k`` for every ``x``."""
    e = np.stack([np.stack([np.kron(matrix_unit(a, b, A), np.eye(k)) for b in range(A)])
                  for a in range(A)])
    return MatrixUnitSystemFamily(np.stack([e] * X))


@dataclass(eq=False)
class BrownRep:
    """Blocks ``u[a, x]`` in ``M_k`` of a block unitary; array shape ``(A, X, k, k)``."""

    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.complex128)
        A, X, k, k2 = self.u.shape
        if A != X or k != k2:
            raise ValueError("BrownRep needs square blocks and |A| = |X|")

    @property
    def shape(self):
        A, X, k, _ = self.u.shape
        return X, k

    def block_matrix(self) -> np.ndarray:
        A, X, k, _ = self.u.shape
        return self.u.transpose(0, 2, 1, 3).reshape(A * k, X * k)

    def validate(self, tol: float = TOL) -> None:
        U = self.block_matrix()
        err = np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()
        if err > tol:
            raise ValueError(f"Brown block matrix is not unitary (defect {err:.3e})")

    def p(self) -> StochasticOperatorMatrix:
        """``p[x, x', a, a'] = u[a,x]^* u[a',x']``."""
        P = np.einsum("axji,bXjk->xXabik", self.u.conj(), self.u)
        return StochasticOperatorMatrix(P)

    def w(self) -> np.ndarray:
        """``tr_k(sum_x u[a,x]^* u[b,x])`` for all ``a, b``."""
        k = self.u.shape[-1]
        return np.einsum("axji,bxji->ab", self.u.conj(), self.u) / k


# ---------------------------------------------------------------- constructions

def from_som_pair(E: StochasticOperatorMatrix, F: StochasticOperatorMatrix, xi) -> QnsCorrelation:
    """Block ``(x,x',y,y')`` entry ``((a,b),(a',b'))`` is ``<(E[x,x',a,a'] (x) F[y,y',b,b']) xi, xi>``."""
    XE, A, kE = E.shape
    YF, B, kF = F.shape
    xi = np.asarray(xi, dtype=np.complex128).reshape(-1)
    if xi.size != kE * kF:
        raise ValueError(f"state of length {xi.size} does not match {kE}*{kF}")
    if abs(np.linalg.norm(xi) - 1) > 1e-10:
        raise ValueError("shared state must be a unit vector")
    Xi = xi.reshape(kE, kF)
    T = np.einsum("ij,xXaAik,yYbBjl,kl->xyabXYAB", Xi.conj(), E.blocks, F.blocks, Xi, optimize=True)
    N = XE * YF * A * B
    return QnsCorrelation((XE, YF, A, B), T.reshape(N, N))


def tracial_from_som(E: StochasticOperatorMatrix) -> QnsCorrelation:
    """``Gamma(eps_{x,x'} (x) eps_{y,y'}) = (tr(E[x,x',a,a'] E[y',y,b',b]))``."""
    X, A, k = E.shape
    T = np.einsum("xXaAij,YyBbji->xyabXYAB", E.blocks, E.blocks, optimize=True) / k
    N = X * X * A * A
    return QnsCorrelation((X, X, A, A), T.reshape(N, N))


def tracial_from_brown_rep(rep: BrownRep) -> QnsCorrelation:
    rep.validate()
    return tracial_from_som(rep.p())


def _tracial_blocks(e: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``blocks[x, y, (a,b), (a',b')] = tr(e[x,a,a'] f[y,b',b])``."""
    X, A, _, n, _ = e.shape
    Y, B = f.shape[0], f.shape[1]
    T = np.einsum("xaAij,yBbji->xyabAB", e, f, optimize=True) / n
    return T.reshape(X, Y, A * B, A * B)


def tracial_cqns_from_mus(rep: MatrixUnitSystemFamily) -> CqnsCorrelation:
    rep.validate()
    X, A, n = rep.shape
    return CqnsCorrelation((X, X, A, A), _tracial_blocks(rep.systems, rep.systems))


# ---------------------------------------------------------------- mirror construction

@dataclass(eq=False)
class MirrorGameSpec:
    """Data of the mirror construction.

    ``f`` and ``g`` are lists; ``U[x]`` and ``V[y]`` are unitaries ``C^B -> C^A``;
    ``rep`` holds the first player's systems ``e[x, a, a']``.
    """

    f: list
    g: list
    U: list
    V: list
    rep: MatrixUnitSystemFamily

    def __post_init__(self):
        self.f = [int(v) for v in self.f]
        self.g = [int(v) for v in self.g]
        self.U = [as_matrix(u) for u in self.U]
        self.V = [as_matrix(v) for v in self.V]
        X, A, n = self.rep.shape
        Y = len(self.g)
        if len(self.f) != X or len(self.U) != X or len(self.V) != Y:
            raise ValueError("mirror spec: f, U must be indexed by X and g, V by Y")
        if any(not 0 <= y < Y for y in self.f) or any(not 0 <= x < X for x in self.g):
            raise ValueError("mirror spec: f or g is not a total function")
        for W in self.U + self.V:
            if W.shape != (A, A) or np.abs(W.conj().T @ W - np.eye(A)).max() > TOL:
                raise ValueError("mirror spec: U_x and V_y must be unitary of size |A|")

    @property
    def dims(self):
        X, A, n = self.rep.shape
        return X, len(self.g), A, A


def _conj_block(W: np.ndarray, Ex: np.ndarray, n: int) -> np.ndarray:
    """``(W^* (x) I) Ex (W (x) I)`` reshaped to ``[b, b', n, n]``."""
    B = W.shape[1]
    Wi = np.kron(W, np.eye(n))
    M = Wi.conj().T @ Ex @ Wi
    return M.reshape(B, n, B, n).transpose(0, 2, 1, 3)


def mirror_rho(spec: MirrorGameSpec, tol: float = TOL) -> np.ndarray:
    """Images ``rho(f[y, b, b'])`` as an array ``(Y, B, B, n, n)``.

    Defined through ``U_x`` at ``y = f(x)`` and cross-checked against the
    ``V_y`` description; inconsistent hypotheses raise ``ValueError``.
    """
    X, Y, A, B = spec.dims
    n = spec.rep.n
    if sorted(spec.f) != list(range(Y)) or sorted(spec.g) != list(range(X)):
        raise ValueError("mirror spec: f and g must be bijections")
    rho = np.zeros((Y, B, B, n, n), dtype=np.complex128)
    for x in range(X):
        rho[spec.f[x]] = _conj_block(spec.U[x], spec.rep.block_matrix(x), n)
    for y in range(Y):
        alt = _conj_block(spec.V[y], spec.rep.block_matrix(spec.g[y]), n)
        err = np.abs(alt - rho[y]).max()
        if err > tol:
            raise ValueError(f"mirror spec: U and V descriptions of rho disagree at y={y} ({err:.3e})")
    r = MatrixUnitSystemFamily(rho).residual()
    if r > tol:
        raise ValueError(f"mirror spec: rho images are not matrix units ({r:.3e})")
    return rho


def mirror_strategy(spec: MirrorGameSpec) -> CqnsCorrelation:
    """``Gamma(eps_xx (x) eps_yy)_{(a,b),(a',b')} = tr(e[x,a,a'] rho(f[y,b',b]))``."""
    rho = mirror_rho(spec)
    return CqnsCorrelation(spec.dims, _tracial_blocks(spec.rep.systems, rho))


def mirror_targets(spec: MirrorGameSpec) -> list:
    """``(x, zeta_{U_x} zeta_{U_x}^*)`` for every ``x``; the expected value of
    ``Gamma(eps_xx (x) eps_{f(x)f(x)})``."""
    out = []
    for x, U in enumerate(spec.U):
        z = vectorize(U, normalize=True)
        out.append((x, np.outer(z, z.conj())))
    return out


def mirror_game(spec: MirrorGameSpec) -> SupportRuleGame:
    """Rules ``zeta_{U_x} zeta_{U_x}^*`` at ``(x, f(x))`` and ``zeta_{V_y} zeta_{V_y}^*`` at
    ``(g(y), y)``; every other input is unconstrained."""
    X, Y, A, B = spec.dims
    rules = []
    for x in range(X):
        z = vectorize(spec.U[x], normalize=True)
        d = np.zeros(X * Y)
        d[x * Y + spec.f[x]] = 1
        rules.append(Rule(d, np.outer(z, z.conj())))
    for y in range(Y):
        z = vectorize(spec.V[y], normalize=True)
        d = np.zeros(X * Y)
        d[spec.g[y] * Y + y] = 1
        rules.append(Rule(d, np.outer(z, z.conj())))
    return SupportRuleGame((X, Y, A, B), rules, True)


def mirror_lemma_residual(spec: MirrorGameSpec) -> float:
    """Largest ``||(U_x (x) I)^* E_x (e_a (x) xi) - F_{f(x)}^t (U_x (x) I)^* (e_a (x) xi)||``.

    Finite model: ``H = C^n (x) C^n`` with ``xi = m_n`` (so ``<(S (x) T) xi, xi> =
    tr(S T^t)``), ``pi_1(e) = e (x) I`` and ``pi_2(f[y,b,b']) = I (x) rho(f[y,b',b])^t``.
    The block transpose ``F^t`` has ``(b, b')`` entry ``pi_2(f[y,b',b])``.
    """
    X, Y, A, B = spec.dims
    n = spec.rep.n
    rho = mirror_rho(spec)
    xi = vectorize(np.eye(n), normalize=True)
    In = np.eye(n)
    worst = 0.0
    for x in range(X):
        y = spec.f[x]
        Ex = np.zeros((A * n * n, A * n * n), dtype=np.complex128)
        FtT = np.zeros((B * n * n, B * n * n), dtype=np.complex128)
        for a in range(A):
            for ap in range(A):
                Ex[a * n * n:(a + 1) * n * n, ap * n * n:(ap + 1) * n * n] = np.kron(spec.rep.systems[x, a, ap], In)
        for b in range(B):
            for bp in range(B):
                FtT[b * n * n:(b + 1) * n * n, bp * n * n:(bp + 1) * n * n] = np.kron(In, rho[y, b, bp].T)
        Ut = np.kron(spec.U[x], np.eye(n * n))
        for a in range(A):
            v = np.kron(np.eye(A)[a], xi)
            lhs = Ut.conj().T @ (Ex @ v)
            rhs = FtT @ (Ut.conj().T @ v)
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


# ---------------------------------------------------------------- sampling

def random_semiclassical_som(X: int, A: int, k: int, rng: np.random.Generator,
                             env: Optional[int] = None) -> StochasticOperatorMatrix:
    """``E[x,a,a'] = V_{x,a}^* V_{x,a'}`` from a random isometry ``C^k -> C^A (x) C^env``.

    The block matrix of each input has rank at most ``env``; the default
    ``env = k`` gives the minimal rank ``k``.
    """
    env = k if env is None else env
    d = np.zeros((X, A, A, k, k), dtype=np.complex128)
    for x in range(X):
        V = haar_isometry(A * env, k, rng).reshape(A, env, k)
        d[x] = np.einsum("aji,bjk->abik", V.conj(), V)
    return StochasticOperatorMatrix.from_semiclassical(d)


def random_som(X: int, A: int, k: int, rng: np.random.Generator,
               env: Optional[int] = None) -> StochasticOperatorMatrix:
    """``E[x,x',a,a'] = v_{a,x}^* v_{a',x'}`` from a random isometry ``C^X (x) C^k -> C^A (x) C^env``."""
    env = max(-(-X * k // A), k) if env is None else env
    V = haar_isometry(A * env, X * k, rng).reshape(A, env, X, k)
    blocks = np.einsum("ajxi,bjXk->xXabik", V.conj(), V)
    return StochasticOperatorMatrix(blocks)


def sample_rep(kind: str, dims, aux: int, seed: int):
    """Seeded random representation.

    * ``'matrix_units'``: ``dims = (X, A)``; ``e[x,a,a'] = W_x (eps_{a,a'} (x) I_aux) W_x^*``
    * ``'brown'``: ``dims = (X,)``; Haar block unitary of size ``X * aux``
    * ``'semiclassical_som'``: ``dims = (X, A)``; see :func:`random_semiclassical_som`
    * ``'som'``: ``dims = (X, A)``; see :func:`random_som`
    """
    if aux < 1:
        raise ValueError("aux must be at least 1")
    rng = np.random.default_rng(seed)
    if kind == "matrix_units":
        X, A = dims
        base = canonical_matrix_units(A, aux).systems[0]
        sys = []
        for _ in range(X):
            W = haar_unitary(A * aux, rng)
            sys.append(np.einsum("ij,abjk,lk->abil", W, base, W.conj()))
        return MatrixUnitSystemFamily(np.stack(sys))
    if kind == "brown":
        (X,) = tuple(dims)[:1]
        U = haar_unitary(X * aux, rng)
        return BrownRep(U.reshape(X, aux, X, aux).transpose(0, 2, 1, 3))
    if kind == "semiclassical_som":
        X, A = dims
        return random_semiclassical_som(X, A, aux, rng)
    if kind == "som":
        X, A = dims
        return random_som(X, A, aux, rng)
    raise ValueError(f"unknown representation kind {kind!r}")


def random_mirror_spec(X: int, A: int, m: int, seed: int) -> MirrorGameSpec:
    """Random consistent mirror data: bijection ``f``, ``g = f^{-1}``,
    ``V_y = U_{g(y)}`` and random systems in ``M_{A m}``."""
    rng = np.random.default_rng(seed)
    rep = sample_rep("matrix_units", (X, A), m, int(rng.integers(2**63)))
    f = [int(v) for v in rng.permutation(X)]
    g = [0] * X
    for x, y in enumerate(f):
        g[y] = x
    U = [haar_unitary(A, rng) for _ in range(X)]
    V = [U[g[y]] for y in range(X)]
    return MirrorGameSpec(f, g, U, V, rep)


def concurrency_defect(gamma: CqnsCorrelation) -> float:
    """``max_x |Gamma(eps_xx (x) eps_xx) - J_A|``."""
    X, Y, A, B = gamma.dims
    _, J, _ = entangled_constants(A)
    return float(max(np.abs(gamma.blocks[x, x] - J).max() for x in range(X)))
