"""Quantum colourings, the K_{d^2} construction, orthogonal representations and
Lovasz theta bounds.

A colouring is stored through its blocks ``r[x, a, b]`` in ``M_k`` with
``Psi(eps_{a,b}) = sum_x eps_{x,x} (x) r[x, a, b]``.  The Kraus operators are
recovered from the Choi matrix and act ``C^A -> C^X (x) C^k``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .correlations import CqnsCorrelation, MatrixUnitSystemFamily, tracial_cqns_from_mus
from .graph import Graph, complete_graph
from .quantum_graphs import KrausFamily
from .tensor_core import haar_isometry, haar_unitary

TOL = 1e-9


class HypothesisError(ValueError):
    """Raised when an operation is called on data outside its hypothesis."""


# ---------------------------------------------------------------------------
# colourings


def _images(blocks: np.ndarray) -> np.ndarray:
    """``Psi(eps_{a,b})`` as an array ``(A, A, Xk, Xk)``."""
    X, A, _, k, _ = blocks.shape
    out = np.zeros((A, A, X, k, X, k), dtype=np.complex128)
    for x in range(X):
        out[:, :, x, :, x, :] = blocks[x]
    return out.reshape(A, A, X * k, X * k)


@dataclass(eq=False)
class QuantumColouring:
    """UCP map ``M_A -> D_X (x) M_k`` attached to a graph."""

    graph: Graph
    ucp_blocks: np.ndarray  # (X, A, A, k, k)
    kraus: Optional[KrausFamily] = None

    def __post_init__(self):
        b = np.asarray(self.ucp_blocks, dtype=np.complex128)
        if b.ndim != 5 or b.shape[1] != b.shape[2] or b.shape[3] != b.shape[4]:
            raise ValueError("ucp_blocks must have shape (X, A, A, k, k)")
        if b.shape[0] != self.graph.n:
            raise ValueError(f"{b.shape[0]} blocks for a graph on {self.graph.n} vertices")
        self.ucp_blocks = b
        if self.kraus is None:
            self.kraus = KrausFamily.from_unit_images(_images(b))
        elif self.kraus.n_in != self.A or self.kraus.n_out != self.graph.n * self.k:
            raise ValueError("Kraus family dimensions do not match the blocks")

    @property
    def A(self) -> int:
        return self.ucp_blocks.shape[1]

    @property
    def k(self) -> int:
        return self.ucp_blocks.shape[3]

    @property
    def X(self) -> int:
        return self.ucp_blocks.shape[0]

    def images(self) -> np.ndarray:
        return _images(self.ucp_blocks)

    def residuals(self) -> dict:
        b = self.ucp_blocks
        unital = float(np.abs(np.einsum("xaaij->xij", b) - np.eye(self.k)).max()) if self.X else 0.0
        C = self.images().transpose(0, 2, 1, 3).reshape(self.A * self.X * self.k, -1)
        C = (C + C.conj().T) / 2
        min_eig = float(np.linalg.eigvalsh(C)[0]) if C.size else 0.0
        kraus = float(np.abs(self.kraus.unit_images() - self.images()).max()) if self.X else 0.0
        return {"unital": unital, "min_choi_eigenvalue": min_eig, "kraus_mismatch": kraus}

    def validate(self, tol: float = TOL) -> None:
        r = self.residuals()
        if r["unital"] > tol:
            raise ValueError(f"map is not unital (residual {r['unital']:.3e})")
        if r["min_choi_eigenvalue"] < -tol:
            raise ValueError(f"map is not completely positive (eigenvalue {r['min_choi_eigenvalue']:.3e})")
        if r["kraus_mismatch"] > tol:
            raise ValueError(f"Kraus family does not reproduce the map ({r['kraus_mismatch']:.3e})")

    def to_json(self) -> dict:
        from .io import matrix_to_json
        X, A, _, k, _ = self.ucp_blocks.shape
        return {"graph": self.graph.to_json(), "A": A, "k": k,
                "ucp_blocks": [[[matrix_to_json(self.ucp_blocks[x, a, b]) for b in range(A)]
                                for a in range(A)] for x in range(X)],
                "kraus": self.kraus.to_json()}


@dataclass
class ColouringReport:
    scalar_condition: bool
    edge_condition: bool
    scalar_residual: float
    edge_residual: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _kraus_legs(c: QuantumColouring) -> np.ndarray:
    """Kraus operators reshaped to ``(m, X, k, A)``."""
    return c.kraus.ops.reshape(len(c.kraus), c.X, c.k, c.A)


def colouring_check(c: QuantumColouring, tol: float = TOL) -> ColouringReport:
    """Scalar test on ``M_i^* (eps_xx (x) I) M_j`` and trace test on
    ``M_i^* (eps_vw (x) I) M_j`` over ordered edges."""
    c.validate(tol)
    M = _kraus_legs(c)
    A = c.A
    C = np.einsum("ixpa,jxpb->xijab", M.conj(), M)
    tr = np.einsum("xijaa->xij", C)
    dev = C - tr[..., None, None] / A * np.eye(A)
    scal = float(np.sqrt((np.abs(dev) ** 2).sum(axis=(-2, -1))).max()) if C.size else 0.0
    T = np.einsum("ivpa,jwpa->vwij", M.conj(), M)
    edges = c.graph.directed_edges()
    edge = max((float(np.abs(T[v, w]).max()) for v, w in edges), default=0.0)
    return ColouringReport(scal <= tol, edge <= tol, scal, edge)


def homomorphism_residual(c: QuantumColouring) -> float:
    """``max |r[x,a,b] r[x,c,d] - delta_{bc} r[x,a,d]|``."""
    r = c.ucp_blocks
    A = c.A
    worst = 0.0
    for b in range(A):
        for cc in range(A):
            prod = r[:, :, b][:, :, None] @ r[:, cc][:, None, :]  # (X, a, d, k, k)
            target = r if b == cc else 0
            worst = max(worst, float(np.abs(prod - target).max()) if r.size else 0.0)
    return worst


def ucp_homomorphism_check(c: QuantumColouring, tol: float = TOL) -> bool:
    return homomorphism_residual(c) <= tol


@dataclass
class ProbeReport:
    lhs: bool
    rhs: bool

    @property
    def agree(self) -> bool:
        return self.lhs == self.rhs


def equivalence_probe_dx(c: QuantumColouring, tol: float = TOL) -> ProbeReport:
    """Multiplicativity of ``Psi`` against the scalar compression condition."""
    return ProbeReport(ucp_homomorphism_check(c, tol), colouring_check(c, tol).scalar_condition)


def edge_relation_residual(blocks: np.ndarray, G: Graph) -> float:
    """``max_{v~w} || sum_{a,b} r[v,a,b] r[w,b,a] ||``."""
    worst = 0.0
    for v, w in G.directed_edges():
        S = np.einsum("abij,bajk->ik", blocks[v], blocks[w])
        worst = max(worst, float(np.linalg.norm(S, 2)))
    return worst


def edge_trace_condition(c: QuantumColouring, tol: float = TOL) -> bool:
    """Edge sum relation; only defined when ``Psi`` is a *-homomorphism."""
    if not ucp_homomorphism_check(c, tol):
        raise HypothesisError("map is not a *-homomorphism")
    return edge_relation_residual(c.ucp_blocks, c.graph) <= tol


def equivalence_probe_sg(c: QuantumColouring, tol: float = TOL) -> ProbeReport:
    return ProbeReport(edge_trace_condition(c, tol), colouring_check(c, tol).edge_condition)


# ---------------------------------------------------------------------------
# game algebra representations


@dataclass(eq=False)
class GameAlgebraRep:
    rep: MatrixUnitSystemFamily
    graph: Graph

    def __post_init__(self):
        if self.rep.shape[0] != self.graph.n:
            raise ValueError("one matrix unit system per vertex is required")

    def relation_residual(self) -> float:
        return edge_relation_residual(self.rep.systems, self.graph)

    def validate(self, tol: float = TOL) -> None:
        self.rep.validate(tol)
        r = self.relation_residual()
        if r > tol:
            raise ValueError(f"edge relation violated (residual {r:.3e})")

    def correlation(self) -> CqnsCorrelation:
        return tracial_cqns_from_mus(self.rep)

    def colouring(self) -> QuantumColouring:
        return QuantumColouring(self.graph, self.rep.systems)


def kd2_systems(d: int) -> np.ndarray:
    """``E[x, z, z'] = zeta^{(z'-z) b'} e_{z-a'} e_{z'-a'}^*`` with ``x = a' d + b'``."""
    if d < 2:
        raise ValueError("d must be at least 2")
    zeta = np.exp(2j * np.pi / d)
    E = np.zeros((d * d, d, d, d, d), dtype=np.complex128)
    for ap in range(d):
        for bp in range(d):
            x = ap * d + bp
            for z in range(d):
                for zp in range(d):
                    E[x, z, zp, (z - ap) % d, (zp - ap) % d] = zeta ** (((zp - z) * bp) % d)
    return E


def kd2_generators(d: int) -> GameAlgebraRep:
    return GameAlgebraRep(MatrixUnitSystemFamily(kd2_systems(d)), complete_graph(d * d))


def game_algebra_rep_check(rep: MatrixUnitSystemFamily, G: Graph, tol: float = TOL) -> bool:
    if rep.shape[0] != G.n:
        return False
    return rep.residual() <= tol and edge_relation_residual(rep.systems, G) <= tol


# ---------------------------------------------------------------------------
# random instances for the equivalence probes


def _hom_blocks(Ws: np.ndarray, A: int) -> np.ndarray:
    """``r[x] = W_x (eps_ab (x) I_m) W_x^*`` for unitaries ``W_x`` of size ``A m``."""
    X, k, _ = Ws.shape
    m = k // A
    units = np.zeros((A, A, k, k), dtype=np.complex128)
    for a in range(A):
        for b in range(A):
            E = np.zeros((A, A))
            E[a, b] = 1
            units[a, b] = np.kron(E, np.eye(m))
    return np.einsum("xij,abjl,xml->xabim", Ws, units, Ws.conj(), optimize=True)


def _ucp_blocks(X: int, A: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Generic UCP: ``r[x,a,b] = V_x^* (eps_ab (x) I_m) V_x`` for an isometry ``V_x: C^k -> C^A (x) C^m``."""
    m = max(1, -(-k // A)) + int(rng.integers(0, 2))
    out = np.zeros((X, A, A, k, k), dtype=np.complex128)
    for x in range(X):
        V = haar_isometry(A * m, k, rng).reshape(A, m, k)
        out[x] = np.einsum("aji,bjl->abil", V.conj(), V)
    return out


def random_dx_instance(seed: int) -> QuantumColouring:
    """Random colouring with ``|X|, |A|, k <= 3`` mixing homomorphisms,
    convex mixtures of two homomorphisms, generic UCP maps and classical maps."""
    rng = np.random.default_rng(seed)
    X, A, k = (int(v) for v in rng.integers(1, 4, size=3))
    kind = ["hom", "mixture", "ucp", "classical"][seed % 4]
    if kind in ("hom", "mixture") and k % A:
        kind = "ucp"
    if kind == "hom":
        blocks = _hom_blocks(np.stack([haar_unitary(k, rng) for _ in range(X)]), A)
    elif kind == "mixture":
        t = float(rng.uniform(0.2, 0.8))
        b1 = _hom_blocks(np.stack([haar_unitary(k, rng) for _ in range(X)]), A)
        b2 = _hom_blocks(np.stack([haar_unitary(k, rng) for _ in range(X)]), A)
        blocks = t * b1 + (1 - t) * b2
    elif kind == "ucp":
        blocks = _ucp_blocks(X, A, k, rng)
    else:
        blocks = np.zeros((X, A, A, k, k), dtype=np.complex128)
        for x in range(X):
            c = int(rng.integers(0, A))
            blocks[x, c, c] = np.eye(k)
    G = Graph(X, [(u, v) for u in range(X) for v in range(u + 1, X) if rng.random() < 0.5])
    return QuantumColouring(G, blocks)


def weyl_unitary(a: int, b: int, d: int) -> np.ndarray:
    """Shift^a times clock^b on ``C^d``."""
    S = np.roll(np.eye(d), a, axis=0)
    Z = np.diag(np.exp(2j * np.pi * b * np.arange(d) / d))
    return S @ Z


def random_sg_instance(seed: int) -> QuantumColouring:
    """Random homomorphic colouring ``r[x] = V (U_x (x) I_m) eps (U_x (x) I_m)^* V^*``.

    Vertices get Weyl unitaries (pairwise orthogonal when labels differ, so the
    edge relation holds iff adjacent labels differ), or Haar unitaries.
    """
    rng = np.random.default_rng(seed)
    X = int(rng.integers(1, 5))
    A = int(rng.integers(2, 4))
    m = int(rng.integers(1, 3))
    k = A * m
    V = haar_unitary(k, rng)
    G = Graph(X, [(u, v) for u in range(X) for v in range(u + 1, X) if rng.random() < 0.6])
    mode = seed % 3
    Ws = []
    for x in range(X):
        if mode == 2:
            U = haar_unitary(A, rng)
        else:
            if mode == 0:  # labels distinct since X <= 4 <= A^2
                lab = x % (A * A)
            else:  # labels may collide on edges
                lab = int(rng.integers(0, A * A))
            U = weyl_unitary(lab // A, lab % A, A)
        Ws.append(V @ np.kron(U, np.eye(m)))
    return QuantumColouring(G, _hom_blocks(np.stack(Ws), A))


def run_probe(kind: str, n: int, seed: int = 0, threads: int = 1, tol: float = TOL) -> dict:
    """Evaluate a probe over ``n`` consecutive seeds; results are in seed order."""
    if kind == "dx":
        job = lambda s: equivalence_probe_dx(random_dx_instance(s), tol)
    elif kind == "sg":
        job = lambda s: equivalence_probe_sg(random_sg_instance(s), tol)
    else:
        raise ValueError(f"unknown probe {kind!r}")
    seeds = range(seed, seed + n)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            reports = list(ex.map(job, seeds))
    else:
        reports = [job(s) for s in seeds]
    agree = sum(r.agree for r in reports)
    return {"instances": n, "agree": agree, "rate": agree / n if n else 1.0,
            "lhs_true": sum(r.lhs for r in reports),
            "disagreements": [s for s, r in zip(seeds, reports) if not r.agree]}


# ---------------------------------------------------------------------------
# orthogonal representations


def orth_objective(G: Graph, vecs) -> float:
    """``sum_{x~y} |<xi_x, xi_y>|^2`` over unordered edges."""
    V = np.asarray(vecs)
    return float(sum(abs(np.vdot(V[u], V[v])) ** 2 for u, v in G.edges))


def _normalize_rows(V: np.ndarray) -> np.ndarray:
    return V / np.linalg.norm(V, axis=-1, keepdims=True)


def _search_batch(adj: np.ndarray, k: int, seeds, iters: int, step: float, target: float):
    n = adj.shape[0]
    V = np.stack([_normalize_rows(rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k)))
                  for rng in (np.random.default_rng(s) for s in seeds)])
    active = np.ones(len(seeds), dtype=bool)
    obj = np.full(len(seeds), np.inf)
    for _ in range(iters):
        W = V[active]
        gram = W.conj() @ W.transpose(0, 2, 1)  # <xi_x, xi_y>
        o = 0.5 * (np.abs(gram) ** 2 * adj).sum(axis=(1, 2))
        obj[active] = o
        done = o <= target
        if done.any():
            idx = np.flatnonzero(active)
            active[idx[done]] = False
            W = W[~done]
            gram = gram[~done]
            if not active.any():
                break
        # gradient: sum_{y~x} xi_y <xi_y, xi_x>
        g = np.einsum("ryx,ryk->rxk", adj * gram, W)
        W = _normalize_rows(W - step * g)
        V[active] = W
    return V, obj


def orth_rep_search(G: Graph, k: int, seed: int = 0, iters: int = 3000,
                    restarts: int = 200, batch: int = 50) -> Optional[np.ndarray]:
    """Projected gradient descent for unit vectors in ``C^k`` orthogonal along edges.

    Restart ``r`` starts from ``default_rng(seed + r)``.  Restarts run in
    batches but the lowest-index success is returned, as if they ran one after
    another.  Returns an ``(n, k)`` array of rows or ``None``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    n = G.n
    if n == 0:
        return np.zeros((0, k), dtype=np.complex128)
    adj = G.adjacency().astype(float)
    step = 0.5 / max(1, int(adj.sum(axis=1).max()))
    target = 1e-12
    for start in range(0, restarts, batch):
        seeds = [seed + r for r in range(start, min(restarts, start + batch))]
        V, obj = _search_batch(adj, k, seeds, iters, step, target)
        hits = np.flatnonzero(obj <= target)
        if hits.size:
            return V[hits[0]]
    return None


def orth_rank_upper(G: Graph, k_max: int, seed: int = 0, **kw) -> Optional[int]:
    """Smallest ``k <= k_max`` at which the search succeeds, else ``None``."""
    for k in range(1, k_max + 1):
        if orth_rep_search(G, k, seed, **kw) is not None:
            return k
    return None


# ---------------------------------------------------------------------------
# Lovasz theta


@dataclass
class ThetaResult:
    value: float
    gap: float
    converged: bool
    iters: int
    primal_infeasibility: float = 0.0
    dual_infeasibility: float = 0.0


def theta_sdp(G: Graph, tol: float = 1e-9, max_iter: int = 50000, mu: float = 1.0) -> ThetaResult:
    """Alternating-direction solve of ``max <J, X>`` s.t. ``Tr X = 1``,
    ``X_ij = 0`` on edges, ``X >= 0``.

    The constraints are written with an orthonormal family (``I / sqrt n`` and
    ``(E_ij + E_ji) / sqrt 2``) so the multiplier update needs no linear solve.
    """
    n = G.n
    if n == 0:
        return ThetaResult(0.0, 0.0, True, 0)
    if n > 60:
        raise ValueError("dense theta solver is meant for small graphs")
    edges = np.array(G.sorted_edges(), dtype=int).reshape(-1, 2)
    iu, ju = edges[:, 0], edges[:, 1]
    s2 = math.sqrt(2.0)
    sn = math.sqrt(n)
    C = -np.ones((n, n))
    b = np.zeros(1 + len(edges))
    b[0] = 1 / sn

    def Aop(M):
        return np.concatenate([[np.trace(M) / sn], s2 * M[iu, ju]])

    def Aadj(y):
        M = np.eye(n) * (y[0] / sn)
        M[iu, ju] += y[1:] / s2
        M[ju, iu] += y[1:] / s2
        return M

    X = np.eye(n) / n
    S = np.zeros((n, n))
    AC = Aop(C)
    it = 0
    gap = pinf = dinf = np.inf
    for it in range(1, max_iter + 1):
        y = -(mu * (Aop(X) - b) + Aop(S) - AC)
        V = C - Aadj(y) - mu * X
        w, U = np.linalg.eigh((V + V.T) / 2)
        S = (U * np.clip(w, 0, None)) @ U.T
        X = (S - V) / mu
        if it % 10 == 0 or it == max_iter:
            p = float(np.sum(C * X))
            d = float(b @ y)
            gap = abs(p - d) / (1 + abs(p) + abs(d))
            pinf = float(np.linalg.norm(Aop(X) - b)) / (1 + np.linalg.norm(b))
            dinf = float(np.linalg.norm(Aadj(y) + S - C)) / (1 + np.linalg.norm(C))
            if max(gap, pinf, dinf) <= tol:
                break
    value = -float(b @ y)
    return ThetaResult(value, float(gap), bool(max(gap, pinf, dinf) <= tol), it, float(pinf), float(dinf))


def lovasz_theta(G: Graph, tol: float = 1e-9, max_iter: int = 50000) -> float:
    r = theta_sdp(G, tol, max_iter)
    if not r.converged:
        warnings.warn(f"theta solver stopped after {r.iters} iterations with gap {r.gap:.3e}",
                      RuntimeWarning, stacklevel=2)
    return r.value


@dataclass
class RankBounds:
    xi_q_lower: float
    xi_cstar_lower: float
    theta: float
    theta_complement: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def rank_bounds(G: Graph, tol: float = 1e-9) -> RankBounds:
    """``sqrt(theta(complement))`` and ``sqrt(|X| / theta(G))``."""
    t = lovasz_theta(G, tol)
    tc = lovasz_theta(G.complement(), tol)
    return RankBounds(math.sqrt(tc), math.sqrt(G.n / t) if t > 0 else 0.0, t, tc)
