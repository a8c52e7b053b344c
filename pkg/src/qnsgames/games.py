"""Games stored as finite lists of support rules, their classifiers, and the
perfect-strategy check.

A rule ``(Q, R)`` says that every nonzero input projection ``P <= Q`` must be
sent inside ``R``.  A correlation ``Gamma`` is perfect for the rule when
``Tr(Gamma(Q) (I - R)) = 0``; complete positivity gives ``Gamma(P) <= Gamma(Q)``
so checking the generating ``Q`` is enough.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graph import Graph
from .tensor_core import (as_matrix, devectorize, entangled_constants, intersect_projections,
                          is_projection, matrix_unit, projection_leq, vectorize)

DEFAULT_TOL = 1e-9


class WitnessRequired(Exception):
    """Raised when bijectivity of a rank > 1 projection is asked for without a witness."""


class NotAChannelError(ValueError):
    """The correlation handed to the perfect-strategy check is not a channel."""


@dataclass(frozen=True, eq=False)
class Rule:
    """Support rule ``(Q, R)``.

    ``Q`` may be given as a 1-d array, meaning the diagonal projection with that
    diagonal; this keeps classical-input games with many inputs cheap.
    """

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.complex128)
        if Q.ndim == 2 and Q.shape[0] == Q.shape[1]:
            off = Q - np.diag(np.diag(Q))
            if not np.any(off):
                Q = np.diag(Q).copy()
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", as_matrix(self.R, "R"))

    @property
    def q_diagonal(self) -> Optional[np.ndarray]:
        return self.Q if self.Q.ndim == 1 else None

    @property
    def q_matrix(self) -> np.ndarray:
        return np.diag(self.Q) if self.Q.ndim == 1 else self.Q

    def __iter__(self):
        return iter((self.q_matrix, self.R))


def _is_projection_any(Q: np.ndarray, tol: float) -> bool:
    if Q.ndim == 1:
        return bool(np.all(np.minimum(np.abs(Q), np.abs(Q - 1)) <= tol))
    return is_projection(Q, tol)


@dataclass(eq=False)
class SupportRuleGame:
    """Game on inputs ``C^X (x) C^Y`` and outputs ``C^A (x) C^B`` given by rules."""

    dims: tuple[int, int, int, int]
    rules: list = field(default_factory=list)
    classical_inputs: bool = True

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        X, Y, A, B = self.dims
        rules = []
        for r in self.rules:
            if not isinstance(r, Rule):
                r = Rule(*r)
            rules.append(r)
        self.rules = rules
        for i, r in enumerate(self.rules):
            if r.Q.shape[0] != X * Y or r.R.shape != (A * B, A * B):
                raise ValueError(f"rule {i} has the wrong dimensions for game dims {self.dims}")
            if not _is_projection_any(r.Q, 1e-10):
                raise ValueError(f"rule {i}: Q is not a projection")
            if not is_projection(r.R, 1e-10):
                raise ValueError(f"rule {i}: R is not a projection")
            if self.classical_inputs and r.q_diagonal is None:
                Q = r.Q
                if np.abs(Q - np.diag(np.diag(Q))).max() > 1e-10:
                    raise ValueError(f"rule {i}: Q does not commute with the diagonal algebra")

    def with_rule(self, Q, R) -> "SupportRuleGame":
        return SupportRuleGame(self.dims, list(self.rules) + [Rule(Q, R)], self.classical_inputs)


def _diag_rule(i: int, n: int) -> np.ndarray:
    d = np.zeros(n, dtype=np.complex128)
    d[i] = 1
    return d


def game_from_rule_function(lam) -> SupportRuleGame:
    """Classical game from a boolean table ``lam[x, y, a, b]``."""
    lam = np.asarray(lam, dtype=bool)
    if lam.ndim != 4:
        raise ValueError("rule function must be a 4-d table over X, Y, A, B")
    X, Y, A, B = lam.shape
    rules = []
    for x in range(X):
        for y in range(Y):
            R = np.diag(lam[x, y].reshape(-1).astype(np.complex128))
            rules.append(Rule(_diag_rule(x * Y + y, X * Y), R))
    return SupportRuleGame((X, Y, A, B), rules, True)


def graph_hom_rule_function(G: Graph, H: Graph) -> np.ndarray:
    """``lam = 0`` iff (``x = y`` and ``a != b``) or (``x ~ y`` and ``a !~ b``)."""
    lam = np.ones((G.n, G.n, H.n, H.n), dtype=bool)
    for x in range(G.n):
        for y in range(G.n):
            for a in range(H.n):
                for b in range(H.n):
                    if x == y and a != b:
                        lam[x, y, a, b] = False
                    if G.adjacent(x, y) and not H.adjacent(a, b):
                        lam[x, y, a, b] = False
    return lam


def support_for(g: SupportRuleGame, P, tol: float = 1e-10) -> np.ndarray:
    """Smallest output projection the rules force for the input projection ``P``.

    This is the intersection of the ranges of ``R`` over all rules with
    ``P <= Q``; with no applicable rule it is the identity.
    """
    X, Y, A, B = g.dims
    P = np.asarray(P, dtype=np.complex128)
    Rs = []
    for r in g.rules:
        if P.ndim == 1 and r.q_diagonal is not None:
            applies = bool(np.all(np.abs(r.q_diagonal * P - P) <= tol))
        else:
            Pm = np.diag(P) if P.ndim == 1 else P
            applies = projection_leq(Pm, r.q_matrix, tol)
        if applies:
            Rs.append(r.R)
    if len(Rs) == 1:
        return Rs[0].copy()
    return intersect_projections(Rs, A * B)


def _input_diag(x: int, y: int, X: int, Y: int) -> np.ndarray:
    return _diag_rule(x * Y + y, X * Y)


def is_synchronous(g: SupportRuleGame, tol: float = 1e-10) -> bool:
    """Every diagonal input ``(x, x)`` is forced into ``Jcl_A``."""
    X, Y, A, B = g.dims
    if not g.classical_inputs or X != Y or A != B:
        return False
    _, _, Jcl = entangled_constants(A)
    return all(projection_leq(support_for(g, _input_diag(x, x, X, Y)), Jcl, tol) for x in range(X))


def permutation_of_projection(R, A: int, B: int, tol: float = 1e-10) -> Optional[list[int]]:
    """If ``R = sum_a eps_aa (x) eps_{alpha(a) alpha(a)}`` for a bijection ``alpha``, return ``alpha``."""
    R = as_matrix(R)
    if A != B or np.abs(R - np.diag(np.diag(R))).max() > tol:
        return None
    d = np.diag(R).real.reshape(A, B)
    if np.abs(d - np.round(d)).max() > tol:
        return None
    d = np.round(d).astype(int)
    if not (np.all(d.sum(axis=0) == 1) and np.all(d.sum(axis=1) == 1)):
        return None
    return [int(np.argmax(d[a])) for a in range(A)]


def _candidate_order(i: int, n: int) -> list[int]:
    # the aligned candidate first, then the rest in index order
    order = [i] if i < n else []
    return order + [j for j in range(n) if j != i]


def is_mirror(g: SupportRuleGame, tol: float = 1e-10):
    """Search for ``f: X -> Y`` and ``g: Y -> X`` making the forced supports
    ``(x, f(x))`` and ``(g(y), y)`` graphs of bijections.

    Returns ``(verdict, f, g)`` with ``f, g`` as lists (``None`` on failure).
    """
    X, Y, A, B = g.dims
    if not g.classical_inputs:
        return False, None, None

    def is_perm(x, y):
        return permutation_of_projection(support_for(g, _input_diag(x, y, X, Y)), A, B, tol) is not None

    f = []
    for x in range(X):
        hit = next((y for y in _candidate_order(x, Y) if is_perm(x, y)), None)
        if hit is None:
            return False, None, None
        f.append(hit)
    gmap = []
    for y in range(Y):
        hit = next((x for x in _candidate_order(y, X) if is_perm(x, y)), None)
        if hit is None:
            return False, None, None
        gmap.append(hit)
    return True, f, gmap


def concurrency_game(X: int, A: int) -> SupportRuleGame:
    """Rules ``(eps_xx (x) eps_xx, J_A)`` for every ``x``."""
    _, J, _ = entangled_constants(A)
    rules = [Rule(_input_diag(x, x, X, X), J) for x in range(X)]
    return SupportRuleGame((X, X, A, A), rules, True)


def is_concurrent_game(g: SupportRuleGame, tol: float = 1e-10) -> bool:
    """Classical inputs: each diagonal input is forced below ``J_A``.
    Quantum inputs: the input ``J_X`` is forced below ``J_A``."""
    X, Y, A, B = g.dims
    if X != Y or A != B:
        return False
    _, JA, _ = entangled_constants(A)
    if g.classical_inputs:
        return all(projection_leq(support_for(g, _input_diag(x, x, X, Y)), JA, tol) for x in range(X))
    _, JX, _ = entangled_constants(X)
    return projection_leq(support_for(g, JX), JA, tol)


def colouring_game(G: Graph, A: int, relaxed: bool = False) -> SupportRuleGame:
    """``J_A`` on each diagonal input (omitted when ``relaxed``) and
    ``I - J_A`` on each ordered edge."""
    n = G.n
    _, J, _ = entangled_constants(A)
    rules = []
    if not relaxed:
        rules += [Rule(_input_diag(x, x, n, n), J) for x in range(n)]
    Jperp = np.eye(A * A) - J
    rules += [Rule(_input_diag(x, y, n, n), Jperp) for x, y in G.directed_edges()]
    return SupportRuleGame((n, n, A, A), rules, True)


def homomorphism_game(U, V) -> SupportRuleGame:
    """Single rule ``(P_U, P_V)`` between two symmetric skew subspaces."""
    U.validate()
    V.validate()
    return SupportRuleGame((U.n, U.n, V.n, V.n), [Rule(U.projector, V.projector)], False)


@dataclass(frozen=True, eq=False)
class BijectivityWitness:
    partial_isometries: tuple

    def __init__(self, partial_isometries: Sequence):
        object.__setattr__(self, "partial_isometries",
                           tuple(as_matrix(U, "partial isometry") for U in partial_isometries))

    def check(self, tol: float = 1e-10) -> bool:
        Us = self.partial_isometries
        if len(Us) == 0:
            return False
        n = Us[0].shape[0]
        if any(U.shape != (n, n) for U in Us):
            return False
        if any(np.abs(U @ U.conj().T @ U - U).max() > tol for U in Us):
            return False
        I = np.eye(n)
        left = sum(U @ U.conj().T for U in Us)
        right = sum(U.conj().T @ U for U in Us)
        return bool(np.abs(left - I).max() <= tol and np.abs(right - I).max() <= tol)

    def projection(self) -> np.ndarray:
        vs = [vectorize(U, normalize=True) for U in self.partial_isometries]
        return sum(np.outer(v, v.conj()) for v in vs)


def is_bijective_projection(P, witness: Optional[BijectivityWitness] = None,
                            tol: float = 1e-8) -> bool:
    """Decide bijectivity of a projection on ``C^A (x) C^A``.

    Rank one is decided directly: the range vector, read as a matrix ``T``,
    must satisfy ``T T^* = c I``.  Higher rank is only checked against a
    supplied witness; without one :class:`WitnessRequired` is raised.
    """
    P = as_matrix(P)
    if not is_projection(P, 1e-10):
        raise ValueError("is_bijective_projection expects a projection")
    rank = int(round(np.trace(P).real))
    if witness is not None:
        if not witness.check(1e-10):
            return False
        return bool(np.abs(witness.projection() - P).max() <= tol)
    if rank == 0:
        return False
    if rank > 1:
        raise WitnessRequired(f"rank {rank} projection needs a witness of partial isometries")
    w, V = np.linalg.eigh(P)
    T = devectorize(V[:, -1])
    TT = T @ T.conj().T
    A = T.shape[0]
    return bool(np.linalg.norm(TT - np.trace(TT) / A * np.eye(A)) <= tol)


def permutation_projection(alpha: Sequence[int]) -> np.ndarray:
    """``P_alpha = sum_a eps_aa (x) eps_{alpha(a) alpha(a)}``."""
    A = len(alpha)
    P = np.zeros((A * A, A * A), dtype=np.complex128)
    for a, b in enumerate(alpha):
        P[a * A + b, a * A + b] = 1
    return P


@dataclass
class PerfectStrategyReport:
    verdict: bool
    max_violation: float
    worst_rule: int
    violations: list

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "max_violation": self.max_violation,
                "worst_rule": self.worst_rule, "violations": list(self.violations)}


def rule_violation(gamma, rule: Rule) -> float:
    """``Tr(Gamma(Q) (I - R))`` for a single rule."""
    if rule.q_diagonal is not None:
        out = gamma.apply_diagonal(rule.q_diagonal)
    else:
        out = gamma.apply(rule.q_matrix)
    return float(np.real(np.trace(out) - np.sum(out * rule.R.T)))


def check_perfect_strategy(gamma, g: SupportRuleGame, tol: float = DEFAULT_TOL,
                           threads: int = 1) -> PerfectStrategyReport:
    """Evaluate every rule's violation and compare the maximum with ``tol``.

    Raises :class:`NotAChannelError` when ``gamma`` fails the channel check.
    """
    if tuple(gamma.dims) != tuple(g.dims):
        raise ValueError(f"correlation dims {tuple(gamma.dims)} do not match game dims {g.dims}")
    rep = gamma.channel_report(tol)
    if not rep["channel"]:
        raise NotAChannelError(f"correlation is not a channel: min eigenvalue "
                               f"{rep['min_eigenvalue']:.3e}, trace defect {rep['trace_defect']:.3e}")
    if threads > 1 and len(g.rules) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vs = list(ex.map(lambda r: rule_violation(gamma, r), g.rules))
    else:
        vs = [rule_violation(gamma, r) for r in g.rules]
    if len(vs) == 0:
        return PerfectStrategyReport(True, 0.0, -1, [])
    worst = int(np.argmax(vs))
    return PerfectStrategyReport(bool(vs[worst] <= tol), float(vs[worst]), worst, vs)


def matrix_unit_rule(x: int, y: int, X: int, Y: int) -> np.ndarray:
    """Full matrix ``eps_xx (x) eps_yy``; handy for quantum-input rule lists."""
    return np.kron(matrix_unit(x, x, X), matrix_unit(y, y, Y))
