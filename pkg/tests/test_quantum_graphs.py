import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnsgames.colouring_rank import kd2_generators
from qnsgames.games import check_perfect_strategy, homomorphism_game
from qnsgames.graph import Graph, complete_graph, cycle_graph, empty_graph, is_homomorphism, path_graph, vertex_maps
from qnsgames.quantum_graphs import (KrausFamily, OperatorAntiSystem, SymmetricSkewSubspace, antisystem_of,
                                     classical_hom_channel, deterministic_kraus, entangled_complement,
                                     from_graph, graph_antisystem, hom_check, som_from_kraus,
                                     strategy_from_kraus, tensor_with_me, traceless_antisystem)
from qnsgames.tensor_core import (basis_vector, entangled_constants, flip, haar_isometry, matrix_unit,
                                  skew_functional)


def span_equal(P, Q, tol=1e-10):
    return np.abs(P - Q).max() < tol


def vec_projector(mats):
    Q, _ = np.linalg.qr(np.stack([M.reshape(-1) for M in mats], axis=1))
    return Q @ Q.conj().T


# ---------------------------------------------------------------- symmetric skew subspaces

def test_k2_subspace():
    U = from_graph(complete_graph(2))
    e0, e1 = basis_vector(0, 2), basis_vector(1, 2)
    ref = np.outer(np.kron(e0, e1), np.kron(e0, e1)) + np.outer(np.kron(e1, e0), np.kron(e1, e0))
    assert U.dim == 2 and span_equal(U.projector, ref)
    S = antisystem_of(U)
    assert span_equal(vec_projector(S.basis), vec_projector([matrix_unit(0, 1, 2), matrix_unit(1, 0, 2)]))


def test_empty_graph_subspace():
    U = from_graph(empty_graph(3))
    assert U.dim == 0 and np.abs(U.projector).max() == 0


def test_c5_subspace():
    G = cycle_graph(5)
    U = from_graph(G)
    assert U.dim == 10
    S = antisystem_of(U)
    ref = vec_projector([matrix_unit(x, (x + 1) % 5, 5) for x in range(5)] +
                        [matrix_unit((x + 1) % 5, x, 5) for x in range(5)])
    assert span_equal(vec_projector(S.basis), ref)
    assert span_equal(vec_projector(graph_antisystem(G).basis), ref)


def test_non_skew_rejected():
    m, _, _ = entangled_constants(2)
    with pytest.raises(ValueError):
        SymmetricSkewSubspace.from_vectors(2, [m])


def test_non_symmetric_rejected():
    with pytest.raises(ValueError):
        SymmetricSkewSubspace.from_vectors(2, [np.kron(basis_vector(0, 2), basis_vector(1, 2))])


def test_entangled_complement():
    U = entangled_complement(3)
    assert U.dim == 8
    U.validate()
    S = antisystem_of(U)
    S.validate()
    assert span_equal(vec_projector(S.basis), vec_projector(traceless_antisystem(3).basis))


def test_traceless_antisystem_is_valid():
    T = traceless_antisystem(3)
    T.validate()
    assert T.dim == 8
    assert not T.contains(np.eye(3))


def test_invalid_antisystem_detected():
    S = OperatorAntiSystem(2, [matrix_unit(0, 1, 2)])
    with pytest.raises(ValueError):
        S.validate()
    with pytest.raises(ValueError):
        OperatorAntiSystem(2, [matrix_unit(0, 0, 2)]).validate()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_random_graph_subspaces_valid(n, seed):
    rng = np.random.default_rng(seed)
    G = Graph(n, [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.5])
    U = from_graph(G)
    U.validate()
    assert U.dim == 2 * len(G.sorted_edges())
    antisystem_of(U).validate()


# ---------------------------------------------------------------- tensoring with m_Z

def test_tensor_with_me_trivial():
    U = from_graph(cycle_graph(4))
    W = tensor_with_me(U, 1)
    assert span_equal(W.projector, U.projector)


def test_tensor_with_me_k2():
    W = tensor_with_me(from_graph(complete_graph(2)), 2)
    assert W.dim == 2 and W.n == 4
    assert all(abs(skew_functional(v)) < 1e-12 for v in W.basis)


def test_tensor_with_me_c5_symmetric():
    W = tensor_with_me(from_graph(cycle_graph(5)), 2)
    P = W.projector
    F = np.stack([flip(c) for c in np.eye(100)], axis=1)
    assert np.abs(F @ P @ F.T - P).max() < 1e-10


def test_tensor_with_me_rejects_zero():
    with pytest.raises(ValueError):
        tensor_with_me(from_graph(complete_graph(2)), 0)


# ---------------------------------------------------------------- Kraus families and hom_check

def test_kraus_unital_and_apply(rng):
    K = deterministic_kraus([0, 1, 0], 3, 2)
    K.validate()
    T = rng.standard_normal((2, 2))
    # psi(T) = sum_x T[f(x), f(x)] eps_xx
    assert np.abs(K.apply(T) - np.diag([T[0, 0], T[1, 1], T[0, 0]])).max() < 1e-15


def test_non_unital_kraus_rejected():
    with pytest.raises(ValueError):
        KrausFamily(0.5 * np.eye(2)).validate()


def test_from_unit_images_roundtrip(rng):
    W = haar_isometry(6, 3, rng)
    K = KrausFamily(W.reshape(2, 3, 3).transpose(0, 2, 1).conj())
    K2 = KrausFamily.from_unit_images(K.unit_images())
    assert np.abs(K2.unit_images() - K.unit_images()).max() < 1e-12


def test_classical_hom_c5_k3():
    G, H = cycle_graph(5), complete_graph(3)
    f = [0, 1, 0, 1, 2]
    K = classical_hom_channel(f, G, H)
    rep = hom_check(graph_antisystem(G), graph_antisystem(H), K, 1e-12)
    assert rep.verdict and rep.max_residual <= 1e-12
    # index oracle: M_x^* eps_{x,x'} M_{x'} = eps_{f(x),f(x')}
    for x, xp in G.directed_edges():
        out = K.ops[x].conj().T @ matrix_unit(x, xp, 5) @ K.ops[xp]
        assert np.abs(out - matrix_unit(f[x], f[xp], 3)).max() == 0


def test_classical_hom_identity():
    K = classical_hom_channel([0, 1, 2], complete_graph(3), complete_graph(3))
    assert np.abs(K.ops.sum(axis=0) - np.eye(3)).max() == 0


def test_constant_map_on_edgeless_graph():
    K = classical_hom_channel([0, 0, 0], empty_graph(3), empty_graph(2))
    K.validate()
    assert np.abs(K.ops.sum(axis=0) - np.outer(np.ones(3), basis_vector(0, 2))).max() == 0


def test_classical_hom_channel_rejects_non_hom():
    with pytest.raises(ValueError):
        classical_hom_channel([0, 0], complete_graph(2), complete_graph(2))


def test_identity_into_empty_fails():
    K = KrausFamily(np.eye(2))
    rep = hom_check(graph_antisystem(complete_graph(2)), graph_antisystem(empty_graph(2)), K)
    assert not rep.verdict and rep.max_residual > 0.5


def test_hom_check_dimension_mismatch():
    with pytest.raises(ValueError):
        hom_check(graph_antisystem(complete_graph(3)), graph_antisystem(complete_graph(2)), KrausFamily(np.eye(2)))


@pytest.mark.parametrize("G,H", [(complete_graph(3), cycle_graph(4)), (path_graph(4), complete_graph(2)),
                                 (cycle_graph(4), complete_graph(3))])
def test_deterministic_equivalence(G, H):
    S, T = graph_antisystem(G), graph_antisystem(H)
    for f in vertex_maps(G, H):
        ok = hom_check(S, T, deterministic_kraus(f, G.n, H.n)).verdict
        assert ok == is_homomorphism(f, G, H)


def test_kd2_kraus_hom_check():
    c = kd2_generators(2).colouring()
    rep = hom_check(graph_antisystem(complete_graph(4)), traceless_antisystem(2), c.kraus)
    assert rep.verdict and rep.max_residual < 1e-9


# ---------------------------------------------------------------- strategies from Kraus families

def test_strategy_from_identity_k2():
    G = complete_graph(2)
    K = classical_hom_channel([0, 1], G, G)
    gamma = strategy_from_kraus(K, 2)
    assert gamma.is_channel(1e-12) and gamma.is_no_signalling(1e-12)
    assert check_perfect_strategy(gamma, homomorphism_game(from_graph(G), from_graph(G)), tol=1e-12).verdict


def test_strategy_from_kd2_kraus():
    c = kd2_generators(2).colouring()
    gamma = strategy_from_kraus(c.kraus, 4)
    assert gamma.is_channel(1e-10) and gamma.is_no_signalling(1e-10)
    g = homomorphism_game(from_graph(complete_graph(4)), entangled_complement(2))
    assert check_perfect_strategy(gamma, g, tol=1e-9).verdict


def test_som_from_kraus_is_som(rng):
    W = haar_isometry(2 * 3, 3 * 2, rng)
    K = KrausFamily(W.reshape(2, 3, 6).conj().transpose(0, 2, 1))
    K.validate()
    som_from_kraus(K, 3).validate(1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_random_kraus_violation_matches_pairing(seed):
    rng = np.random.default_rng(seed)
    X, Z, A, m = 3, 2, 2, 3
    W = haar_isometry(m * A, X * Z, rng)
    K = KrausFamily(W.reshape(m, A, X * Z).conj().transpose(0, 2, 1))
    G = complete_graph(3)
    U, V = from_graph(G), entangled_complement(A)
    assert not hom_check(antisystem_of(U), antisystem_of(V), K).verdict
    gamma = strategy_from_kraus(K, X)
    rep = check_perfect_strategy(gamma, homomorphism_game(U, V), tol=1e-8)
    pairing = np.trace(gamma.apply(U.projector) @ (np.eye(A * A) - V.projector)).real
    assert pairing > 1e-6 and not rep.verdict
    assert abs(rep.max_violation - pairing) < 1e-12
