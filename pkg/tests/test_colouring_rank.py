import itertools
import math

import numpy as np
import pytest

from qnsgames.colouring_rank import (GameAlgebraRep, HypothesisError, QuantumColouring, colouring_check,
                                     edge_relation_residual, edge_trace_condition, equivalence_probe_dx,
                                     equivalence_probe_sg, game_algebra_rep_check, homomorphism_residual,
                                     kd2_generators, kd2_systems, lovasz_theta, orth_objective,
                                     orth_rank_upper, orth_rep_search, random_dx_instance,
                                     random_sg_instance, rank_bounds, run_probe, theta_sdp,
                                     ucp_homomorphism_check, weyl_unitary)
from qnsgames.correlations import MatrixUnitSystemFamily, canonical_matrix_units, local_from_orthogonal_rep
from qnsgames.games import check_perfect_strategy, colouring_game
from qnsgames.graph import Graph, complete_graph, cycle_graph, empty_graph, path_graph
from qnsgames.tensor_core import haar_unitary, matrix_unit


def theta_cvxpy(G):
    cp = pytest.importorskip("cvxpy")
    n = G.n
    X = cp.Variable((n, n), symmetric=True)
    cons = [X >> 0, cp.trace(X) == 1] + [X[u, v] == 0 for u, v in G.sorted_edges()]
    prob = cp.Problem(cp.Maximize(cp.sum(X)), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


def ray_propagation_c2(n):
    # in C^2 the unit vector orthogonal to xi is unique up to phase, so walking
    # around C_n alternates between a ray and its complement; the closing edge
    # needs xi_n back on the ray of xi_0
    xi = np.array([1.0, 0.0])
    for _ in range(n):
        xi = np.array([-np.conj(xi[1]), np.conj(xi[0])])
    return abs(np.vdot(xi, np.array([1.0, 0.0]))) > 1 - 1e-12


# ---------------------------------------------------------------- K_{d^2} construction

def test_kd2_identity_vertex():
    E = kd2_systems(2)
    assert np.abs(E[0] - canonical_matrix_units(2).systems[0]).max() == 0


def test_kd2_phase_vertex():
    E = kd2_systems(2)
    assert np.abs(E[1, 0, 1] + matrix_unit(0, 1, 2)).max() < 1e-15
    assert np.abs(E[1, 0, 0] - matrix_unit(0, 0, 2)).max() == 0


def test_kd2_edge_sum_d2_explicit():
    E = kd2_systems(2)
    for x, y in itertools.permutations(range(4), 2):
        S = sum(E[x, z, zp] @ E[y, zp, z] for z in range(2) for zp in range(2))
        assert np.abs(S).max() < 1e-15


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_kd2_residuals(d):
    rep = kd2_generators(d)
    assert rep.rep.residual() <= 1e-12
    assert rep.relation_residual() <= 1e-12
    assert game_algebra_rep_check(rep.rep, complete_graph(d * d), 1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_kd2_perfect_for_colouring_game(d):
    gamma = kd2_generators(d).correlation()
    rep = check_perfect_strategy(gamma, colouring_game(complete_graph(d * d), d), tol=1e-9)
    assert rep.verdict


@pytest.mark.parametrize("d", [2, 3])
def test_kd2_colouring_conditions(d):
    rep = colouring_check(kd2_generators(d).colouring(), 1e-10)
    assert rep.scalar_condition and rep.edge_condition


def test_kd2_rejects_small_d():
    with pytest.raises(ValueError):
        kd2_systems(1)


def test_game_algebra_shared_units_fail():
    rep = canonical_matrix_units(2, 1, 2)
    assert not game_algebra_rep_check(rep, complete_graph(2))
    # sum_{a,b} e_ab e_ba = |A| I on the shared system
    assert abs(edge_relation_residual(rep.systems, complete_graph(2)) - 2) < 1e-15
    with pytest.raises(ValueError):
        GameAlgebraRep(rep, complete_graph(2)).validate()


def test_game_algebra_edgeless_passes():
    assert game_algebra_rep_check(canonical_matrix_units(2, 1, 3), empty_graph(3))


def test_game_algebra_wrong_vertex_count():
    assert not game_algebra_rep_check(canonical_matrix_units(2, 1, 3), empty_graph(2))


# ---------------------------------------------------------------- colourings

def classical_colouring(G, colours, A):
    blocks = np.zeros((G.n, A, A, 1, 1), dtype=complex)
    for x, c in enumerate(colours):
        blocks[x, c, c] = 1
    return QuantumColouring(G, blocks)


def test_classical_colouring_not_scalar():
    c = classical_colouring(cycle_graph(5), [0, 1, 0, 1, 2], 3)
    rep = colouring_check(c)
    assert not rep.scalar_condition
    # the compression at x is eps_{c(x)c(x)}; its distance to (1/3) I is sqrt(2/3)
    assert abs(rep.scalar_residual - math.sqrt(2 / 3)) < 1e-12


def test_single_answer_edge_fails():
    c = QuantumColouring(complete_graph(2), np.ones((2, 1, 1, 1, 1)))
    rep = colouring_check(c)
    assert not rep.edge_condition and abs(rep.edge_residual - 1) < 1e-12


def test_shared_system_on_edge():
    c = QuantumColouring(complete_graph(2), canonical_matrix_units(2, 1, 2).systems)
    assert ucp_homomorphism_check(c)
    assert not edge_trace_condition(c)
    rep = equivalence_probe_sg(c)
    assert rep.agree and not rep.lhs


def test_single_vertex_edge_condition():
    c = QuantumColouring(Graph(1, []), canonical_matrix_units(3, 1, 1).systems)
    assert edge_trace_condition(c)
    assert colouring_check(c).edge_condition


def test_edge_condition_refuses_non_hom(rng):
    W = [haar_unitary(2, rng) for _ in range(2)]
    base = canonical_matrix_units(2, 1, 2).systems
    mix = 0.5 * base + 0.5 * np.einsum("ij,xabjk,lk->xabil", W[0], base, W[0].conj())
    c = QuantumColouring(complete_graph(2), mix)
    with pytest.raises(HypothesisError):
        edge_trace_condition(c)


def test_hom_and_mixture_examples(rng):
    Ws = np.stack([haar_unitary(4, rng) for _ in range(3)])
    units = canonical_matrix_units(2, 2).systems[0]
    hom = np.einsum("xij,abjl,xml->xabim", Ws, units, Ws.conj())
    c = QuantumColouring(path_graph(3), hom)
    assert homomorphism_residual(c) < 1e-12
    assert colouring_check(c).scalar_condition
    Ws2 = np.stack([haar_unitary(4, rng) for _ in range(3)])
    hom2 = np.einsum("xij,abjl,xml->xabim", Ws2, units, Ws2.conj())
    cm = QuantumColouring(path_graph(3), 0.5 * hom + 0.5 * hom2)
    assert not ucp_homomorphism_check(cm)
    assert not colouring_check(cm).scalar_condition
    assert equivalence_probe_dx(cm).agree


def test_colouring_rejects_bad_kraus():
    c = QuantumColouring(complete_graph(2), canonical_matrix_units(2, 1, 2).systems)
    c.kraus.ops = c.kraus.ops * 1.1
    with pytest.raises(ValueError):
        colouring_check(c)


def test_colouring_rejects_non_unital():
    c = QuantumColouring(Graph(1, []), 0.5 * canonical_matrix_units(2, 1, 1).systems)
    with pytest.raises(ValueError):
        c.validate()


# ---------------------------------------------------------------- probes

def test_weyl_unitaries_orthogonal():
    d = 3
    for (a, b), (c, e) in itertools.combinations(itertools.product(range(d), repeat=2), 2):
        assert abs(np.trace(weyl_unitary(a, b, d).conj().T @ weyl_unitary(c, e, d))) < 1e-12


def test_probe_instances_deterministic():
    a, b = random_dx_instance(17), random_dx_instance(17)
    assert np.abs(a.ucp_blocks - b.ucp_blocks).max() == 0
    c, d = random_sg_instance(5), random_sg_instance(5)
    assert np.abs(c.ucp_blocks - d.ucp_blocks).max() == 0


def test_probes_are_not_degenerate():
    # both verdicts must occur, otherwise agreement says nothing
    dx = run_probe("dx", 80)
    sg = run_probe("sg", 80)
    assert 0 < dx["lhs_true"] < 80 and 0 < sg["lhs_true"] < 80
    assert dx["rate"] == 1.0 and sg["rate"] == 1.0


def test_probe_threads_match_serial():
    assert run_probe("sg", 40, threads=4) == run_probe("sg", 40)


def test_unknown_probe():
    with pytest.raises(ValueError):
        run_probe("xx", 1)


# ---------------------------------------------------------------- orthogonal representations

@pytest.mark.parametrize("n", [2, 3, 4])
def test_complete_graph_orth_rep(n):
    V = orth_rep_search(complete_graph(n), n, seed=1)
    assert V is not None and orth_objective(complete_graph(n), V) <= 1e-12
    assert np.abs(np.linalg.norm(V, axis=1) - 1).max() < 1e-12


def test_c5_in_c3_found():
    G = cycle_graph(5)
    V = orth_rep_search(G, 3)
    assert V is not None and orth_objective(G, V) <= 1e-12
    gamma = local_from_orthogonal_rep(V)
    assert check_perfect_strategy(gamma, colouring_game(G, 3, relaxed=True), tol=1e-8).verdict


def test_c5_in_c2_fails():
    assert not ray_propagation_c2(5) and ray_propagation_c2(4)
    assert orth_rep_search(cycle_graph(5), 2) is None


def test_k3_in_c2_fails():
    assert orth_rep_search(complete_graph(3), 2, restarts=20) is None


def test_orth_search_deterministic():
    a = orth_rep_search(cycle_graph(5), 3, seed=3)
    b = orth_rep_search(cycle_graph(5), 3, seed=3)
    assert np.abs(a - b).max() == 0


def test_orth_rank_upper():
    assert orth_rank_upper(cycle_graph(4), 3, restarts=20) == 2
    assert orth_rank_upper(complete_graph(3), 2, restarts=10) is None


# ---------------------------------------------------------------- theta and rank bounds

@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_theta_complete(n):
    assert abs(lovasz_theta(complete_graph(n)) - 1) < 1e-6


@pytest.mark.parametrize("n", [1, 3, 5])
def test_theta_empty(n):
    assert abs(lovasz_theta(empty_graph(n)) - n) < 1e-6


def test_theta_c5():
    assert abs(lovasz_theta(cycle_graph(5)) - math.sqrt(5)) < 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_theta_matches_cvxpy(seed):
    rng = np.random.default_rng(seed)
    n = 7
    G = Graph(n, [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.4])
    assert abs(lovasz_theta(G) - theta_cvxpy(G)) < 1e-5


def test_theta_sandwich():
    # alpha(G) <= theta(G) <= chi(complement)
    G = path_graph(5)
    t = lovasz_theta(G)
    assert 3 - 1e-6 <= t <= 3 + 1e-6


def test_theta_reports_non_convergence():
    r = theta_sdp(cycle_graph(7), max_iter=20)
    assert not r.converged and r.iters == 20
    with pytest.warns(RuntimeWarning):
        lovasz_theta(cycle_graph(7), max_iter=20)


def test_rank_bounds_k4():
    rb = rank_bounds(complete_graph(4))
    assert abs(rb.xi_cstar_lower - 2) < 1e-4
    assert abs(rb.theta - 1) < 1e-6 and abs(rb.theta_complement - 4) < 1e-6
