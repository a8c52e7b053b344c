import json
import subprocess
import sys

import numpy as np
import pytest

from qnsgames import io
from qnsgames.cli import main
from qnsgames.colouring_rank import kd2_generators
from qnsgames.correlations import LocalChannel, local_from_channels, local_from_orthogonal_rep, sample_rep
from qnsgames.games import colouring_game, concurrency_game, homomorphism_game
from qnsgames.graph import Graph, complete_graph, cycle_graph
from qnsgames.quantum_graphs import classical_hom_channel, entangled_complement, from_graph


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


# ---------------------------------------------------------------- JSON round trips

def test_matrix_roundtrip_exact(rng):
    M = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    back = io.matrix_from_json(json.loads(io.dumps(io.matrix_to_json(M))))
    assert np.array_equal(back, M)


def test_matrix_layout():
    obj = io.matrix_to_json(np.array([[1, 2j], [3, 4]]))
    assert obj == {"rows": 2, "cols": 2, "data": [[1.0, 0.0], [0.0, 2.0], [3.0, 0.0], [4.0, 0.0]]}


def test_matrix_schema_errors():
    with pytest.raises(io.SchemaError):
        io.matrix_from_json({"rows": 2, "cols": 2, "data": [[1, 0]]})
    with pytest.raises(io.SchemaError):
        io.matrix_from_json({"rows": 1, "cols": 1})
    with pytest.raises(io.SchemaError):
        io.matrix_from_json({"rows": 1, "cols": 1, "data": [["x", 0]]})


def test_graph_roundtrip():
    G = cycle_graph(5)
    assert io.graph_from_json(json.loads(io.dumps(G.to_json()))) == G


def test_game_roundtrip_classical_and_quantum():
    for g in (colouring_game(cycle_graph(5), 3), homomorphism_game(from_graph(complete_graph(3)),
                                                                  entangled_complement(2))):
        back = io.game_from_json(json.loads(io.dumps(io.game_to_json(g))))
        assert back.dims == g.dims and back.classical_inputs == g.classical_inputs
        for r, s in zip(g.rules, back.rules):
            assert np.array_equal(r.q_matrix, s.q_matrix) and np.array_equal(r.R, s.R)


def test_correlation_roundtrip(rng):
    q = local_from_channels([(LocalChannel.identity(2), LocalChannel.identity(2), 1.0)])
    back = io.correlation_from_json(json.loads(io.dumps(io.correlation_to_json(q))))
    assert np.array_equal(back.choi, q.choi) and not back.classical_inputs
    V = rng.standard_normal((3, 2)) + 0j
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    c = local_from_orthogonal_rep(V)
    back = io.correlation_from_json(json.loads(io.dumps(io.correlation_to_json(c))))
    assert np.array_equal(back.blocks, c.blocks) and back.classical_inputs


def test_som_and_mus_roundtrip():
    rep = sample_rep("matrix_units", (2, 2), 2, seed=0)
    assert np.array_equal(io.mus_from_json(io.mus_to_json(rep)).systems, rep.systems)
    E = rep.as_som()
    assert np.array_equal(io.som_from_json(io.som_to_json(E)).blocks, E.blocks)
    F = sample_rep("som", (2, 2), 2, seed=0)
    assert np.array_equal(io.som_from_json(io.som_to_json(F)).blocks, F.blocks)


def test_subspace_kraus_colouring_roundtrip():
    U = from_graph(cycle_graph(4))
    assert np.abs(io.subspace_from_json(io.subspace_to_json(U)).projector - U.projector).max() < 1e-14
    K = classical_hom_channel([0, 1, 0, 1], cycle_graph(4), complete_graph(2))
    assert np.array_equal(io.kraus_from_json(io.kraus_to_json(K)).ops, K.ops)
    c = kd2_generators(2).colouring()
    back = io.colouring_from_json(json.loads(io.dumps(io.colouring_to_json(c))))
    assert np.array_equal(back.ucp_blocks, c.ucp_blocks) and back.graph == c.graph


def test_dumps_rejects_nan():
    with pytest.raises(ValueError):
        io.dumps({"x": float("nan")})


# ---------------------------------------------------------------- CLI

def test_build_kd2_and_verify(tmp_path, capsys):
    code, strat = run(capsys, ["build", "kd2", "--d", "3"])
    assert code == 0
    game = io.game_to_json(colouring_game(complete_graph(9), 3))
    code, rep = run(capsys, ["verify", write(tmp_path, "s.json", strat), write(tmp_path, "g.json", game)])
    assert code == 0 and rep["verdict"] and rep["max_violation"] <= 1e-9
    assert rep["channel"]["channel"] and rep["no_signalling"]["ok"]


def test_verify_identity_against_concurrency(tmp_path, capsys):
    q = local_from_channels([(LocalChannel.identity(2), LocalChannel.identity(2), 1.0)])
    s = write(tmp_path, "s.json", io.correlation_to_json(q))
    g = write(tmp_path, "g.json", io.game_to_json(concurrency_game(2, 2)))
    code, rep = run(capsys, ["verify", s, g])
    assert code == 1 and not rep["verdict"]
    assert abs(rep["max_violation"] - 0.5) < 1e-12


def test_verify_dims_mismatch(tmp_path, capsys):
    q = local_from_channels([(LocalChannel.identity(2), LocalChannel.identity(2), 1.0)])
    s = write(tmp_path, "s.json", io.correlation_to_json(q))
    g = write(tmp_path, "g.json", io.game_to_json(concurrency_game(3, 2)))
    code, rep = run(capsys, ["verify", s, g])
    assert code == 2 and "error" in rep


def test_verify_non_channel_fails(tmp_path, capsys):
    s = write(tmp_path, "s.json", {"dims": [1, 1, 2, 1], "choi": io.matrix_to_json(np.diag([1.5, -0.5]))})
    g = write(tmp_path, "g.json", {"dims": [1, 1, 2, 1], "rules": []})
    code, rep = run(capsys, ["verify", s, g])
    assert code == 1 and not rep["verdict"] and not rep["channel"]["channel"]


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    code, rep = run(capsys, ["verify", str(p), str(p)])
    assert code == 2 and rep["error"]["type"] == "CliError"


def test_missing_file(tmp_path, capsys):
    code, rep = run(capsys, ["theta", str(tmp_path / "none.json")])
    assert code == 2 and "cannot read" in rep["error"]["message"]


def test_schema_error_exit_code(tmp_path, capsys):
    code, rep = run(capsys, ["theta", write(tmp_path, "g.json", {"edges": []})])
    assert code == 2 and rep["error"]["type"] == "SchemaError"


@pytest.mark.parametrize("argv", [["build", "mus", "--X", "2", "--A", "2", "--k", "2"],
                                  ["build", "som-pair"], ["dilate", "--sample", "2", "2", "2"],
                                  ["game", "mirror", "--X", "3"]])
def test_seeded_output_is_byte_identical(argv, capsys):
    main(argv + ["--seed", "11"])
    first = capsys.readouterr().out
    main(argv + ["--seed", "11"])
    second = capsys.readouterr().out
    main(argv + ["--seed", "12"])
    third = capsys.readouterr().out
    assert first == second and first != third


@pytest.mark.parametrize("kind", ["brown", "mus", "kd2", "mirror", "som-pair"])
def test_build_kinds_pass(kind, capsys):
    assert main(["build", kind, "--X", "2", "--A", "2", "--k", "2"]) == 0
    capsys.readouterr()


def test_mirror_build_verifies(tmp_path, capsys):
    _, strat = run(capsys, ["build", "mirror", "--X", "3", "--A", "2", "--seed", "4"])
    _, game = run(capsys, ["game", "mirror", "--X", "3", "--A", "2", "--seed", "4"])
    code, rep = run(capsys, ["verify", write(tmp_path, "s.json", strat), write(tmp_path, "g.json", game)])
    assert code == 0 and rep["verdict"]


def test_local_orthrep_pipeline(tmp_path, capsys):
    gpath = write(tmp_path, "c5.json", cycle_graph(5).to_json())
    code, strat = run(capsys, ["build", "local-orthrep", "--graph", gpath, "--k", "3"])
    assert code == 0
    code, game = run(capsys, ["game", "colouring", "--graph", gpath, "--A", "3", "--relaxed"])
    code, rep = run(capsys, ["verify", write(tmp_path, "s.json", strat), write(tmp_path, "g.json", game)])
    assert code == 0 and rep["verdict"]


def test_local_orthrep_requires_graph(capsys):
    code, rep = run(capsys, ["build", "local-orthrep"])
    assert code == 2


def test_theta_command(tmp_path, capsys):
    code, out = run(capsys, ["theta", write(tmp_path, "g.json", cycle_graph(5).to_json())])
    assert code == 0 and abs(out["theta"] - 5 ** 0.5) < 1e-6 and abs(out["xi_q_lower"] - 5 ** 0.25) < 1e-6


def test_search_command(tmp_path, capsys):
    g = write(tmp_path, "g.json", cycle_graph(5).to_json())
    code, out = run(capsys, ["search", g, "--k", "3"])
    assert code == 0 and out["found"] and out["objective"] <= 1e-12
    code, out = run(capsys, ["search", g, "--k", "2", "--restarts", "10"])
    assert code == 1 and not out["found"]


def test_classify_command(tmp_path, capsys):
    gk = write(tmp_path, "k2.json", complete_graph(2).to_json())
    _, game = run(capsys, ["game", "graph-hom", "--graph", gk, "--target", gk])
    code, out = run(capsys, ["classify", write(tmp_path, "game.json", game)])
    assert code == 0 and out["synchronous"] and out["mirror"] and not out["concurrent"]
    assert out["mirror_maps"] == {"f": [0, 1], "g": [0, 1]}


def test_quantum_hom_game_command(tmp_path, capsys):
    g = write(tmp_path, "g.json", complete_graph(4).to_json())
    code, out = run(capsys, ["game", "quantum-hom", "--graph", g, "--A", "2"])
    assert code == 0 and out["dims"] == [4, 4, 2, 2] and not out["classical_inputs"]


def test_dilate_command(tmp_path, capsys):
    code, out = run(capsys, ["dilate", "--sample", "2", "2", "1"])
    assert code == 0 and out["dim"] == 4 and out["compression_error"] <= 1e-8
    som = write(tmp_path, "som.json", out["input"])
    code, out2 = run(capsys, ["dilate", som])
    assert code == 0 and out2["V"] == out["V"]


def test_dilate_needs_input(capsys):
    code, _ = run(capsys, ["dilate"])
    assert code == 2


def test_out_flag(tmp_path, capsys):
    dest = tmp_path / "o.json"
    assert main(["build", "kd2", "--out", str(dest)]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(dest.read_text())["dims"] == [4, 4, 2, 2]


def test_module_entry_point(tmp_path):
    g = write(tmp_path, "g.json", Graph(3, []).to_json())
    res = subprocess.run([sys.executable, "-m", "qnsgames", "theta", g], capture_output=True, text=True)
    assert res.returncode == 0 and abs(json.loads(res.stdout)["theta"] - 3) < 1e-6
