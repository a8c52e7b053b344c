"""JSON encoding of matrices, graphs, games, correlations and representations.

Matrices are ``{"rows": n, "cols": m, "data": [[re, im], ...]}`` in row-major
order; vectors are ``n x 1`` matrices.  Floats go through ``repr``, which is the
shortest string that parses back to the same double.
"""
from __future__ import annotations

import json
from typing import Any

import numpy as np

from .correlations import (CqnsCorrelation, MatrixUnitSystemFamily, QnsCorrelation,
                           StochasticOperatorMatrix)
from .games import Rule, SupportRuleGame
from .graph import Graph
from .tensor_core import SubspaceBasis, orthonormalize


class SchemaError(ValueError):
    """Payload does not follow the expected JSON layout."""


def _req(obj: Any, key: str):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"missing field {key!r}")
    return obj[key]


def _pairs(v: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in v]


def matrix_to_json(M) -> dict:
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError("matrix_to_json expects a 1-d or 2-d array")
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": _pairs(M.reshape(-1))}


def matrix_from_json(obj) -> np.ndarray:
    rows, cols, data = int(_req(obj, "rows")), int(_req(obj, "cols")), _req(obj, "data")
    if not isinstance(data, list) or len(data) != rows * cols:
        raise SchemaError(f"matrix data has {len(data) if isinstance(data, list) else '?'} entries, "
                          f"expected {rows * cols}")
    try:
        arr = np.array([complex(float(re), float(im)) for re, im in data], dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"matrix entries must be [re, im] pairs: {exc}") from None
    return arr.reshape(rows, cols)


def _nested_to_json(arr: np.ndarray, depth: int):
    if depth == 0:
        return matrix_to_json(arr)
    return [_nested_to_json(a, depth - 1) for a in arr]


def _nested_from_json(obj, depth: int) -> np.ndarray:
    if depth == 0:
        return matrix_from_json(obj)
    if not isinstance(obj, list) or not obj:
        raise SchemaError("expected a non-empty nested list of matrices")
    parts = [_nested_from_json(o, depth - 1) for o in obj]
    if len({p.shape for p in parts}) != 1:
        raise SchemaError("ragged nested matrices")
    return np.stack(parts)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


# ---------------------------------------------------------------- graphs and games

def graph_from_json(obj) -> Graph:
    try:
        return Graph(int(_req(obj, "n")), obj.get("edges", []))
    except (TypeError, IndexError) as exc:
        raise SchemaError(f"bad graph payload: {exc}") from None


def game_to_json(g: SupportRuleGame) -> dict:
    rules = []
    for r in g.rules:
        Q = {"diag": _pairs(r.q_diagonal)} if r.q_diagonal is not None else matrix_to_json(r.q_matrix)
        rules.append({"Q": Q, "R": matrix_to_json(r.R)})
    return {"dims": list(g.dims), "classical_inputs": g.classical_inputs, "rules": rules}


def game_from_json(obj) -> SupportRuleGame:
    dims = tuple(int(v) for v in _req(obj, "dims"))
    if len(dims) != 4:
        raise SchemaError("game dims must be [X, Y, A, B]")
    rules = []
    for r in _req(obj, "rules"):
        q = _req(r, "Q")
        if isinstance(q, dict) and "diag" in q:
            Q = np.array([complex(a, b) for a, b in q["diag"]], dtype=np.complex128)
        else:
            Q = matrix_from_json(q)
        rules.append(Rule(Q, matrix_from_json(_req(r, "R"))))
    return SupportRuleGame(dims, rules, bool(obj.get("classical_inputs", True)))


# ---------------------------------------------------------------- correlations

def correlation_to_json(gamma) -> dict:
    if isinstance(gamma, CqnsCorrelation):
        return {"dims": list(gamma.dims), "classical_inputs": True,
                "blocks": _nested_to_json(gamma.blocks, 2)}
    return {"dims": list(gamma.dims), "choi": matrix_to_json(gamma.choi)}


def correlation_from_json(obj):
    dims = tuple(int(v) for v in _req(obj, "dims"))
    if len(dims) != 4:
        raise SchemaError("correlation dims must be [X, Y, A, B]")
    if obj.get("classical_inputs"):
        return CqnsCorrelation(dims, _nested_from_json(_req(obj, "blocks"), 2))
    return QnsCorrelation(dims, matrix_from_json(_req(obj, "choi")))


# ---------------------------------------------------------------- representations

def som_to_json(E: StochasticOperatorMatrix) -> dict:
    X, A, k = E.shape
    if E.semi_classical:
        return {"X": X, "A": A, "k": k, "semi_classical": True,
                "blocks": _nested_to_json(E.diagonal_blocks, 3)}
    return {"X": X, "A": A, "k": k, "semi_classical": False, "blocks": _nested_to_json(E.blocks, 4)}


def som_from_json(obj) -> StochasticOperatorMatrix:
    if obj.get("semi_classical"):
        return StochasticOperatorMatrix.from_semiclassical(_nested_from_json(_req(obj, "blocks"), 3))
    return StochasticOperatorMatrix(_nested_from_json(_req(obj, "blocks"), 4))


def mus_to_json(rep: MatrixUnitSystemFamily) -> dict:
    X, A, n = rep.shape
    return {"X": X, "A": A, "n": n, "systems": _nested_to_json(rep.systems, 3)}


def mus_from_json(obj) -> MatrixUnitSystemFamily:
    return MatrixUnitSystemFamily(_nested_from_json(_req(obj, "systems"), 3))


def dilation_to_json(res) -> dict:
    return {"dim": res.dim, "step_dims": list(res.step_dims), "V": matrix_to_json(res.V),
            "systems": mus_to_json(res.systems)}


# ---------------------------------------------------------------- quantum graphs

def subspace_to_json(U) -> dict:
    return U.to_json()


def subspace_from_json(obj):
    from .quantum_graphs import SymmetricSkewSubspace
    n = int(_req(obj, "n"))
    vs = [matrix_from_json(v).reshape(-1) for v in _req(obj, "basis")]
    if any(v.size != n * n for v in vs):
        raise SchemaError("subspace vectors must have length n^2")
    return SymmetricSkewSubspace(n, SubspaceBasis(n * n, orthonormalize(vs, n * n)))


def kraus_to_json(K) -> dict:
    return K.to_json()


def kraus_from_json(obj):
    from .quantum_graphs import KrausFamily
    ops = np.stack([matrix_from_json(M) for M in _req(obj, "ops")])
    if ops.shape[1:] != (int(_req(obj, "out")), int(_req(obj, "in"))):
        raise SchemaError("Kraus operator shape does not match in/out")
    return KrausFamily(ops)


def colouring_to_json(c) -> dict:
    return c.to_json()


def colouring_from_json(obj):
    from .colouring_rank import QuantumColouring
    G = graph_from_json(_req(obj, "graph"))
    blocks = _nested_from_json(_req(obj, "ucp_blocks"), 3)
    K = kraus_from_json(obj["kraus"]) if "kraus" in obj else None
    return QuantumColouring(G, blocks, K)
