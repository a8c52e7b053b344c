"""Command line front end: ``qnsgames <command> [options]``.

Exit codes: 0 pass, 1 fail, 2 error (a JSON ``{"error": ...}`` object is written).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import io
from .colouring_rank import kd2_generators, orth_objective, orth_rep_search, rank_bounds, theta_sdp
from .correlations import (from_som_pair, local_from_orthogonal_rep, mirror_game, mirror_strategy,
                           random_mirror_spec, random_semiclassical_som, random_som, sample_rep,
                           tracial_cqns_from_mus, tracial_from_brown_rep)
from .dilation import dilate_semiclassical
from .games import (NotAChannelError, check_perfect_strategy, colouring_game, concurrency_game,
                    game_from_rule_function, graph_hom_rule_function, homomorphism_game,
                    is_concurrent_game, is_mirror, is_synchronous)
from .quantum_graphs import entangled_complement, from_graph

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    tol: float = 1e-9
    threads: int = 1
    output_path: Optional[str] = None


class CliError(Exception):
    pass


def _load(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None


def _clean(obj):
    """Make reports JSON-safe (numpy scalars and arrays)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return io.matrix_to_json(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


# ---------------------------------------------------------------- commands

def command_verify(strategy_file: str, game_file: str, cfg: RunConfig):
    gamma = io.correlation_from_json(_load(strategy_file))
    game = io.game_from_json(_load(game_file))
    if tuple(gamma.dims) != tuple(game.dims):
        raise CliError(f"strategy dims {list(gamma.dims)} do not match game dims {list(game.dims)}")
    chan = gamma.channel_report(cfg.tol)
    ns = gamma.ns_report(cfg.tol)
    report = {"channel": chan, "no_signalling": ns.to_json()}
    if not chan["channel"]:
        report.update(verdict=False, max_violation=None, worst_rule=None, violations=[])
        return EXIT_FAIL, report
    res = check_perfect_strategy(gamma, game, cfg.tol, cfg.threads)
    report.update(res.to_json())
    report["verdict"] = bool(res.verdict and ns.ok)
    return (EXIT_PASS if report["verdict"] else EXIT_FAIL), report


def _graph_arg(path: Optional[str]):
    if path is None:
        raise CliError("--graph is required for this kind")
    return io.graph_from_json(_load(path))


def command_build(kind: str, args, cfg: RunConfig):
    rng = np.random.default_rng(cfg.seed)
    if kind == "kd2":
        gamma = kd2_generators(args.d).correlation()
    elif kind == "mus":
        gamma = tracial_cqns_from_mus(sample_rep("matrix_units", (args.X, args.A), args.k, cfg.seed))
    elif kind == "brown":
        gamma = tracial_from_brown_rep(sample_rep("brown", (args.X,), args.k, cfg.seed))
    elif kind == "mirror":
        gamma = mirror_strategy(random_mirror_spec(args.X, args.A, args.m, cfg.seed))
    elif kind == "local-orthrep":
        G = _graph_arg(args.graph)
        V = orth_rep_search(G, args.k, cfg.seed)
        if V is None:
            return EXIT_FAIL, {"found": False, "k": args.k}
        gamma = local_from_orthogonal_rep(V)
    elif kind == "som-pair":
        E = random_som(args.X, args.A, args.k, rng)
        F = random_som(args.X, args.A, args.k, rng)
        xi = rng.standard_normal(args.k ** 2) + 1j * rng.standard_normal(args.k ** 2)
        gamma = from_som_pair(E, F, xi / np.linalg.norm(xi))
    else:
        raise CliError(f"unknown build kind {kind!r}")
    ok = gamma.is_channel(cfg.tol) and gamma.is_no_signalling(cfg.tol)
    return (EXIT_PASS if ok else EXIT_FAIL), io.correlation_to_json(gamma)


def command_game(kind: str, args, cfg: RunConfig):
    if kind == "colouring":
        g = colouring_game(_graph_arg(args.graph), args.A, relaxed=args.relaxed)
    elif kind == "concurrency":
        g = concurrency_game(args.X, args.A)
    elif kind == "graph-hom":
        g = game_from_rule_function(graph_hom_rule_function(_graph_arg(args.graph), _graph_arg(args.target)))
    elif kind == "quantum-hom":
        U = from_graph(_graph_arg(args.graph))
        V = entangled_complement(args.A) if args.target is None else from_graph(_graph_arg(args.target))
        g = homomorphism_game(U, V)
    elif kind == "mirror":
        g = mirror_game(random_mirror_spec(args.X, args.A, args.m, cfg.seed))
    else:
        raise CliError(f"unknown game kind {kind!r}")
    return EXIT_PASS, io.game_to_json(g)


def command_dilate(som_file: Optional[str], args, cfg: RunConfig):
    if som_file is not None:
        E = io.som_from_json(_load(som_file))
    elif args.sample is not None:
        X, A, k = args.sample
        E = random_semiclassical_som(X, A, k, np.random.default_rng(cfg.seed))
    else:
        raise CliError("give a SOM file or --sample X A K")
    res = dilate_semiclassical(E, cfg.tol)
    comp = res.compression_error(E)
    mus = res.systems.residual()
    out = io.dilation_to_json(res)
    out.update(compression_error=comp, matrix_unit_residual=mus, isometry_defect=res.isometry_defect())
    if som_file is None:
        out["input"] = io.som_to_json(E)
    ok = comp <= 10 * cfg.tol and mus <= cfg.tol
    return (EXIT_PASS if ok else EXIT_FAIL), out


def command_search(graph_file: str, k: int, args, cfg: RunConfig):
    G = io.graph_from_json(_load(graph_file))
    V = orth_rep_search(G, k, cfg.seed, iters=args.iters, restarts=args.restarts)
    if V is None:
        return EXIT_FAIL, {"found": False, "k": k, "restarts": args.restarts}
    return EXIT_PASS, {"found": True, "k": k, "objective": orth_objective(G, V),
                       "vectors": [io.matrix_to_json(v) for v in V]}


def command_theta(graph_file: str, cfg: RunConfig):
    G = io.graph_from_json(_load(graph_file))
    r = theta_sdp(G, cfg.tol)
    rc = theta_sdp(G.complement(), cfg.tol)
    rb = rank_bounds(G, cfg.tol)
    out = {"theta": r.value, "theta_complement": rc.value, "gap": r.gap, "gap_complement": rc.gap,
           "converged": r.converged and rc.converged,
           "xi_q_lower": rb.xi_q_lower, "xi_cstar_lower": rb.xi_cstar_lower}
    return (EXIT_PASS if out["converged"] else EXIT_FAIL), out


def command_classify(game_file: str, cfg: RunConfig):
    g = io.game_from_json(_load(game_file))
    m, f, gm = is_mirror(g)
    return EXIT_PASS, {"synchronous": is_synchronous(g), "mirror": m, "concurrent": is_concurrent_game(g),
                       "mirror_maps": {"f": f, "g": gm} if m else None}


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="64-bit seed for every random draw")
    common.add_argument("--tol", type=float, default=1e-9)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=None, help="write JSON here instead of stdout")

    p = argparse.ArgumentParser(prog="qnsgames", description="Verify and build no-signalling game strategies.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="check a strategy against a game")
    v.add_argument("strategy")
    v.add_argument("game")

    b = sub.add_parser("build", parents=[common], help="build a strategy")
    b.add_argument("kind", choices=["brown", "mus", "kd2", "mirror", "local-orthrep", "som-pair"])
    b.add_argument("--d", type=int, default=2)
    b.add_argument("--X", type=int, default=2)
    b.add_argument("--A", type=int, default=2)
    b.add_argument("--k", type=int, default=2)
    b.add_argument("--m", type=int, default=1)
    b.add_argument("--graph")

    g = sub.add_parser("game", parents=[common], help="emit a game")
    g.add_argument("kind", choices=["colouring", "concurrency", "graph-hom", "quantum-hom", "mirror"])
    g.add_argument("--graph")
    g.add_argument("--target")
    g.add_argument("--relaxed", action="store_true")
    g.add_argument("--X", type=int, default=2)
    g.add_argument("--A", type=int, default=2)
    g.add_argument("--m", type=int, default=1)

    d = sub.add_parser("dilate", parents=[common], help="dilate a semi-classical SOM")
    d.add_argument("som", nargs="?")
    d.add_argument("--sample", type=int, nargs=3, metavar=("X", "A", "K"))

    s = sub.add_parser("search", parents=[common], help="search for an orthogonal representation")
    s.add_argument("graph")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--iters", type=int, default=3000)
    s.add_argument("--restarts", type=int, default=200)

    t = sub.add_parser("theta", parents=[common], help="Lovasz theta and rank bounds")
    t.add_argument("graph")

    c = sub.add_parser("classify", parents=[common], help="synchronous / mirror / concurrent")
    c.add_argument("game")
    return p


def _dispatch(args, cfg: RunConfig):
    if args.command == "verify":
        return command_verify(args.strategy, args.game, cfg)
    if args.command == "build":
        return command_build(args.kind, args, cfg)
    if args.command == "game":
        return command_game(args.kind, args, cfg)
    if args.command == "dilate":
        return command_dilate(args.som, args, cfg)
    if args.command == "search":
        return command_search(args.graph, args.k, args, cfg)
    if args.command == "theta":
        return command_theta(args.graph, cfg)
    if args.command == "classify":
        return command_classify(args.game, cfg)
    raise CliError(f"unknown command {args.command!r}")


def _emit(payload, cfg: RunConfig) -> None:
    text = io.dumps(_clean(payload)) + "\n"
    if cfg.output_path:
        with open(cfg.output_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(args.seed, args.tol, max(1, args.threads), args.out)
    try:
        code, payload = _dispatch(args, cfg)
    except NotAChannelError as exc:
        code, payload = EXIT_FAIL, {"verdict": False, "error": {"type": "NotAChannelError", "message": str(exc)}}
    except (CliError, ValueError, KeyError, TypeError) as exc:
        code, payload = EXIT_ERROR, {"error": {"type": type(exc).__name__, "message": str(exc)}}
    _emit(payload, cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
