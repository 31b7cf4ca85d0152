"""Command-line interface: train, solve, bench, oracle, ball.

Heavy imports happen inside the command handlers so that --threads can pin
the BLAS thread count before numpy loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_RESOURCE = 4
EXIT_NUMERIC = 5


def _add_graph_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", required=True, dest="family",
                   choices=["cube3", "cube2", "sl2p", "generic-perm"],
                   help="graph family")
    p.add_argument("--p", type=int, help="modulus for sl2p")
    p.add_argument("--generator-file", help="generator file for generic-perm")
    p.add_argument("--goal-file", help="optional goal-set file")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="cayleydiff",
        description="Diffusion-model pathfinding on Cayley graphs.")
    top.add_argument("--threads", type=int, default=None,
                     help="BLAS/OpenMP thread count (default: machine parallelism)")
    sub = top.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a score network")
    t.add_argument("--config", help="key=value config file")
    t.add_argument("--spec", dest="family",
                   choices=["cube3", "cube2", "sl2p", "generic-perm"])
    t.add_argument("--p", type=int)
    t.add_argument("--generator-file")
    t.add_argument("--goal-file")
    t.add_argument("--T", type=int, dest="T")
    t.add_argument("--alg", choices=["alg1", "alg3"])
    t.add_argument("--batch", type=int)
    t.add_argument("--trajectories", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--lr-final", type=float)
    t.add_argument("--scramble-nmax", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--blocks", type=int)
    t.add_argument("--time-embed", type=int)
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--out", help="output directory")

    s = sub.add_parser("solve", help="solve one instance with a checkpoint")
    _add_graph_args(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--T", type=int, required=True, dest="T",
                   help="backward horizon (at most the training horizon)")
    s.add_argument("--beam", type=int, default=1, help="beam width (1 = greedy)")
    s.add_argument("--ball-radius", type=int, default=0)
    s.add_argument("--ball-file", help="persisted ball table to reuse")
    s.add_argument("--calibrate", action="store_true")
    s.add_argument("--walk", action="store_true",
                   help="stochastic backward walk instead of beam search")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="also append the record to this file")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--start", help="explicit state, comma-separated integers")
    g.add_argument("--scramble", type=int, help="scramble depth from a goal")
    g.add_argument("--uniform", action="store_true", help="uniform random state")

    b = sub.add_parser("bench", help="beam-width x ball-radius sweep to CSV")
    _add_graph_args(b)
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--T", type=int, required=True, dest="T")
    b.add_argument("--beam-widths", default="1,2,4,8,16,32,64")
    b.add_argument("--ball-radii", default="0,2,4")
    b.add_argument("--instances", type=int, default=200)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--calibrate", action="store_true")
    b.add_argument("--oracle", help="persisted distance table for optimality stats")
    b.add_argument("--compute-oracle", action="store_true",
                   help="run the exact BFS oracle in-process")
    b.add_argument("--out", help="CSV output path (default stdout)")

    o = sub.add_parser("oracle", help="exact BFS distance table")
    _add_graph_args(o)
    o.add_argument("--out", help="persist the dense table here")
    o.add_argument("--max-states", type=int, default=None)

    k = sub.add_parser("ball", help="hashed exact ball around the goal set")
    _add_graph_args(k)
    k.add_argument("--radius", type=int, required=True)
    k.add_argument("--out", help="persist the ball table here")

    return top


def _build_graph(args):
    from .graphs import build_graph
    return build_graph(args.family, p=args.p, generator_file=args.generator_file,
                       goal_file=args.goal_file)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, command, resolved, seed, started, outputs,
                    checkpoint=None) -> None:
    manifest = {
        "command": command,
        "resolved": resolved,
        "seed": seed,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": [str(o) for o in outputs],
    }
    if checkpoint is not None:
        manifest["checkpoint_sha256"] = _sha256(checkpoint)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _load_model_for(graph, path):
    from .errors import FormatError
    from .model import load_checkpoint
    model = load_checkpoint(path)
    if model.feature_dim != graph.feature_dim or model.n_out != graph.n_generators:
        raise FormatError(
            f"checkpoint dims ({model.feature_dim} features, {model.n_out} outputs) "
            f"do not match graph ({graph.feature_dim}, {graph.n_generators})")
    return model


def cmd_train(args) -> int:
    from .training import make_config, train

    started = datetime.now(timezone.utc).isoformat()
    overrides = {
        "graph": args.family, "p": args.p, "generator_file": args.generator_file,
        "goal_file": args.goal_file, "T": args.T, "algorithm": args.alg,
        "batch_size": args.batch, "total_trajectories": args.trajectories,
        "lr": args.lr, "lr_final": args.lr_final,
        "scramble_nmax": args.scramble_nmax, "seed": args.seed,
        "hidden_dim": args.hidden, "n_blocks": args.blocks,
        "time_embed_dim": args.time_embed,
        "checkpoint_every": args.checkpoint_every, "out_dir": args.out,
    }
    config = make_config(args.config, **overrides)
    out_dir = Path(config.out_dir)

    def progress(row):
        print(f"step {row.step}  trajectories {row.trajectories}  "
              f"loss {row.loss:.4f}  {row.seconds:.0f}s", flush=True)

    train(config, progress=progress)
    outputs = [out_dir / "model.ckpt", out_dir / "metrics.csv"]
    _write_manifest(out_dir / "manifest.json", "train",
                    {k: getattr(config, k) for k in config.__dataclass_fields__},
                    config.seed, started, outputs, checkpoint=out_dir / "model.ckpt")
    print(f"checkpoint: {outputs[0]}")
    print(f"metrics: {outputs[1]}")
    return EXIT_OK


def _resolve_start(args, graph):
    import numpy as np
    rng = np.random.default_rng(args.seed)
    if args.start is not None:
        return graph.parse_state(args.start)
    if args.scramble is not None:
        x = graph.random_goal(rng)
        for _ in range(args.scramble):
            x = graph.apply_batch(x[None, :], int(rng.integers(graph.n_generators)))[0]
        return x
    return graph.uniform_random_state(rng)


def _resolve_ball(args, graph):
    from .search import build_ball, load_ball
    if args.ball_file:
        return load_ball(graph, args.ball_file)
    if args.ball_radius > 0:
        return build_ball(graph, args.ball_radius)
    return None


def cmd_solve(args) -> int:
    import numpy as np

    from .search import backward_walk, beam_search, t_calibrate

    started = datetime.now(timezone.utc).isoformat()
    graph = _build_graph(args)
    model = _load_model_for(graph, args.checkpoint)
    start = _resolve_start(args, graph)
    ball = _resolve_ball(args, graph)
    rng = np.random.default_rng(args.seed + 1)
    if args.walk:
        solver = lambda s, tb: backward_walk(graph, model, s, tb, rng, ball)
    else:
        solver = lambda s, tb: beam_search(graph, model, s, tb, args.beam, ball)
    if args.calibrate:
        result = t_calibrate(solver, start, args.T)
    else:
        result = solver(start, args.T)
    record = result.record(graph)
    print(record)
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(record + "\n")
        _write_manifest(str(args.out) + ".manifest.json", "solve", vars(args),
                        args.seed, started, [args.out], checkpoint=args.checkpoint)
    return EXIT_OK


def _bench_oracle(args, graph):
    from .oracle import bfs_distances, load_distance_table
    if args.oracle:
        return load_distance_table(graph, args.oracle)
    if args.compute_oracle:
        return bfs_distances(graph)
    return None


def cmd_bench(args) -> int:
    from .bench import CSV_HEADER, fit_excess_curve, run_benchmark, sample_instances

    started = datetime.now(timezone.utc).isoformat()
    graph = _build_graph(args)
    model = _load_model_for(graph, args.checkpoint)
    widths = [int(w) for w in args.beam_widths.split(",") if w]
    radii = [int(r) for r in args.ball_radii.split(",") if r != ""]
    table = _bench_oracle(args, graph)
    starts = sample_instances(graph, args.instances, args.seed, table)
    rows = run_benchmark(graph, model, args.T, widths, radii, starts,
                         dist_table=table, calibrate=args.calibrate)
    lines = [CSV_HEADER] + [r.csv() for r in rows]
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        _write_manifest(str(args.out) + ".manifest.json", "bench", vars(args),
                        args.seed, started, [args.out], checkpoint=args.checkpoint)
        print(f"wrote {args.out}")
    else:
        print("\n".join(lines))
    for radius, (a, b) in sorted(fit_excess_curve(rows).items()):
        print(f"fit radius {radius}: excess ~ {a:.2f}/log2(B) + {b:.2f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import bfs_distances, save_distance_table

    started = datetime.now(timezone.utc).isoformat()
    graph = _build_graph(args)
    kwargs = {}
    if args.max_states is not None:
        kwargs["max_states"] = args.max_states
    table = bfs_distances(graph, **kwargs)
    print(f"states: {table.count}")
    print(f"diameter: {table.diameter}")
    print(f"mean_distance: {table.mean_distance:.4f}")
    if args.out:
        save_distance_table(table, args.out)
        _write_manifest(str(args.out) + ".manifest.json", "oracle", vars(args),
                        0, started, [args.out])
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_ball(args) -> int:
    from .search import build_ball, save_ball

    started = datetime.now(timezone.utc).isoformat()
    graph = _build_graph(args)
    ball = build_ball(graph, args.radius)
    print(f"radius: {ball.radius}")
    print(f"states: {len(ball)}")
    if args.out:
        save_ball(ball, args.out)
        _write_manifest(str(args.out) + ".manifest.json", "ball", vars(args),
                        0, started, [args.out])
        print(f"wrote {args.out}")
    return EXIT_OK


_HANDLERS = {
    "train": cmd_train,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "oracle": cmd_oracle,
    "ball": cmd_ball,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    if args.threads is not None:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .errors import (DomainError, EncodingError, FormatError, NumericError,
                         ResourceLimitError, UsageError)

    try:
        return _HANDLERS[args.command](args)
    except (UsageError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, EncodingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except ResourceLimitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
