"""Command-line interface; thin adapters over the library modules.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys

import numpy as np

from . import modeseek
from .backends import (
    BackendConfig,
    BackendError,
    make_embedder,
    make_generator,
)
from .config import resolve_build_config
from .graph import build_hierarchy
from .metrics import evaluate_accuracy, evaluate_rouge
from .prefdata import load_qa_pairs, synthesize_dataset, write_records
from .retrieval import layer_distribution, rank
from .store import IndexStoreError, load_index, save_index

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    env = os.environ
    parser.add_argument(
        "--backend",
        choices=["mock", "http"],
        default=env.get("GRAPHDEX_BACKEND", "mock"),
        help="embedding/generation provider (default: mock)",
    )
    parser.add_argument("--endpoint", default=env.get("GRAPHDEX_ENDPOINT", ""))
    parser.add_argument("--model", default=env.get("GRAPHDEX_MODEL", ""))
    parser.add_argument(
        "--api-key-env", default=env.get("GRAPHDEX_API_KEY_ENV", "GRAPHDEX_API_KEY")
    )
    parser.add_argument(
        "--timeout-ms", type=int, default=int(env.get("GRAPHDEX_TIMEOUT_MS", "30000"))
    )
    parser.add_argument(
        "--max-concurrent",
        type=int,
        default=int(env.get("GRAPHDEX_MAX_CONCURRENT", "8")),
    )
    parser.add_argument(
        "--mock-dim", type=int, default=int(env.get("GRAPHDEX_MOCK_DIM", "64"))
    )


def _backend_config(args: argparse.Namespace) -> BackendConfig:
    return BackendConfig(
        kind=args.backend,
        endpoint_url=args.endpoint,
        model_name=args.model,
        api_key_env=args.api_key_env,
        timeout_ms=args.timeout_ms,
        max_concurrent=args.max_concurrent,
        mock_dim=args.mock_dim,
    )


def _add_build_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument("--large", type=int, default=None)
    parser.add_argument("--small", type=int, default=None)
    parser.add_argument("--layers", type=int, default=None, dest="n_layers")
    parser.add_argument("--tau", type=float, default=None)
    parser.add_argument("--k-edges", type=int, default=None, dest="k_edges")
    parser.add_argument("--top-k", type=int, default=None, dest="top_k_retrieval")
    parser.add_argument("--resolution", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)


def _resolved_config(args: argparse.Namespace):
    overrides = {
        name: getattr(args, name)
        for name in (
            "large",
            "small",
            "n_layers",
            "tau",
            "k_edges",
            "top_k_retrieval",
            "resolution",
            "seed",
        )
    }
    return resolve_build_config(overrides, config_file=args.config)


def _cmd_build(args: argparse.Namespace) -> int:
    config = _resolved_config(args)
    backend_config = _backend_config(args)
    with open(args.input, "r", encoding="utf-8") as handle:
        text = handle.read()
    embedder = make_embedder(backend_config)
    generator = make_generator(backend_config)
    index = build_hierarchy(text, config, embedder, generator)
    manifest = save_index(index, args.out)
    print(f"wrote {args.out}")
    print(f"  layers: {manifest.layer_count}")
    for layer in index.layers:
        print(
            f"    layer {layer.layer_index}: {len(layer.node_ids)} nodes, "
            f"{len(layer.edges)} edges"
        )
    print(f"  chunks: {manifest.chunk_count}")
    print(f"  checksum: {manifest.checksum[:16]}...")
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    embedder = make_embedder(_backend_config(args))
    top_k = args.top_k if args.top_k is not None else index.config.top_k_retrieval
    result = rank(index, args.query, top_k, embedder)
    for position, entry in enumerate(result.entries, start=1):
        text = index.chunks[entry.chunk_id].text
        snippet = text if len(text) <= 100 else text[:97] + "..."
        print(
            f"{position:2d}. score={entry.score:.6f} layer={entry.layer_index} "
            f"kind={entry.kind.value} chunk={entry.chunk_id}  {snippet}"
        )
    if args.show_layers:
        counts = layer_distribution(result, len(index.layers))
        print("layer distribution: " + ", ".join(
            f"layer {i}: {c}" for i, c in enumerate(counts)
        ))
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    print(f"layers: {len(index.layers)}")
    for layer in index.layers:
        print(
            f"  layer {layer.layer_index}: {len(layer.node_ids)} nodes, "
            f"{len(layer.edges)} edges"
        )
    kinds: dict[str, int] = {}
    for chunk in index.chunks.values():
        kinds[chunk.kind.value] = kinds.get(chunk.kind.value, 0) + 1
    print(f"chunks: {len(index.chunks)} ({', '.join(f'{k}: {v}' for k, v in sorted(kinds.items()))})")
    for source_layer in sorted(index.communities):
        records = index.communities[source_layer]
        sizes = sorted((len(r.member_chunk_ids) for r in records), reverse=True)
        print(
            f"  communities from layer {source_layer}: {len(records)} "
            f"(sizes: {sizes})"
        )
    print(f"config: {index.config.to_dict()}")
    return 0


def _cmd_synth_prefs(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    config = index.config
    backend_config = _backend_config(args)
    embedder = make_embedder(backend_config)
    generator = make_generator(backend_config)
    qa_pairs = load_qa_pairs(args.qa)
    sizes = None
    if args.context_sizes:
        try:
            sizes = [int(part) for part in args.context_sizes.split(",") if part]
        except ValueError as exc:
            raise _UsageError(f"bad --context-sizes: {exc}") from exc
    records = synthesize_dataset(
        qa_pairs,
        index,
        config,
        [generator],
        embedder,
        context_sizes=sizes,
        include_empty_context=args.include_empty,
    )
    write_records(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


_MIXTURE_TERM = re.compile(
    r"(?:(?P<weight>[0-9.eE+-]+)\*)?N\((?P<mean>[^,]+),(?P<std>[^)]+)\)"
)


def _parse_target(spec: str):
    """Parses a fitting target: cat:p1,p2,... or w*N(m,s)+w*N(m,s)+..."""
    spec = spec.strip()
    if spec.startswith("cat:"):
        try:
            probs = np.array([float(p) for p in spec[4:].split(",")], dtype=np.float64)
        except ValueError as exc:
            raise _UsageError(f"bad categorical target: {exc}") from exc
        return probs
    terms = list(_MIXTURE_TERM.finditer(spec))
    if not terms:
        raise _UsageError(
            f"cannot parse target {spec!r}; expected cat:p1,p2,... or N(mean,std)+..."
        )
    try:
        weights = np.array(
            [float(t.group("weight")) if t.group("weight") else 1.0 for t in terms]
        )
        means = np.array([float(t.group("mean")) for t in terms])
        stds = [float(t.group("std")) for t in terms]
    except ValueError as exc:
        raise _UsageError(f"bad mixture target: {exc}") from exc
    if len(set(stds)) != 1:
        raise _UsageError("mixture components must share one std")
    weights = weights / weights.sum()
    return modeseek.GaussianMixtureTarget(weights=weights, means=means, std=stds[0])


_OBJECTIVE_NAMES = {
    "reverse": modeseek.FitObjective.REVERSE_KL,
    "reverse_kl": modeseek.FitObjective.REVERSE_KL,
    "forward": modeseek.FitObjective.FORWARD_KL,
    "forward_kl": modeseek.FitObjective.FORWARD_KL,
    "ms": modeseek.FitObjective.MS_LOSS,
    "ms_loss": modeseek.FitObjective.MS_LOSS,
}


def _cmd_ms_demo(args: argparse.Namespace) -> int:
    objective = _OBJECTIVE_NAMES[args.objective]
    target = _parse_target(args.target)
    if isinstance(target, modeseek.GaussianMixtureTarget) and objective == modeseek.FitObjective.MS_LOSS:
        raise _UsageError("the ms objective needs a categorical target (cat:...)")
    try:
        fit = modeseek.fit_policy(
            target,
            objective,
            steps=args.steps,
            learning_rate=args.lr,
            seed=args.seed,
            record_params=True,
        )
    except modeseek.FitDivergedError as exc:
        print(f"error: {exc}; lower --lr", file=sys.stderr)
        return 2
    gaussian = fit.param_names == ("mu", "log_sigma")
    columns = ["step", "loss"] + (["mu", "sigma"] if gaussian else list(fit.param_names))
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out != "-" else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(columns)
        for step in range(fit.losses.size):
            row = [step, repr(float(fit.losses[step]))]
            params = fit.param_trace[step]
            if gaussian:
                row += [repr(float(params[0])), repr(float(np.exp(params[1])))]
            else:
                row += [repr(float(p)) for p in params]
            writer.writerow(row)
    finally:
        if out is not sys.stdout:
            out.close()
    if gaussian:
        print(f"final: loss={fit.final_loss:.6f} mu={fit.mu:.6f} sigma={fit.sigma:.6f}")
    else:
        probs = ", ".join(f"{p:.4f}" for p in fit.probabilities())
        print(f"final: loss={fit.final_loss:.6f} probabilities=[{probs}]")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    with open(args.pred, "r", encoding="utf-8") as handle:
        predictions = [line.rstrip("\n") for line in handle]
    with open(args.gold, "r", encoding="utf-8") as handle:
        golds = [line.rstrip("\n") for line in handle]
    if args.metric == "rouge":
        report = evaluate_rouge(predictions, golds)
    else:
        report = evaluate_accuracy(predictions, golds)
    print(
        json.dumps(
            {
                "metric": report.metric,
                "aggregate": report.aggregate,
                "item_count": report.item_count,
            }
        )
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="graphdex", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_build = sub.add_parser("build", help="index a text corpus")
    p_build.add_argument("--input", required=True, help="UTF-8 text file")
    p_build.add_argument("--out", required=True, help="index output path")
    _add_build_config_flags(p_build)
    _add_backend_flags(p_build)
    p_build.set_defaults(func=_cmd_build)

    p_query = sub.add_parser("query", help="rank chunks against a query")
    p_query.add_argument("--index", required=True)
    p_query.add_argument("--query", "-q", required=True)
    p_query.add_argument("--top-k", type=int, default=None)
    p_query.add_argument("--show-layers", action="store_true")
    _add_backend_flags(p_query)
    p_query.set_defaults(func=_cmd_query)

    p_stats = sub.add_parser("stats", help="describe a stored index")
    p_stats.add_argument("--index", required=True)
    p_stats.set_defaults(func=_cmd_stats)

    p_synth = sub.add_parser("synth-prefs", help="synthesize preference pairs")
    p_synth.add_argument("--index", required=True)
    p_synth.add_argument("--qa", required=True, help="JSONL QA pairs")
    p_synth.add_argument("--out", required=True, help="JSONL output path")
    p_synth.add_argument("--context-sizes", default=None, help="e.g. 1,2,4,10")
    p_synth.add_argument("--include-empty", action="store_true")
    _add_backend_flags(p_synth)
    p_synth.set_defaults(func=_cmd_synth_prefs)

    p_demo = sub.add_parser("ms-demo", help="fit a policy to a toy target")
    p_demo.add_argument(
        "--objective", required=True, choices=sorted(_OBJECTIVE_NAMES)
    )
    p_demo.add_argument("--target", required=True)
    p_demo.add_argument("--steps", type=int, default=2000)
    p_demo.add_argument("--lr", type=float, default=0.1)
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.add_argument("--out", default="-", help="CSV path, - for stdout")
    p_demo.set_defaults(func=_cmd_ms_demo)

    p_eval = sub.add_parser("eval", help="score predictions against references")
    p_eval.add_argument("--pred", required=True, help="one prediction per line")
    p_eval.add_argument("--gold", required=True, help="one reference per line")
    p_eval.add_argument("--metric", required=True, choices=["rouge", "accuracy"])
    p_eval.set_defaults(func=_cmd_eval)

    return parser


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse -h exits directly
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, BackendError, IndexStoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
