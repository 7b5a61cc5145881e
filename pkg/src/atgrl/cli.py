"""``atgrl`` command line: generate, train, detect, eval, embed, coherence.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure
during training, 4 input/checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import ablation, jsonio
from .adversarial import PriorError, load_prior_weights
from .config import ConfigError, ExperimentConfig, load_experiment_config, save_experiment_config
from .encoder import EncoderConfigError, check_compatible, embedding_sequence, encode
from .graph import (
    CoherenceError,
    DynamicGraph,
    GraphFormatError,
    GraphValidationError,
    load_dynamic_graph,
    load_raw_signals,
    save_dynamic_graph,
    snapshot_windows,
)
from .metrics import MetricUndefinedError, evaluate
from .synth import generate
from .trainer import NumericalError, detect, detect_kmeans, load_checkpoint, train

log = logging.getLogger("atgrl")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISMATCH = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """argparse with our exit code for usage errors (argparse's own is also 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: {message}", EXIT_CONFIG)


# flag name -> (section, field, type)
SYNTH_FLAGS = {
    "n": int,
    "c": int,
    "t": int,
    "p_in": float,
    "p_out": float,
    "migrate_frac": float,
    "shift_step": int,
    "feature_dim": int,
    "feature_noise": float,
}
TRAIN_FLAGS = {
    "epochs": int,
    "lr": float,
    "weight_decay": float,
    "lam": float,
    "communities": int,
    "w_re": float,
    "w_g": float,
    "w_mm": float,
    "d_steps": int,
    "g_steps": int,
    "checkpoint_interval": int,
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON; flags given on the command line take precedence")
    p.add_argument("--seed", type=int, help="seed for every random draw in this command")


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    for name, typ in SYNTH_FLAGS.items():
        p.add_argument(_flag(name), dest=f"synth_{name}", type=typ)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    for name, typ in TRAIN_FLAGS.items():
        if name == "lam":
            p.add_argument("--lambda", dest="train_lam", type=typ, help="size-regulariser weight")
        else:
            p.add_argument(_flag(name), dest=f"train_{name}", type=typ)
    p.add_argument("--encoder", dest="train_encoder", choices=["atgrl", "gcn"])
    p.add_argument("--assign-mode", dest="train_assign_mode", choices=["pooled", "per-timestep"])
    p.add_argument("--reg-literal", dest="train_reg_literal", action="store_true", default=None,
                   help="use unnormalised column sums in the size regulariser")
    p.add_argument("--no-causal", dest="train_causal", action="store_false", default=None)
    p.add_argument("--prior", help="JSON histogram {\"weights\": [...]} over prior mixture components")
    p.add_argument("--gaussian-prior", action="store_true", help="single standard Gaussian prior")


def _resolve(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    if getattr(args, "config", None):
        cfg = load_experiment_config(args.config)
    synth = {k[len("synth_"):]: v for k, v in vars(args).items() if k.startswith("synth_") and v is not None}
    train_over = {k[len("train_"):]: v for k, v in vars(args).items() if k.startswith("train_") and v is not None}
    if getattr(args, "seed", None) is not None:
        synth["seed"] = args.seed
        train_over["seed"] = args.seed
    if getattr(args, "prior", None):
        try:
            weights = load_prior_weights(args.prior)
        except PriorError as exc:
            raise CliError(str(exc)) from exc
        train_over.update(prior="mixture", prior_weights=tuple(weights.tolist()))
    if getattr(args, "gaussian_prior", False):
        train_over["prior"] = "gaussian"
    with warnings.catch_warnings():
        # the undetectable-regime warning is reported once, when the graph is generated
        warnings.simplefilter("ignore")
        return cfg.with_overrides(synth=synth, train=train_over)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_graph(path) -> DynamicGraph:
    try:
        return load_dynamic_graph(path)
    except OSError as exc:
        raise CliError(f"cannot read graph {path}: {exc}") from exc


def _load_ckpt(path, g: DynamicGraph):
    try:
        enc, disc, tcfg = load_checkpoint(path)
    except OSError as exc:
        raise CliError(f"cannot read checkpoint {path}: {exc}", EXIT_MISMATCH) from exc
    except (EncoderConfigError, ValueError) as exc:
        raise CliError(str(exc), EXIT_MISMATCH) from exc
    try:
        check_compatible(enc, g)
    except EncoderConfigError as exc:
        raise CliError(str(exc), EXIT_MISMATCH) from exc
    return enc, disc, tcfg


def _generate(cfg: ExperimentConfig) -> DynamicGraph:
    if not cfg.synth.detectable:
        print(f"warning: {cfg.synth.undetectable_message()}", file=sys.stderr)
    return generate(cfg.synth)


def _partition(enc, g: DynamicGraph, head: str, mode: str, k: int, seed: int):
    if head == "kmeans":
        return detect_kmeans(enc, g, k, mode, seed)
    return detect(enc, g, None, mode)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    g = _generate(cfg)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dynamic_graph(g, out)
    labels_csv = "timestep,node,label\n" + "".join(
        f"{t + 1},{i},{int(g.labels[t, i])}\n" for t in range(g.t) for i in range(g.n)
    )
    jsonio.atomic_write_text(out.with_name(out.stem + ".labels.csv"), labels_csv)
    save_experiment_config(cfg, out.with_name(out.stem + ".config.json"))
    return EXIT_OK


def _train(cfg: ExperimentConfig, g: DynamicGraph, out: Path):
    save_experiment_config(cfg, out / "config.json")
    try:
        result = train(g, cfg.train, checkpoint_path=out / "checkpoint.json")
    except NumericalError as exc:
        raise CliError(str(exc), EXIT_NUMERICAL) from exc
    except (EncoderConfigError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    jsonio.atomic_write_text(out / "log.jsonl", result.log.to_jsonl())
    return result


def cmd_train(args) -> int:
    cfg = _resolve(args)
    cfg = cfg.with_overrides(input_path=args.input, output_dir=args.output)
    g = _load_graph(args.input)
    out = _out_dir(args.output)
    result = _train(cfg, g, out)
    if result.log.final_metrics is not None:
        jsonio.write_json(out / "final_metrics.json", result.log.final_metrics)
    return EXIT_OK


def cmd_detect(args) -> int:
    g = _load_graph(args.input)
    enc, _, tcfg = _load_ckpt(args.checkpoint, g)
    if args.communities is not None and args.communities != enc.config.communities and args.head == "modularity":
        raise CliError(
            f"checkpoint was trained for {enc.config.communities} communities, not {args.communities}", EXIT_MISMATCH
        )
    k = args.communities or enc.config.communities
    det = _partition(enc, g, args.head, args.mode, k, args.seed or 0)
    out = _out_dir(args.output)
    if args.format == "json":
        jsonio.write_json(out / "assignments.json", det.to_dict())
    else:
        jsonio.atomic_write_text(out / "assignments.csv", det.to_csv())
    jsonio.write_json(
        out / "config.json",
        {
            "command": "detect",
            "input": args.input,
            "checkpoint": args.checkpoint,
            "mode": args.mode,
            "head": args.head,
            "communities": k,
            "seed": args.seed or 0,
            "train_config": tcfg.to_dict() if tcfg is not None else None,
        },
    )
    return EXIT_OK


def _read_assignments(path, g: DynamicGraph) -> np.ndarray:
    labels = np.full((g.t, g.n), -1, dtype=np.int64)
    try:
        if str(path).endswith(".json"):
            rows = [(r["timestep"], r["node"], r["community"]) for r in jsonio.read_json(path)["assignments"]]
        else:
            lines = Path(path).read_text(encoding="utf-8").splitlines()[1:]
            rows = [tuple(int(v) for v in line.split(",")[:3]) for line in lines if line.strip()]
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read assignments {path}: {exc}") from exc
    for t, i, c in rows:
        if not (1 <= t <= g.t and 0 <= i < g.n):
            raise CliError(f"assignment row (timestep={t}, node={i}) is outside the graph", EXIT_MISMATCH)
        labels[t - 1, i] = c
    if (labels < 0).any():
        raise CliError(f"{path} does not assign every node at every timestep", EXIT_MISMATCH)
    return labels


def _write_report(out: Path, report) -> None:
    jsonio.write_json(out / "metrics.json", report.to_dict(percent=True))
    jsonio.atomic_write_text(out / "metrics.csv", report.to_csv(percent=True))


def cmd_eval(args) -> int:
    if args.ablation:
        return _eval_ablation(args)
    if not args.input:
        raise CliError("eval needs --input (or --ablation)")
    g = _load_graph(args.input)
    if args.assignments:
        parts = _read_assignments(args.assignments, g)
    elif args.checkpoint:
        enc, _, _ = _load_ckpt(args.checkpoint, g)
        parts = _partition(enc, g, args.head, args.mode, enc.config.communities, args.seed or 0).labels
    else:
        raise CliError("eval needs --assignments or --checkpoint")
    try:
        report = evaluate(g, parts)
    except MetricUndefinedError as exc:
        raise CliError(f"metric undefined: {exc}", EXIT_NUMERICAL) from exc
    out = _out_dir(args.output)
    _write_report(out, report)
    jsonio.write_json(
        out / "config.json",
        {"command": "eval", "input": args.input, "assignments": args.assignments, "checkpoint": args.checkpoint,
         "mode": args.mode, "head": args.head, "seed": args.seed or 0},
    )
    return EXIT_OK


def _eval_ablation(args) -> int:
    try:
        base = _resolve(args)
        cfg = ablation.expand(args.ablation, base)
    except ablation.AblationError as exc:
        raise CliError(str(exc)) from exc
    out = _out_dir(args.output)
    if args.input:
        g = _load_graph(args.input)
    else:
        g = _generate(cfg)
    cfg = cfg.with_overrides(input_path=args.input, output_dir=str(out))
    result = _train(cfg, g, out)
    mode = cfg.train.assign_mode
    det = _partition(result.encoder, g, cfg.head, mode, cfg.train.communities, cfg.train.seed)
    jsonio.atomic_write_text(out / "assignments.csv", det.to_csv())
    try:
        report = evaluate(g, det.labels)
    except MetricUndefinedError as exc:
        raise CliError(f"metric undefined: {exc}", EXIT_NUMERICAL) from exc
    _write_report(out, report)
    return EXIT_OK


def cmd_embed(args) -> int:
    g = _load_graph(args.input)
    enc, _, _ = _load_ckpt(args.checkpoint, g)
    z = embedding_sequence(encode(enc, g), g.n)
    header = "timestep,node," + ",".join(f"z{k}" for k in range(z.shape[2]))
    lines = [header]
    for t in range(z.shape[0]):
        for i in range(z.shape[1]):
            lines.append(f"{t + 1},{i}," + ",".join(jsonio._format_float(float(v)) for v in z[t, i]))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    jsonio.atomic_write_text(out, "\n".join(lines) + "\n")
    jsonio.write_json(
        out.with_name(out.stem + ".config.json"),
        {"command": "embed", "input": args.input, "checkpoint": args.checkpoint},
    )
    return EXIT_OK


def cmd_coherence(args) -> int:
    try:
        raw = load_raw_signals(args.input)
    except OSError as exc:
        raise CliError(f"cannot read signals {args.input}: {exc}") from exc
    window = args.window or raw.length
    stride = args.stride or window
    try:
        g = snapshot_windows(
            raw, window, stride, args.segment, args.overlap, tuple(args.band) if args.band else None, args.threshold
        )
    except CoherenceError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dynamic_graph(g, out)
    jsonio.write_json(
        out.with_name(out.stem + ".config.json"),
        {"command": "coherence", "input": args.input, "window": window, "stride": stride, "segment": args.segment,
         "overlap": args.overlap, "band": args.band, "threshold": args.threshold},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="atgrl", description="Dynamic community detection with attention encoders.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="sample a dynamic stochastic block model")
    _add_config(p)
    _add_synth_flags(p)
    p.add_argument("-o", "--output", required=True, help="graph JSON to write")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train encoder, head and discriminator")
    _add_config(p)
    _add_train_flags(p)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="export community assignments from a checkpoint")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--mode", choices=["pooled", "per-timestep"], default="pooled")
    p.add_argument("--head", choices=["modularity", "kmeans"], default="modularity")
    p.add_argument("--communities", type=int, help="k for the k-means head")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score assignments (values reported x100)")
    _add_config(p)
    _add_synth_flags(p)
    _add_train_flags(p)
    p.add_argument("-i", "--input")
    p.add_argument("--assignments", help="assignments CSV or JSON from detect")
    p.add_argument("--checkpoint", help="detect from this checkpoint instead of reading assignments")
    p.add_argument("--mode", choices=["pooled", "per-timestep"], default="pooled")
    p.add_argument("--head", choices=["modularity", "kmeans"], default="modularity")
    p.add_argument("--ablation", help=f"train and score one ablation row: {', '.join(ablation.ROWS)}")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="export T*N embedding rows as CSV")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-o", "--output", required=True, help="CSV file to write")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("coherence", help="build a dynamic graph from raw signals")
    p.add_argument("-i", "--input", required=True, help="raw-signal JSON")
    p.add_argument("-o", "--output", required=True, help="graph JSON to write")
    p.add_argument("--window", type=int, help="samples per snapshot (default: whole recording)")
    p.add_argument("--stride", type=int, help="samples between snapshot starts (default: window)")
    p.add_argument("--segment", type=int, required=True, help="Welch segment length in samples")
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--threshold", type=float, help="binarise coherence above this value")
    p.set_defaults(func=cmd_coherence)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, GraphFormatError, GraphValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
