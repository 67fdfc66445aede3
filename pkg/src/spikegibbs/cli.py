"""Command-line entry point.

Every subcommand writes its outputs plus one JSON manifest holding the fully
resolved argument vector; ``spikegibbs replay MANIFEST`` re-runs it.

Stream derivation from ``--seed S``:

* characterize: grid point ``i`` -> ``(S, i)``
* crossbar:     data neuron ``i`` -> ``(S, i)``, leak neuron -> ``(S, 2K + 1)``
* train:        weight init -> ``(S, 0)``, shuffles and sampling -> ``(S, 1)``
* classify / noise-sweep: unit ``u`` of image ``i`` -> ``(S, i << 32 | u)``;
  noise masks -> ``(S, 0xFFFFFFFF << 32 | {0, 1})``
* kl-eval:      unit ``u`` of trial ``t`` -> ``(S, t << 32 | u)``
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .classify import ClassifyConfig, evaluate, noise_sweep
from .data_io import SALT, SALT_PEPPER, load_dataset
from .errors import ArithmeticRangeError, ParameterError, ParseError
from .neuron import SamplerParams
from .plot import emit_svg
from .rbm import (IdealSampler, Rbm, exact_joint_distribution, gibbs_chain, kl_divergence,
                  load_model, model_for_sampler, model_from_dict, parse_sampler_spec,
                  save_model)
from .sigmoid_lab import (CrossbarHarnessConfig, crossbar_characterize, fmt,
                          single_noise_decomposition, sweep_empirical, sweep_ideal,
                          sweep_oracle)
from .trainer import TrainConfig, build_labeled_rbm, cd1_train

DIR_OUTPUT = {"characterize", "crossbar"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sampler(text):
    try:
        return parse_sampler_spec(text)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _factors(text):
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad factor list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty factor list")
    return values


def _abs_path(text):
    return str(Path(text).resolve())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikegibbs",
                     description="Stochastic digital-neuron Gibbs sampling toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, out_help):
        p.add_argument("--seed", type=int, default=0, help="master seed (u64)")
        p.add_argument("--out", type=_abs_path, required=True, help=out_help)
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap; results do not depend on it")

    def neuron_flags(p):
        p.add_argument("--tw", type=int, default=16)
        p.add_argument("--vt", type=int, default=633)
        p.add_argument("--tm", type=int, default=8)
        p.add_argument("--leak", type=int, default=90)

    def data_flags(p):
        p.add_argument("--images", type=_abs_path, required=True)
        p.add_argument("--labels", type=_abs_path, required=True)
        p.add_argument("--binarize-threshold", type=int, default=128)
        p.add_argument("--downsample", type=int, default=1)

    p = sub.add_parser("characterize", help="sweep an activation curve")
    neuron_flags(p)
    p.add_argument("--scale", type=float, default=100.0)
    p.add_argument("--vmin", type=int, default=-800)
    p.add_argument("--vmax", type=int, default=800)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--mode", choices=["empirical", "oracle", "threshold_only", "leak_only"],
                   default="empirical")
    p.add_argument("--svg", action="store_true", help="also write curve.svg")
    common(p, "output directory")

    p = sub.add_parser("crossbar", help="simulate the crossbar characterization circuit")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--tw", type=int, default=16)
    p.add_argument("--vt", type=int, default=50)
    p.add_argument("--tm", type=int, default=9)
    p.add_argument("--leak", type=int, default=15, help="leak axon weight")
    p.add_argument("--windows", type=int, default=1000)
    p.add_argument("--svg", action="store_true")
    common(p, "output directory")

    p = sub.add_parser("train", help="CD-1 training of a (labeled) RBM")
    data_flags(p)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--minibatch", type=int, default=20)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--unlabeled", action="store_true", help="train on pixels only")
    common(p, "model JSON path")

    for name in ("classify", "noise-sweep"):
        p = sub.add_parser(name, help="label inference accuracy" if name == "classify"
                           else "accuracy versus pixel noise")
        p.add_argument("--model", type=_abs_path, required=True)
        data_flags(p)
        p.add_argument("--sampler", type=_sampler, default=IdealSampler(1.0))
        p.add_argument("--gibbs", type=int, default=10)
        p.add_argument("--weight-bits", type=int, default=9)
        if name == "noise-sweep":
            p.add_argument("--kind", choices=[SALT, SALT_PEPPER], default=SALT)
            p.add_argument("--factors", type=_factors, default=[0.0, 0.1, 0.2, 0.3])
        common(p, "CSV path")

    p = sub.add_parser("kl-eval", help="KL divergence of Gibbs histograms vs the exact joint")
    p.add_argument("--model", default="canonical",
                   help="model JSON path, or 'canonical' for the built-in 3+2 RBM")
    p.add_argument("--sampler", type=_sampler, default=IdealSampler(50.0))
    p.add_argument("--sweeps", type=int, default=100000)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=1e-9)
    p.add_argument("--weight-bits", type=int, default=9)
    common(p, "CSV path")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest", type=_abs_path)
    p.add_argument("--out", type=_abs_path, default=None, help="redirect the outputs")
    return parser


# ---------------------------------------------------------------- helpers

def _write(path: Path, text: str, written: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    written.append(str(path))


def _value_text(value):
    if hasattr(value, "spec"):
        return value.spec()
    if isinstance(value, list):
        return ",".join(fmt(v) for v in value)
    if isinstance(value, float):
        return fmt(value)
    return str(value)


def resolved_argv(parser: argparse.ArgumentParser, args: argparse.Namespace) -> list:
    """Explicit argv reproducing ``args``, including every default."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    argv = [args.command]
    for action in sub._actions:
        if not action.option_strings or action.dest in ("help", "threads"):
            continue
        value = getattr(args, action.dest)
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is not None:
            argv += [flag, _value_text(value)]
    return argv


def _manifest_path(command: str, out: Path) -> Path:
    return out / "manifest.json" if command in DIR_OUTPUT else Path(f"{out}.manifest.json")


def _write_manifest(parser, args, outputs: list) -> Path:
    params = {k: _value_text(v) for k, v in sorted(vars(args).items())
              if k not in ("command", "threads")}
    manifest = {"tool": "spikegibbs", "version": __version__, "subcommand": args.command,
                "seed": args.seed, "params": params, "argv": resolved_argv(parser, args),
                "outputs": outputs}
    path = _manifest_path(args.command, Path(args.out))
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def _load_dataset(args):
    return load_dataset(args.images, args.labels, args.binarize_threshold, args.downsample)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(x) for x in row) for row in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- subcommands

def cmd_characterize(args, written):
    p = SamplerParams(args.tw, args.vt, args.tm, args.leak, args.scale)
    if args.mode == "empirical":
        curve = sweep_empirical(p, args.vmin, args.vmax, args.step, args.samples,
                                args.seed, threads=args.threads)
    elif args.mode == "oracle":
        curve = sweep_oracle(p, args.vmin, args.vmax, args.step)
    else:
        curve = single_noise_decomposition(p, args.mode, args.vmin, args.vmax, args.step)
    out = Path(args.out)
    _write(out / "curve.csv", curve.to_csv(), written)
    if args.svg:
        ideal = sweep_ideal(args.scale, args.vmin, args.vmax, args.step)
        svg = emit_svg([("digital", curve), ("ideal", ideal)])
        _write(out / "curve.svg", svg, written)


def cmd_crossbar(args, written):
    cfg = CrossbarHarnessConfig(k=args.k, tw=args.tw, vt=args.vt, tm=args.tm,
                                leak_weight=args.leak, n_windows=args.windows)
    result = crossbar_characterize(cfg, args.seed)
    out = Path(args.out)
    _write(out / "raster.csv", result.raster_csv(), written)
    curve = result.curve
    _write(out / "curve.csv", curve.to_csv(), written)
    if args.svg:
        oracle = sweep_oracle(cfg.params, -cfg.k, cfg.k, 1)
        _write(out / "curve.svg", emit_svg([("crossbar", curve), ("oracle", oracle)]), written)


def cmd_train(args, written):
    ds = _load_dataset(args)
    cfg = TrainConfig(n_hidden=args.hidden, epochs=args.epochs, learning_rate=args.lr,
                      minibatch=args.minibatch, seed=args.seed, weight_init_sigma=args.sigma)
    result = cd1_train(ds.images, cfg) if args.unlabeled else build_labeled_rbm(ds, cfg)
    save_model(result.rbm, args.out)
    written.append(args.out)
    if result.reconstruction_error:
        print(f"final reconstruction error {result.reconstruction_error[-1]:.4f}")


def _classifier_model(args):
    model = load_model(args.model)
    if isinstance(model, Rbm):
        return model_for_sampler(model, args.sampler, args.weight_bits)
    if isinstance(args.sampler, IdealSampler):
        return model
    if model.scale != args.sampler.scale:
        raise ParameterError(
            f"{args.model}: quantized at scale {model.scale}, sampler expects {args.sampler.scale}")
    return model


def cmd_classify(args, written):
    ds = _load_dataset(args)
    q = _classifier_model(args)
    cfg = ClassifyConfig(args.sampler, args.gibbs, args.seed, ds.n_classes)
    result = evaluate(q, ds, cfg)
    _write(Path(args.out), result.predictions_csv(ds.labels), written)
    confusion = Path(args.out).with_suffix(".confusion.csv")
    header = ["true"] + [f"pred_{j}" for j in range(ds.n_classes)]
    rows = [[i, *row] for i, row in enumerate(result.confusion)]
    _write(confusion, _csv(header, rows), written)
    print(f"accuracy {result.accuracy:.4f}")


def cmd_noise_sweep(args, written):
    ds = _load_dataset(args)
    q = _classifier_model(args)
    cfg = ClassifyConfig(args.sampler, args.gibbs, args.seed, ds.n_classes)
    rows = noise_sweep(q, ds, cfg, args.kind, args.factors)
    _write(Path(args.out), _csv(["factor", "accuracy"], rows), written)
    for f, acc in rows:
        print(f"factor {f:g}: accuracy {acc:.4f}")


def _kl_model(spec: str):
    if spec == "canonical":
        text = resources.files("spikegibbs").joinpath("data/canonical32.json").read_text()
        return model_from_dict(json.loads(text))
    model = load_model(spec)
    if not isinstance(model, Rbm):
        raise ParameterError(f"{spec}: kl-eval needs a real-valued model")
    return model


def cmd_kl_eval(args, written):
    model = _kl_model(args.model)
    exact = exact_joint_distribution(model)
    q = model_for_sampler(model, args.sampler, args.weight_bits)
    init = np.zeros(model.n_visible, dtype=np.int64)
    rows = []
    for trial in range(args.trials):
        hist = gibbs_chain(q, init, args.sweeps, args.sampler, seed=args.seed,
                           chain=trial).histogram()
        rows.append((trial, kl_divergence(exact, hist, args.epsilon)))
    _write(Path(args.out), _csv(["trial", "kl"], rows), written)
    for trial, kl in rows:
        print(f"trial {trial}: KL {kl:.6g}")


COMMANDS = {"characterize": cmd_characterize, "crossbar": cmd_crossbar, "train": cmd_train,
            "classify": cmd_classify, "noise-sweep": cmd_noise_sweep, "kl-eval": cmd_kl_eval}


def _replay_argv(manifest_path: str, out: str | None) -> list:
    try:
        manifest = json.loads(Path(manifest_path).read_text())
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParameterError(f"{manifest_path}: unreadable manifest ({exc})") from None
    if out is not None:
        i = argv.index("--out")
        argv[i + 1] = out
    return argv


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return 2
        args = parser.parse_args(argv)
        if args.command == "replay":
            args = parser.parse_args(_replay_argv(args.manifest, args.out))
            if args.command == "replay":
                raise UsageError("a manifest cannot replay another replay")
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return 2
    except ParameterError as exc:
        print(f"spikegibbs: error: {exc}", file=sys.stderr)
        return 1
    written = []
    try:
        COMMANDS[args.command](args, written)
    except (ParameterError, ParseError, ArithmeticRangeError, OSError) as exc:
        print(f"spikegibbs {args.command}: error: {exc}", file=sys.stderr)
        return 1
    _write_manifest(parser, args, written)
    return 0


def main():
    sys.exit(run())
