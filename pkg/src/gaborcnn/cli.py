"""Command-line entry point.

Subcommands: gen-filters, gradcheck, params, train, eval, sweep.
Exit codes: 0 success, 2 configuration error, 3 verification failure,
4 I/O error. BLAS thread count is controlled by the standard
OPENBLAS_NUM_THREADS / OMP_NUM_THREADS environment variables (set them
before launching for bit-reproducible runs).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import dataio, runner
from .checks import run_gradcheck
from .errors import ConfigError, DataError, GaborCNNError
from .gabor import DEFAULT_SIGMA, GaborParams, bank_summary, build_bank, render_bank
from .network import build_network, count_params, evaluate, load_checkpoint

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_IO = 4


def cmd_gen_filters(args) -> int:
    params = GaborParams(args.u, args.v, args.kernel, args.sigma)
    bank = build_bank(params)
    paths = render_bank(bank, args.out)
    for row in bank_summary(bank):
        print(
            f"kernel u={row['u']} v={row['v']}: min={row['min']:+.6e} "
            f"max={row['max']:+.6e} energy={row['energy']:.6e}"
        )
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = runner.load_config(args.config)
    report = run_gradcheck(
        cfg.arch["orientations"],
        cfg.arch["kernel"],
        num_scales=cfg.arch["scales"],
        seeds=range(args.seed, args.seed + args.repeats),
    )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    print(
        f"gradcheck max relative error {report['max_rel_err']:.3e} "
        f"(tolerance {report['tolerance']:.0e}): "
        + ("PASS" if report["passed"] else "FAIL")
    )
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_params(args) -> int:
    cfg = runner.load_config(args.config)
    net = build_network(cfg.arch, seed=cfg.seed)
    counts = count_params(net)
    for row in counts["layers"]:
        print(
            f"layer {row['layer']:2d} {row['kind']:16s} "
            f"persisted={row['persisted']:8d} effective={row['effective']:8d}"
        )
    print(
        f"conv trunk: persisted={counts['conv_persisted']} "
        f"effective={counts['conv_effective']}"
    )
    print(
        f"total:      persisted={counts['total_persisted']} "
        f"effective={counts['total_effective']}"
    )
    if cfg.arch["type"] == "gcn":
        u = cfg.arch["orientations"]
        if counts["conv_effective"] != counts["conv_persisted"] * u:
            print(f"compression check FAILED: effective != persisted * {u}")
            return EXIT_VERIFY
        print(f"compression check: effective = persisted * {u} (U={u})")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"schema": "params-v1", **counts}, fh, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = runner.load_config(args.config)
    summary = runner.train_run(cfg, out_dir=args.out, seed=args.seed)
    print(
        f"trained {summary['epochs']} epochs, "
        f"final test error {summary['final_test_error']:.4f}"
    )
    print(f"artifacts in {args.out}")
    return EXIT_OK


def _load_eval_dataset(spec: str, n: int, seed: int):
    if spec.startswith("idx:"):
        try:
            images, labels = spec[4:].split(",")
        except ValueError:
            raise ConfigError(
                f"idx dataset spec must be idx:IMAGES,LABELS, got {spec!r}"
            )
        return dataio.load_idx(images, labels)
    if spec.startswith("builtin:"):
        which = spec.split(":", 1)[1]
        train, test = dataio.load_builtin_digits(n, n, seed=seed)
        base = {"train": train, "test": test, "test-rot": test}.get(which)
        if base is None:
            raise ConfigError(f"unknown builtin dataset {which!r}")
        if which == "test-rot":
            base = dataio.make_rot(base, seed=seed + 1)
        return base
    raise ConfigError(f"dataset spec must start with idx: or builtin:, got {spec!r}")


def cmd_eval(args) -> int:
    net, _meta = load_checkpoint(args.checkpoint)
    dataset = _load_eval_dataset(args.dataset, args.n, args.seed)
    error = evaluate(net, dataset.images, dataset.labels)
    print(f"error rate on {dataset.provenance} ({len(dataset)} samples): {error:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = runner.load_config(args.config)
    rows = runner.sweep(cfg, args.axis, out_path=args.out, repeats=args.repeats)
    for row in rows:
        print(
            f"{row['axis']}={row['value']:<3} kernel={row['kernel']} "
            f"mean_error={row['mean_error']:.4f} ({row['errors']})"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaborcnn", description="Gabor-modulated convolutional networks"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-filters", help="export a Gabor filter bank")
    p.add_argument("--u", type=int, required=True, help="orientations")
    p.add_argument("--v", type=int, required=True, help="scales")
    p.add_argument("--kernel", type=int, required=True, help="odd kernel size")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_filters)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="persisted vs effective parameter counts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True,
                   help="idx:IMAGES,LABELS or builtin:{train,test,test-rot}")
    p.add_argument("--n", type=int, default=1000, help="builtin dataset size")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="orientation / scale sweep tables")
    p.add_argument("--axis", choices=["scale", "orientation"], required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GaborCNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
