"""Command-line surface: train, prune, verify, bench, export-lp, gen-data."""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .archs import ArchError, format_arch, parse_arch
from .bnb import SolverConfig
from .data import gen_synthetic, load_mnist
from .encode import encode_adversarial, export_lp
from .nn import TrainConfig, accuracy, init_mlp, load_model, save_model, sgd_train
from .prune import grid_log_csv, prune_pipeline
from .spr import SprConfig
from .verify import InvalidInstanceError, build_instance, cross_check, verify

EXIT_ROBUST = 0
EXIT_COUNTEREXAMPLE = 1
EXIT_TIMEOUT = 2
EXIT_MISCLASSIFIED = 3

BENCH_HEADER = ["arch", "lambda_alpha", "accuracy", "time_s", "nodes", "pruned_arch", "found"]


def _write_manifest(out_path, args):
    manifest = {
        "argv": sys.argv[1:],
        "flags": {k: v for k, v in vars(args).items() if k != "func"},
        "version": __version__,
        "numpy_version": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=1, default=str) + "\n")


def _add_dataset_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mnist", metavar="DIR", help="directory with MNIST IDX files")
    g.add_argument(
        "--synthetic",
        metavar="SPEC",
        default="dims=6,classes=3,samples=600,margin=6.0",
        help="synthetic blob spec, e.g. dims=6,classes=3,samples=600,margin=6.0",
    )
    p.add_argument("--data-seed", type=int, default=0, help="seed for synthetic data")


def _parse_synth_spec(spec, seed):
    fields = {"dims": 6, "classes": 3, "samples": 600, "margin": 6.0}
    for part in spec.split(","):
        key, _, val = part.partition("=")
        key = key.strip()
        if key not in fields:
            raise SystemExit(f"unknown synthetic field {key!r}")
        fields[key] = float(val) if key == "margin" else int(val)
    return gen_synthetic(fields["dims"], fields["classes"], fields["samples"], fields["margin"], seed)


def _load_data(args, split="train"):
    if args.mnist:
        return load_mnist(args.mnist, split=split)
    return _parse_synth_spec(args.synthetic, args.data_seed)


def cmd_train(args):
    try:
        widths = parse_arch(args.arch)
    except ArchError as exc:
        raise SystemExit(str(exc))
    data = _load_data(args)
    reg = None
    if args.spr_lambda is not None:
        reg = SprConfig(args.spr_lambda, args.spr_alpha, args.spr_m)
    cfg = TrainConfig(args.epochs, args.batch, args.lr, args.seed, regularizer=reg)
    net = init_mlp(data.inputs.shape[1], widths, data.num_classes, args.seed)
    net, history = sgd_train(net, data, cfg)
    meta = {
        "arch": args.arch,
        "epochs": args.epochs,
        "batch_size": args.batch,
        "learning_rate": args.lr,
        "seed": args.seed,
        "final_accuracy": history[-1]["accuracy"] if history else None,
    }
    if reg is not None:
        meta["spr"] = {"lambda": reg.lam, "alpha": reg.alpha, "m": reg.m}
    save_model(net, args.out, training_meta=meta)
    Path(str(args.out) + ".log.json").write_text(json.dumps(history, indent=1) + "\n")
    _write_manifest(args.out, args)
    print(f"trained {format_arch(widths)} -> {args.out} "
          f"(final accuracy {meta['final_accuracy']:.4f})")
    return 0


def cmd_prune(args):
    widths = parse_arch(args.arch)
    data = _load_data(args)
    lambdas = [float(v) for v in args.grid_lambdas.split(",")]
    alphas = [float(v) for v in args.grid_alphas.split(",")]
    grid = [SprConfig(l, a, args.spr_m) for l in lambdas for a in alphas]
    cfg = TrainConfig(args.epochs, args.batch, args.lr, args.seed)
    net, report, log = prune_pipeline(
        widths, data, grid, cfg,
        tau=args.tau, fine_tune_epochs=args.fine_tune_epochs, acc_floor=args.acc_floor,
    )
    save_model(net, args.out, training_meta={
        "arch": args.arch, "pruned_arch": report.pruned_arch, "tau": args.tau,
        "seed": args.seed, "accuracy": report.post_accuracy,
    })
    Path(str(args.out) + ".grid.csv").write_text(grid_log_csv(log))
    Path(str(args.out) + ".report.json").write_text(json.dumps({
        "kept": report.kept, "removed": report.removed, "pruned_arch": report.pruned_arch,
        "threshold": report.threshold, "post_accuracy": report.post_accuracy,
        "log": log,
    }, indent=1) + "\n")
    _write_manifest(args.out, args)
    print(f"pruned {args.arch} -> {report.pruned_arch} "
          f"(accuracy {report.post_accuracy:.4f}) -> {args.out}")
    return 0


def _pick_instance(mlp, args):
    if args.input is not None:
        x = np.array(json.loads(Path(args.input).read_text()), dtype=float)
        from .nn import forward

        logits, _ = forward(mlp, x)
        label = args.label if args.label is not None else int(np.argmax(logits))
        return x, label
    data = _load_data(args, split="test" if args.mnist else "train")
    idx = args.index
    return data.inputs[idx], int(data.labels[idx])


def _resolve_units_clamp(args):
    """Image data defaults to raw-pixel deltas on a [0,1]-clamped box."""
    units = args.units if args.units is not None else ("raw-pixel" if args.mnist else "scaled")
    clamp = args.clamp if args.clamp is not None else bool(args.mnist)
    return units, clamp


def cmd_verify(args):
    mlp, _ = load_model(args.model)
    x, label = _pick_instance(mlp, args)
    units, clamp = _resolve_units_clamp(args)
    try:
        inst = build_instance(mlp, x, label, args.delta, units=units, clamp=clamp)
    except InvalidInstanceError as exc:
        print(f"invalid instance: {exc}", file=sys.stderr)
        return EXIT_MISCLASSIFIED
    cfg = SolverConfig(time_limit_seconds=args.time_limit)
    verdict = verify(inst, cfg, bounds_mode="obbt" if args.obbt else "interval")
    doc = verdict.to_json(config={
        "delta": args.delta, "units": units, "clamp": clamp,
        "time_limit": args.time_limit, "obbt": args.obbt, "k": inst.k, "h": inst.h,
    })
    if args.out:
        Path(args.out).write_text(doc + "\n")
        _write_manifest(args.out, args)
    print(doc)
    return {"robust": EXIT_ROBUST, "counterexample": EXIT_COUNTEREXAMPLE,
            "timeout": EXIT_TIMEOUT}[verdict.outcome]


def cmd_bench(args):
    rows = []
    extras = {"cross_checks": [], "errors": []}
    deltas = [float(v) for v in args.deltas.split(",")]
    lambdas = [float(v) for v in args.grid_lambdas.split(",")]
    alphas = [float(v) for v in args.grid_alphas.split(",")]
    epochs = 10 if args.desk_scale else args.epochs
    time_limit = 60.0 if args.desk_scale else args.time_limit
    for arch in args.archs.split(","):
        widths = parse_arch(arch)
        for rep in range(args.reps):
            seed = args.seed + rep
            try:
                rows.extend(_bench_one(args, arch, widths, seed, deltas, lambdas, alphas,
                                       epochs, time_limit, extras))
            except Exception as exc:  # record and continue per spec
                extras["errors"].append({"arch": arch, "rep": rep, "error": str(exc)})
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(BENCH_HEADER)
        w.writerows(rows)
    summary = {
        "cross_check_transfer": extras["cross_checks"],
        "errors": extras["errors"],
    }
    Path(str(args.out) + ".summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    _write_manifest(args.out, args)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _bench_one(args, arch, widths, seed, deltas, lambdas, alphas, epochs, time_limit, extras):
    data_args = argparse.Namespace(mnist=args.mnist, synthetic=args.synthetic,
                                   data_seed=args.data_seed)
    data = _load_data(data_args)
    cfg = TrainConfig(epochs, args.batch, args.lr, seed)
    grid = [SprConfig(l, a, args.spr_m) for l in lambdas for a in alphas]
    pruned, report, log = prune_pipeline(widths, data, grid, cfg, tau=args.tau,
                                         fine_tune_epochs=args.fine_tune_epochs)
    baseline = init_mlp(data.inputs.shape[1], widths, data.num_classes, seed)
    baseline, _ = sgd_train(baseline, data, cfg)
    selected = next(r for r in log if r.get("kind") == "selected")
    grid_best = next(
        (f"{r['lambda']}-{r['alpha']}" for r in log
         if r.get("kind") == "grid" and r.get("pruned_arch") == report.pruned_arch),
        "",
    )
    rows = []
    for delta in deltas:
        idx = _first_correct(baseline, data)
        for net, tag, pruned_arch in ((baseline, "", ""), (pruned, grid_best, report.pruned_arch)):
            try:
                inst = build_instance(net, data.inputs[idx], int(data.labels[idx]), delta,
                                      units="raw-pixel" if args.mnist else "scaled",
                                      clamp=bool(args.mnist))
            except InvalidInstanceError:
                extras["errors"].append({"arch": arch, "seed": seed, "delta": delta,
                                         "error": "clean input misclassified"})
                continue
            verdict = verify(inst, SolverConfig(time_limit_seconds=time_limit),
                             bounds_mode="obbt" if args.obbt else "interval")
            found = {"counterexample": "YES", "timeout": "NO", "robust": "-"}[verdict.outcome]
            rows.append([arch, tag, f"{accuracy(net, data):.4f}",
                         f"{verdict.report.wall_seconds:.3f}", verdict.report.nodes,
                         pruned_arch, found])
            if net is pruned and verdict.outcome == "counterexample":
                extras["cross_checks"].append({
                    "arch": arch, "seed": seed, "delta": delta,
                    "transfers": cross_check(verdict.counterexample_input, baseline,
                                             data.inputs[idx]),
                })
    return rows


def _first_correct(mlp, data):
    from .nn import forward_batch

    logits, _ = forward_batch(mlp, data.inputs)
    correct = np.flatnonzero(logits.argmax(axis=1) == data.labels)
    if correct.size == 0:
        raise RuntimeError("no correctly classified sample available")
    return int(correct[0])


def cmd_export_lp(args):
    mlp, _ = load_model(args.model)
    x, label = _pick_instance(mlp, args)
    units, clamp = _resolve_units_clamp(args)
    inst = build_instance(mlp, x, label, args.delta, units=units, clamp=clamp)
    model = encode_adversarial(mlp, inst.x, inst.effective_delta, inst.k, inst.h,
                               bounds_mode="obbt" if args.obbt else "interval",
                               clamp=inst.clamp)
    export_lp(model, args.out)
    _write_manifest(args.out, args)
    print(f"wrote {args.out} ({model.num_vars} vars, {len(model.constraints)} rows, "
          f"{model.num_binaries} binaries)")
    return 0


def cmd_gen_data(args):
    data = _parse_synth_spec(args.synthetic, args.data_seed)
    np.savez(args.out, inputs=data.inputs, labels=data.labels,
             num_classes=data.num_classes)
    _write_manifest(args.out, args)
    print(f"wrote {len(data)} samples to {args.out}")
    return 0


def _add_train_flags(p, epochs=50):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)


def _add_verify_flags(p):
    p.add_argument("--delta", type=float, default=5.0)
    p.add_argument("--units", choices=["scaled", "raw-pixel"],
                   help="delta units; default raw-pixel for MNIST, scaled otherwise")
    p.add_argument("--clamp", action=argparse.BooleanOptionalAction,
                   help="intersect the box with [0,1]; default on for MNIST, off otherwise")
    p.add_argument("--obbt", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--index", type=int, default=0, help="dataset sample index")
    p.add_argument("--input", help="JSON file with a raw input vector")
    p.add_argument("--label", type=int, help="true class for --input vectors")


def build_parser():
    parser = argparse.ArgumentParser(prog="prunemip",
                                     description="Train, prune, and verify small ReLU networks "
                                                 "via MILP branch-and-bound.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network, optionally with the SPR penalty")
    p.add_argument("--arch", required=True)
    p.add_argument("--out", required=True)
    _add_dataset_args(p)
    _add_train_flags(p)
    p.add_argument("--spr-lambda", type=float)
    p.add_argument("--spr-alpha", type=float, default=0.5)
    p.add_argument("--spr-m", type=float, default=1.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("prune", help="grid-search SPR training, prune, fine-tune")
    p.add_argument("--arch", required=True)
    p.add_argument("--out", required=True)
    _add_dataset_args(p)
    _add_train_flags(p)
    p.add_argument("--grid-lambdas", default="0.1,0.5,1.0")
    p.add_argument("--grid-alphas", default="0.1,0.5,0.9")
    p.add_argument("--spr-m", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1e-3)
    p.add_argument("--fine-tune-epochs", type=int, default=10)
    p.add_argument("--acc-floor", type=float, default=0.005)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("verify", help="verify one input against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    _add_dataset_args(p)
    _add_verify_flags(p)
    p.add_argument("--time-limit", type=float, default=1800.0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="train baseline + pruned nets and verify both")
    p.add_argument("--archs", required=True, help="comma-separated arch strings")
    p.add_argument("--out", required=True)
    _add_dataset_args(p)
    _add_train_flags(p, epochs=50)
    p.add_argument("--deltas", default="5.0")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--grid-lambdas", default="0.1,0.5,1.0")
    p.add_argument("--grid-alphas", default="0.1,0.5,0.9")
    p.add_argument("--spr-m", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1e-3)
    p.add_argument("--fine-tune-epochs", type=int, default=10)
    p.add_argument("--time-limit", type=float, default=1800.0)
    p.add_argument("--obbt", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--desk-scale", action="store_true",
                   help="CI preset: 10 epochs, 60 s solver limit")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-lp", help="write the adversarial MILP as an LP file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_dataset_args(p)
    _add_verify_flags(p)
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as .npz")
    p.add_argument("--out", required=True)
    p.add_argument("--synthetic", default="dims=6,classes=3,samples=600,margin=6.0")
    p.add_argument("--data-seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
