"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import compare, config, data, gradcheck, net, retrieval, train
from .errors import CCALError, ContractError, PoisonedGradientError

log = logging.getLogger("ccal")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _add_training_flags(p):
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--k", type=int)
    p.add_argument("--hidden", help="comma-separated hidden widths, e.g. 64 or 128,128")
    p.add_argument("--margin", type=float)
    p.add_argument("--reg", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--patience-after", dest="patience_after", type=int)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--symmetric", choices=("on", "off"))


_TRAIN_KEYS = ("lr", "batch_size", "epochs", "patience", "patience_after", "lr_divisor", "reductions",
               "margin", "symmetric", "reg", "weight_decay", "k", "hidden", "seed", "val_fraction")


def _resolve(args, keys):
    file_values = config.load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {k: getattr(args, k, None) for k in keys}
    return config.resolve(file_values, overrides, keys)


def _train_config(c):
    return train.TrainConfig(lr=c["lr"], batch_size=c["batch_size"], max_epochs=c["epochs"],
                             patience=c["patience"], patience_after=c["patience_after"],
                             lr_divisor=c["lr_divisor"], reductions=c["reductions"], margin=c["margin"],
                             symmetric=c["symmetric"], reg=c["reg"], weight_decay=c["weight_decay"],
                             seed=c["seed"])


def _holdout(ds, fraction, seed):
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_hold = int(round(fraction * len(ds)))
    if n_hold < 1 or n_hold >= len(ds):
        raise ContractError(f"validation fraction {fraction} leaves an empty part of {len(ds)} rows")
    return ds.take(perm[n_hold:], ds.provenance + "|train"), ds.take(perm[:n_hold], ds.provenance + "|val")


def _load_dataset(path):
    if str(path).lower().endswith(".csv"):
        return data.load_csv(path)
    return data.load(path)


# ---------------------------------------------------------------------------

def cmd_gen_data(args):
    scales = None
    if args.latent_scales:
        scales = tuple(float(v) for v in args.latent_scales.split(","))
    try:
        spec = data.SynthSpec(args.latent, args.dx, args.dy, args.samples, args.mixing,
                              args.noise_x, args.noise_y, args.seed, scales)
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    ds, pop = data.generate(spec)
    data.save(ds, args.out)
    summary = f"wrote {args.out}: m={len(ds)} d_x={ds.dx} d_y={ds.dy} mixing={spec.mixing}"
    if pop is not None:
        summary += " population_corr=" + ",".join(f"{c:.6f}" for c in pop)
    print(summary)
    return EXIT_OK


def cmd_train(args):
    try:
        c = _resolve(args, _TRAIN_KEYS)
        cfg = _train_config(c)
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    head = compare.MODEL_HEADS[args.model]
    if head != "learned-rank" and c["batch_size"] < c["k"] + 1:
        raise UsageError(f"--batch-size ({c['batch_size']}) must be at least k+1 = {c['k'] + 1} for --model {args.model}")
    if not os.path.exists(args.data):
        raise UsageError(f"dataset {args.data} does not exist")

    ds = _load_dataset(args.data)
    if args.val_data:
        tr, va = ds, _load_dataset(args.val_data)
    else:
        tr, va = _holdout(ds, c["val_fraction"], c["seed"])
    spec_f = net.TowerSpec((tr.dx,) + c["hidden"] + (c["k"],))
    spec_g = net.TowerSpec((tr.dy,) + c["hidden"] + (c["k"],))
    model = net.DualNet.init(spec_f, spec_g, head, c["seed"])
    print("epoch loss val_mrr lr events")
    try:
        model, tlog = train.train(model, tr, va, cfg, on_epoch=lambda r: print(r.line(), flush=True))
    except PoisonedGradientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    net.save_model(model, args.out)
    print(f"# best epoch {tlog.best_epoch} val_mrr {tlog.best_val_mrr:.4f} ({tlog.stop_reason}); "
          f"model written to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    for path in (args.model, args.data) + ((args.refit_data,) if args.refit_data else ()):
        if not os.path.exists(path):
            raise UsageError(f"{path} does not exist")
    model = net.load_model(args.model)
    test = _load_dataset(args.data)
    if args.refit_data:
        train.refit(model, _load_dataset(args.refit_data))
    elif model.uses_cca() and model.cca_state is None:
        print(f"error: model head {model.head!r} has no fitted CCA statistics; "
              "pass --refit-data with the training set", file=sys.stderr)
        return EXIT_RUNTIME
    directions = retrieval.DIRECTIONS if args.direction == "both" else (args.direction,)
    print("model\tdirection\t" + "\t".join(retrieval.REPORT_FIELDS))
    for d in directions:
        print(retrieval.evaluate(model, test, d).line(model.head))
    return EXIT_OK


def cmd_gradcheck(args):
    targets = args.target or list(gradcheck.TARGETS)
    ok = True
    print("target\tmax_rel_err\tstatus")
    for t in targets:
        for seed in range(args.seed, args.seed + args.seeds):
            rep = gradcheck.grad_check(t, m=args.m, d=args.d, k=args.k, r=args.reg, seed=seed,
                                       h=args.h, tol=args.tol)
            print(rep.line(), flush=True)
            ok &= rep.passed
    return EXIT_OK if ok else EXIT_RUNTIME


_COMPARE_KEYS = _TRAIN_KEYS + ("seeds", "train_fraction", "test_fraction")


def cmd_compare(args):
    try:
        c = _resolve(args, _COMPARE_KEYS)
        tcfg = _train_config(c)
        if c["batch_size"] < c["k"] + 1:
            raise ContractError(f"batch_size must be at least k+1 = {c['k'] + 1}")
        if c["val_fraction"] + c["test_fraction"] >= 1:
            raise ContractError("val_fraction + test_fraction must be below 1")
        models = tuple(args.models.split(","))
        unknown = set(models) - set(compare.MODEL_HEADS)
        if unknown:
            raise ContractError(f"unknown models {sorted(unknown)}")
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    if not os.path.exists(args.data):
        raise UsageError(f"dataset {args.data} does not exist")

    ds = _load_dataset(args.data)
    fr = (1.0 - c["val_fraction"] - c["test_fraction"], c["val_fraction"], c["test_fraction"])
    tr, va, te = data.split(ds, fr, c["seed"])
    cfg = compare.CompareConfig(tcfg, c["hidden"], c["k"], tuple(range(c["seed"], c["seed"] + c["seeds"])),
                                models, c["train_fraction"], c["seed"])
    result = compare.run_compare(tr, va, te, cfg)
    text = compare.format_report(result, title=os.path.basename(args.data))
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="ccal", description="CCA projection layer toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic paired dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--dx", type=_positive_int, required=True)
    g.add_argument("--dy", type=_positive_int, required=True)
    g.add_argument("--latent", type=_positive_int, required=True)
    g.add_argument("--samples", type=_positive_int, required=True)
    g.add_argument("--mixing", choices=("linear", "tanh"), default="linear")
    g.add_argument("--noise-x", dest="noise_x", type=_nonneg_float, default=1.0)
    g.add_argument("--noise-y", dest="noise_y", type=_nonneg_float, default=1.0)
    g.add_argument("--latent-scales", dest="latent_scales",
                   help="comma-separated standard deviations of the latent coordinates")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--model", choices=tuple(compare.MODEL_HEADS), required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--val-data", dest="val_data")
    t.add_argument("--val-fraction", dest="val_fraction", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    _add_training_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="retrieval metrics of a trained model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--direction", choices=("x2y", "y2x", "both"), default="both")
    e.add_argument("--refit-data", dest="refit_data")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    c.add_argument("--target", action="append", choices=gradcheck.TARGETS)
    c.add_argument("--m", type=_positive_int, default=64)
    c.add_argument("--d", type=_positive_int, default=8)
    c.add_argument("--k", type=_positive_int, default=4)
    c.add_argument("--reg", type=_nonneg_float, default=1e-3)
    c.add_argument("--h", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--seeds", type=_positive_int, default=1)
    c.set_defaults(func=cmd_gradcheck)

    m = sub.add_parser("compare", help="train dcca, learned and ccal over several seeds")
    m.add_argument("--data", required=True)
    m.add_argument("--models", default="dcca,learned,ccal")
    m.add_argument("--seeds", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--train-fraction", dest="train_fraction", type=float)
    m.add_argument("--val-fraction", dest="val_fraction", type=float)
    m.add_argument("--test-fraction", dest="test_fraction", type=float)
    m.add_argument("--out")
    _add_training_flags(m)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "symmetric", None) is not None:
        args.symmetric = args.symmetric == "on"
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ccal {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CCALError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
