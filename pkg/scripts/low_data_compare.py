"""Low-data comparison of DCCA, Learned-rank and CCAL-rank on tanh synthetic data.

Trains every head at each training fraction over several seeds and writes one
compare report per fraction. Defaults match the acceptance experiment:

    python scripts/low_data_compare.py --out-dir runs/low_data
"""
import argparse
import logging
import os
import time

from ccal import compare, data, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", default="runs/low_data")
    p.add_argument("--fractions", default="0.1,1.0")
    p.add_argument("--models", default="dcca,learned,ccal")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--latent", type=int, default=8)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--latent-scale", type=float, default=3.0)
    p.add_argument("--n-train", type=int, default=20_000)
    p.add_argument("--n-eval", type=int, default=1_000)
    p.add_argument("--hidden", default="128")
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--reg", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--data-seed", type=int, default=2024)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    spec = data.SynthSpec(args.latent, args.dim, args.dim, args.n_train + 2 * args.n_eval, "tanh",
                          args.noise, args.noise, args.data_seed, (args.latent_scale,) * args.latent)
    ds, _ = data.generate(spec)
    m = len(ds)
    tr, va, te = data.split(ds, (args.n_train / m, args.n_eval / m, args.n_eval / m), 0)
    tcfg = train.TrainConfig(lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs, patience=10,
                             patience_after=5, margin=0.5, reg=args.reg, weight_decay=1e-4)
    hidden = tuple(int(h) for h in args.hidden.split(",") if h)
    os.makedirs(args.out_dir, exist_ok=True)
    for frac in (float(f) for f in args.fractions.split(",")):
        t0 = time.perf_counter()
        cfg = compare.CompareConfig(tcfg, hidden, args.k, tuple(range(args.seeds)),
                                    tuple(args.models.split(",")), frac, 0)
        text = compare.format_report(compare.run_compare(tr, va, te, cfg), title=f"tanh synthetic, fraction {frac:g}")
        path = os.path.join(args.out_dir, f"compare_frac{frac:g}.txt")
        with open(path, "w") as fh:
            fh.write(text)
        print(text)
        print(f"# wrote {path} in {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
