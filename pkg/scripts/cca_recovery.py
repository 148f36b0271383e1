"""Sampling error of cca_fit against population canonical correlations.

For each latent scale setting, draws many linear-Gaussian datasets and reports
the distribution of the max abs error, and how often five consecutive seeds
all land within a tolerance.

    python scripts/cca_recovery.py --datasets 200
"""
import argparse

import numpy as np

from ccal import cca, data


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--datasets", type=int, default=200)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--per-dim", type=int, default=100)
    p.add_argument("--tol", type=float, default=0.03)
    p.add_argument("--scales", nargs="+", default=["1,1", "2,2", "3,2"])
    args = p.parse_args()

    print("scales\tpopulation\tmedian_err\tp95_err\tP(err<tol)\tP(5 seeds<tol)")
    for s in args.scales:
        scales = tuple(float(v) for v in s.split(","))
        errs, pop = [], None
        for seed in range(args.datasets):
            spec = data.SynthSpec(len(scales), args.dim, args.dim, args.per_dim * args.dim, seed=seed,
                                  latent_scales=scales)
            ds, pop = data.generate(spec)
            errs.append(np.abs(cca.cca_fit(ds.X, ds.Y, 1e-6, len(scales)).corr - pop).max())
        errs = np.array(errs)
        p1 = float(np.mean(errs < args.tol))
        print(f"{s}\t{','.join(f'{c:.2f}' for c in pop)}\t{np.median(errs):.4f}\t"
              f"{np.quantile(errs, 0.95):.4f}\t{p1:.3f}\t{p1 ** 5:.3f}")


if __name__ == "__main__":
    main()
