"""Finite-difference check of every analytic gradient over several seeds.

    python scripts/gradient_suite.py --seeds 5
"""
import argparse
import sys
import time

from ccal import gradcheck


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--reg", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-4)
    args = p.parse_args()

    t0, ok = time.perf_counter(), True
    print("target\tmax_rel_err\tstatus")
    for target in gradcheck.TARGETS:
        for seed in range(args.seeds):
            rep = gradcheck.grad_check(target, args.m, args.d, args.k, args.reg, seed, tol=args.tol)
            print(rep.line(), flush=True)
            ok &= rep.passed
    print(f"# {time.perf_counter() - t0:.1f}s")
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
