"""F_n and F_n/n for the XY chain: quadratic growth at theta0 = 0 and the
approach to the per-atom limit in the mixing regime."""

import argparse

import numpy as np

from qmarkov import linalg
from qmarkov.chain import xy_benchmark, xy_model
from qmarkov.fisher import quantum_fisher
from qmarkov.overlap import qfi_curve


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n-list", default="1,2,5,10,20,50,100,200,500,1000,2000")
    args = p.parse_args()
    ns = [int(s) for s in args.n_list.split(",")]

    flat = xy_model(2**-0.5, 2**-0.5, 0.0, 0.0)
    small = [n for n in ns if n <= 12] or [1, 2, 3]
    c0 = qfi_curve(flat, linalg.ket(0, 2), small)
    print("theta0 = 0, balanced input, system in |0>")
    print(f"{'n':>6} {'F_n':>14} {'n(n+1)':>10}")
    for n, f in zip(c0.n, c0.F_n):
        print(f"{n:>6} {f:>14.8f} {n * (n + 1):>10}")

    m = xy_benchmark()
    f_inf = quantum_fisher(m).F
    c = qfi_curve(m, None, ns)
    print(f"\nbenchmark, stationary start; limit F = {f_inf:.8f}")
    print(f"{'n':>6} {'F_n/n':>14} {'rel. gap':>10}")
    for n, r in zip(c.n, c.per_atom):
        print(f"{n:>6} {r:>14.8f} {abs(r - f_inf) / f_inf:>10.2e}")


if __name__ == "__main__":
    main()
