"""Overlaps of locally perturbed output states against the coherent-state
limit, and the non-ergodic u/n regime."""

import argparse

import numpy as np

from qmarkov import linalg
from qmarkov.chain import xy_benchmark, xy_model
from qmarkov.overlap import lan_check, nonergodic_reduced_dynamics, nonergodic_scaled_overlap

PAIRS = [(1.0, 0.0), (1.0, -1.0), (2.0, 1.0)]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n-list", default="100,300,1000,3000,10000,30000")
    args = p.parse_args()
    ns = [int(s) for s in args.n_list.split(",")]

    m = xy_benchmark()
    print(f"{'n':>7}" + "".join(f"{str(uv):>16}" for uv in PAIRS) + "   (relative modulus error)")
    tables = [lan_check(m, None, u, v, ns) for u, v in PAIRS]
    for i, n in enumerate(ns):
        print(f"{n:>7}" + "".join(f"{t.modulus_error[i]:>16.3e}" for t in tables))
    # the error is O(n^-1/2); sqrt(n) * err should settle
    print(f"{'C':>7}" + "".join(f"{t.modulus_error[-1] * np.sqrt(ns[-1]):>16.4f}" for t in tables))

    flat = xy_model(2**-0.5, 2**-0.5, 0.0, 0.0)
    ket0 = linalg.ket(0, 2)
    ov = nonergodic_scaled_overlap(flat, ket0, 1.0, -1.0, ns)
    rd = nonergodic_reduced_dynamics(flat, ket0, 1.5, ns)
    print(f"\n{'n':>7} {'overlap err':>12} {'reduced err':>12}")
    for n, e1, e2 in zip(ns, ov.error, rd.error):
        print(f"{n:>7} {e1:>12.3e} {e2:>12.3e}")


if __name__ == "__main__":
    main()
