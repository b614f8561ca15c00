"""Monte Carlo check of the asymptotic normality of the rescaled time average
and of the moment estimator's mean square error."""

import argparse

from qmarkov import linalg
from qmarkov.chain import xy_benchmark
from qmarkov.trajectory import TrajectoryConfig, clt_experiment, mse_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--trajectories", type=int, default=2000)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--u", type=float, nargs="+", default=[0.0, 1.0])
    args = p.parse_args()

    m = xy_benchmark()
    for u in args.u:
        cfg = TrajectoryConfig(m, linalg.SIGMA_X, args.n, args.trajectories, args.seed, u)
        r = clt_experiment(cfg)
        print(
            f"u={u:g}: mean {r.mean:.4f} (target {r.mu * u:.4f}, se {r.mean_se:.4f}), "
            f"var {r.variance:.4f} (target {r.sigma2:.4f}), KS p={r.ks_pvalue:.3f}, passed={r.passed}"
        )
        mse = mse_experiment(cfg, (m.theta0 - 0.3, m.theta0 + 0.3))
        print(f"      n*MSE {mse.scaled_mse:.4f} +- {mse.scaled_mse_se:.4f} vs {mse.target:.4f}")


if __name__ == "__main__":
    main()
