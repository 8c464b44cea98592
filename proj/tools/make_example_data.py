"""Writes a synthetic data set shaped like the traffic-accident application.

Covariates follow the sample means and spreads of the original variables;
responses are drawn from a zero-inflated beta model with the final-model
structure (lnpop, prop2029, hdei in every predictor).
"""
import argparse

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--seed", type=int, default=20101)
    ap.add_argument("--out", default="configs/application_synthetic.csv")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    n = args.n
    lnpop = np.clip(rng.normal(9.40, 1.35, n), 7.39, 16.16)
    propurb = np.clip(rng.normal(0.717, 0.204, n), 0.20, 1.0)
    propmen = np.clip(rng.normal(0.506, 0.0114, n), 0.4766, 0.537)
    prop2029 = np.clip(rng.normal(0.166, 0.0136, n), 0.132, 0.204)
    hdei = np.clip(rng.normal(0.824, 0.0587, n), 0.606, 0.933)

    eta_a = 27.27 - 1.17 * lnpop - 48.06 * prop2029 - 11.34 * hdei
    eta_m = -4.72 - 0.53 * lnpop + 27.68 * prop2029 + 3.10 * hdei
    eta_p = 9.46 + 0.47 * lnpop - 28.34 * prop2029 - 6.70 * hdei
    alpha = 1 / (1 + np.exp(-eta_a))
    mu = 1 / (1 + np.exp(-eta_m))
    phi = np.exp(eta_p)
    y = rng.beta(mu * phi, (1 - mu) * phi)
    y = np.clip(y, 1e-12, 1 - 1e-12)
    y[rng.uniform(size=n) < alpha] = 0.0

    with open(args.out, "w") as f:
        f.write("y,lnpop,propurb,propmen,prop2029,hdei\n")
        for row in zip(y, lnpop, propurb, propmen, prop2029, hdei):
            f.write(",".join(f"{v:.10g}" for v in row) + "\n")


if __name__ == "__main__":
    main()
