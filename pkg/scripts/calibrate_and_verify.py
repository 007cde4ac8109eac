"""Calibrate stopping thresholds on a simulated Phase I, then close the loop.

Simulates an EWOC Phase I under a known truth, calibrates (b, b_tilde, c)
by parametric bootstrap at the requested error rates, and verifies the
result with an independent bootstrap: attained size at the null boundary
p0 and attained power at the implied alternative p1.
"""

import argparse
import json
import sys

import numpy as np

from phase12.calibrate import (
    CalibrationSpec,
    bootstrap_reject_prob,
    calibrate_thresholds,
)
from phase12.models import (
    EfficacyParams,
    ToxicityParams,
    eff_prob,
    logistic_from_endpoints,
    tox_prob,
)
from phase12.phase1 import Phase1Config, run_phase1
from phase12.seqtest import GroupSchedule


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--beta", type=float, default=0.2)
    ap.add_argument("--p0", type=float, default=0.1)
    ap.add_argument("--m", type=int, default=24)
    ap.add_argument("--groups", type=int, nargs="+", default=[10, 10, 10, 10, 3])
    ap.add_argument("--n-boot", type=int, default=10_000)
    ap.add_argument("--n-verify", type=int, default=4_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--phase1-seed", type=int, default=2026)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args(argv)

    theta = ToxicityParams(-4.1115, 0.0136734)
    psi = EfficacyParams(*logistic_from_endpoints(250.0, 0.5, 425.0, 0.9))

    def draw(x, rng):
        u_y = rng.random()
        u_z = rng.random()
        return int(u_y < tox_prob(x, theta)), int(u_z < eff_prob(x, psi))

    ph_cfg = Phase1Config(design="ewoc", m=args.m, q=1 / 3, x_min=140.0,
                          x_max=425.0)
    ph1 = run_phase1(ph_cfg, draw, np.random.default_rng([args.phase1_seed, 0]))
    print(f"phase I done: n={args.m}, eta_hat={ph1.eta_mle:.2f}", file=sys.stderr)

    spec = CalibrationSpec(alpha=args.alpha, beta=args.beta, p0=args.p0,
                           schedule=GroupSchedule(m=args.m,
                                                  group_sizes=tuple(args.groups)),
                           q=1 / 3, x_min=140.0, x_max=425.0,
                           n_boot=args.n_boot, seed=args.seed)
    res = calibrate_thresholds(spec, ph1, workers=args.workers)
    th = res.thresholds

    size, size_se = bootstrap_reject_prob(spec, ph1, th, at_p=args.p0,
                                          n_boot=args.n_verify,
                                          workers=args.workers)
    power, power_se = bootstrap_reject_prob(spec, ph1, th, at_p=res.p1,
                                            n_boot=args.n_verify, side="lower",
                                            workers=args.workers)
    out = {
        "thresholds": res.to_dict()["thresholds"],
        "p1": res.p1,
        "diagnostics": res.to_dict()["diagnostics"],
        "verification": {
            "size_at_p0": {"estimate": size, "se": size_se, "target": args.alpha},
            "power_at_p1": {"estimate": power, "se": power_se,
                            "target": 1.0 - args.beta},
            "n_boot": args.n_verify,
        },
    }
    print(json.dumps(out, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
