"""Command line entry points.

Four subcommands cover the workflows that do not need a notebook:

  simulate    operating characteristics for a scenario JSON
  simon       optimal and minimax two-stage single-arm designs
  calibrate   bootstrap GLR thresholds for a recorded or simulated Phase I
  serve       the live-conduct HTTP API
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import inference as inf
from .calibrate import CalibrationError, CalibrationSpec, calibrate_thresholds
from .models import EfficacyParams, ToxicityParams, eff_prob, tox_prob
from .ocsim import ScenarioConfig, run_scenario
from .phase1 import (Phase1Config, PriorGrid, posterior_update, run_phase1,
                     summarize_estimates)
from .seqtest import GroupSchedule
from .simon import simon_search


def _write_out(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_simulate(args) -> int:
    with open(args.config) as f:
        raw = json.load(f)
    if args.reps is not None:
        raw["n_reps"] = args.reps
    if args.seed is not None:
        raw["seed"] = args.seed
    scen = ScenarioConfig.from_dict(raw)
    report = run_scenario(scen, workers=args.workers)
    if args.format == "json":
        _write_out(report.to_json(), args.out)
    elif args.format == "csv":
        _write_out(report.to_csv(), args.out)
    else:
        _write_out(report.to_table(), args.out)
    return 0


def cmd_simon(args) -> int:
    rep = simon_search(args.p0, args.p1, args.alpha, args.beta, n_max=args.n_max)
    if args.format == "json":
        out = {}
        for label, d in (("optimal", rep.optimal), ("minimax", rep.minimax)):
            out[label] = {"n1": d.design.n1, "n2": d.design.n2, "r1": d.design.r1,
                          "r": d.design.r, "alpha_attained": d.alpha_attained,
                          "power_attained": d.power_attained, "pet_p0": d.pet_p0,
                          "expected_n_p0": d.expected_n_p0}
        _write_out(json.dumps(out, indent=2), args.out)
        return 0
    lines = []
    for label, d in (("optimal", rep.optimal), ("minimax", rep.minimax)):
        lines.append(f"{label}: r1/n1 = {d.design.r1}/{d.design.n1}, "
                     f"r/n = {d.design.r}/{d.design.n1 + d.design.n2}")
        lines.append(f"  size {d.alpha_attained:.4f}  power {d.power_attained:.4f}  "
                     f"PET(p0) {d.pet_p0:.4f}  EN(p0) {d.expected_n_p0:.2f}")
    _write_out("\n".join(lines), args.out)
    return 0


def _phase1_from_config(raw: dict):
    """Build (Phase1Config, Phase1Result) from recorded data or a simulation."""
    ph = raw["phase1"]
    config = Phase1Config(design=ph.get("design", "ewoc"), m=raw["m"], q=raw["q"],
                          x_min=raw["x_min"], x_max=raw["x_max"],
                          grid=tuple(ph["grid"]) if ph.get("grid") else None,
                          omega=ph.get("omega", 0.25), n_rho=ph.get("n_rho", 101),
                          n_eta=ph.get("n_eta", 101))
    if "data" in ph:
        d = ph["data"]
        data = inf.TrialData([float(x) for x in d["doses"]],
                             [int(y) for y in d["tox"]],
                             [int(z) for z in d.get("eff", [0] * len(d["doses"]))])
        if len(data) != config.m:
            raise ValueError(f"phase1.data has {len(data)} records, m = {config.m}")
        posterior = None
        if config.design == "ewoc":
            posterior = PriorGrid.uniform(config.q, config.x_min, config.x_max,
                                          config.n_rho, config.n_eta)
            for x, y in zip(data.doses, data.tox):
                posterior = posterior_update(posterior, x, y)
        return config, summarize_estimates(config, data, posterior)
    if "truth" in ph:
        tr = ph["truth"]
        theta = ToxicityParams(*[float(v) for v in tr["theta"]])
        psi = EfficacyParams(*[float(v) for v in tr["psi"]])

        def draw(x, rng):
            u_y = rng.random()
            u_z = rng.random()
            return int(u_y < tox_prob(x, theta)), int(u_z < eff_prob(x, psi))

        rng = np.random.default_rng([int(tr.get("seed", 0)), 0])
        return config, run_phase1(config, draw, rng)
    raise ValueError("phase1 needs either 'data' (recorded) or 'truth' (simulated)")


def cmd_calibrate(args) -> int:
    with open(args.config) as f:
        raw = json.load(f)
    config, p1res = _phase1_from_config(raw)
    spec = CalibrationSpec(
        alpha=raw["alpha"], beta=raw["beta"], p0=raw["p0"],
        schedule=GroupSchedule(m=config.m, group_sizes=tuple(raw["group_sizes"])),
        q=raw["q"], x_min=raw["x_min"], x_max=raw["x_max"],
        epsilon=raw.get("epsilon", 1 / 3),
        n_boot=raw.get("n_boot", 10_000) if args.n_boot is None else args.n_boot,
        seed=raw.get("seed", 0), mode=raw.get("mode", "parametric"),
        dependent=raw.get("dependent", False), window=raw.get("window"),
        update_mtd=raw.get("update_mtd", True),
        delta=raw.get("delta", inf.DEFAULT_DELTA),
        p1_override=raw.get("p1_override"),
        early_efficacy=raw.get("early_efficacy", True))
    result = calibrate_thresholds(spec, p1res, workers=args.workers)
    _write_out(json.dumps(result.to_dict(), indent=2), args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app
    app = create_app(args.root, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="phase12")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="operating characteristics for a scenario")
    s.add_argument("--config", required=True, help="scenario JSON path")
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--format", choices=("table", "json", "csv"), default="table")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("simon", help="two-stage single-arm designs")
    s.add_argument("--p0", type=float, required=True)
    s.add_argument("--p1", type=float, required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--beta", type=float, default=0.2)
    s.add_argument("--n-max", type=int, default=100)
    s.add_argument("--format", choices=("table", "json"), default="table")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_simon)

    s = sub.add_parser("calibrate", help="bootstrap GLR stopping thresholds")
    s.add_argument("--config", required=True, help="calibration JSON path")
    s.add_argument("--n-boot", dest="n_boot", type=int, default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_calibrate)

    s = sub.add_parser("serve", help="run the live-conduct HTTP API")
    s.add_argument("--root", required=True, help="directory for trial event logs")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8944)
    s.add_argument("--token", default=None, help="require this bearer token")
    s.set_defaults(fn=cmd_serve)

    args = p.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, CalibrationError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    main()
