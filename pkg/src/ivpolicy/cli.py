"""Command line interface: ``simulate``, ``fit``, ``learn``, ``evaluate`` and ``montecarlo``."""

import argparse
import json
import os
import sys

import numpy as np

from .errors import IVPolicyError
from .experiments import (
    DATA_NOTE,
    ExperimentConfig,
    fit_nuisances,
    load_data,
    run_montecarlo,
    run_pipeline,
    welfare_of,
    write_montecarlo,
)
from .mte import export_mte_grid
from .policy_opt import PolicySpec
from .structural_model import Sample, dgp_to_dict
from .welfare import build_gains, report, write_reports


def _config(args):
    raw = {}
    if args.config:
        from .structural_model import load_toml

        raw = load_toml(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if getattr(args, "data", None):
        raw.setdefault("data", {})["path"] = args.data
    if args.out:
        raw["out"] = args.out
    return ExperimentConfig(raw)


def _echo(cfg, out, name="config.json"):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, name), "w") as fh:
        json.dump(cfg.echo(), fh, indent=2, sort_keys=True)


def cmd_simulate(args):
    cfg = _config(args)
    if cfg.raw["data"].get("path"):
        raise IVPolicyError("simulate draws from the configured design; drop --data")
    data, note = load_data(cfg)
    _echo(cfg, cfg.out)
    path = os.path.join(cfg.out, "data.csv")
    data.to_csv(path, include_latent=not args.no_latent)
    with open(os.path.join(cfg.out, "dgp.json"), "w") as fh:
        json.dump({"note": note, "dgp": dgp_to_dict(cfg.dgp())}, fh, indent=2)
    print(f"wrote {data.n} rows to {path}")


def cmd_fit(args):
    cfg = _config(args)
    data, _ = load_data(cfg)
    p_model, mte_model = fit_nuisances(cfg, data)
    _echo(cfg, cfg.out)
    p_model.save(os.path.join(cfg.out, "propensity.json"))
    mte_model.save(os.path.join(cfg.out, "mte.json"))
    # MTE curves at the covariate quartiles, other instruments at their medians
    xq = np.quantile(data.x, [0.25, 0.5, 0.75], axis=0)
    zq = np.tile(np.median(data.z, axis=0), (3, 1))
    export_mte_grid(mte_model, os.path.join(cfg.out, "mte_grid.csv"), mte_model.design(xq, zq))
    lo, hi = mte_model.identified_range()
    print(f"propensity: {p_model.kind}; MTE: {mte_model.kind}, identified on [{lo:.4f}, {hi:.4f}]")


def cmd_learn(args):
    cfg = _config(args)
    res = run_pipeline(cfg)
    _echo(cfg, cfg.out)
    for r in res.reports:
        print(f"{r.label:28s} share={r.share_eligible:.4f} gain={r.welfare_gain:.4f} "
              f"takeup={r.avg_takeup_change:.4f} prte={r.prte:.4f}")
    print(f"wrote {len(res.files)} files to {cfg.out}")


def cmd_evaluate(args):
    cfg = _config(args)
    policy = PolicySpec.load(args.policy)
    out = {"policy": args.policy, "config": cfg.echo()}
    if cfg.raw["data"].get("path"):
        data = Sample.from_csv(cfg.raw["data"]["path"])
        p_model, mte_model = fit_nuisances(cfg, data)
        gains = build_gains(data, p_model, mte_model, policy.pair, cfg.cost(), policy.selector)
        a = np.zeros(data.n) if policy.is_empty else policy.assign_v(gains.v)
        row = report(gains, a, label=os.path.basename(args.policy))
        out["empirical"] = {**row.as_row(), "budget": gains.budget(a), "note": DATA_NOTE}
    else:
        w, b = welfare_of(cfg, policy, int(args.draws), cfg.seed)
        out["oracle"] = {"welfare_contrast": w, "budget": b, "draws": int(args.draws),
                         "note": cfg.dgp().label}
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "evaluation.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)
    if "empirical" in out:
        write_reports([row], os.path.join(cfg.out, "evaluation.csv"), None, DATA_NOTE)
    print(json.dumps({k: v for k, v in out.items() if k != "config"}, indent=2))


def cmd_montecarlo(args):
    cfg = _config(args)

    def progress(k, total):
        if k % 50 == 0 or k == total:
            print(f"  replication {k}/{total}", file=sys.stderr)

    curve = run_montecarlo(cfg, threads=args.threads, progress=progress)
    paths = write_montecarlo(curve, cfg.out)
    _echo(cfg, cfg.out)
    for r in curve.rows:
        print(f"{r['learner']:5s} n={r['n']:6d} regret={r['mean_regret']:.6f} "
              f"(se {r['se_regret']:.6f}) violations={r['violation_freq']:.3f} "
              f"failures={r['failures']}")
    print("log-log slopes:", {k: round(v, 3) for k, v in curve.slopes.items()})
    print("wrote", ", ".join(paths))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ivpolicy", description="Learn welfare-maximizing encouragement rules from IV data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", metavar="PATH", help="TOML experiment configuration")
        if data:
            p.add_argument("--data", metavar="PATH", help="CSV with columns y,d,x1..,z1..[,u]")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="worker processes")

    p = sub.add_parser("simulate", help="draw a data set from the configured design")
    common(p, data=False)
    p.add_argument("--no-latent", action="store_true", help="omit the latent u column")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit propensity and MTE models")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("learn", help="fit, learn FEWM/BEWM rules and write reports")
    common(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("evaluate", help="evaluate a saved policy on data or under the design")
    common(p)
    p.add_argument("--policy", metavar="PATH", required=True, help="policy JSON from learn")
    p.add_argument("--draws", type=int, default=10**6, help="oracle evaluation draws")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("montecarlo", help="regret curves over the configured size grid")
    common(p, data=False)
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (IVPolicyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
