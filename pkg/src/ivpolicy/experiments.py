"""Configuration, the end-to-end pipeline on one data set, and the Monte Carlo regret harness."""

import copy
import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .mte import fit_mte
from .policy_opt import PolicySpec, solve_dr_ewm, solve_fewm_bewm
from .propensity import fit_propensity
from .structural_model import (
    ManipulationPair,
    Manipulation,
    Sample,
    binary_instrument_dgp,
    canonical_dgp,
    dgp_from_dict,
    dgp_to_dict,
    load_toml,
    oracle_density_ratio,
    oracle_gain,
    oracle_phi,
    sample,
)
from .welfare import CostSpec, build_gains, dr_scores, features, report, write_reports

NAMED_DGPS = {
    "canonical": canonical_dgp,
    "binary1": lambda: binary_instrument_dgp(1),
    "binary2": lambda: binary_instrument_dgp(2),
}
DESIGN_NOTE = "synthetic design is implementer-chosen; no Monte Carlo design is taken from the literature"
DATA_NOTE = "user-supplied data"
LEARNERS = ("fewm", "bewm", "dr")
CLASS_KINDS = ("les", "ta")

DEFAULTS = {
    "seed": 0,
    "out": "results",
    "label": "",
    "data": {"dgp": "canonical", "path": "", "n": 5000},
    "propensity": {"kind": "logit"},
    "mte": {"kind": "partially_linear", "bandwidth": 0.08},
    "policy": {"class_kind": "les", "backend": "enumerate", "features": ["x2", "z2"]},
    "pairs": [
        {"label": "a=median", "alpha0": {"kind": "identity"},
         "alpha1": {"kind": "cap_subsidy", "value": "median"}},
        {"label": "a=max", "alpha0": {"kind": "identity"},
         "alpha1": {"kind": "cap_subsidy", "value": "max"}},
    ],
    "cost": {"kind": "manipulation_gap", "kappa": "inf"},
    "grid": {"points": 41},
    "montecarlo": {
        "sizes": [250, 1000, 4000],
        "replications": 200,
        "learners": list(LEARNERS),
        "nuisance": "fitted",
        "g_source": "oracle",
        "dr_folds": 5,
        "eval_draws": 10**6,
        "directions": 360,
        "threads": 1,
    },
}


REPLACED_SECTIONS = ("dgp", "propensity", "mte")


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in REPLACED_SECTIONS:
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _float(v, name):
    if isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a number, got {v!r}") from None


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Validated experiment settings; ``raw`` is the merged mapping echoed into every output.

    Manipulation values may be the strings ``'median'`` or ``'max'``, resolved
    against the observed ``z1`` when data are available.
    """

    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        self.raw = _merge(DEFAULTS, self.raw or {})
        self.validate()

    @classmethod
    def from_toml(cls, path):
        return cls(load_toml(path))

    # -- accessors -----------------------------------------------------------

    @property
    def seed(self):
        return int(self.raw["seed"])

    @property
    def out(self):
        return str(self.raw["out"])

    @property
    def kappa(self):
        return _float(self.raw["cost"].get("kappa", "inf"), "cost.kappa")

    @property
    def policy(self):
        return self.raw["policy"]

    @property
    def mc(self):
        return self.raw["montecarlo"]

    def cost(self):
        c = self.raw["cost"]
        return CostSpec(c.get("kind", "manipulation_gap"), self.kappa,
                        bound=_float(c.get("bound", "inf"), "cost.bound"))

    def dgp(self):
        spec = self.raw["data"].get("dgp")
        if isinstance(spec, dict):
            return dgp_from_dict(spec)
        if spec not in NAMED_DGPS:
            raise ConfigurationError(f"unknown dgp {spec!r}; choose from {sorted(NAMED_DGPS)}")
        return NAMED_DGPS[spec]()

    def pairs(self, z1=None):
        """Manipulation pairs with data-dependent values resolved from ``z1``."""
        out = []
        for p in self.raw["pairs"]:
            arms = []
            for key in ("alpha0", "alpha1"):
                m = p.get(key, {"kind": "identity"})
                m = {"kind": m} if isinstance(m, str) else dict(m)
                val = m.get("value", 0.0)
                if isinstance(val, str):
                    if z1 is None:
                        raise ConfigurationError(f"value {val!r} needs data to resolve")
                    val = float(np.median(z1)) if val == "median" else float(np.max(z1))
                arms.append(Manipulation(m.get("kind", "identity"), float(val)))
            out.append((p.get("label", f"pair{len(out)}"), ManipulationPair(*arms)))
        return out

    # -- validation ----------------------------------------------------------

    def validate(self):
        r = self.raw
        if not isinstance(r["seed"], int) or r["seed"] < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        data = r["data"]
        if not data.get("path"):
            self.dgp()
            if int(data.get("n", 0)) < 1:
                raise ConfigurationError("data.n must be positive when simulating")
        pol = r["policy"]
        if pol.get("class_kind") not in CLASS_KINDS:
            raise ConfigurationError(f"policy.class_kind must be one of {CLASS_KINDS}")
        if pol.get("backend") not in ("enumerate", "milp"):
            raise ConfigurationError("policy.backend must be 'enumerate' or 'milp'")
        if not isinstance(pol.get("features"), list) or not all(
                isinstance(f, str) for f in pol["features"]):
            raise ConfigurationError("policy.features must be a list of column names")
        if not r["pairs"]:
            raise ConfigurationError("at least one manipulation pair is required")
        for p in r["pairs"]:
            for key in ("alpha0", "alpha1"):
                m = p.get(key, {"kind": "identity"})
                m = {"kind": m} if isinstance(m, str) else m
                val = m.get("value", 0.0)
                if isinstance(val, str) and val not in ("median", "max"):
                    raise ConfigurationError(f"manipulation value {val!r} not understood")
                Manipulation(m.get("kind", "identity"), 0.0 if isinstance(val, str) else float(val))
        self.cost()
        if r["propensity"].get("kind") not in ("logit", "local_poly", "series"):
            raise ConfigurationError("propensity.kind must be logit, local_poly or series")
        if r["mte"].get("kind") not in ("polynomial", "partially_linear", "liv"):
            raise ConfigurationError("mte.kind must be polynomial, partially_linear or liv")
        mc = r["montecarlo"]
        sizes = mc.get("sizes", [])
        if not sizes or any(int(n) < 20 for n in sizes):
            raise ConfigurationError("montecarlo.sizes must be a non-empty list of n >= 20")
        if int(mc.get("replications", 0)) < 1:
            raise ConfigurationError("montecarlo.replications must be positive")
        if any(lr not in LEARNERS for lr in mc.get("learners", [])):
            raise ConfigurationError(f"montecarlo.learners must be drawn from {LEARNERS}")
        if mc.get("nuisance") not in ("fitted", "oracle"):
            raise ConfigurationError("montecarlo.nuisance must be 'fitted' or 'oracle'")
        if mc.get("g_source") not in ("oracle", "kernel_ratio"):
            raise ConfigurationError("montecarlo.g_source must be 'oracle' or 'kernel_ratio'")
        if int(mc.get("eval_draws", 0)) < 1000 or int(mc.get("directions", 0)) < 4:
            raise ConfigurationError("montecarlo.eval_draws >= 1000 and directions >= 4 required")
        if int(mc.get("threads", 1)) < 1:
            raise ConfigurationError("montecarlo.threads must be positive")
        return self

    def echo(self):
        """JSON-safe copy of the configuration for output headers."""
        return json.loads(json.dumps(self.raw, default=str))


def _note(cfg, source):
    return f"{source}; config={json.dumps(cfg.echo(), sort_keys=True)}"


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    reports: list
    policies: dict
    gains: dict
    p_model: object
    mte_model: object
    files: list = field(default_factory=list)


def load_data(cfg, seed=None):
    """The configured data: a CSV file, or a fresh draw from the configured design."""
    data = cfg.raw["data"]
    if data.get("path"):
        return Sample.from_csv(data["path"]), DATA_NOTE
    dgp = cfg.dgp()
    return sample(dgp, int(data["n"]), cfg.seed if seed is None else seed), \
        f"{dgp.label}; {DESIGN_NOTE}"


def fit_nuisances(cfg, data):
    """Propensity and MTE models per the configuration.

    With several instruments the MTE conditions on ``z2..zL`` (instrument-specific
    MTE) unless the ``mte`` section sets ``extra_covariates`` itself.
    """
    p_model = fit_propensity(data, cfg.raw["propensity"])
    mcfg = dict(cfg.raw["mte"])
    if mcfg.get("kind") == "partially_linear" and "extra_covariates" not in mcfg:
        mcfg["extra_covariates"] = tuple(f"z{j + 1}" for j in range(1, data.z.shape[1]))
    elif "extra_covariates" in mcfg:
        mcfg["extra_covariates"] = tuple(mcfg["extra_covariates"])
    return p_model, fit_mte(data, p_model, mcfg)


def learn(cfg, data, gains):
    """FEWM and (when ``kappa`` is finite) BEWM rules for one set of gains."""
    pol = cfg.policy
    fewm, bewm = solve_fewm_bewm(gains, cfg.kappa, pol["class_kind"], pol["backend"])
    out = {"fewm": fewm}
    if math.isfinite(cfg.kappa):
        out["bewm"] = bewm
    return out


def run_pipeline(cfg, data=None, out_dir=None, write=True):
    """Fit nuisances, build gains, learn rules and write reports for every configured pair.

    Report rows per pair: the rule assigning everyone, FEWM, and BEWM when a
    finite ``kappa`` is set.  Files: ``report.csv``/``report.json``, one policy
    JSON per learned rule and two contour grids per pair.
    """
    note = None
    if data is None:
        data, note = load_data(cfg)
    note = note or DATA_NOTE
    out_dir = out_dir or cfg.out
    p_model, mte_model = fit_nuisances(cfg, data)
    rows, policies, all_gains, files = [], {}, {}, []
    if write:
        os.makedirs(out_dir, exist_ok=True)
    for label, pair in cfg.pairs(data.z[:, 0]):
        gains = build_gains(data, p_model, mte_model, pair, cfg.cost(), tuple(cfg.policy["features"]))
        all_gains[label] = gains
        rows.append(report(gains, np.ones(data.n), label=f"{label}: all eligible"))
        for name, pol in learn(cfg, data, gains).items():
            policies[f"{label}:{name}"] = pol
            a = np.zeros(data.n) if pol.is_empty else pol.assign_v(gains.v)
            rows.append(report(gains, a, label=f"{label}: {name.upper()}"))
            if write:
                path = os.path.join(out_dir, f"policy_{_slug(label)}_{name}.json")
                spec = pol.to_dict()
                spec["config"] = cfg.echo()
                spec["note"] = note
                with open(path, "w") as fh:
                    json.dump(spec, fh, indent=2)
                files.append(path)
        if write:
            for kind in ("takeup", "prte"):
                path = os.path.join(out_dir, f"contour_{_slug(label)}_{kind}.csv")
                write_grid(path, contour_grid(data, p_model, mte_model, pair, kind,
                                              int(cfg.raw["grid"]["points"])), _note(cfg, note))
                files.append(path)
    if write:
        csv_path, json_path = os.path.join(out_dir, "report.csv"), os.path.join(out_dir, "report.json")
        write_reports(rows, csv_path, json_path, _note(cfg, note))
        files += [csv_path, json_path]
    return PipelineResult(rows, policies, all_gains, p_model, mte_model, files)


def _slug(label):
    return "".join(c if c.isalnum() else "_" for c in label).strip("_") or "pair"


def contour_grid(data, p_model, mte_model, pair, kind="takeup", points=41):
    """Long-format rows ``(z1, z2, value)`` at the featurewise median covariate row.

    ``takeup``: ``p(xbar, alpha1(z1), z2) - p(xbar, z)``.
    ``prte``: mean fitted MTE between ``p(xbar, alpha0(z))`` and
    ``p(xbar, alpha1(z))``; NaN where the two coincide or where the interval
    leaves the identified range.  Instruments beyond ``z2`` sit at their medians.
    """
    if data.z.shape[1] < 2:
        raise ConfigurationError("contour grids need at least two instruments")
    xbar = np.median(data.x, axis=0)
    zmed = np.median(data.z, axis=0)
    z1 = np.linspace(data.z[:, 0].min(), data.z[:, 0].max(), points)
    z2 = np.linspace(data.z[:, 1].min(), data.z[:, 1].max(), points)
    g1, g2 = np.meshgrid(z1, z2, indexing="ij")
    z = np.tile(zmed, (g1.size, 1))
    z[:, 0], z[:, 1] = g1.ravel(), g2.ravel()
    x = np.tile(xbar, (z.shape[0], 1))
    from .mte import propensity_values

    p1 = propensity_values(p_model, x, pair.apply(z, 1))
    if kind == "takeup":
        val = p1 - propensity_values(p_model, x, z)
    elif kind == "prte":
        p0 = propensity_values(p_model, x, pair.apply(z, 0))
        val = np.full(z.shape[0], np.nan)
        ok = np.abs(p1 - p0) > 1e-12
        lo, hi = mte_model.identified_range()
        ok &= (np.minimum(p0, p1) >= lo - 1e-9) & (np.maximum(p0, p1) <= hi + 1e-9)
        if ok.any():
            xt = mte_model.design(x[ok], z[ok])
            val[ok] = mte_model.integrate(xt, p0[ok], p1[ok]) / (p1[ok] - p0[ok])
    else:
        raise ConfigurationError(f"unknown grid kind {kind!r}")
    return list(zip(z[:, 0].tolist(), z[:, 1].tolist(), val.tolist()))


def write_grid(path, rows, note=""):
    with open(path, "w", newline="") as fh:
        if note:
            fh.write(f"# {note}\n")
        w = csv.writer(fh)
        w.writerow(["z1", "z2", "value"])
        for a, b, c in rows:
            w.writerow([repr(a), repr(b), repr(c)])


# ---------------------------------------------------------------------------
# oracle evaluation sample
# ---------------------------------------------------------------------------


@dataclass
class EvaluationSample:
    """Large draw of ``(X, Z)`` with exact per-row welfare contrasts ``tau`` and arm costs.

    The welfare contrast of a rule is ``mean(pi * tau)`` and its budget
    ``mean(pi * c1 + (1 - pi) * c0)``, both under the true propensity.
    """

    v: np.ndarray
    tau: np.ndarray
    c1: np.ndarray
    c0: np.ndarray

    @classmethod
    def draw(cls, dgp, pair, cost, selector, draws, seed):
        from ._rng import stream

        rng = stream(seed, 104729)
        x, z = dgp.draw_xz(rng, int(draws))
        a0, a1 = cost.arm_costs(x, z, pair)
        p0 = dgp.propensity(x, pair.apply(z, 0))
        p1 = dgp.propensity(x, pair.apply(z, 1))
        return cls(features(x, z, selector), oracle_gain(dgp, pair, x, z), a1 * p1, a0 * p0)

    def evaluate(self, policy):
        """``(welfare contrast, budget)``; the empty sentinel keeps everyone at ``alpha_0``."""
        a = np.zeros(self.tau.size) if policy.is_empty else policy.assign_v(self.v)
        return float(np.mean(a * self.tau)), float(np.mean(a * self.c1 + (1 - a) * self.c0))

    def class_best(self, class_kind, kappa=math.inf, directions=360, bins=4096):
        """Best welfare over a fixed reference family of rules in the class.

        ``les``: ``directions`` unit normals, each with ``bins`` equally spaced
        offsets spanning the projected sample.  ``ta``: thresholds on a
        100-quantile grid per feature, all sign vectors.  Returns
        ``(best_free, best_capped)``; the capped value only counts rules with
        budget within ``kappa``.
        """
        m, d = self.v.shape
        dc = self.c1 - self.c0
        base = float(self.c0.mean())
        free = max(0.0, float(self.tau.mean()))
        capped = [w for w, b in ((0.0, base), (float(self.tau.mean()), float(self.c1.mean())))
                  if b <= kappa]
        capped = max(capped) if capped else -math.inf
        if class_kind == "les":
            if d == 1:
                normals = np.array([[1.0], [-1.0]])
            elif d == 2:
                ang = 2 * math.pi * np.arange(directions) / directions
                normals = np.column_stack([np.cos(ang), np.sin(ang)])
            else:
                raise ConfigurationError("the reference family covers d_v = 1 or 2")
            for nrm in normals:
                s = self.v @ nrm
                lo, hi = s.min(), s.max()
                width = (hi - lo) / bins if hi > lo else 1.0
                k = np.minimum(((hi - s) / width).astype(np.int64), bins - 1)
                # rule s >= hi - (j + 1) width keeps bins 0..j
                cw = np.cumsum(np.bincount(k, self.tau, bins)) / m
                cb = base + np.cumsum(np.bincount(k, dc, bins)) / m
                free = max(free, float(cw.max()))
                ok = cb <= kappa
                if ok.any():
                    capped = max(capped, float(cw[ok].max()))
            return free, capped
        if class_kind == "ta":
            if d != 2:
                raise ConfigurationError("the threshold reference family covers d_v = 2")
            for signs in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                w = self.v * np.asarray(signs, float)
                edges = [np.unique(np.quantile(w[:, k], np.linspace(0, 1, 101))) for k in (0, 1)]
                ix = [np.searchsorted(edges[k], w[:, k], side="left") for k in (0, 1)]
                shape = (edges[0].size + 1, edges[1].size + 1)
                cw = np.zeros(shape)
                cb = np.zeros(shape)
                np.add.at(cw, (ix[0], ix[1]), self.tau / m)
                np.add.at(cb, (ix[0], ix[1]), dc / m)
                cw = cw.cumsum(0).cumsum(1)[:-1, :-1]
                cb = base + cb.cumsum(0).cumsum(1)[:-1, :-1]
                free = max(free, float(cw.max()))
                ok = cb <= kappa
                if ok.any():
                    capped = max(capped, float(cw[ok].max()))
            return free, capped
        raise ConfigurationError(f"unknown policy class {class_kind!r}")


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass
class RegretCurve:
    """Per-size regret summaries for each learner.

    ``rows`` holds one mapping per ``(learner, n)`` with mean regret, its SE,
    mean clipped budget excess, violation frequency, failure count and mean
    nuisance MSEs; ``slopes`` the least-squares log-log slope of mean regret on
    ``n`` per learner; ``replications`` the per-replication records.
    """

    rows: list
    slopes: dict
    replications: list
    oracle: dict
    config: dict

    def row(self, learner, n):
        for r in self.rows:
            if r["learner"] == learner and r["n"] == n:
                return r
        raise KeyError((learner, n))

    def regrets(self, learner, n):
        return np.array([r["regret"][learner] for r in self.replications
                         if r["n"] == n and learner in r["regret"]])

    def to_csv(self, path, note=""):
        cols = ["learner", "n", "mean_regret", "se_regret", "mean_budget_excess",
                "violation_freq", "failures", "mse_propensity", "mse_gain"]
        with open(path, "w", newline="") as fh:
            if note:
                fh.write(f"# {note}\n")
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])

    def to_json(self, path, note=""):
        with open(path, "w") as fh:
            json.dump({"note": note, "config": self.config, "oracle": self.oracle,
                       "slopes": self.slopes, "rows": self.rows,
                       "replications": self.replications}, fh, indent=2)


def _mc_pair(cfg, dgp):
    """First configured pair, with ``'median'``/``'max'`` resolved on a fixed design draw."""
    from ._rng import stream

    z1 = dgp.draw_xz(stream(cfg.seed, 7), 100_000)[1][:, 0]
    return cfg.pairs(z1)[0][1]


def _mc_nuisances(cfg, dgp, data):
    if cfg.mc["nuisance"] == "oracle":
        return dgp.propensity, None
    p_model = fit_propensity(data, cfg.raw["propensity"])
    return p_model, fit_mte(data, p_model, cfg.raw["mte"])


class _OracleMte:
    """True MTE behind the :class:`~ivpolicy.mte.MteModel` interface used by ``build_gains``."""

    def __init__(self, dgp):
        self.dgp = dgp

    def design(self, x, z):
        return x

    def integrate(self, xt, lo, hi):
        from .structural_model import mte_integral

        return mte_integral(self.dgp, xt, lo, hi)


def replicate(raw, n, r):
    """One replication: draw, fit, learn.  Returns JSON-safe policies and diagnostics.

    Failures of a learner are recorded as strings instead of policies.
    """
    cfg = ExperimentConfig(raw)
    dgp = cfg.dgp()
    pair = _mc_pair(cfg, dgp)
    cost = cfg.cost()
    selector = tuple(cfg.policy["features"])
    kind, backend = cfg.policy["class_kind"], cfg.policy["backend"]
    learners = cfg.mc["learners"]
    data = sample(dgp, n, cfg.seed, 1, n, r)
    rec = {"n": int(n), "rep": int(r), "policies": {}, "errors": {}}
    try:
        p_model, mte_model = _mc_nuisances(cfg, dgp, data)
        gains = build_gains(data, p_model, mte_model or _OracleMte(dgp), pair, cost, selector)
        tau = oracle_gain(dgp, pair, data.x, data.z)
        ptrue = dgp.propensity(data.x, data.z)
        phat = p_model(data.x, data.z) if callable(p_model) else p_model.predict(data.x, data.z)
        rec["mse_propensity"] = float(np.mean((phat - ptrue) ** 2))
        rec["mse_gain"] = float(np.mean((gains.g - tau) ** 2))
        if "fewm" in learners or "bewm" in learners:
            fewm, bewm = solve_fewm_bewm(gains, cost.kappa, kind, backend)
            for name, pol in (("fewm", fewm), ("bewm", bewm)):
                if name in learners:
                    rec["policies"][name] = pol.to_dict()
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal
        for name in ("fewm", "bewm"):
            if name in learners:
                rec["errors"][name] = f"{type(exc).__name__}: {exc}"
    if "dr" in learners:
        try:
            if cfg.mc["nuisance"] == "oracle":
                nc = {"propensity": dgp.propensity,
                      "regression": lambda x, z, u: oracle_phi(dgp, x, u)}
            else:
                nc = {"propensity": cfg.raw["propensity"], "regression": cfg.raw["mte"]}
            g_src = cfg.mc["g_source"]
            if g_src == "oracle":
                g_src = lambda x, z: oracle_density_ratio(dgp, pair, x, z)  # noqa: E731
            dr = dr_scores(data, int(cfg.mc["dr_folds"]), pair, nc, g_src, seed=cfg.seed + r)
            pol = solve_dr_ewm(dr, features(data.x, data.z, selector), kind, backend, pair, selector)
            rec["policies"]["dr"] = pol.to_dict()
        except Exception as exc:  # noqa: BLE001
            rec["errors"]["dr"] = f"{type(exc).__name__}: {exc}"
    return rec


def _replicate_task(args):
    return replicate(*args)


def _slope(ns, vals):
    ns, vals = np.asarray(ns, float), np.asarray(vals, float)
    ok = vals > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(ns[ok]), np.log(vals[ok]), 1)[0])


def run_montecarlo(cfg, threads=None, progress=None):
    """Regret curves of the configured learners over the size grid.

    Every replication uses its own stream keyed by ``(seed, n, r)``, so results
    do not depend on scheduling.  The reference best welfare is the larger of
    the fixed reference family's best on the evaluation sample and the best
    learned rule seen anywhere in the run, which makes every regret
    non-negative.  For BEWM the reference is the best rule within budget and
    the regret of a rule over budget is clipped at zero (its excess is recorded
    separately).
    """
    mc = cfg.mc
    if "dr" in mc["learners"] and cfg.policy["features"] and any(
            f == "z1" for f in cfg.policy["features"]):
        raise ConfigurationError("doubly robust scores do not support rules that condition on z1")
    dgp = cfg.dgp()
    pair = _mc_pair(cfg, dgp)
    cost = cfg.cost()
    kappa = cost.kappa
    selector = tuple(cfg.policy["features"])
    ev = EvaluationSample.draw(dgp, pair, cost, selector, int(mc["eval_draws"]), cfg.seed)
    ref_free, ref_capped = ev.class_best(cfg.policy["class_kind"], kappa, int(mc["directions"]))
    tasks = [(cfg.raw, int(n), r) for n in mc["sizes"] for r in range(int(mc["replications"]))]
    threads = int(threads or mc.get("threads", 1))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            recs = list(pool.map(_replicate_task, tasks, chunksize=4))
    else:
        recs = []
        for k, t in enumerate(tasks):
            recs.append(replicate(*t))
            if progress:
                progress(k + 1, len(tasks))
    recs.sort(key=lambda rec: (rec["n"], rec["rep"]))
    for rec in recs:
        rec["welfare"], rec["budget"] = {}, {}
        for name, spec in rec["policies"].items():
            w, b = ev.evaluate(PolicySpec.from_dict(spec))
            rec["welfare"][name], rec["budget"][name] = w, b
    best_free = max([ref_free] + [rec["welfare"][k] for rec in recs for k in rec["welfare"]
                                  if k != "bewm"])
    feasible = [rec["welfare"]["bewm"] for rec in recs
                if "bewm" in rec["welfare"] and rec["budget"]["bewm"] <= kappa]
    best_capped = max([ref_capped] + feasible)
    for rec in recs:
        rec["regret"] = {}
        for name, w in rec["welfare"].items():
            ref = best_capped if name == "bewm" else best_free
            rec["regret"][name] = max(ref - w, 0.0)
    rows, slopes = [], {}
    for name in mc["learners"]:
        means = []
        for n in mc["sizes"]:
            sub = [rec for rec in recs if rec["n"] == int(n)]
            reg = np.array([rec["regret"][name] for rec in sub if name in rec["regret"]])
            bud = np.array([rec["budget"][name] for rec in sub if name in rec["budget"]])
            excess = np.maximum(bud - kappa, 0.0) if math.isfinite(kappa) else np.zeros_like(bud)
            mp = [rec["mse_propensity"] for rec in sub if "mse_propensity" in rec]
            mg = [rec["mse_gain"] for rec in sub if "mse_gain" in rec]
            mean = float(reg.mean()) if reg.size else math.nan
            means.append(mean)
            rows.append({
                "learner": name, "n": int(n), "mean_regret": mean,
                "se_regret": float(reg.std(ddof=1) / math.sqrt(reg.size)) if reg.size > 1 else math.nan,
                "mean_budget_excess": float(excess.mean()) if excess.size else math.nan,
                "violation_freq": float(np.mean(bud > kappa + 0.01)) if bud.size else math.nan,
                "failures": sum(1 for rec in sub if name in rec["errors"]),
                "mse_propensity": float(np.mean(mp)) if mp else math.nan,
                "mse_gain": float(np.mean(mg)) if mg else math.nan,
            })
        slopes[name] = _slope(mc["sizes"], means)
    oracle = {"reference_free": ref_free, "reference_capped": ref_capped,
              "best_free": best_free, "best_capped": best_capped,
              "eval_draws": int(mc["eval_draws"]), "directions": int(mc["directions"]),
              "note": f"{dgp.label}; {DESIGN_NOTE}"}
    return RegretCurve(rows, slopes, recs, oracle, cfg.echo())


def write_montecarlo(curve, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    note = f"{curve.oracle['note']}; config={json.dumps(curve.config, sort_keys=True)}"
    paths = [os.path.join(out_dir, "regret.csv"), os.path.join(out_dir, "regret.json")]
    curve.to_csv(paths[0], note)
    curve.to_json(paths[1], note)
    return paths


def welfare_of(cfg, policy, draws=10**6, seed=0):
    """Oracle welfare contrast and budget of a policy under the configured design."""
    ev = EvaluationSample.draw(cfg.dgp(), policy.pair, cfg.cost(), policy.selector, draws, seed)
    return ev.evaluate(policy)


def describe_dgp(cfg):
    return dgp_to_dict(cfg.dgp())


__all__ = [
    "ExperimentConfig", "PipelineResult", "EvaluationSample", "RegretCurve", "load_data",
    "fit_nuisances", "run_pipeline", "contour_grid", "write_grid", "replicate", "run_montecarlo",
    "write_montecarlo", "welfare_of", "describe_dgp",
]
