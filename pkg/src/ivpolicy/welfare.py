"""Empirical welfare, budget, PRTE reports, doubly robust scores and binary-IV welfare."""

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._rng import stream
from .errors import ConfigurationError, DomainError, ExtrapolationError, InfeasibleError
from .mte import fit_mte, local_linear_1d, propensity_values
from .propensity import _stack, column, fit_propensity

G_MAX = 20.0
DEFAULT_FOLDS = 5


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostSpec:
    """Per-person cost ``C(x, z)`` of a take-up under a manipulation, and the cap ``kappa``.

    ``manipulation_gap``: ``C = |alpha(z1) - z1|``.
    ``user_table``: ``table(x, z, z_manipulated)`` returns non-negative costs.
    """

    kind: str = "manipulation_gap"
    kappa: float = math.inf
    table: Optional[Callable] = None
    bound: float = math.inf

    def __post_init__(self):
        if self.kind not in ("manipulation_gap", "user_table"):
            raise ConfigurationError(f"unknown cost kind {self.kind!r}")
        if self.kind == "user_table" and not callable(self.table):
            raise ConfigurationError("user_table cost needs a callable table")
        if not self.kappa >= 0:
            raise ConfigurationError("kappa must be non-negative")

    def arm_costs(self, x, z, pair):
        """Costs ``(c0, c1)`` of assigning each arm, row by row."""
        z = np.atleast_2d(np.asarray(z, float))
        out = []
        for d in (0, 1):
            zd = pair.apply(z, d)
            if self.kind == "manipulation_gap":
                c = np.abs(zd[:, 0] - z[:, 0])
            else:
                c = np.asarray(self.table(x, z, zd), float)
            if np.any(c < 0) or np.any(~np.isfinite(c)):
                raise ConfigurationError("cost values must be finite and non-negative")
            if np.any(c > self.bound):
                raise ConfigurationError(f"cost exceeds declared bound {self.bound}")
            out.append(c)
        return out[0], out[1]

    def to_dict(self):
        if self.kind == "user_table":
            raise ConfigurationError("user_table costs are not serializable")
        return {"kind": self.kind, "kappa": self.kappa}


# ---------------------------------------------------------------------------
# gains
# ---------------------------------------------------------------------------


def features(x, z, selector):
    """Policy features ``v``: column names (``'x2'``, ``'z2'``) or a callable of ``(x, z)``."""
    if callable(selector):
        v = np.asarray(selector(x, z), float)
        return v[:, None] if v.ndim == 1 else v
    if not selector:
        return np.zeros((np.atleast_2d(x).shape[0], 0))
    return _stack(x, z, tuple(selector))


@dataclass
class GainVector:
    """Per-row inputs of the plug-in objective and budget.

    ``g[i]`` is the fitted MTE integrated from ``p0[i]`` to ``p1[i]``;
    ``c_d[i] = C_d(x_i, z_i) * p_d[i]``; ``baseline`` is the fitted welfare of
    the rule that never assigns ``alpha_1``.
    """

    g: np.ndarray
    c1: np.ndarray
    c0: np.ndarray
    v: np.ndarray
    p1: np.ndarray
    p0: np.ndarray
    baseline: float = 0.0
    pair: Optional[object] = None
    selector: tuple = ()

    def __post_init__(self):
        self.g = np.asarray(self.g, float)
        n = self.g.size
        self.c1 = np.zeros(n) if self.c1 is None else np.asarray(self.c1, float)
        self.c0 = np.zeros(n) if self.c0 is None else np.asarray(self.c0, float)
        self.v = np.asarray(self.v, float).reshape(n, -1)
        self.p1 = np.zeros(n) if self.p1 is None else np.asarray(self.p1, float)
        self.p0 = np.zeros(n) if self.p0 is None else np.asarray(self.p0, float)
        for name in ("c1", "c0", "p1", "p0"):
            if getattr(self, name).shape != (n,):
                raise ConfigurationError(f"{name} must have {n} entries")

    @property
    def n(self):
        return self.g.size

    def welfare(self, assign):
        """Plug-in welfare contrast ``mean(pi * g)`` (add ``baseline`` for the level)."""
        return float(np.mean(np.asarray(assign, float) * self.g))

    def budget(self, assign):
        a = np.asarray(assign, float)
        return float(np.mean(a * self.c1 + (1 - a) * self.c0))


def build_gains(sample, p_model, mte_model, pair, cost=None, feature_selector=("x2",)):
    """Per-row gains and costs for a manipulation pair.

    Extra instruments enter through the MTE model's covariates, so the MTE used
    for each row is the instrument-specific one.  Rows whose propensity
    interval leaves the identified range raise :class:`ExtrapolationError`.
    """
    x, z = sample.x, sample.z
    p0 = propensity_values(p_model, x, pair.apply(z, 0))
    p1 = propensity_values(p_model, x, pair.apply(z, 1))
    p = propensity_values(p_model, x, z)
    xt = mte_model.design(x, z)
    try:
        g = mte_model.integrate(xt, p0, p1)
        base = mte_model.integrate(xt, p, p0)
    except ExtrapolationError as exc:
        raise ExtrapolationError(f"gains need the MTE outside its identified range: {exc}",
                                 exc.rows) from None
    if cost is None:
        c0 = c1 = np.zeros(sample.n)
    else:
        a0, a1 = cost.arm_costs(x, z, pair)
        c0, c1 = a0 * p0, a1 * p1
    v = features(x, z, feature_selector)
    sel = feature_selector if callable(feature_selector) else tuple(feature_selector)
    return GainVector(g, c1, c0, v, p1, p0, float(np.mean(sample.y) + np.mean(base)), pair, sel)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WelfareReport:
    """One row of an encouragement-rule report."""

    share_eligible: float
    welfare_gain: float
    avg_takeup_change: float
    prte: float
    prte_defined: bool = True
    label: str = ""

    def as_row(self, digits=None):
        vals = [self.share_eligible, self.welfare_gain, self.avg_takeup_change, self.prte]
        if digits is not None:
            vals = [round(v, digits) if math.isfinite(v) else v for v in vals]
        return dict(zip(REPORT_COLUMNS, vals))


REPORT_COLUMNS = ("share_eligible", "welfare_gain", "avg_takeup_change", "prte")


def report(gains, assignments, baseline_takeup=None, label=""):
    """Share eligible, welfare gain, take-up change and PRTE of a rule.

    ``baseline_takeup`` defaults to ``gains.p0``.  The PRTE is the welfare gain
    per net person shifted; it is NaN (``prte_defined=False``) when the
    take-up change is zero.
    """
    a = np.asarray(assignments, float)
    if a.shape != (gains.n,):
        raise ConfigurationError("assignments must have one entry per row")
    base = gains.p0 if baseline_takeup is None else np.asarray(baseline_takeup, float)
    share = float(a.mean())
    gain = float(np.mean(a * gains.g))
    takeup = float(np.mean(a * (gains.p1 - base)))
    if takeup != 0:
        return WelfareReport(share, gain, takeup, gain / takeup, True, label)
    return WelfareReport(share, gain, takeup, math.nan, False, label)


def decomposition_consistent(welfare_gain, takeup_change, prte, digits=4):
    """Whether a rounded report row satisfies gain = take-up x PRTE at its rounding."""
    return round(takeup_change * prte, digits) == round(welfare_gain, digits)


def write_reports(rows, csv_path=None, json_path=None, header_note=""):
    """Write report rows (``WelfareReport``) as CSV and/or JSON."""
    records = [{"policy": r.label, **r.as_row(), "prte_defined": r.prte_defined} for r in rows]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            if header_note:
                fh.write(f"# {header_note}\n")
            w = csv.DictWriter(fh, fieldnames=list(records[0]) if records else ["policy"])
            w.writeheader()
            for r in records:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump({"note": header_note, "rows": records}, fh, indent=2)
    return records


# ---------------------------------------------------------------------------
# doubly robust scores
# ---------------------------------------------------------------------------


@dataclass
class DrScoreSet:
    """Cross-fitted doubly robust scores ``gamma`` with their fold labels (1..K)."""

    gamma: np.ndarray
    fold_id: np.ndarray
    K: int
    g_provenance: str
    diagnostics: dict = field(default_factory=dict)

    def mean(self, mask=None):
        g = self.gamma if mask is None else self.gamma[np.asarray(mask, bool)]
        return float(g.mean())

    def se(self, mask=None):
        g = self.gamma if mask is None else self.gamma[np.asarray(mask, bool)]
        return float(g.std(ddof=1) / math.sqrt(g.size)) if g.size > 1 else math.nan

    def as_gains(self, v):
        """A :class:`GainVector` whose gains are the scores (zero costs)."""
        n = self.gamma.size
        return GainVector(self.gamma, None, None, np.asarray(v, float).reshape(n, -1), None, None)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gamma", "fold_id"])
            for g, k in zip(self.gamma, self.fold_id):
                w.writerow([repr(float(g)), int(k)])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"K": self.K, "g_provenance": self.g_provenance,
                       "gamma": self.gamma.tolist(), "fold_id": self.fold_id.tolist(),
                       "diagnostics": self.diagnostics}, fh, indent=2)


def fold_ids(n, K, seed=0):
    """Fold labels 1..K of near-equal size (+-1) from a seeded permutation."""
    perm = stream(seed, 7919).permutation(n)
    ids = np.empty(n, int)
    ids[perm] = np.arange(n) % K + 1
    return ids


def kernel_density_ratio(train_x, train_z, pair, bandwidth=None):
    """Kernel estimate of ``g(x, z)`` from one training sample.

    Gaussian product kernels with a common bandwidth on coordinates
    standardized by the training ``(x, z)`` scales; constant covariates are
    ignored.  Returns a callable ``g(x, z)``.
    """
    xz = np.hstack([train_x, train_z])
    keep = np.flatnonzero(np.ptp(xz, axis=0) > 0)
    sd = xz[:, keep].std(axis=0)
    n, d = xz.shape[0], keep.size
    h = bandwidth if bandwidth is not None else n ** (-1.0 / (d + 4))
    pts = [np.hstack([train_x, pair.apply(train_z, k)])[:, keep] / sd for k in (0, 1)]
    base = xz[:, keep] / sd

    def dens(points, q):
        out = np.empty(q.shape[0])
        step = max(1, 5_000_000 // max(1, n))
        for s in range(0, q.shape[0], step):
            diff = (q[s:s + step, None, :] - points[None, :, :]) / h
            out[s:s + step] = np.exp(-0.5 * np.sum(diff * diff, axis=-1)).mean(axis=1)
        return out

    def g(x, z):
        q = np.hstack([np.atleast_2d(x), np.atleast_2d(z)])[:, keep] / sd
        f = dens(base, q)
        return (dens(pts[1], q) - dens(pts[0], q)) / np.maximum(f, 1e-300)

    return g


def oracle_nuisances(dgp):
    """True propensity and regression function ``phi(x, z, u)`` of a DGP."""
    from .structural_model import oracle_phi

    return {"propensity": dgp.propensity,
            "regression": lambda x, z, u: oracle_phi(dgp, x, u)}


def _fit_regression(train, p_model, cfg):
    if callable(cfg):
        return cfg
    model = fit_mte(train, p_model, cfg)
    return lambda x, z, u: model.regression(model.design(x, z), u)


def dr_scores(sample, K=DEFAULT_FOLDS, pair=None, nuisance_config=None, g_source="kernel_ratio",
              dgp=None, seed=0, g_max=G_MAX, kde_bandwidth=None):
    """Cross-fitted doubly robust scores.

    For each fold the propensity, regression ``phi(x, u) = E[Y | X=x, P=u]``
    and density ratio ``g`` come from the other folds; then
    ``Gamma_i = phi(p1_i) - phi(p0_i) + g_i (Y_i - phi(p_i))`` with ``g``
    clamped to ``[-g_max, g_max]``.

    ``nuisance_config`` maps ``'propensity'`` and ``'regression'`` to either a
    fit configuration (``{'kind': 'logit'}``, ``{'kind': 'polynomial', 'J': 2}``)
    or a fixed callable (``p(x, z)``, ``phi(x, z, u)``).  ``g_source`` is
    ``'oracle'`` (closed form from ``dgp``), ``'kernel_ratio'`` or a callable
    ``g(x, z)``.  Scores are valid for rules that do not condition on ``z1``.
    """
    if pair is None:
        raise ConfigurationError("dr_scores needs a manipulation pair")
    n = sample.n
    K = int(K)
    if K < 2:
        raise ConfigurationError("K must be at least 2")
    if K > n / 10:
        raise ConfigurationError(f"K={K} folds exceeds n/10 for n={n}")
    cfg = {"propensity": {"kind": "logit"}, "regression": {"kind": "polynomial", "J": 2}}
    cfg.update(nuisance_config or {})
    if g_source == "oracle":
        if dgp is None:
            raise ConfigurationError("g_source='oracle' needs the dgp")
        from .structural_model import oracle_density_ratio

        g_fixed = lambda x, z: oracle_density_ratio(dgp, pair, x, z)  # noqa: E731
        provenance = "oracle"
    elif callable(g_source):
        g_fixed, provenance = g_source, "oracle"
    elif g_source == "kernel_ratio":
        g_fixed, provenance = None, "kernel_ratio"
    else:
        raise ConfigurationError(f"unknown g_source {g_source!r}")

    folds = fold_ids(n, K, seed)
    gamma = np.empty(n)
    g_all = np.empty(n)
    for k in range(1, K + 1):
        test = folds == k
        train = sample.subset(~test)
        pc = cfg["propensity"]
        p_model = pc if callable(pc) else fit_propensity(train, pc)
        phi = _fit_regression(train, p_model, cfg["regression"])
        g_fn = g_fixed or kernel_density_ratio(train.x, train.z, pair, kde_bandwidth)
        x, z, y = sample.x[test], sample.z[test], sample.y[test]
        p0 = propensity_values(p_model, x, pair.apply(z, 0))
        p1 = propensity_values(p_model, x, pair.apply(z, 1))
        p = propensity_values(p_model, x, z)
        g = np.clip(np.asarray(g_fn(x, z), float), -g_max, g_max)
        gamma[test] = phi(x, z, p1) - phi(x, z, p0) + g * (y - phi(x, z, p))
        g_all[test] = g
    diag = {"g_clamped_share": float(np.mean(np.abs(g_all) >= g_max)),
            "assumptions_flagged": "support containment and absolutely continuous p|X assumed, not verified"}
    return DrScoreSet(gamma, folds, K, provenance, diag)


# ---------------------------------------------------------------------------
# binary instruments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinaryIvEstimate:
    value: float
    se: float


def _cells(sample, columns):
    """Integer cell labels from the unique rows of the conditioning columns."""
    if not columns:
        return np.zeros(sample.n, int), np.zeros((1, 0))
    key = _stack(sample.x, sample.z, columns)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    return inv.ravel(), uniq


def conditioning_columns(sample):
    """Non-constant ``x`` columns plus the non-manipulated instruments ``z2..zL``."""
    names = [f"x{j + 1}" for j in range(sample.x.shape[1])]
    names += [f"z{j + 1}" for j in range(1, sample.z.shape[1])]
    return tuple(n for n in names if np.ptp(column(sample.x, sample.z, n)) > 0)


def _arm_means(sample, target, method, bandwidth):
    """Fitted ``E[target | cell, Z1 = z]`` for z in {0, 1} at every row, plus ``P(Z1=1 | cell)``."""
    z1 = sample.z[:, 0]
    if not np.all((z1 == 0) | (z1 == 1)):
        raise DomainError("the manipulated instrument must be binary")
    cols = conditioning_columns(sample)
    if method == "auto":
        n_cells = _cells(sample, cols)[1].shape[0]
        method = "cells" if n_cells <= max(1, sample.n // 20) else "local_linear"
    if method == "cells":
        cell, uniq = _cells(sample, cols)
        m = uniq.shape[0]
        cnt = np.zeros((m, 2))
        tot = np.zeros((m, 2) + target.shape[1:])
        np.add.at(cnt, (cell, z1.astype(int)), 1.0)
        np.add.at(tot, (cell, z1.astype(int)), target)
        missing = np.flatnonzero((cnt == 0).any(axis=1))
        if missing.size:
            raise DomainError(
                f"covariate cells with only one instrument arm: "
                f"{[dict(zip(cols, uniq[c].tolist())) for c in missing[:10]]}")
        shape = (-1, 2) + (1,) * (target.ndim - 1)
        mu = tot / cnt.reshape(shape)
        q = cnt[:, 1] / cnt.sum(axis=1)
        return mu[cell, 0], mu[cell, 1], q[cell]
    if method == "local_linear":
        if len(cols) != 1:
            raise ConfigurationError("local linear conditional means need exactly one conditioning column")
        t = column(sample.x, sample.z, cols[0])
        h = bandwidth if bandwidth is not None else 1.06 * t.std() * sample.n ** (-0.2)
        out = []
        for arm in (0, 1):
            sel = z1 == arm
            if sel.sum() < 3:
                raise DomainError(f"instrument arm {arm} has fewer than 3 observations")
            out.append(local_linear_1d(t[sel], target[sel], h, t)[0])
        q = local_linear_1d(t, z1, h, t)[0]
        return out[0], out[1], np.clip(q, 1e-3, 1 - 1e-3)
    raise ConfigurationError(f"unknown conditional-mean method {method!r}")


def binary_iv_welfare(sample, assignments, method="auto", bandwidth=None):
    """Plug-in ``E[mu1(X) pi(X) + mu0(X) (1 - pi(X))]`` with ``mu_z = E[Y | X, Z1 = z]``.

    Instruments ``z2..zL`` are treated as covariates.  The standard error uses
    the efficient influence function with cell-level instrument shares.
    """
    a = np.asarray(assignments, float)
    if a.shape != (sample.n,) or not np.all((a == 0) | (a == 1)):
        raise ConfigurationError("assignments must be a 0/1 vector with one entry per row")
    mu0, mu1, q = _arm_means(sample, sample.y, method, bandwidth)
    z1 = sample.z[:, 0]
    point = mu1 * a + mu0 * (1 - a)
    w = point.mean()
    psi = point - w + a * z1 / q * (sample.y - mu1) + (1 - a) * (1 - z1) / (1 - q) * (sample.y - mu0)
    return BinaryIvEstimate(float(w), float(psi.std(ddof=1) / math.sqrt(sample.n)))


def rationing_factor(e_d0, e_dpi, kappa):
    """``min{1, (kappa - E[D(0)]) / (E[D(pi)] - E[D(0)])}``; 1 when take-up does not rise."""
    if e_d0 > kappa:
        raise InfeasibleError(f"status-quo take-up {e_d0:.4g} already exceeds kappa={kappa:.4g}")
    if e_dpi <= e_d0:
        return 1.0
    return min(1.0, (kappa - e_d0) / (e_dpi - e_d0))


def rationed_welfare(sample, assignments, kappa, method="auto", bandwidth=None):
    """Welfare under random rationing of the encouragement when take-up would exceed ``kappa``.

    ``W = E[mu0] + E[(mu1 - mu0) pi] * factor`` with the rationing factor from
    the estimated take-up ``E[D(0)]`` and ``E[D(pi)]``.
    """
    a = np.asarray(assignments, float)
    if a.shape != (sample.n,):
        raise ConfigurationError("assignments must have one entry per row")
    stacked = np.column_stack([sample.y, sample.d])
    m0, m1, _ = _arm_means(sample, stacked, method, bandwidth)
    e_d0 = float(m0[:, 1].mean())
    e_dpi = float(np.mean(m1[:, 1] * a + m0[:, 1] * (1 - a)))
    factor = rationing_factor(e_d0, e_dpi, kappa)
    return float(m0[:, 0].mean() + np.mean((m1[:, 0] - m0[:, 0]) * a) * factor)


# ---------------------------------------------------------------------------
# compliance groups (oracle mode)
# ---------------------------------------------------------------------------

GROUPS = ("nt", "at", "1c", "2c", "ec", "rc")


def compliance_intervals(p00, p01, p10, p11):
    """Intervals of ``U`` occupied by each compliance group under single-index selection.

    ``pab = p(x, z1=a, z2=b)``; requires component-wise increasing propensities.
    Returns a dict ``group -> (lo, hi)`` arrays (empty groups have lo == hi).
    """
    p00, p01, p10, p11 = (np.asarray(v, float) for v in (p00, p01, p10, p11))
    if np.any(p10 < p00 - 1e-12) or np.any(p11 < p01 - 1e-12) or np.any(p01 < p00 - 1e-12) \
            or np.any(p11 < p10 - 1e-12):
        raise DomainError("propensities must be component-wise increasing")
    mid_lo, mid_hi = np.minimum(p01, p10), np.maximum(p01, p10)
    zero = np.zeros_like(p00)
    return {
        "at": (zero, p00),
        "ec": (p00, mid_lo),
        "1c": (p01, np.maximum(p10, p01)),
        "2c": (p10, np.maximum(p01, p10)),
        "rc": (mid_hi, p11),
        "nt": (p11, zero + 1.0),
    }


def complier_contrast_oracle(dgp, rule_fn, draws=10**6, seed=0):
    """``E[pi(X, Z_-1) sum_g rho_g Delta_g]`` over the groups moved by ``Z1: 0 -> 1``.

    Works for one binary instrument (groups nt/at/c) or two (Z2 binary; groups
    of the six-way table, where 1c, rc (at Z2=1) and 1c, ec (at Z2=0) move).
    ``rule_fn(x, z_rest)`` returns the 0/1 rule.  Returns value and standard error.
    """
    from .structural_model import mte_integral

    rng = stream(seed)
    x, z = dgp.draw_xz(rng, draws)
    pi = np.asarray(rule_fn(x, z[:, 1:]), float)

    def prop(a, b=None):
        zz = z.copy()
        zz[:, 0] = a
        if b is not None:
            zz[:, 1] = b
        return dgp.propensity(x, zz)

    if z.shape[1] == 1:
        lo, hi = prop(0.0), prop(1.0)
        rho = hi - lo
        delta = np.where(rho > 0, mte_integral(dgp, x, lo, hi) / np.where(rho > 0, rho, 1.0), 0.0)
        vals = pi * rho * delta
    else:
        iv = compliance_intervals(prop(0.0, 0.0), prop(0.0, 1.0), prop(1.0, 0.0), prop(1.0, 1.0))
        moved = {1.0: ("1c", "rc"), 0.0: ("1c", "ec")}
        vals = np.zeros(draws)
        for z2, groups in moved.items():
            sel = z[:, 1] == z2
            for grp in groups:
                lo, hi = iv[grp]
                rho = hi - lo
                delta = np.where(rho > 0, mte_integral(dgp, x, lo, hi) / np.where(rho > 0, rho, 1.0), 0.0)
                vals += sel * pi * rho * delta
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))
