"""Marginal treatment effect estimators.

Three model kinds share one interface:

``polynomial``
    ``E[Y | X, P] = x'b0 + P x'(b1 - b0) + sum_j eta_j P**j`` fitted by OLS on
    ``((1 - P) x', P x', P**2, ..., P**J)``.
``partially_linear``
    ``E[Y | X, P] = x'b0 + P x'(b1 - b0) + G(P)`` via double residuals and a
    local linear ``G``.
``liv``
    Local linear smoother of ``Y`` on ``(x, P)``; the MTE is the ``P`` slope.

Models take the MTE covariate matrix ``xt`` built by :meth:`MteModel.design`
(the configured ``x``/``z`` columns), and ``eval``/``integrate``/``regression``
refuse to leave :meth:`MteModel.identified_range`.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, EstimationError, ExtrapolationError, IdentificationError
from .propensity import _stack, column

RANGE_TOL = 1e-9
GRID_SIZE = 1025
EXACT_SMOOTH_MAX_N = 5000
MIN_EFFECTIVE_OBS = 10
MIN_DISTINCT_P = 30


def propensity_values(p_model, x, z):
    """``p_model.predict(x, z)`` or ``p_model(x, z)`` for plain callables."""
    fn = getattr(p_model, "predict", p_model)
    return np.asarray(fn(x, z), float)


def default_covariates(sample, extra=()):
    return tuple(f"x{j + 1}" for j in range(sample.x.shape[1])) + tuple(extra)


# ---------------------------------------------------------------------------
# one-dimensional local linear smoothing
# ---------------------------------------------------------------------------


def local_linear_1d(t, y, h, at, chunk_budget=20_000_000):
    """Gaussian local linear fit of ``y`` (n or n x k) on scalar ``t`` at points ``at``.

    Returns ``(level, slope, effective_obs)``; level/slope have shape
    ``(len(at),) + y.shape[1:]``.  Rows with a singular local design get NaN.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    at = np.atleast_1d(np.asarray(at, float))
    flat = y.reshape(len(t), -1)
    level = np.empty((at.size, flat.shape[1]))
    slope = np.empty_like(level)
    eff = np.empty(at.size)
    step = max(1, chunk_budget // max(1, t.size))
    for s in range(0, at.size, step):
        a = at[s:s + step]
        dlt = t[None, :] - a[:, None]
        w = np.exp(-0.5 * (dlt / h) ** 2)
        s0, s1, s2 = w.sum(1), (w * dlt).sum(1), (w * dlt * dlt).sum(1)
        wy = w @ flat
        wdy = (w * dlt) @ flat
        det = s0 * s2 - s1 * s1
        ok = det > 1e-14 * np.maximum(s0 * s2, 1e-300)
        with np.errstate(invalid="ignore", divide="ignore"):
            level[s:s + step] = np.where(ok[:, None], (s2[:, None] * wy - s1[:, None] * wdy) / det[:, None], np.nan)
            slope[s:s + step] = np.where(ok[:, None], (s0[:, None] * wdy - s1[:, None] * wy) / det[:, None], np.nan)
            eff[s:s + step] = s0**2 / np.maximum((w * w).sum(1), 1e-300)
    shape = (at.size,) + y.shape[1:]
    return level.reshape(shape), slope.reshape(shape), eff


def smooth_on(t, y, h, at=None, grid_size=512):
    """Local linear fitted values of ``y`` on ``t`` at ``at`` (default: at ``t``).

    For large samples the smoother is evaluated on an equispaced grid spanning
    the data and linearly interpolated.
    """
    t = np.asarray(t, float)
    at = t if at is None else np.asarray(at, float)
    if at.size <= EXACT_SMOOTH_MAX_N:
        return local_linear_1d(t, y, h, at)[0]
    grid = np.linspace(t.min(), t.max(), grid_size)
    lev = local_linear_1d(t, y, h, grid)[0].reshape(grid_size, -1)
    out = np.column_stack([np.interp(at, grid, lev[:, j]) for j in range(lev.shape[1])])
    return out.reshape((at.size,) + np.shape(y)[1:])


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MteModel:
    """A fitted MTE model; see the module docstring for the three kinds."""

    kind: str
    covariates: tuple
    params: dict
    u_range: tuple = (0.0, 1.0)
    diagnostics: dict = field(default_factory=dict)

    # -- design --------------------------------------------------------------
    def design(self, x, z):
        """MTE covariate matrix ``xt`` from raw ``(x, z)``."""
        return _stack(x, z, self.covariates)

    def identified_range(self, xt=None):
        """Interval of ``u`` on which the model is declared valid (same for every ``x``)."""
        return self.u_range

    def _check(self, xt, *us):
        lo, hi = self.u_range
        bad = np.zeros(np.shape(xt)[0], bool)
        for u in us:
            u = np.broadcast_to(np.asarray(u, float), bad.shape)
            bad |= (u < lo - RANGE_TOL) | (u > hi + RANGE_TOL) | np.isnan(u)
        if bad.any():
            rows = np.flatnonzero(bad)
            raise ExtrapolationError(
                f"{rows.size} evaluation(s) leave the identified range [{lo:.6g}, {hi:.6g}]; "
                f"first offending rows {rows[:10].tolist()}", rows)

    @staticmethod
    def _prep(xt, u):
        xt = np.atleast_2d(np.asarray(xt, float))
        u = np.asarray(u, float)
        if xt.shape[0] == 1 and u.ndim == 1 and u.size > 1:
            xt = np.repeat(xt, u.size, axis=0)
        return xt, np.broadcast_to(u, (xt.shape[0],)).astype(float)

    # -- evaluation ----------------------------------------------------------
    def eval(self, u, xt):
        """``MTE(u, x)`` at paired rows (a single ``x`` row broadcasts over ``u``)."""
        xt, u = self._prep(xt, u)
        self._check(xt, u)
        p = self.params
        if self.kind == "polynomial":
            eta = np.asarray(p["eta"])
            j = np.arange(2, eta.size + 2)
            return xt @ self.delta + (j * eta * u[:, None] ** (j - 1)).sum(1)
        if self.kind == "partially_linear":
            return xt @ self.delta + np.interp(u, p["grid"], p["g_slope"])
        return _liv_fit(self, xt, u)[1]

    def regression(self, xt, u):
        """Fitted ``E[Y | X = x, P = u]`` (level of the regression function)."""
        xt, u = self._prep(xt, u)
        self._check(xt, u)
        p = self.params
        if self.kind == "polynomial":
            eta = np.asarray(p["eta"])
            j = np.arange(2, eta.size + 2)
            return xt @ np.asarray(p["beta0"]) + u * (xt @ self.delta) + (eta * u[:, None] ** j).sum(1)
        if self.kind == "partially_linear":
            b0 = np.asarray(p["beta0"])
            return xt @ b0 + u * (xt @ self.delta) + np.interp(u, p["grid"], p["g_level"])
        return _liv_fit(self, xt, u)[0]

    def integrate(self, xt, u_lo, u_hi):
        """Signed ``int_{u_lo}^{u_hi} MTE(u, x) du`` row by row."""
        xt = np.atleast_2d(np.asarray(xt, float))
        lo = np.broadcast_to(np.asarray(u_lo, float), (xt.shape[0],))
        hi = np.broadcast_to(np.asarray(u_hi, float), (xt.shape[0],))
        self._check(xt, lo, hi)
        p = self.params
        if self.kind == "polynomial":
            eta = np.asarray(p["eta"])
            j = np.arange(2, eta.size + 2)
            return (hi - lo) * (xt @ self.delta) + (eta * (hi[:, None] ** j - lo[:, None] ** j)).sum(1)
        if self.kind == "partially_linear":
            g = np.interp(hi, p["grid"], p["g_level"]) - np.interp(lo, p["grid"], p["g_level"])
            return (hi - lo) * (xt @ self.delta) + g
        return _liv_fit(self, xt, hi)[0] - _liv_fit(self, xt, lo)[0]

    @property
    def delta(self):
        return np.asarray(self.params["beta1"]) - np.asarray(self.params["beta0"])

    def sup_bound(self, xt):
        """Upper bound on ``|MTE|`` over ``u`` in [0, 1] at the given ``x`` rows (polynomial kind)."""
        if self.kind != "polynomial":
            raise ConfigurationError("closed-form bound only for the polynomial kind")
        eta = np.asarray(self.params["eta"])
        j = np.arange(2, eta.size + 2)
        return float(np.max(np.abs(np.atleast_2d(xt) @ self.delta)) + np.sum(j * np.abs(eta)))

    # -- serialization -------------------------------------------------------
    def to_dict(self):
        enc = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.params.items()}
        return {"kind": self.kind, "covariates": list(self.covariates), "params": enc,
                "u_range": list(self.u_range), "diagnostics": self.diagnostics}

    @classmethod
    def from_dict(cls, spec):
        params = {k: (np.asarray(v, float) if isinstance(v, list) else v)
                  for k, v in spec["params"].items()}
        return cls(spec["kind"], tuple(spec["covariates"]), params,
                   tuple(spec["u_range"]), dict(spec.get("diagnostics", {})))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def integrate_mte(model, xt, u_lo, u_hi):
    """Signed integral of the fitted MTE; see :meth:`MteModel.integrate`."""
    return model.integrate(xt, u_lo, u_hi)


# ---------------------------------------------------------------------------
# polynomial
# ---------------------------------------------------------------------------


def fit_polynomial_mte(sample, p_model, J=2, covariates=None):
    """OLS on ``((1-p) x', p x', p**2, ..., p**J)``; exact closed-form MTE.

    The covariates should contain a constant column for the usual intercepts.
    """
    J = int(J)
    if J < 2:
        raise ConfigurationError("polynomial MTE needs J >= 2")
    names = tuple(covariates) if covariates is not None else default_covariates(sample)
    xt = _stack(sample.x, sample.z, names)
    p = propensity_values(p_model, sample.x, sample.z)
    w = np.hstack([(1 - p)[:, None] * xt, p[:, None] * xt, p[:, None] ** np.arange(2, J + 1)])
    labels = [f"(1-p)*{n}" for n in names] + [f"p*{n}" for n in names] + [f"p^{j}" for j in range(2, J + 1)]
    _, r, piv = linalg.qr(w, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > diag[0] * 1e-10)) if diag.size else 0
    if rank < w.shape[1]:
        dropped = sorted(labels[i] for i in piv[rank:])
        raise EstimationError(f"regressor matrix is rank deficient; collinear columns: {dropped}")
    coef = linalg.lstsq(w, sample.y)[0]
    k = len(names)
    params = {"beta0": coef[:k], "beta1": coef[k:2 * k], "eta": coef[2 * k:], "J": J,
              "vartheta": coef}
    resid = sample.y - w @ coef
    return MteModel("polynomial", names, params, (0.0, 1.0),
                    {"n": sample.n, "residual_var": float(resid.var()), "labels": labels})


# ---------------------------------------------------------------------------
# partially linear
# ---------------------------------------------------------------------------


def _min_effective(p, h, lo, hi):
    grid = np.linspace(lo, hi, 101)
    return float(local_linear_1d(p, np.zeros_like(p), h, grid)[2].min())


def fit_partially_linear_mte(sample, p_model, bandwidth, extra_covariates=(), covariates=None):
    """Double-residual estimate of ``(b0, b1)`` plus a local linear ``G``.

    Constant covariate columns are dropped from the linear part because
    ``p * 1`` and ``(1 - p) * 1`` are absorbed by ``G``.  ``G`` and ``G'`` are
    tabulated on a fine grid over the identified range ``[min p, max p]``
    widened by one bandwidth; evaluation interpolates that table.
    """
    if not bandwidth > 0:
        raise ConfigurationError("bandwidth must be positive")
    names = tuple(covariates) if covariates is not None else default_covariates(sample, extra_covariates)
    names = tuple(n for n in names if np.ptp(column(sample.x, sample.z, n)) > 0)
    if not names:
        raise ConfigurationError("partially linear MTE needs a non-constant covariate")
    xt = _stack(sample.x, sample.z, names)
    p = propensity_values(p_model, sample.x, sample.z)
    lo = max(0.0, float(p.min()) - bandwidth)
    hi = min(1.0, float(p.max()) + bandwidth)
    h = float(bandwidth)
    eff = _min_effective(p, h, float(p.min()), float(p.max()))
    retried = False
    if eff < MIN_EFFECTIVE_OBS:
        h *= 1.5
        retried = True
        eff = _min_effective(p, h, float(p.min()), float(p.max()))
        if eff < MIN_EFFECTIVE_OBS:
            raise EstimationError(
                f"fewer than {MIN_EFFECTIVE_OBS} effective observations in a smoothing "
                f"neighborhood even at bandwidth {h:.4g}")
    reg = np.hstack([p[:, None] * xt, (1 - p)[:, None] * xt])
    stacked = np.column_stack([sample.y, reg])
    res = stacked - smooth_on(p, stacked, h)
    ry, rr = res[:, 0], res[:, 1:]
    gram = rr.T @ rr / sample.n
    ev = linalg.eigvalsh(gram)
    if ev[0] <= 1e-10 * max(ev[-1], 1e-300):
        raise EstimationError("residual regressor second-moment matrix is singular")
    coef = linalg.solve(gram, rr.T @ ry / sample.n, assume_a="pos")
    k = len(names)
    beta1, beta0 = coef[:k], coef[k:]
    target = sample.y - p * (xt @ beta1) - (1 - p) * (xt @ beta0)
    grid = np.linspace(lo, hi, GRID_SIZE)
    level, slope, _ = local_linear_1d(p, target, h, grid)
    params = {"beta0": beta0, "beta1": beta1, "bandwidth": h, "grid": grid,
              "g_level": level, "g_slope": slope}
    return MteModel("partially_linear", names, params, (lo, hi),
                    {"n": sample.n, "bandwidth_retried": retried, "min_effective_obs": eff})


# ---------------------------------------------------------------------------
# local IV
# ---------------------------------------------------------------------------


def _liv_fit(model, xt, u, chunk_budget=8_000_000):
    """Local linear level and ``u``-slope of ``E[Y | x, p]`` at paired rows."""
    p = model.params
    tv, ty = p["train_v"], p["train_y"]
    h = p["bandwidth"]
    nc = np.asarray(p["nonconst"], int)
    xs = (np.atleast_2d(xt)[:, nc] - p["center"]) / p["scale"]
    q = np.column_stack([xs, u])
    n, d = tv.shape
    level = np.empty(q.shape[0])
    slope = np.empty(q.shape[0])
    step = max(1, chunk_budget // max(1, n * (d + 1)))
    for s in range(0, q.shape[0], step):
        dlt = (tv[None, :, :] - q[s:s + step, None, :]) / h
        w = np.exp(-0.5 * np.sum(dlt * dlt, axis=-1))
        psi = np.concatenate([np.ones(dlt.shape[:2] + (1,)), dlt], axis=-1)
        pw = psi * w[..., None]
        b = np.einsum("qnm,qnk->qmk", pw, psi)
        r = np.einsum("qnm,n->qm", pw, ty)
        try:
            sol = np.linalg.solve(b, r[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise EstimationError("singular local design in the LIV smoother") from exc
        level[s:s + step] = sol[:, 0]
        slope[s:s + step] = sol[:, -1] / h
    return level, slope


def fit_liv_mte(sample, p_model, bandwidth, covariates=None, trim=0.02):
    """Local linear smoother of ``Y`` on ``(x, p)``; MTE is the ``p`` derivative.

    Non-constant covariates are rescaled by their sample range; ``p`` is used
    on its natural scale.  The identified range is the ``[trim, 1 - trim]``
    quantile interval of the fitted propensities.
    """
    if not bandwidth > 0:
        raise ConfigurationError("bandwidth must be positive")
    names = tuple(covariates) if covariates is not None else default_covariates(sample)
    xt = _stack(sample.x, sample.z, names)
    p = propensity_values(p_model, sample.x, sample.z)
    distinct = np.unique(np.round(p, 12)).size
    if distinct < MIN_DISTINCT_P:
        raise IdentificationError(
            f"only {distinct} distinct propensity values; local IV needs continuous variation "
            "in p given x. Use the partially linear or polynomial MTE model instead.")
    nonconst = np.flatnonzero(np.ptp(xt, axis=0) > 0)
    xs = xt[:, nonconst]
    center = xs.min(axis=0) if xs.size else np.zeros(0)
    scale = np.where(np.ptp(xs, axis=0) > 0, np.ptp(xs, axis=0), 1.0) if xs.size else np.zeros(0)
    train_v = np.column_stack([(xs - center) / scale, p]) if xs.size else p[:, None]
    lo, hi = np.quantile(p, [trim, 1 - trim])
    params = {"bandwidth": float(bandwidth), "nonconst": nonconst, "center": center, "scale": scale,
              "train_v": train_v, "train_y": sample.y.copy()}
    return MteModel("liv", names, params, (float(lo), float(hi)),
                    {"n": sample.n, "distinct_p": int(distinct)})


# ---------------------------------------------------------------------------
# dispatch and export
# ---------------------------------------------------------------------------


def fit_mte(sample, p_model, config=None):
    """Fit an MTE model from a configuration mapping ``{'kind': ..., ...}``."""
    config = dict(config or {"kind": "polynomial"})
    kind = config.pop("kind", "polynomial")
    if kind == "polynomial":
        return fit_polynomial_mte(sample, p_model, **config)
    if kind == "partially_linear":
        return fit_partially_linear_mte(sample, p_model, **config)
    if kind == "liv":
        return fit_liv_mte(sample, p_model, **config)
    raise ConfigurationError(f"unknown MTE kind {kind!r}")


def mte_grid(model, x_cells, n_u=101):
    """Rows ``(u, cell, value)`` over the identified range for each covariate row."""
    lo, hi = model.identified_range()
    u = np.linspace(lo, hi, n_u)
    rows = []
    for c, xc in enumerate(np.atleast_2d(x_cells)):
        vals = model.eval(u, xc[None, :])
        rows.extend((float(a), c, float(b)) for a, b in zip(u, vals))
    return rows


def export_mte_grid(model, path, x_cells, n_u=101):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "x_cell", "value"])
        for row in mte_grid(model, x_cells, n_u):
            w.writerow([repr(row[0]), row[1], repr(row[2])])
