"""Propensity score estimators: logit, local polynomial and series least squares.

All models expose ``predict(x, z)`` returning values clamped to
``[trim_eps, 1 - trim_eps]``.  Columns are addressed by name: ``x1..xdx`` for
covariates, ``z1..zL`` for instruments.
"""

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, linalg, special

from .errors import ConfigurationError

TRIM_EPS = 1e-3
RIDGE_FALLBACK = 1e-8
NEWTON_TOL = 1e-8
NEWTON_MAXITER = 100
MAX_HALVINGS = 30
KERNELS = ("gaussian", "epanechnikov")


# ---------------------------------------------------------------------------
# design matrices
# ---------------------------------------------------------------------------


def column(x, z, name):
    """Column ``name`` ('x3', 'z1', or '1') of the stacked ``(x, z)`` data."""
    x = np.atleast_2d(np.asarray(x, float))
    z = np.atleast_2d(np.asarray(z, float))
    if name == "1":
        return np.ones(x.shape[0])
    src = {"x": x, "z": z}.get(name[:1])
    try:
        j = int(name[1:]) - 1
    except ValueError:
        j = -1
    if src is None or not 0 <= j < src.shape[1]:
        raise ConfigurationError(f"unknown column {name!r}")
    return src[:, j]


@dataclass(frozen=True)
class FeatureSpec:
    """Design-matrix terms; each term is a product of named columns, e.g. ``'z1*x2'``."""

    terms: tuple

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ConfigurationError("feature spec needs at least one term")

    def matrix(self, x, z):
        cols = []
        for term in self.terms:
            c = np.ones(np.atleast_2d(x).shape[0])
            for name in term.split("*"):
                c = c * column(x, z, name.strip())
            cols.append(c)
        return np.column_stack(cols)

    @classmethod
    def linear(cls, dx, n_instruments, intercept=False, interactions=()):
        terms = (("1",) if intercept else ()) + tuple(f"x{j + 1}" for j in range(dx))
        terms += tuple(f"z{j + 1}" for j in range(n_instruments))
        return cls(terms + tuple(interactions))


def default_regressors(sample):
    """Names of the non-constant columns of ``(x, z)``."""
    names = [f"x{j + 1}" for j in range(sample.x.shape[1])]
    names += [f"z{j + 1}" for j in range(sample.z.shape[1])]
    return tuple(n for n in names if np.ptp(column(sample.x, sample.z, n)) > 0)


def _stack(x, z, names):
    return np.column_stack([column(x, z, n) for n in names])


def _multi_indices(d, degree):
    """Exponent vectors with total degree <= ``degree``, graded order."""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), total):
            e = [0] * d
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return np.array(out, int).reshape(-1, d)


def _monomials(u, exps):
    """Rows ``prod_k u_k ** e_k`` for every exponent vector ``e``; u is (..., d)."""
    return np.prod(u[..., None, :] ** exps, axis=-1)


def _kernel(name, u):
    """Product kernel evaluated at scaled differences ``u`` of shape (..., d)."""
    if name == "gaussian":
        return np.exp(-0.5 * np.sum(u * u, axis=-1)) / (2 * np.pi) ** (u.shape[-1] / 2)
    if name == "epanechnikov":
        return np.prod(np.where(np.abs(u) <= 1, 0.75 * (1 - u * u), 0.0), axis=-1)
    raise ConfigurationError(f"unknown kernel {name!r}")


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropensityModel:
    """A fitted propensity score.

    ``params`` holds the kind-specific state (coefficients, training data for
    the local polynomial fit, ...); ``diagnostics`` records convergence and
    conditioning information.
    """

    kind: str
    params: dict
    trim_eps: float = TRIM_EPS
    diagnostics: dict = field(default_factory=dict)

    def raw(self, x, z):
        """Unclamped fitted values."""
        x = np.atleast_2d(np.asarray(x, float))
        z = np.atleast_2d(np.asarray(z, float))
        if self.kind == "logit":
            f = FeatureSpec(tuple(self.params["terms"])).matrix(x, z)
            return special.expit(f @ np.asarray(self.params["coef"]))
        if self.kind == "local_poly":
            q = (_stack(x, z, self.params["regressors"]) - self.params["center"]) / self.params["scale"]
            return local_poly_predict(
                np.asarray(self.params["train_v"]), np.asarray(self.params["train_d"]), q,
                self.params["degree"], self.params["bandwidth"], self.params["kernel"],
                self.params["eigen_trim"])
        if self.kind == "series":
            return _series_raw(self, x, z)
        raise ConfigurationError(f"unknown propensity kind {self.kind!r}")

    def predict(self, x, z):
        return np.clip(self.raw(x, z), self.trim_eps, 1 - self.trim_eps)

    __call__ = predict

    def to_dict(self):
        def enc(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, tuple):
                return list(v)
            return v

        return {"kind": self.kind, "trim_eps": self.trim_eps,
                "params": {k: enc(v) for k, v in self.params.items()},
                "diagnostics": {k: enc(v) for k, v in self.diagnostics.items()}}

    @classmethod
    def from_dict(cls, spec):
        params = dict(spec["params"])
        for key in ("center", "scale", "train_v", "train_d"):
            if key in params:
                params[key] = np.asarray(params[key], float)
        for key in ("regressors", "terms"):
            if key in params:
                params[key] = tuple(params[key])
        return cls(spec["kind"], params, float(spec.get("trim_eps", TRIM_EPS)),
                   dict(spec.get("diagnostics", {})))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# logit
# ---------------------------------------------------------------------------


def _logit_loglik(f, d, coef, ridge):
    eta = f @ coef
    return np.mean(d * eta - np.logaddexp(0.0, eta)) - 0.5 * ridge * coef @ coef


def _newton(f, d, ridge):
    """Damped Newton ascent on the mean log-likelihood; returns (coef, info)."""
    n, k = f.shape
    coef = np.zeros(k)
    ll = _logit_loglik(f, d, coef, ridge)
    converged = False
    it = 0
    for it in range(1, NEWTON_MAXITER + 1):
        p = special.expit(f @ coef)
        grad = f.T @ (d - p) / n - ridge * coef
        if np.max(np.abs(grad)) < NEWTON_TOL:
            converged = True
            break
        hess = (f * (p * (1 - p))[:, None]).T @ f / n + ridge * np.eye(k)
        step = linalg.lstsq(hess, grad)[0]
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = coef + t * step
            ll_new = _logit_loglik(f, d, cand, ridge)
            if ll_new >= ll:
                break
            t *= 0.5
        else:
            break
        coef, ll = cand, ll_new
    p = special.expit(f @ coef)
    grad = f.T @ (d - p) / n - ridge * coef
    converged = converged or np.max(np.abs(grad)) < NEWTON_TOL
    return coef, {"iterations": it, "converged": bool(converged),
                  "grad_sup": float(np.max(np.abs(grad))), "loglik": float(ll)}


def fit_logit(sample, feature_spec=None, trim_eps=TRIM_EPS):
    """Logit maximum likelihood of ``d`` on the feature map.

    Defaults to all ``x`` and ``z`` columns plus an intercept unless a covariate
    column is already constant.  When the unpenalized likelihood has no finite
    maximizer (separation) the fit is repeated with a ridge penalty of 1e-8 and
    ``diagnostics['separation']`` is set.
    """
    if feature_spec is None:
        has_const = any(np.ptp(sample.x[:, j]) == 0 for j in range(sample.x.shape[1]))
        feature_spec = FeatureSpec.linear(sample.x.shape[1], sample.z.shape[1], intercept=not has_const)
    elif not isinstance(feature_spec, FeatureSpec):
        feature_spec = FeatureSpec(tuple(feature_spec))
    f = feature_spec.matrix(sample.x, sample.z)
    n, k = f.shape
    if n <= k:
        raise ConfigurationError(f"logit needs n > number of features ({n} <= {k})")
    coef, info = _newton(f, sample.d, 0.0)
    fitted = special.expit(f @ coef)
    # every row fitted almost perfectly: the likelihood only approaches its supremum
    separated = (not info["converged"]) or np.min(np.where(sample.d > 0.5, fitted, 1 - fitted)) > 1 - 1e-6
    if separated:
        warnings.warn("logit likelihood unbounded (separation); refitting with ridge penalty",
                      RuntimeWarning, stacklevel=2)
        coef, info = _newton(f, sample.d, RIDGE_FALLBACK)
    info["separation"] = bool(separated)
    info["ridge"] = RIDGE_FALLBACK if separated else 0.0
    return PropensityModel("logit", {"terms": tuple(feature_spec.terms), "coef": coef.tolist()},
                           trim_eps, info)


# ---------------------------------------------------------------------------
# local polynomial
# ---------------------------------------------------------------------------


def local_poly_predict(train_v, train_d, query, degree, bandwidth, kernel="gaussian",
                       eigen_trim=True, chunk_budget=4_000_000):
    """Local polynomial intercepts at each query row.

    Solves the kernel-weighted least-squares problem in the monomial basis of
    ``(V_i - v) / h`` and returns the intercept, set to zero when the smallest
    eigenvalue of the normalized Gram matrix ``B(v)`` is below ``1 / log n``
    (``eigen_trim``) or ``B(v)`` is singular.
    """
    train_v = np.atleast_2d(train_v)
    query = np.atleast_2d(query)
    n, d = train_v.shape
    exps = _multi_indices(d, degree)
    m = exps.shape[0]
    norm = n * bandwidth**d
    floor = 1.0 / math.log(n) if (eigen_trim and n > 1) else 0.0
    out = np.zeros(query.shape[0])
    step = max(1, chunk_budget // max(1, n * m))
    for s in range(0, query.shape[0], step):
        q = query[s:s + step]
        u = (train_v[None, :, :] - q[:, None, :]) / bandwidth  # (q, n, d)
        w = _kernel(kernel, u)  # (q, n)
        psi = _monomials(u, exps)  # (q, n, m)
        psi_w = psi * w[..., None]
        b = np.einsum("qnm,qnk->qmk", psi_w, psi) / norm
        r = np.einsum("qnm,n->qm", psi_w, train_d) / norm
        for i in range(q.shape[0]):
            try:
                lam = linalg.eigvalsh(b[i])[0]
            except linalg.LinAlgError:
                continue
            if not (lam >= floor and lam > 1e-12):
                continue
            out[s + i] = linalg.solve(b[i], r[i], assume_a="pos")[0]
    return out


def _scaling(v):
    lo, hi = v.min(axis=0), v.max(axis=0)
    scale = np.where(hi > lo, hi - lo, 1.0)
    return lo, scale


def fit_local_poly(sample, degree=1, bandwidth=0.1, kernel="gaussian", regressors=None,
                   trim_eps=TRIM_EPS, eigen_trim=True):
    """Local polynomial propensity fit of total degree ``degree``.

    Regressors default to all non-constant ``x``/``z`` columns; each is rescaled
    by its sample range so one bandwidth applies to every coordinate.
    """
    if not bandwidth > 0:
        raise ConfigurationError("bandwidth must be positive")
    if int(degree) < 0:
        raise ConfigurationError("degree must be non-negative")
    if kernel not in KERNELS:
        raise ConfigurationError(f"unknown kernel {kernel!r}")
    names = tuple(regressors) if regressors is not None else default_regressors(sample)
    if not names:
        raise ConfigurationError("local polynomial fit needs at least one non-constant regressor")
    v = _stack(sample.x, sample.z, names)
    center, scale = _scaling(v)
    params = {"regressors": names, "degree": int(degree), "bandwidth": float(bandwidth),
              "kernel": kernel, "eigen_trim": bool(eigen_trim), "center": center, "scale": scale,
              "train_v": (v - center) / scale, "train_d": sample.d.copy(),
              "smoothness": int(degree) + 1}
    return PropensityModel("local_poly", params, trim_eps,
                           {"n": sample.n, "trim_floor": 1.0 / math.log(sample.n) if sample.n > 1 else 0.0})


def _loo_errors(v, y, degree, h, kernel, rows):
    """Exact leave-one-out residuals of the local polynomial fit at ``rows``."""
    n, d = v.shape
    exps = _multi_indices(d, degree)
    errs = np.full(len(rows), np.inf)
    step = max(1, 4_000_000 // max(1, n * exps.shape[0]))
    for s in range(0, len(rows), step):
        idx = rows[s:s + step]
        u = (v[None, :, :] - v[idx][:, None, :]) / h
        w = _kernel(kernel, u)
        psi = _monomials(u, exps)
        psi_w = psi * w[..., None]
        b = np.einsum("qnm,qnk->qmk", psi_w, psi)
        r = np.einsum("qnm,n->qm", psi_w, y)
        for i, row in enumerate(idx):
            try:
                sol = linalg.solve(b[i], np.column_stack([r[i], psi_w[i, row]]), assume_a="pos")
            except (linalg.LinAlgError, ValueError):
                continue
            fit = sol[0, 0]
            hii = sol[0, 1]  # e1' B^{-1} psi_i w_i, with psi_i = e1 at the own point
            if hii < 1 - 1e-10:
                errs[s + i] = (y[row] - fit) / (1 - hii)
    return errs


def loo_score(v, y, bandwidth, degree=1, kernel="gaussian", rows=None):
    """Mean squared leave-one-out error of a local polynomial smoother."""
    v = np.atleast_2d(np.asarray(v, float))
    if v.shape[0] != len(y):
        v = v.T
    rows = np.arange(len(y)) if rows is None else np.asarray(rows)
    e = _loo_errors(v, np.asarray(y, float), degree, bandwidth, kernel, rows)
    return float(np.mean(e**2))


def cv_bandwidth(sample, candidate_grid, regressor=None, response=None, degree=1,
                 kernel="gaussian", max_eval=2000, seed=0):
    """Leave-one-out cross-validated bandwidth from ``candidate_grid``.

    By default smooths ``d`` on the rescaled non-constant ``x``/``z`` columns;
    ``regressor``/``response`` override the data (e.g. ``Y`` on ``p-hat``).
    LOO residuals come from the hat-matrix diagonal, evaluated on at most
    ``max_eval`` rows (fixed subsample).  Ties go to the larger bandwidth.
    """
    grid = np.asarray(list(candidate_grid), float)
    if grid.size == 0 or np.any(~(grid > 0)):
        raise ConfigurationError("bandwidth grid must be non-empty and positive")
    if grid.size == 1:
        return float(grid[0])
    if regressor is None:
        v = _stack(sample.x, sample.z, default_regressors(sample))
        c, s = _scaling(v)
        v = (v - c) / s
    else:
        v = np.asarray(regressor, float).reshape(len(regressor), -1)
    y = sample.d if response is None else np.asarray(response, float)
    n = len(y)
    rows = np.arange(n)
    if n > max_eval:
        rows = np.sort(np.random.default_rng(seed).choice(n, max_eval, replace=False))
    scores = np.array([loo_score(v, y, h, degree, kernel, rows) for h in grid])
    best = scores.min()
    ties = grid[scores <= best + 1e-15 * max(1.0, abs(best))]
    return float(ties.max())


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


def polynomial_basis(k, d):
    """First ``k`` graded monomials in ``d`` variables (constant first)."""
    degree = 0
    while _multi_indices(d, degree).shape[0] < k:
        degree += 1
    exps = _multi_indices(d, degree)[:k]
    return lambda v: _monomials(np.atleast_2d(v), exps)


def spline_basis(k, lo, hi, order=3):
    """Constant plus additive B-splines; ``(k - 1) // d`` functions per coordinate."""
    lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
    d = lo.size
    per = (k - 1) // d
    if per < order + 1:
        raise ConfigurationError(f"spline basis needs k >= 1 + {order + 1} * d")
    splines = []
    for j in range(d):
        n_inner = per - order - 1
        inner = np.linspace(lo[j], hi[j], n_inner + 2)
        knots = np.r_[[lo[j]] * order, inner, [hi[j]] * order]
        splines.append(knots)

    def basis(v):
        v = np.atleast_2d(v)
        cols = [np.ones((v.shape[0], 1))]
        for j, knots in enumerate(splines):
            vj = np.clip(v[:, j], knots[0], knots[-1])
            dm = interpolate.BSpline.design_matrix(vj, knots, order).toarray()
            cols.append(dm[:, 1:])  # drop one function: partition of unity vs. constant
        out = np.hstack(cols)
        return out
    return basis


def _series_basis_from_params(params):
    if params["basis"] == "polynomial":
        return polynomial_basis(params["k"], len(params["regressors"]))
    if params["basis"] == "spline":
        return spline_basis(params["k"], np.asarray(params["lo"]), np.asarray(params["hi"]))
    raise ConfigurationError("callable series bases are not serializable")


def fit_series(sample, basis="polynomial", k=6, regressors=None, trim_eps=TRIM_EPS):
    """Series least-squares propensity fit with a minimum-norm pseudo-inverse solution.

    ``basis`` is ``'polynomial'``, ``'spline'`` or a callable mapping the
    ``(n, d)`` regressor matrix to an ``(n, k)`` basis matrix.
    """
    k = int(k)
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    if k > sample.n:
        raise ConfigurationError(f"k={k} exceeds n={sample.n}")
    names = tuple(regressors) if regressors is not None else default_regressors(sample)
    v = _stack(sample.x, sample.z, names) if names else np.zeros((sample.n, 0))
    params = {"regressors": names, "k": k}
    if callable(basis):
        fn = basis
        params["basis"] = "callable"
    elif basis == "polynomial":
        fn = polynomial_basis(k, v.shape[1])
        params["basis"] = "polynomial"
    elif basis == "spline":
        lo, hi = v.min(axis=0), v.max(axis=0)
        fn = spline_basis(k, lo, hi)
        params.update(basis="spline", lo=lo.tolist(), hi=hi.tolist())
    else:
        raise ConfigurationError(f"unknown basis {basis!r}")
    b = fn(v)
    coef, _, rank, sv = linalg.lstsq(b, sample.d, lapack_driver="gelsd")
    gram = b.T @ b / sample.n
    lam_min = float(linalg.eigvalsh(gram)[0])
    diag = {"rank": int(rank), "smallest_singular_value": float(sv.min()) if sv.size else 0.0,
            "zeta_k": float(np.sqrt(np.max(np.sum(b * b, axis=1)))), "lambda_k": lam_min,
            "singular_gram": bool(rank < b.shape[1])}
    diag["zeta_lambda_proxy"] = diag["zeta_k"] / math.sqrt(max(lam_min, 1e-300))
    params["coef"] = coef.tolist()
    model = PropensityModel("series", params, trim_eps, diag)
    if callable(basis):
        object.__setattr__(model, "_basis", fn)
    return model


def _series_raw(model, x, z):
    fn = getattr(model, "_basis", None) or _series_basis_from_params(model.params)
    return fn(_stack(x, z, model.params["regressors"])) @ np.asarray(model.params["coef"])


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def fit_propensity(sample, config=None):
    """Fit a propensity model from a configuration mapping ``{'kind': ..., ...}``."""
    config = dict(config or {"kind": "logit"})
    kind = config.pop("kind", "logit")
    if kind == "logit":
        terms = config.pop("features", None)
        return fit_logit(sample, None if terms is None else FeatureSpec(tuple(terms)), **config)
    if kind == "local_poly":
        return fit_local_poly(sample, **config)
    if kind == "series":
        return fit_series(sample, **config)
    raise ConfigurationError(f"unknown propensity kind {kind!r}")
