"""Generalized Roy data-generating processes with known ground truth.

A :class:`StructuralDgp` draws covariates ``X`` and instruments ``Z`` from
independent component laws, a selection unobservable ``U ~ Unif[0, 1]``
independent of ``(X, Z)``, and sets ``D = 1{nu(X, Z) >= U}``.  Potential
outcome means ``m_d(x, u)`` are either polynomials in ``u`` (closed-form
integrals) or arbitrary vectorized callables (trapezoid integrals).

Every oracle in this module uses the true propensity and MTE; estimators never
read ``Sample.latent_u``.
"""

import csv
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import special

from ._rng import stream
from .errors import ConfigurationError, DomainError, SchemaError

TRAPEZOID_NODES = 512
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


# ---------------------------------------------------------------------------
# component laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Law:
    """Distribution of one scalar component of ``X`` or ``Z``.

    kind / params:
      ``constant``  (value,)
      ``uniform``   (low, high)
      ``normal``    (mean, sd)
      ``discrete``  (values, probs)
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        k, p = self.kind, self.params
        try:
            if k == "constant":
                (float(p[0]),)
                ok = len(p) == 1
            elif k == "uniform":
                ok = len(p) == 2 and float(p[0]) < float(p[1])
            elif k == "normal":
                ok = len(p) == 2 and float(p[1]) > 0
            elif k == "discrete":
                values, probs = np.asarray(p[0], float), np.asarray(p[1], float)
                ok = (
                    len(p) == 2
                    and values.ndim == 1
                    and values.shape == probs.shape
                    and values.size > 0
                    and np.all(probs >= 0)
                    and abs(probs.sum() - 1.0) < 1e-9
                    and np.unique(values).size == values.size
                )
            else:
                raise ConfigurationError(f"unknown law kind {k!r}")
        except (TypeError, IndexError, ValueError) as exc:
            raise ConfigurationError(f"invalid parameters {p!r} for {k} law") from exc
        if not ok:
            raise ConfigurationError(f"invalid parameters {p!r} for {k} law")

    @property
    def is_continuous(self):
        return self.kind in ("uniform", "normal")

    def sample(self, rng, n):
        k, p = self.kind, self.params
        if k == "constant":
            return np.full(n, float(p[0]))
        if k == "uniform":
            return rng.uniform(float(p[0]), float(p[1]), size=n)
        if k == "normal":
            return rng.normal(float(p[0]), float(p[1]), size=n)
        values, probs = np.asarray(p[0], float), np.asarray(p[1], float)
        return values[rng.choice(values.size, size=n, p=probs)]

    def pdf(self, v):
        """Density (continuous kinds) or probability mass (discrete kind) at ``v``."""
        v = np.asarray(v, float)
        k, p = self.kind, self.params
        if k == "uniform":
            lo, hi = float(p[0]), float(p[1])
            return np.where((v >= lo) & (v <= hi), 1.0 / (hi - lo), 0.0)
        if k == "normal":
            mu, sd = float(p[0]), float(p[1])
            return np.exp(-0.5 * ((v - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        if k == "discrete":
            values, probs = np.asarray(p[0], float), np.asarray(p[1], float)
            match = v[..., None] == values
            return (match * probs).sum(axis=-1)
        raise ConfigurationError("a constant component has no density")

    def mean(self):
        k, p = self.kind, self.params
        if k == "constant":
            return float(p[0])
        if k == "uniform":
            return 0.5 * (float(p[0]) + float(p[1]))
        if k == "normal":
            return float(p[0])
        return float(np.dot(p[0], p[1]))

    def to_dict(self):
        if self.kind == "discrete":
            return {"kind": "discrete", "values": list(map(float, self.params[0])),
                    "probs": list(map(float, self.params[1]))}
        return {"kind": self.kind, "params": [float(v) for v in self.params]}

    @classmethod
    def from_dict(cls, spec):
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigurationError(f"law spec must be a table with a 'kind' key, got {spec!r}")
        if spec["kind"] == "discrete":
            return cls("discrete", (tuple(spec.get("values", ())), tuple(spec.get("probs", ()))))
        return cls(spec["kind"], tuple(spec.get("params", ())))


# ---------------------------------------------------------------------------
# instrument manipulations
# ---------------------------------------------------------------------------

MANIPULATION_KINDS = ("identity", "cap_subsidy", "shift", "set_to", "scale")


@dataclass(frozen=True)
class Manipulation:
    """A pure function of the manipulable instrument ``z1``.

    ``identity``        z1 -> z1
    ``cap_subsidy(a)``  z1 -> (z1 - a) * 1{z1 >= a}   (subsidy of up to ``a``)
    ``shift(c)``        z1 -> z1 + c
    ``set_to(v)``       z1 -> v
    ``scale(s)``        z1 -> s * z1                  (proportional subsidy, s > 0)
    """

    kind: str = "identity"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in MANIPULATION_KINDS:
            raise ConfigurationError(f"unknown manipulation {self.kind!r}")
        if self.kind == "cap_subsidy" and self.value < 0:
            raise ConfigurationError("cap_subsidy amount must be non-negative")
        if self.kind == "scale" and not self.value > 0:
            raise ConfigurationError("scale factor must be positive")

    def __call__(self, z1):
        z1 = np.asarray(z1, float)
        if self.kind == "identity":
            return z1.copy()
        if self.kind == "cap_subsidy":
            return np.where(z1 >= self.value, z1 - self.value, 0.0)
        if self.kind == "shift":
            return z1 + self.value
        if self.kind == "set_to":
            return np.full_like(z1, self.value)
        return self.value * z1

    def pushforward_pdf(self, law, v):
        """Density (or mass) of ``alpha(Z1)`` at ``v`` when ``Z1 ~ law``."""
        v = np.asarray(v, float)
        if law.kind == "discrete":
            values, probs = np.asarray(law.params[0], float), np.asarray(law.params[1], float)
            images = self(values)
            return ((v[..., None] == images) * probs).sum(axis=-1)
        if self.kind == "identity":
            return law.pdf(v)
        if self.kind == "shift":
            return law.pdf(v - self.value)
        if self.kind == "scale":
            return law.pdf(v / self.value) / self.value
        raise ConfigurationError(
            f"{self.kind} maps a continuous instrument onto an atom; "
            "the density ratio is undefined"
        )

    def to_dict(self):
        return {"kind": self.kind, "value": float(self.value)}

    @classmethod
    def from_dict(cls, spec):
        if isinstance(spec, str):
            return cls(spec)
        return cls(spec.get("kind", "identity"), float(spec.get("value", 0.0)))


IDENTITY = Manipulation("identity")


@dataclass(frozen=True)
class ManipulationPair:
    """The two manipulations a binary encouragement rule chooses between.

    Both act on instrument column 0 only; the remaining instruments are left as
    observed.
    """

    alpha0: Manipulation = IDENTITY
    alpha1: Manipulation = IDENTITY

    def arm(self, d):
        return self.alpha1 if d else self.alpha0

    def apply(self, z, d):
        """Instrument matrix with column 0 replaced by ``alpha_d(z1)``."""
        z = np.array(z, float, copy=True, ndmin=2)
        z[:, 0] = self.arm(d)(z[:, 0])
        return z

    def apply_rule(self, z, assign):
        """Instrument matrix under the binary rule: ``alpha_1`` where assign==1."""
        z = np.array(z, float, copy=True, ndmin=2)
        assign = np.asarray(assign).astype(bool)
        z[:, 0] = np.where(assign, self.alpha1(z[:, 0]), self.alpha0(z[:, 0]))
        return z

    @property
    def is_trivial(self):
        return self.alpha0 == self.alpha1

    def to_dict(self):
        return {"alpha0": self.alpha0.to_dict(), "alpha1": self.alpha1.to_dict()}

    @classmethod
    def from_dict(cls, spec):
        return cls(Manipulation.from_dict(spec.get("alpha0", "identity")),
                   Manipulation.from_dict(spec.get("alpha1", "identity")))


# ---------------------------------------------------------------------------
# structural functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogisticIndex:
    """nu(x, z) = logistic(x @ coef_x + z @ coef_z)."""

    coef_x: tuple
    coef_z: tuple

    def __call__(self, x, z):
        x = np.atleast_2d(np.asarray(x, float))
        z = np.atleast_2d(np.asarray(z, float))
        return special.expit(x @ np.asarray(self.coef_x, float) + z @ np.asarray(self.coef_z, float))

    def to_dict(self):
        return {"kind": "logistic", "coef_x": list(map(float, self.coef_x)),
                "coef_z": list(map(float, self.coef_z))}


@dataclass(frozen=True)
class PolynomialOutcome:
    """m(x, u) = sum_k (x @ coef[k]) * u**k."""

    coef: tuple

    @property
    def matrix(self):
        return np.atleast_2d(np.asarray(self.coef, float))

    def __call__(self, x, u):
        x = np.atleast_2d(np.asarray(x, float))
        coefs = x @ self.matrix.T  # (n, K+1)
        powers = np.asarray(u, float)[..., None] ** np.arange(coefs.shape[1])
        return (coefs * powers).sum(axis=-1)

    def antiderivative(self, x, u):
        x = np.atleast_2d(np.asarray(x, float))
        coefs = x @ self.matrix.T
        k = np.arange(coefs.shape[1])
        powers = np.asarray(u, float)[..., None] ** (k + 1) / (k + 1)
        return (coefs * powers).sum(axis=-1)

    def to_dict(self):
        return {"kind": "polynomial", "coef": self.matrix.tolist()}


@dataclass(frozen=True)
class StructuralDgp:
    """Generative selection model ``D = 1{nu(X, Z) >= U}``, ``U ~ Unif[0, 1]``.

    ``covariate_law`` and ``instrument_law`` list independent component laws;
    instrument component 0 is the manipulable one.  ``outcome_m1`` and
    ``outcome_m0`` give ``E[Y(d) | X=x, U=u]``; ``mte_bound`` is the declared
    sup-norm bound on the MTE.
    """

    covariate_law: tuple
    instrument_law: tuple
    selection_index: Callable
    outcome_m1: Callable
    outcome_m0: Callable
    noise_scale: float = 0.0
    mte_bound: float = math.inf
    label: str = "implementer-chosen design"

    def __post_init__(self):
        if len(self.covariate_law) < 1 or len(self.instrument_law) < 1:
            raise ConfigurationError("need at least one covariate and one instrument component")
        for law in (*self.covariate_law, *self.instrument_law):
            if not isinstance(law, Law):
                raise ConfigurationError(f"expected Law, got {law!r}")
        if not self.noise_scale >= 0:
            raise ConfigurationError("noise_scale must be non-negative")

    @property
    def dx(self):
        return len(self.covariate_law)

    @property
    def n_instruments(self):
        return len(self.instrument_law)

    @property
    def polynomial_outcomes(self):
        return isinstance(self.outcome_m1, PolynomialOutcome) and isinstance(
            self.outcome_m0, PolynomialOutcome)

    def draw_xz(self, rng, n):
        x = np.column_stack([law.sample(rng, n) for law in self.covariate_law])
        z = np.column_stack([law.sample(rng, n) for law in self.instrument_law])
        return x, z

    def propensity(self, x, z):
        p = np.asarray(self.selection_index(x, z), float)
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12) or np.any(~np.isfinite(p)):
            raise DomainError("selection index left [0, 1]")
        return np.clip(p, 0.0, 1.0)

    def mean_outcome(self, d, x, u):
        return (self.outcome_m1 if d else self.outcome_m0)(x, u)


@dataclass
class Sample:
    """Observed records ``(y, d, x, z)``; ``latent_u`` is set only by the simulator."""

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    z: np.ndarray
    latent_u: Optional[np.ndarray] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, float).ravel()
        self.d = np.asarray(self.d).ravel()
        self.x = np.asarray(self.x, float)
        self.z = np.asarray(self.z, float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.z.ndim == 1:
            self.z = self.z[:, None]
        n = self.y.size
        if n < 1:
            raise SchemaError("a sample needs at least one record")
        if self.d.size != n or self.x.shape[0] != n or self.z.shape[0] != n:
            raise SchemaError("y, d, x and z must have the same number of rows")
        bad = np.flatnonzero((self.d != 0) & (self.d != 1))
        if bad.size:
            raise SchemaError(f"d must be binary; offending rows {bad[:10].tolist()}")
        self.d = self.d.astype(float)
        if self.latent_u is not None:
            self.latent_u = np.asarray(self.latent_u, float).ravel()
            if self.latent_u.size != n or np.any((self.latent_u < 0) | (self.latent_u > 1)):
                raise SchemaError("latent_u must have n entries in [0, 1]")

    @property
    def n(self):
        return self.y.size

    def subset(self, idx):
        return Sample(self.y[idx], self.d[idx], self.x[idx], self.z[idx],
                      None if self.latent_u is None else self.latent_u[idx])

    def header(self):
        cols = ["y", "d"] + [f"x{j + 1}" for j in range(self.x.shape[1])]
        cols += [f"z{j + 1}" for j in range(self.z.shape[1])]
        if self.latent_u is not None:
            cols.append("u")
        return cols

    def to_csv(self, path, include_latent=True):
        cols = [self.y, self.d, *self.x.T, *self.z.T]
        header = self.header()
        if self.latent_u is not None and not include_latent:
            header = header[:-1]
        elif self.latent_u is not None:
            cols.append(self.latent_u)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise SchemaError(f"{path}: empty file")
        header, body = rows[0], rows[1:]
        if header[:2] != ["y", "d"]:
            raise SchemaError(f"{path}: header must start with y,d")
        xs = [i for i, h in enumerate(header) if h.startswith("x")]
        zs = [i for i, h in enumerate(header) if h.startswith("z")]
        expected = ["y", "d"] + [f"x{j + 1}" for j in range(len(xs))] + [
            f"z{j + 1}" for j in range(len(zs))]
        has_u = header[-1] == "u"
        if header[: len(expected)] != expected or len(header) != len(expected) + has_u:
            raise SchemaError(f"{path}: header {header} does not match y,d,x1..,z1..[,u]")
        if not xs or not zs:
            raise SchemaError(f"{path}: need at least one x and one z column")
        try:
            data = np.array([[float(v) for v in r] for r in body], float)
        except ValueError as exc:
            raise SchemaError(f"{path}: non-numeric entry") from exc
        if data.ndim != 2 or data.shape[1] != len(header):
            bad = [i for i, r in enumerate(body) if len(r) != len(header)]
            raise SchemaError(f"{path}: ragged rows {bad[:10]}")
        bad = np.flatnonzero(~np.isfinite(data).all(axis=1))
        if bad.size:
            raise SchemaError(f"{path}: non-finite values in rows {bad[:10].tolist()}")
        return cls(data[:, 0], data[:, 1], data[:, xs], data[:, zs],
                   data[:, -1] if has_u else None)


# ---------------------------------------------------------------------------
# sampling and oracles
# ---------------------------------------------------------------------------


class MonteCarloEstimate(NamedTuple):
    value: float
    se: float
    draws: int


def sample(dgp, n, seed, *keys):
    """Draw ``n`` records; identical ``(dgp, n, seed, *keys)`` gives identical output.

    ``keys`` select an independent stream, e.g. ``(n, replication)``.
    """
    if int(n) < 1:
        raise ConfigurationError("n must be at least 1")
    rng = stream(seed, *keys)
    x, z = dgp.draw_xz(rng, int(n))
    u = rng.uniform(size=int(n))
    noise = rng.normal(0.0, 1.0, size=int(n)) * dgp.noise_scale
    d = (dgp.propensity(x, z) >= u).astype(float)
    y = np.where(d == 1, dgp.outcome_m1(x, u), dgp.outcome_m0(x, u)) + noise
    return Sample(y, d, x, z, u)


def _check_unit(u):
    u = np.asarray(u, float)
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise DomainError("u must lie in [0, 1]")
    return u


def oracle_mte(dgp, u, x):
    """True ``MTE(u, x) = m1(x, u) - m0(x, u)``."""
    u = _check_unit(u)
    scalar = np.ndim(x) == 1 and np.ndim(u) == 0
    x2 = np.atleast_2d(np.asarray(x, float))
    out = dgp.outcome_m1(x2, u) - dgp.outcome_m0(x2, u)
    return float(out[0]) if scalar else out


def _integral(fn, x, lo, hi):
    """Signed integral of ``fn(x, .)`` from ``lo`` to ``hi`` row by row."""
    x = np.atleast_2d(np.asarray(x, float))
    lo = np.broadcast_to(np.asarray(lo, float), (x.shape[0],))
    hi = np.broadcast_to(np.asarray(hi, float), (x.shape[0],))
    anti = getattr(fn, "antiderivative", None)
    if anti is not None:
        return anti(x, hi) - anti(x, lo)
    t = np.linspace(0.0, 1.0, TRAPEZOID_NODES)
    width = hi - lo
    vals = np.stack([fn(x, lo + width * tk) for tk in t], axis=-1)
    return width * _trapezoid(vals, t, axis=-1)


def mte_integral(dgp, x, lo, hi):
    """Signed ``int_lo^hi MTE(u, x) du`` (closed form for polynomial outcomes)."""
    return _integral(dgp.outcome_m1, x, lo, hi) - _integral(dgp.outcome_m0, x, lo, hi)


def oracle_phi(dgp, x, u):
    """``E[Y | X=x, p(X,Z)=u] = int_0^1 m0(x,v) dv + int_0^u MTE(v, x) dv``."""
    x = np.atleast_2d(np.asarray(x, float))
    u = np.broadcast_to(np.asarray(u, float), (x.shape[0],))
    return _integral(dgp.outcome_m0, x, 0.0, 1.0) + mte_integral(dgp, x, 0.0, u)


def oracle_gain(dgp, pair, x, z):
    """Per-row welfare contrast ``int_{p(x,a0(z))}^{p(x,a1(z))} MTE(u,x) du``."""
    p0 = dgp.propensity(x, pair.apply(z, 0))
    p1 = dgp.propensity(x, pair.apply(z, 1))
    return mte_integral(dgp, x, p0, p1)


def _assign(rule, x, z):
    if getattr(rule, "is_empty", False):
        raise ConfigurationError("the empty policy has no welfare")
    a = np.asarray(rule.assign(x, z))
    if a.shape != (x.shape[0],) or not np.all((a == 0) | (a == 1)):
        raise DomainError("rule.assign must return a 0/1 vector with one entry per row")
    return a.astype(float)


def oracle_welfare(dgp, rule, method="formula", draws=10**6, seed=0, chunk=200_000):
    """Welfare ``W`` of a binary encouragement rule.

    ``formula``: Monte Carlo over ``(X, Z)`` of ``E[Y|X,Z]`` plus the exact
    signed MTE integral between ``p(X, Z)`` and ``p(X, alpha^pi(X, Z))``.
    ``simulation``: draws ``(X, Z, U)`` and averages realized counterfactual
    outcomes.  Both return a :class:`MonteCarloEstimate`.
    """
    if method not in ("formula", "simulation"):
        raise ConfigurationError(f"unknown method {method!r}")
    rng = stream(seed)
    total, total_sq, done = 0.0, 0.0, 0
    while done < draws:
        m = min(chunk, draws - done)
        x, z = dgp.draw_xz(rng, m)
        pi = _assign(rule, x, z)
        z_pi = rule.pair.apply_rule(z, pi)
        if method == "formula":
            p = dgp.propensity(x, z)
            p_pi = dgp.propensity(x, z_pi)
            vals = oracle_phi(dgp, x, p) + mte_integral(dgp, x, p, p_pi)
        else:
            u = rng.uniform(size=m)
            noise = rng.normal(0.0, 1.0, size=m) * dgp.noise_scale
            dd = dgp.propensity(x, z_pi) >= u
            vals = np.where(dd, dgp.outcome_m1(x, u), dgp.outcome_m0(x, u)) + noise
        total += vals.sum()
        total_sq += np.square(vals).sum()
        done += m
    mean = total / done
    var = max(total_sq / done - mean**2, 0.0)
    return MonteCarloEstimate(mean, math.sqrt(var / done), done)


def oracle_budget(dgp, rule, cost, draws=10**6, seed=0, method="formula", chunk=200_000):
    """Budget ``B = E[C(X,Z) D(alpha^pi(X,Z))]`` under the true propensity.

    ``cost.arm_costs(x, z, pair)`` returns per-row costs ``(c0, c1)`` of
    assigning each arm.
    """
    if method not in ("formula", "simulation"):
        raise ConfigurationError(f"unknown method {method!r}")
    rng = stream(seed)
    total, total_sq, done = 0.0, 0.0, 0
    while done < draws:
        m = min(chunk, draws - done)
        x, z = dgp.draw_xz(rng, m)
        pi = _assign(rule, x, z)
        c0, c1 = cost.arm_costs(x, z, rule.pair)
        if np.any(c0 < 0) or np.any(c1 < 0):
            raise ConfigurationError("cost values must be non-negative")
        c = np.where(pi == 1, c1, c0)
        if method == "formula":
            p0 = dgp.propensity(x, rule.pair.apply(z, 0))
            p1 = dgp.propensity(x, rule.pair.apply(z, 1))
            vals = c * np.where(pi == 1, p1, p0)
        else:
            u = rng.uniform(size=m)
            vals = c * (dgp.propensity(x, rule.pair.apply_rule(z, pi)) >= u)
        total += vals.sum()
        total_sq += np.square(vals).sum()
        done += m
    mean = total / done
    var = max(total_sq / done - mean**2, 0.0)
    return MonteCarloEstimate(mean, math.sqrt(var / done), done)


def oracle_density_ratio(dgp, pair, x, z):
    """``g(x,z) = (f_{X,a1(Z)} - f_{X,a0(Z)}) / f_{X,Z}`` at the rows ``(x, z)``.

    Components are independent, so only the law of ``Z1`` enters.
    """
    z = np.atleast_2d(np.asarray(z, float))
    law = dgp.instrument_law[0]
    base = law.pdf(z[:, 0])
    if np.any(base <= 0):
        raise DomainError("density ratio requested outside the instrument support")
    num = pair.alpha1.pushforward_pdf(law, z[:, 0]) - pair.alpha0.pushforward_pdf(law, z[:, 0])
    return num / base


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _outcome_from_dict(spec):
    if spec.get("kind", "polynomial") != "polynomial":
        raise ConfigurationError("only polynomial outcomes can be configured from text")
    coef = np.asarray(spec["coef"], float)
    if coef.ndim != 2:
        raise ConfigurationError("outcome coef must be a matrix [power][covariate]")
    return PolynomialOutcome(tuple(map(tuple, coef)))


def dgp_from_dict(spec):
    """Build a :class:`StructuralDgp` from a nested mapping (parsed TOML)."""
    try:
        cov = tuple(Law.from_dict(s) for s in spec["covariates"])
        ins = tuple(Law.from_dict(s) for s in spec["instruments"])
        sel = spec["selection"]
        if sel.get("kind", "logistic") != "logistic":
            raise ConfigurationError("only logistic selection can be configured from text")
        index = LogisticIndex(tuple(map(float, sel["coef_x"])), tuple(map(float, sel["coef_z"])))
        m1 = _outcome_from_dict(spec["outcome"]["m1"])
        m0 = _outcome_from_dict(spec["outcome"]["m0"])
    except KeyError as exc:
        raise ConfigurationError(f"DGP config missing key {exc}") from exc
    if len(index.coef_x) != len(cov) or len(index.coef_z) != len(ins):
        raise ConfigurationError("selection coefficients do not match component counts")
    if m1.matrix.shape[1] != len(cov) or m0.matrix.shape[1] != len(cov):
        raise ConfigurationError("outcome coefficients do not match covariate count")
    return StructuralDgp(cov, ins, index, m1, m0,
                         noise_scale=float(spec.get("noise_scale", 0.0)),
                         mte_bound=float(spec.get("mte_bound", math.inf)),
                         label=str(spec.get("label", "implementer-chosen design")))


def dgp_to_dict(dgp):
    if not (isinstance(dgp.selection_index, LogisticIndex) and dgp.polynomial_outcomes):
        raise ConfigurationError("only logistic/polynomial DGPs are serializable")
    return {
        "label": dgp.label,
        "noise_scale": dgp.noise_scale,
        "mte_bound": dgp.mte_bound,
        "covariates": [law.to_dict() for law in dgp.covariate_law],
        "instruments": [law.to_dict() for law in dgp.instrument_law],
        "selection": dgp.selection_index.to_dict(),
        "outcome": {"m1": dgp.outcome_m1.to_dict(), "m0": dgp.outcome_m0.to_dict()},
    }


def load_toml(path):
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_dgp(path):
    spec = load_toml(path)
    return dgp_from_dict(spec.get("dgp", spec))


# ---------------------------------------------------------------------------
# reference designs
# ---------------------------------------------------------------------------

# Canonical test design (implementer-chosen, not taken from any application):
# X = (1, X2), X2 ~ U[0,1]; Z1 ~ U[0,4] (a fee), Z2 ~ U[0,2] (a distance);
# nu = logistic(g0 + g1 z1 + g2 z2 + g3 x2); m_d(x,u) = x'beta_d + theta_d (1 - 2u).
CANONICAL = {
    "gamma": (1.5, -0.9, -0.8, 0.6),
    "beta0": (1.0, 0.4),
    "beta1": (0.5, 1.4),
    "theta0": -0.3,
    "theta1": 0.5,
    "noise_scale": 0.1,
}


def roy_outcome(beta, theta):
    """``m(x, u) = x'beta + theta (1 - 2u)`` with ``x[0] == 1``."""
    beta = np.asarray(beta, float)
    e1 = np.zeros_like(beta)
    e1[0] = 1.0
    return PolynomialOutcome((tuple(beta + theta * e1), tuple(-2.0 * theta * e1)))


def canonical_dgp(**overrides):
    """The canonical two-instrument design used throughout the tests."""
    par = {**CANONICAL, **overrides}
    g0, g1, g2, g3 = par["gamma"]
    beta0, beta1 = np.asarray(par["beta0"], float), np.asarray(par["beta1"], float)
    delta = beta1 - beta0
    theta = par["theta1"] - par["theta0"]
    bound = abs(delta[0]) + abs(delta[1]) + abs(theta)
    return StructuralDgp(
        covariate_law=(Law("constant", (1.0,)), Law("uniform", (0.0, 1.0))),
        instrument_law=(Law("uniform", (0.0, 4.0)), Law("uniform", (0.0, 2.0))),
        selection_index=LogisticIndex((g0, g3), (g1, g2)),
        outcome_m1=roy_outcome(beta1, par["theta1"]),
        outcome_m0=roy_outcome(beta0, par["theta0"]),
        noise_scale=par["noise_scale"],
        mte_bound=bound,
        label="canonical two-instrument design (implementer-chosen)",
    )


def canonical_parameters(**overrides):
    """True logit coefficients and polynomial-MTE coefficients of the canonical design.

    Returns ``gamma`` ordered as ``(x1=1, x2, z1, z2)`` and
    ``vartheta = (beta0', beta1' + theta e1', eta2)`` with ``eta2 = -theta``,
    which is the exact ``E[Y | X, P]`` polynomial of order two.
    """
    par = {**CANONICAL, **overrides}
    g0, g1, g2, g3 = par["gamma"]
    theta = par["theta1"] - par["theta0"]
    beta0, beta1 = np.asarray(par["beta0"], float), np.asarray(par["beta1"], float)
    b1 = beta1.copy()
    b1[0] += theta
    return {
        "gamma": np.array([g0, g3, g1, g2]),
        "vartheta": np.concatenate([beta0, b1, [-theta]]),
        "delta": beta1 - beta0,
        "theta": theta,
    }


def binary_instrument_dgp(n_instruments=1, coef_x=(-1.0, 0.5), coef_z=(1.4, 0.7),
                          z_prob=0.5, noise_scale=0.1):
    """Discrete-covariate design with one or two binary instruments.

    ``X = (1, X2)`` with ``X2`` on {0, 1, 2}; ``Z_l ~ Bernoulli(z_prob)``.  The
    logistic index has non-negative instrument coefficients, so the propensity
    is component-wise increasing in the instruments (implementer-chosen).
    """
    if n_instruments not in (1, 2):
        raise ConfigurationError("binary designs have one or two instruments")
    if any(c < 0 for c in coef_z[:n_instruments]):
        raise ConfigurationError("instrument coefficients must be non-negative")
    z_law = Law("discrete", ((0.0, 1.0), (1 - z_prob, z_prob)))
    return StructuralDgp(
        covariate_law=(Law("constant", (1.0,)), Law("discrete", ((0.0, 1.0, 2.0), (0.3, 0.3, 0.4)))),
        instrument_law=(z_law,) * n_instruments,
        selection_index=LogisticIndex(tuple(coef_x), tuple(coef_z[:n_instruments])),
        outcome_m1=roy_outcome((1.3, -0.2), 0.6),
        outcome_m0=roy_outcome((1.0, 0.2), -0.2),
        noise_scale=noise_scale,
        label="binary-instrument design (implementer-chosen)",
    )
