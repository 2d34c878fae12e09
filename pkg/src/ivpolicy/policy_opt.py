"""Empirical welfare maximization over linear-score and threshold policy classes.

Objective: ``W(pi) = mean(pi_i * g_i)``; optional budget
``B(pi) = mean(pi_i * c1_i + (1 - pi_i) * c0_i) <= kappa``.

``les``  rules ``1{lambda0 + lambda' v >= 0}`` with ``max |(lambda0, lambda)| = 1``.
``ta``   rules ``1{sigma_k v_k <= vbar_k for all k}``.
``empty`` the sentinel returned when no candidate meets the budget.

Ties among maximizers go to the smallest share eligible, then to the
lexicographically smallest coefficient vector.
"""

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, DomainError
from .structural_model import ManipulationPair

EPS_TIE = 1e-9
DELTA_MARGIN = 1e-6
MAX_ENUM_DIM = 3
NODE_LIMIT = 20000


# ---------------------------------------------------------------------------
# policy specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicySpec:
    """A binary encouragement rule: which rows receive ``pair.alpha1``.

    ``selector`` names the feature columns (``'x2'``, ``'z2'``, ...) that make up
    ``v``; ``welfare``/``budget``/``share`` record the attained in-sample values.
    """

    class_kind: str
    coef: tuple = ()
    thresholds: tuple = ()
    signs: tuple = ()
    pair: ManipulationPair = ManipulationPair()
    selector: tuple = ()
    welfare: float = math.nan
    budget: float = math.nan
    share: float = math.nan
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.class_kind not in ("les", "ta", "empty"):
            raise ConfigurationError(f"unknown policy class {self.class_kind!r}")
        if self.class_kind == "ta" and len(self.thresholds) != len(self.signs):
            raise ConfigurationError("threshold and sign vectors differ in length")
        if self.class_kind == "ta" and any(s not in (-1, 1) for s in self.signs):
            raise ConfigurationError("signs must be +-1")

    @property
    def is_empty(self):
        return self.class_kind == "empty"

    @property
    def vc_dimension(self):
        d = len(self.coef) - 1 if self.class_kind == "les" else len(self.thresholds)
        return d + 1 if self.class_kind == "les" else d

    def assign_v(self, v):
        """Assignments for a feature matrix ``v`` (n x d_v)."""
        if self.is_empty:
            raise ConfigurationError("the empty policy assigns nobody; no feasible rule was found")
        v = np.asarray(v, float)
        v = v.reshape(v.shape[0], -1) if v.ndim > 1 else v.reshape(-1, max(1, self.dim))
        if self.class_kind == "les":
            c = np.asarray(self.coef, float)
            return (c[0] + v @ c[1:] >= 0).astype(float)
        w = v * np.asarray(self.signs, float)
        return np.all(w <= np.asarray(self.thresholds, float), axis=1).astype(float)

    @property
    def dim(self):
        return len(self.coef) - 1 if self.class_kind == "les" else len(self.thresholds)

    def assign(self, x, z):
        from .welfare import features

        return self.assign_v(features(x, z, self.selector))

    def to_dict(self):
        def num(t):
            return [None if not math.isfinite(a) else float(a) for a in t] if t else []

        return {
            "class_kind": self.class_kind, "coef": num(self.coef),
            "thresholds": [("-inf" if a == -math.inf else "inf" if a == math.inf else float(a))
                           for a in self.thresholds],
            "signs": list(self.signs), "pair": self.pair.to_dict(),
            "selector": list(self.selector) if not callable(self.selector) else None,
            "welfare": self.welfare, "budget": self.budget, "share": self.share,
            "vc_dimension": self.vc_dimension if not self.is_empty else None,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, spec):
        th = tuple(float(a) for a in spec.get("thresholds", []))
        return cls(spec["class_kind"], tuple(float(a) for a in spec.get("coef", [])), th,
                   tuple(int(s) for s in spec.get("signs", [])),
                   ManipulationPair.from_dict(spec.get("pair", {})),
                   tuple(spec.get("selector") or ()),
                   _f(spec.get("welfare")), _f(spec.get("budget")), _f(spec.get("share")),
                   dict(spec.get("diagnostics", {})))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _f(v):
    return math.nan if v is None else float(v)


def constant_rule(value, dim, pair=ManipulationPair(), selector=()):
    """``pi == 1`` (value=1) or ``pi == 0`` (value=0) as a linear-score rule."""
    return PolicySpec("les", (1.0 if value else -1.0,) + (0.0,) * dim, pair=pair, selector=selector)


def empty_policy(pair=ManipulationPair(), selector=(), reason=""):
    return PolicySpec("empty", pair=pair, selector=selector, diagnostics={"reason": reason})


# ---------------------------------------------------------------------------
# objective bookkeeping
# ---------------------------------------------------------------------------


class _Problem:
    """Scores, costs and budget of one optimization instance."""

    def __init__(self, g, v, c1=None, c0=None, kappa=math.inf):
        self.g = np.asarray(g, float)
        self.n = self.g.size
        if self.n == 0:
            raise ConfigurationError("cannot optimize over an empty sample")
        self.v = np.asarray(v, float).reshape(self.n, -1)
        self.c1 = np.zeros(self.n) if c1 is None else np.asarray(c1, float)
        self.c0 = np.zeros(self.n) if c0 is None else np.asarray(c0, float)
        self.kappa = float(kappa)
        self.dc = self.c1 - self.c0
        self.base_cost = float(self.c0.mean())
        self.budgeted = math.isfinite(self.kappa)
        self.tol = 1e-10 * max(float(np.abs(self.g).mean()), 1e-300)
        self.btol = 1e-12 * max(float(np.abs(self.c1).mean() + np.abs(self.c0).mean()), 1.0)

    def value(self, labels):
        return float(np.mean(labels * self.g))

    def budget(self, labels):
        return float(np.mean(labels * self.c1 + (1 - labels) * self.c0))

    def feasible(self, labels):
        return (not self.budgeted) or self.budget(labels) <= self.kappa + self.btol


class _Selector:
    """Keeps the best candidate under (welfare desc, share asc, coefficients lexicographic)."""

    def __init__(self, prob):
        self.prob = prob
        self.best = None  # (welfare, count, coef tuple, labels)

    def offer(self, coef, labels=None):
        prob = self.prob
        coef = _normalize(coef)
        if labels is None:
            labels = (coef[0] + prob.v @ coef[1:] >= 0).astype(float)
        if not prob.feasible(labels):
            return
        w, k = prob.value(labels), int(labels.sum())
        cand = (w, k, tuple(coef), labels)
        if self.best is None or _better(cand, self.best, prob.tol):
            self.best = cand


def _better(a, b, tol):
    if a[0] > b[0] + tol:
        return True
    if a[0] < b[0] - tol:
        return False
    if a[1] != b[1]:
        return a[1] < b[1]
    return a[2] < b[2]


def _normalize(coef):
    coef = np.asarray(coef, float)
    m = np.max(np.abs(coef))
    if not m > 0:
        raise DomainError("zero coefficient vector")
    return coef / m


# ---------------------------------------------------------------------------
# enumeration backend for linear eligibility scores
# ---------------------------------------------------------------------------


def _constants(sel, d):
    sel.offer(np.r_[1.0, np.zeros(d)])
    sel.offer(np.r_[-1.0, np.zeros(d)])


def _enumerate_1d(prob, sel):
    v = prob.v[:, 0]
    for t in np.unique(v):
        sel.offer(np.array([-t, 1.0]))   # v >= t
        sel.offer(np.array([t, -1.0]))   # v <= t


def _enumerate_generic(prob, sel, eps_tie=EPS_TIE):
    """Hyperplanes through every affinely independent d-subset, with all boundary labelings.

    For a subset ``S`` with hyperplane ``f = 0`` and every sign pattern ``s`` on
    ``S`` and orientation, the candidate is ``o f + e a`` where ``a`` is an
    affine function with ``a(v_s) = s`` and ``e`` is small enough not to move
    any point off the hyperplane.  ``eps_tie`` is the relative tolerance for a
    point to count as lying on the hyperplane.
    """
    v = prob.v
    n, d = v.shape
    aug = np.hstack([np.ones((n, 1)), v])
    scale = 1.0 + np.max(np.abs(v))
    patterns = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
    for subset in itertools.combinations(range(n), d):
        m = aug[list(subset)]
        _, sv, vt = np.linalg.svd(m)
        if sv[-1] < 1e-12 * scale:
            continue  # affinely dependent points
        w = vt[-1]
        w = w / np.max(np.abs(w))
        f = aug @ w
        on = np.abs(f) <= eps_tie * scale
        off = ~on
        a_all = np.linalg.lstsq(m, patterns.T, rcond=None)[0]  # (d+1, 2^d)
        av = aug @ a_all
        for o in (1.0, -1.0):
            for j in range(patterns.shape[0]):
                a = a_all[:, j]
                amax = np.max(np.abs(av[:, j]))
                gap = np.min(np.abs(f[off])) if off.any() else 1.0
                e = 0.5 * gap / max(amax, 1e-300)
                sel.offer(o * w + e * a)


def _enumerate_all_labelings(prob, sel):
    """Every labeling of a tiny sample, kept when a separating rule exists (LP check)."""
    n, d = prob.v.shape
    for bits in itertools.product((0.0, 1.0), repeat=n):
        coef = _separate(prob.v, np.array(bits))
        if coef is not None:
            sel.offer(coef)


def _separate(v, labels, margin=1e-7):
    """A linear-score rule reproducing ``labels`` (LP feasibility), or None."""
    n, d = v.shape
    sign = np.where(labels == 1, -1.0, 1.0)
    aug = np.hstack([np.ones((n, 1)), v])
    a_ub = sign[:, None] * aug
    b_ub = np.full(n, -margin)  # strict on both sides so the recheck below is robust
    res = optimize.linprog(np.zeros(d + 1), A_ub=a_ub, b_ub=b_ub, bounds=[(-1, 1)] * (d + 1),
                           method="highs")
    if res.status != 0:
        return None
    coef = res.x
    if np.max(np.abs(coef)) == 0:
        return None
    lab = (aug @ _normalize(coef) >= 0).astype(float)
    return coef if np.array_equal(lab, labels) else None


def _sweep_2d(prob, gap_tol=1e-12):
    """Exact search over lines through each sample point (d_v = 2).

    Returns ``(free, constrained)``: for the problem without and with its
    budget, the per-pivot optima tied at the best value (and the smallest
    count) as ``(pivot, psi, pivot_in)`` triples; see
    :func:`ivpolicy._sweep.sweep_pivots`.
    """
    from ._sweep import sweep_pivots

    both = sweep_pivots(
        np.ascontiguousarray(prob.v, float), prob.g, prob.dc, float(prob.n), prob.base_cost,
        prob.kappa if prob.budgeted else 0.0, prob.budgeted, prob.tol, prob.btol, gap_tol)
    out = []
    for val, cnt, psi, pin in both:
        best = val.max()
        if not math.isfinite(best):
            out.append([])
            continue
        tied = np.flatnonzero(val >= best - prob.tol)
        tied = tied[cnt[tied] == cnt[tied].min()]
        out.append([(int(i), float(psi[i]), float(pin[i])) for i in tied])
    return tuple(out)


def _line_coef(v, i, psi, pin):
    """Coefficients of the line through ``v[i]`` with direction ``psi``, nudged to include/exclude the pivot."""
    nrm = np.array([-math.sin(psi), math.cos(psi)])
    f = (v - v[i]) @ nrm
    nz = np.abs(f)[np.any(v != v[i], axis=1)]
    delta = 0.5 * nz.min() if nz.size else 1.0
    c0 = -nrm @ v[i] + (delta if pin else -delta)
    return np.r_[c0, nrm]


def _rescale(v):
    lo, hi = v.min(axis=0), v.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = np.where(hi > lo, 0.5 * (hi - lo), 1.0)
    return (v - mid) / half, mid, half


def _to_original(coef_u, mid, half):
    lam = coef_u[1:] / half
    return np.r_[coef_u[0] - lam @ mid, lam]


def _solve_les_enumerate(prob, eps_tie=EPS_TIE, swept=None):
    """Exact LES search; ``swept`` reuses tie lists from an earlier :func:`_sweep_2d`."""
    n, d = prob.v.shape
    if d > MAX_ENUM_DIM:
        raise ConfigurationError(f"enumeration backend supports d_v <= {MAX_ENUM_DIM}; use backend='milp'")
    u, mid, half = _rescale(prob.v) if d else (prob.v, np.zeros(0), np.ones(0))
    sub = _Problem(prob.g, u, prob.c1, prob.c0, prob.kappa)
    sel = _Selector(sub)
    _constants(sel, d)
    if d == 0:
        pass
    elif n <= d:
        _enumerate_all_labelings(sub, sel)
    elif d == 1:
        _enumerate_1d(sub, sel)
    elif d == 2 and n > 12:
        if swept is None:
            swept = _sweep_2d(sub)[1]
        for i, psi, pin in swept:
            sel.offer(_line_coef(u, i, psi, pin))
    else:
        _enumerate_generic(sub, sel, eps_tie)
    if sel.best is None:
        return None, None
    coef = _normalize(_to_original(np.asarray(sel.best[2]), mid, half)) if d else np.asarray(sel.best[2])
    labels = (coef[0] + prob.v @ coef[1:] >= 0).astype(float)
    if not np.array_equal(labels, sel.best[3]):
        # rounding in the change of units moved a point across the boundary
        coef = _separate(prob.v, sel.best[3])
        if coef is None:
            raise DomainError("could not express the optimal labeling in original feature units")
        coef = _normalize(coef)
        labels = sel.best[3]
    return coef, labels


# ---------------------------------------------------------------------------
# MILP backend (branch and bound on LP relaxations)
# ---------------------------------------------------------------------------


def _milp_les(prob, delta=DELTA_MARGIN, node_limit=NODE_LIMIT):
    """Big-M formulation solved by best-bound branch and bound.

    Variables ``(pi_1..pi_n, lambda0, lambda)`` with coefficients in ``[-1, 1]``
    on features rescaled to ``[-1, 1]``.  Links:
    ``lambda0 + lambda'v_i >= -M_i (1 - pi_i)`` and
    ``lambda0 + lambda'v_i <= -delta + M_i pi_i`` with ``M_i = 1 + |v_i|_1 + delta``.
    """
    u, mid, half = _rescale(prob.v)
    n, d = u.shape
    aug = np.hstack([np.ones((n, 1)), u])
    big_m = 1.0 + np.abs(u).sum(1) + delta
    a_link1 = np.hstack([np.diag(big_m), -aug])          # M pi - aug coef <= M
    b_link1 = big_m.copy()
    a_link2 = np.hstack([-np.diag(big_m), aug])          # aug coef - M pi <= -delta
    b_link2 = np.full(n, -delta)
    rows_a = [a_link1, a_link2]
    rows_b = [b_link1, b_link2]
    if prob.budgeted:
        rows_a.append(np.r_[prob.dc / n, np.zeros(d + 1)][None, :])
        rows_b.append(np.array([prob.kappa - prob.base_cost + prob.btol]))
    a_ub = np.vstack(rows_a)
    b_ub = np.concatenate(rows_b)
    cost = np.r_[-prob.g / n, np.zeros(d + 1)]

    sub = _Problem(prob.g, u, prob.c1, prob.c0, prob.kappa)
    sel = _Selector(sub)
    _constants(sel, d)

    def relax(lb, ub):
        bounds = [(lb[i], ub[i]) for i in range(n)] + [(-1.0, 1.0)] * (d + 1)
        res = optimize.linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        return res if res.status == 0 else None

    lb0, ub0 = np.zeros(n), np.ones(n)
    root = relax(lb0, ub0)
    nodes = 0
    status = "optimal"
    heap = []
    if root is not None:
        heapq.heappush(heap, (root.fun, 0, lb0, ub0, root))
    counter = 1
    while heap:
        bound, _, lb, ub, res = heapq.heappop(heap)
        incumbent = sel.best[0] if sel.best is not None else -math.inf
        if -bound <= incumbent + sub.tol:
            continue
        nodes += 1
        if nodes > node_limit:
            status = "node_limit"
            break
        pi = res.x[:n]
        coef = res.x[n:]
        if np.max(np.abs(coef)) > 0:
            sel.offer(coef)  # rounding heuristic: the LP's own hyperplane
        frac = np.abs(pi - np.round(pi))
        j = int(np.argmax(frac))
        if frac[j] <= 1e-9:
            # LP vertices can leave points exactly on the hyperplane; rebuild the rule from pi
            target = np.round(pi)
            c2 = _separate(u, target)
            if c2 is not None:
                sel.offer(c2, target)
            continue
        for val in (1.0, 0.0):
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[j] = ub2[j] = val
            child = relax(lb2, ub2)
            if child is not None and -child.fun > (sel.best[0] if sel.best else -math.inf) + sub.tol:
                heapq.heappush(heap, (child.fun, counter, lb2, ub2, child))
                counter += 1
    if sel.best is None:
        return None, None, {"nodes": nodes, "status": status}
    coef = _normalize(_to_original(np.asarray(sel.best[2]), mid, half))
    labels = (coef[0] + prob.v @ coef[1:] >= 0).astype(float)
    if not np.array_equal(labels, sel.best[3]):
        c2 = _separate(prob.v, sel.best[3])
        if c2 is not None:
            coef, labels = _normalize(c2), sel.best[3]
    return coef, labels, {"nodes": nodes, "status": status}


# ---------------------------------------------------------------------------
# threshold allocations
# ---------------------------------------------------------------------------


def _solve_ta(prob):
    """Exhaustive search over boxes ``sigma * v <= vbar`` using cumulative sums on ranks."""
    n, d = prob.v.shape
    if d > MAX_ENUM_DIM:
        raise ConfigurationError(f"threshold search supports d_v <= {MAX_ENUM_DIM}")
    best = None  # (welfare, count, signs, thresholds, labels)
    for signs in itertools.product((-1, 1), repeat=d):
        w = prob.v * np.asarray(signs, float)
        levels = [np.unique(w[:, k]) for k in range(d)]
        ranks = [np.searchsorted(levels[k], w[:, k]) + 1 for k in range(d)]  # 1..m_k; 0 = -inf
        shape = tuple(len(l) + 1 for l in levels)
        acc_g = np.zeros(shape)
        acc_c = np.zeros(shape)
        acc_k = np.zeros(shape)
        idx = tuple(ranks)
        np.add.at(acc_g, idx, prob.g)
        np.add.at(acc_c, idx, prob.dc)
        np.add.at(acc_k, idx, 1.0)
        for ax in range(d):
            acc_g = np.cumsum(acc_g, axis=ax)
            acc_c = np.cumsum(acc_c, axis=ax)
            acc_k = np.cumsum(acc_k, axis=ax)
        val = acc_g / n
        if prob.budgeted:
            val = np.where(prob.base_cost + acc_c / n <= prob.kappa + prob.btol, val, -np.inf)
        m = val.max()
        if not math.isfinite(m):
            continue
        cand = np.argwhere(val >= m - prob.tol)
        cnt = acc_k[tuple(cand.T)]
        cand = cand[cnt == cnt.min()]
        thr = [tuple(-math.inf if r == 0 else float(levels[k][r - 1]) for k, r in enumerate(c)) for c in cand]
        th = min(thr)
        labels = np.all(w <= np.asarray(th), axis=1).astype(float)
        key = (prob.value(labels), int(labels.sum()), tuple(signs), th, labels)
        if best is None or key[0] > best[0] + prob.tol or (
                abs(key[0] - best[0]) <= prob.tol and (key[1], key[2], key[3]) < (best[1], best[2], best[3])):
            best = key
    return best


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------


def _finish(kind, coef, labels, prob, pair, selector, diagnostics):
    return PolicySpec(kind, tuple(float(c) for c in coef), pair=pair, selector=selector,
                      welfare=prob.value(labels), budget=prob.budget(labels),
                      share=float(labels.mean()), diagnostics=diagnostics)


def _solve(prob, class_kind, backend, pair, selector, eps_tie=EPS_TIE, delta_margin=DELTA_MARGIN,
           node_limit=NODE_LIMIT, swept=None):
    if class_kind == "ta":
        best = _solve_ta(prob)
        if best is None:
            return empty_policy(pair, selector, "no threshold rule satisfies the budget")
        return PolicySpec("ta", thresholds=best[3], signs=best[2], pair=pair, selector=selector,
                          welfare=prob.value(best[4]), budget=prob.budget(best[4]),
                          share=float(best[4].mean()), diagnostics={"backend": "exhaustive"})
    if class_kind != "les":
        raise ConfigurationError(f"unknown policy class {class_kind!r}")
    if backend == "enumerate":
        coef, labels = _solve_les_enumerate(prob, eps_tie, swept)
        diag = {"backend": "enumerate"}
    elif backend == "milp":
        coef, labels, diag = _milp_les(prob, delta_margin, node_limit)
        diag["backend"] = "milp"
    else:
        raise ConfigurationError(f"unknown backend {backend!r}")
    if coef is None:
        return empty_policy(pair, selector, "no candidate rule satisfies the budget")
    return _finish("les", coef, labels, prob, pair, selector, diag)


def _unpack(gains):
    pair = getattr(gains, "pair", None) or ManipulationPair()
    selector = getattr(gains, "selector", None) or ()
    return pair, tuple(selector) if not callable(selector) else selector


def solve_fewm(gains, class_kind="les", backend="enumerate", **options):
    """Maximize ``mean(pi * g)`` over the class (no budget)."""
    pair, selector = _unpack(gains)
    prob = _Problem(gains.g, gains.v, gains.c1, gains.c0)
    return _solve(prob, class_kind, backend, pair, selector, **options)


def solve_bewm(gains, class_kind="les", kappa=math.inf, backend="enumerate", c1=None, c0=None,
               **options):
    """Maximize ``mean(pi * g)`` subject to ``mean(pi c1 + (1 - pi) c0) <= kappa``.

    Costs default to ``gains.c1`` / ``gains.c0``.  Returns the empty sentinel
    when no rule in the class is feasible.
    """
    pair, selector = _unpack(gains)
    prob = _Problem(gains.g, gains.v, gains.c1 if c1 is None else c1,
                    gains.c0 if c0 is None else c0, kappa)
    return _solve(prob, class_kind, backend, pair, selector, **options)


def solve_fewm_bewm(gains, kappa, class_kind="les", backend="enumerate", **options):
    """``(solve_fewm(gains), solve_bewm(gains, kappa=kappa))`` sharing one search.

    With two features and the enumeration backend a single angular sweep
    yields both optima; otherwise the two solvers run separately.
    """
    pair, selector = _unpack(gains)
    free = _Problem(gains.g, gains.v, gains.c1, gains.c0)
    capped = _Problem(gains.g, gains.v, gains.c1, gains.c0, kappa)
    n, d = free.v.shape
    if class_kind == "les" and backend == "enumerate" and d == 2 and n > 12:
        u = _rescale(capped.v)[0]
        sw_free, sw_cap = _sweep_2d(_Problem(gains.g, u, gains.c1, gains.c0, kappa))
        return (_solve(free, class_kind, backend, pair, selector, swept=sw_free, **options),
                _solve(capped, class_kind, backend, pair, selector, swept=sw_cap, **options))
    return (_solve(free, class_kind, backend, pair, selector, **options),
            _solve(capped, class_kind, backend, pair, selector, **options))


def solve_dr_ewm(dr, features, class_kind="les", backend="enumerate", pair=None, selector=(),
                 **options):
    """Maximize ``mean(pi * Gamma)`` with the doubly robust scores in place of gains."""
    prob = _Problem(dr.gamma, features)
    return _solve(prob, class_kind, backend, pair or ManipulationPair(), tuple(selector), **options)


def solve_ta(gains, class_kind="ta", kappa=math.inf):
    """Exact threshold-allocation search (thresholds at observed values or -inf)."""
    if class_kind != "ta":
        raise ConfigurationError("solve_ta only handles class_kind='ta'")
    pair, selector = _unpack(gains)
    prob = _Problem(gains.g, gains.v, gains.c1, gains.c0, kappa)
    return _solve(prob, "ta", None, pair, selector)
