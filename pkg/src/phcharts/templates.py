"""
Stable templates of a chart and the polynomial-versus-rough dichotomy.

At level ell the chart pullback of the stable leaf through iota(t, 0, 0),
parametrised by its third coordinate s, reads

    (t + a(t) s + ..., T(t) s^{ell+1} + b(t) s^{ell+2} + ..., s),

and t -> T(t) is the template.  Invariance of the stable foliation gives the
transformation law

    T(l1 t) = l2 / l3^{ell+1} T(t) + d3^{ell+1} F2(t, 0, 0) / ((ell+1)! l3^{ell+1}),

so templates at the fixed point are pulled back from finer and finer scales
and are either polynomial of bounded degree or fail to be smooth.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericalError
from .jets import Jet, jet_compose, jet_inverse, series_reversion
from .nform import stable_leaf

__all__ = ["Template", "DichotomyVerdict", "extract_template", "template_law_residual",
           "template_pullback", "law_coefficients", "degree_bound", "classify_template",
           "whitney_probe", "series_template"]


@dataclass
class Template:
    """
    Sampled template with an on-demand evaluator.

    Attributes
    ----------
    ell : int
    t : ndarray
        Grid.
    values : ndarray
        T(t) on the grid.
    a, b : ndarray
        Coefficients of s in the first component and of s^{ell+2} in the
        second component of the leaf pullbacks.
    bound : ndarray
        c(t) = max over the s-grid of |a(t, s)| and |b(t, s)|, where a(t, s),
        b(t, s) are the exact remainder quotients of the leaf pullback.
    lower_coeffs : ndarray, shape (n_t, ell)
        Coefficients of s^1 .. s^ell of the second component (should vanish).
    evaluator : callable or None
        t -> T(t) at arbitrary parameters.
    poly_coeffs : ndarray or None
        Set by :func:`classify_template` when the polynomial test passes.
    """
    ell: int
    t: np.ndarray
    values: np.ndarray
    a: np.ndarray = None
    b: np.ndarray = None
    bound: np.ndarray = None
    lower_coeffs: np.ndarray = None
    reconstruction: float = 0.0
    evaluator: object = None
    poly_coeffs: np.ndarray = None
    is_polynomial: bool = False
    base: tuple = (0.0, 0.0, 0.0)

    def __call__(self, t):
        if self.evaluator is None:
            raise ContractError("template has no evaluator; only grid samples are available")
        return self.evaluator(np.asarray(t, dtype=float))

    @property
    def sup(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def to_rows(self):
        fit = np.zeros_like(self.values)
        if self.poly_coeffs is not None:
            fit = self.values - np.polyval(self.poly_coeffs[::-1], self.t)
        return [{"t": float(t), "T": float(v), "a": float(a), "b": float(b), "fit_residual": float(r)}
                for t, v, a, b, r in zip(self.t, self.values, self.a, self.b, fit)]


def _pullback_jets(chart, ell, t, order, depth=60):
    """Leaf pullbacks as univariate jets in s, batched over t."""
    t = np.asarray(t, dtype=float)
    model = chart.model
    zeros = np.zeros_like(t)
    base = np.stack([t, zeros, zeros], axis=-1)
    P = chart(base)
    if hasattr(model, "axis_stable_leaf"):
        leaf = model.axis_stable_leaf(P, order)
    else:
        leaf = stable_leaf(model, P, order, depth=depth, check=False)
    # local inverse of iota at (t, 0, 0)
    d = [Jet.variable(i, 3, order) for i in range(3)]
    loc = [jet_compose(c, [d[0] + t, d[1] + zeros, d[2] + zeros]) for c in chart.iota]
    loc = [c.with_order(order) if c.order > order else c for c in loc]
    G = jet_inverse(loc)
    disp = [leaf.jets[i] - P[..., i] for i in range(3)]
    pulled = [jet_compose(g, disp) for g in G]
    # reparametrise by the third coordinate
    x3 = pulled[2]
    if np.any(np.abs(x3.coeffs[..., 1]) < 1e-12):
        raise NumericalError("stable leaf is tangent to the chart's centre-unstable plane")
    rev = series_reversion(x3)
    comps = [jet_compose(c, [rev]) for c in pulled]
    comps[0] = comps[0] + t
    return comps


def extract_template(chart, ell, t, s_grid=None, check=True, tol=1e-7, depth=60):
    """
    Read the level-``ell`` template of ``chart`` on the grid ``t``.

    Parameters
    ----------
    chart : Chart
    ell : int
    t : array_like
        Unstable-axis parameters.
    s_grid : array_like, optional
        Stable parameters used for the companion bounds and the
        reconstruction check (default: 9 points in [-0.1, 0.1]).
    check : bool
        Raise if some s^j coefficient, 1 <= j <= ell, of the second component
        exceeds ``tol`` (the chart is not good enough for this level).

    Returns
    -------
    Template
    """
    t = np.asarray(t, dtype=float)
    s_grid = np.linspace(-0.1, 0.1, 9) if s_grid is None else np.asarray(s_grid, dtype=float)
    order = ell + 3
    comps = _pullback_jets(chart, ell, t, order, depth)
    c1, c2 = comps[0].coeffs, comps[1].coeffs
    T = c2[..., ell + 1]
    low = c2[..., 1:ell + 1]
    if check and low.size and np.max(np.abs(low)) > tol:
        i = int(np.unravel_index(np.argmax(np.abs(low)), low.shape)[0])
        raise NumericalError(
            f"leaf pullback has s^j terms with j <= {ell} of size {np.max(np.abs(low)):.3g} "
            f"at t={t[i]:.4g}: chart is not good at level {ell}", t=float(t[i]))
    a, b = c1[..., 1], c2[..., ell + 2]
    # companion remainders from the full leaf (sampled, not truncated)
    s = s_grid[s_grid != 0]
    x1 = _eval(comps[0], s)
    x2 = _eval(comps[1], s)
    a_ts = (x1 - t[:, None]) / s
    b_ts = (x2 - T[:, None] * s ** (ell + 1)) / s ** (ell + 2)
    bound = np.maximum(np.max(np.abs(a_ts), axis=1), np.max(np.abs(b_ts), axis=1))
    recon = np.abs(np.stack([x1 - (t[:, None] + a[:, None] * s),
                             x2 - (T[:, None] * s ** (ell + 1) + b[:, None] * s ** (ell + 2))]))
    rel = float(np.max(recon[1] / np.abs(s) ** (ell + 1)))

    def evaluator(tt, _chart=chart, _ell=ell):
        tt = np.asarray(tt, dtype=float)
        flat = tt.ravel()
        out = _pullback_jets(_chart, _ell, flat, order, depth)[1].coeffs[..., _ell + 1]
        return out.reshape(tt.shape)

    return Template(ell, t, T, a, b, bound, low, rel, evaluator)


def _eval(j, s):
    c = j.coeffs
    out = np.zeros(c.shape[:-1] + s.shape)
    for k in range(c.shape[-1] - 1, -1, -1):
        out = out * s + c[..., k, None]
    return out


def series_template(model, t, tol=1e-14):
    """
    Level-0 template of the identity chart summed from the law,
    T(t) = -(1/l3) sum_{k >= 0} A^{-(k+1)} eps g(l1^k t), A = l2 / l3.
    Used as an oracle.
    """
    t = np.asarray(t, dtype=float)
    A = model.l2 / model.l3
    out = np.zeros_like(t)
    for k in range(400):
        term = -model.eps * model._g(model.l1 ** k * t) * A ** -(k + 1) / model.l3
        out = out + term
        if A ** -(k + 1) * max(1.0, float(np.max(np.abs(model.l1 ** k * t)))) < tol \
                or (model.name == "C" and A ** -(k + 1) < tol):
            break
    return out


def law_coefficients(chart, ell):
    """
    (A, P) with T(l1 t) = A T(t) + P(t): A = l2 / l3^{ell+1} and P as
    polynomial coefficients read from the origin jet of F.
    """
    m = chart.model
    A = m.l2 / m.l3 ** (ell + 1)
    F2 = chart.F_origin()[1]
    K = chart.order
    P = np.array([F2.coeff((k, 0, ell + 1)) for k in range(K - ell)])
    # the coefficient of t^k s^{ell+1} already carries the 1/(ell+1)! of d3^{ell+1}
    return A, P / m.l3 ** (ell + 1)


def template_law_residual(template, chart, ell=None):
    """
    sup over the grid of |A T(t) + P(t) - T(l1 t)| with P from d3^{ell+1} F2 (t, 0, 0).
    """
    ell = template.ell if ell is None else ell
    m = chart.model
    t = template.t
    F = chart.F_at(t, ell + 1)
    dF = F[1].coeff((0, 0, ell + 1))  # = d3^{ell+1} F2 / (ell+1)!
    lhs = m.l2 / m.l3 ** (ell + 1) * template.values + dF / m.l3 ** (ell + 1)
    return float(np.max(np.abs(lhs - template(m.l1 * t))))


@dataclass
class Pullback:
    """T(t) = alpha_n T(beta_n t) + Q_n(t) on the template grid."""
    n: int
    alpha: float
    beta: float
    rescaled: np.ndarray
    Q_coeffs: np.ndarray
    Q_values: np.ndarray
    residual: float


def template_pullback(template, n, A, P, lam1):
    """
    n-step pullback of the template law.

    With T(l1 t) = A T(t) + P(t) (P polynomial), iterating gives
    T(t) = A^n T(t / l1^n) + Q(t), Q(t) = sum_{j=1}^n A^{j-1} P(t / l1^j).

    Parameters
    ----------
    template : Template
        Must have an evaluator (T is needed at t / l1^n).
    n : int
    A : float
    P : array_like
        Polynomial coefficients of P.
    lam1 : float

    Returns
    -------
    Pullback
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    P = np.asarray(P, dtype=float)
    k = np.arange(P.size)
    Q = np.zeros_like(P)
    for j in range(1, n + 1):
        Q = Q + A ** (j - 1) * P * lam1 ** (-j * k)
    t = template.t
    beta = lam1 ** -n
    rescaled = A ** n * (template(beta * t) if n else template.values)
    Qv = np.polyval(Q[::-1], t) if Q.size else np.zeros_like(t)
    res = float(np.max(np.abs(rescaled + Qv - template.values)))
    return Pullback(n, A ** n, beta, rescaled, Q, Qv, res)


def degree_bound(chi1, chi2, chi3, ell=0, eps=0.01):
    """
    Smallest integer d with d > (chi2 - (ell+1) chi3 + (ell+2) eps) / (chi1 - eps).

    Returns (d, x) with x the right-hand side.
    """
    if chi1 - eps <= 0:
        raise ValueError("eps must be smaller than chi1")
    x = (chi2 - (ell + 1) * chi3 + (ell + 2) * eps) / (chi1 - eps)
    return int(math.floor(x)) + 1, x


@dataclass
class DichotomyVerdict:
    degree: int
    residual: float
    threshold: float
    verdict: str
    coeffs: np.ndarray
    probe: dict = field(default_factory=dict)

    @property
    def polynomial(self):
        return self.verdict.startswith("polynomial")

    def to_dict(self):
        return {"degree": self.degree, "residual": self.residual, "threshold": self.threshold,
                "verdict": self.verdict, "coeffs": np.asarray(self.coeffs).tolist(),
                "probe": self.probe}


def _minimax_refine(V, v, c):
    """One exchange pass: re-solve on the d+2 extremal points with equioscillation."""
    m = V.shape[1]
    err = V @ c - v
    idx = np.sort(np.argsort(-np.abs(err))[:m + 1])
    if idx.size < m + 1:
        return c
    signs = (-1.0) ** np.arange(m + 1)
    M = np.column_stack([V[idx], signs])
    try:
        sol = np.linalg.solve(M, v[idx])
    except np.linalg.LinAlgError:
        return c
    c2 = sol[:m]
    return c2 if np.max(np.abs(V @ c2 - v)) < np.max(np.abs(err)) else c


def whitney_probe(fn, m, t_range=(-0.5, 0.5), j_range=(3, 16), n_base=64, noise=1e-15):
    """
    Growth of m-th order divided differences across dyadic scales.

    For h = 2^{-j}, D_m(h) = sup over base points of |Delta_h^m T| / h^m.
    Scales where the roundoff floor 2^m noise / h^m exceeds 10% of D_m are
    dropped.

    Returns
    -------
    dict with the table and two growth summaries: ``exponent`` (slope of
    log2 D against j, power-law growth) and ``log_slope`` (slope of D against
    j, logarithmic growth).
    """
    lo, hi = t_range
    table = []
    for j in range(j_range[0], j_range[1] + 1):
        h = 2.0 ** -j
        x0 = np.linspace(lo, hi - m * h, n_base)
        pts = x0[:, None] + h * np.arange(m + 1)
        vals = fn(pts)
        coef = np.array([(-1) ** (m - i) * math.comb(m, i) for i in range(m + 1)])
        D = float(np.max(np.abs(vals @ coef))) / h ** m
        floor = 2.0 ** m * noise * max(1.0, float(np.max(np.abs(vals)))) / h ** m
        if floor > 0.1 * max(D, 1e-300) and table:
            break
        table.append({"j": j, "h": h, "D": D})
    js = np.array([r["j"] for r in table], dtype=float)
    Ds = np.array([r["D"] for r in table])
    if len(table) >= 2 and np.all(Ds > 0):
        exponent = float(np.polyfit(js, np.log2(Ds), 1)[0])
        log_slope = float(np.polyfit(js, Ds, 1)[0])
    else:
        exponent = log_slope = 0.0
    growth = "bounded"
    if len(table) >= 2 and Ds[-1] > 1.5 * Ds[0] + 1e-12:
        growth = "power" if exponent > 0.25 else "logarithmic"
    return {"order": m, "table": table, "exponent": exponent, "log_slope": log_slope,
            "growth": growth}


def classify_template(template, d, rel_tol=1e-6, probe_order=None, probe=True):
    """
    Polynomial-of-degree-d test with a Whitney-smoothness probe on failure.

    Returns
    -------
    DichotomyVerdict
        ``polynomial(d)`` when the discrete sup residual of the best fit is at
        most rel_tol (1 + ||T||); otherwise ``non-polynomial``.  A passing
        template gets ``poly_coeffs``/``is_polynomial`` set in place.

    Raises
    ------
    ValueError
        If the grid has fewer than d+1 distinct points.
    """
    t = np.asarray(template.t, dtype=float)
    if np.unique(t).size < d + 1:
        raise ValueError(f"grid has {np.unique(t).size} distinct points; a degree-{d} fit needs "
                         f"at least {d + 1} (the grid must spread over more than d+1 points)")
    v = np.asarray(template.values, dtype=float)
    V = np.vander(t, d + 1, increasing=True)
    c, *_ = np.linalg.lstsq(V, v, rcond=None)
    c = _minimax_refine(V, v, c)
    res = float(np.max(np.abs(V @ c - v)))
    thr = rel_tol * (1.0 + float(np.max(np.abs(v))))
    info = {}
    if res <= thr:
        # drop coefficients that are roundoff
        c = np.where(np.abs(c) < 1e-12, 0.0, c)
        template.poly_coeffs = c
        template.is_polynomial = True
        verdict = f"polynomial({d})"
    else:
        verdict = "non-polynomial"
        if probe and template.evaluator is not None:
            lo, hi = float(t.min()), float(t.max())
            info = whitney_probe(template, probe_order or d + 2, (lo, hi))
            if probe_order is None and d + 2 != 2:
                info["second_order"] = whitney_probe(template, 2, (lo, hi))
    return DichotomyVerdict(d, res, thr, verdict, c, info)
