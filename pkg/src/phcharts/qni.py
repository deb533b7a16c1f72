"""
Empirical quantitative non-integrability (QNI) diagnostics at the fixed point.

For scales (k1, k2) the scan samples y on the stable leaf piece
W^{3,k2}_1(0) and z on the unstable piece W^{1,k1}_1(0), uniformly in the
normal-form parameters, and measures d(W^1_1(y), W^3_1(z)).  QNI asks for a
bound d > C exp(-alpha k) on most pairs; the scan reports the nu-quantile
thresholds per scale, the fitted exponent and a verdict.

Unstable leaves through stable-axis points come from the analytic brush
(:func:`phcharts.nform.hopf_brush`), stable leaves through unstable-axis
points from the leaf recursion.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .nform import LeafParam, brush_leaf, hopf_brush, stable_leaf, unstable_leaf
from .jets import Jet

__all__ = ["leaf_distance", "QniReport", "qni_scan", "qni_symmetry_check", "symmetry_counts",
           "estimate_holonomy_holder", "predicted_alpha", "axis_leaves"]


def _eval(leaf, p):
    """Points and first two derivatives of a (batched) leaf at parameters p."""
    return leaf(p), leaf.derivative(p, 1), leaf.derivative(p, 2)


def _reshape_leaf(leaf, shape):
    jets = [Jet(j.coeffs.reshape(shape + j.coeffs.shape[-1:]), 1, j.order) for j in leaf.jets]
    return LeafParam(np.asarray(leaf.base).reshape(shape + (3,)), leaf.index, jets,
                     np.asarray(leaf.lam).reshape(shape), leaf.radius, leaf.meta)


def leaf_distance(A, B, ra=1.0, rb=1.0, n_grid=33, tol=1e-12, maxit=30):
    """
    Minimal Euclidean distance between two parametrised curves.

    A and B are LeafParam-like (callable, with ``derivative``); their batch
    shapes broadcast, so many pairs are handled at once.  A coarse
    ``n_grid`` x ``n_grid`` search over [-ra, ra] x [-rb, rb] is refined by
    two-variable Newton on the squared distance.

    Returns
    -------
    dist, pa, pb : ndarray
        Distance and argmin parameters (batch shape).
    fallback : ndarray of bool
        True where Newton left the domain or increased the distance, in which
        case the grid minimum is returned.
    """
    ga = np.linspace(-ra, ra, n_grid)
    gb = np.linspace(-rb, rb, n_grid)
    Pa = _grid_eval(A, ga)
    Pb = _grid_eval(B, gb)
    # Pa: batch + (n,) + (3,), Pb likewise; pairwise over the two grids
    diff = Pa[..., :, None, :] - Pb[..., None, :, :]
    d2 = np.sum(diff ** 2, axis=-1)
    flat = d2.reshape(d2.shape[:-2] + (-1,))
    idx = np.argmin(flat, axis=-1)
    ia, ib = np.unravel_index(idx, (n_grid, n_grid))
    pa, pb = ga[ia], gb[ib]
    grid_d = np.sqrt(np.take_along_axis(flat, idx[..., None], -1)[..., 0])
    a, b = pa.astype(float), pb.astype(float)
    for _ in range(maxit):
        xa, da, dda = _eval(A, a)
        xb, db, ddb = _eval(B, b)
        r = xa - xb
        g1 = np.sum(da * r, -1)
        g2 = -np.sum(db * r, -1)
        h11 = np.sum(da * da, -1) + np.sum(dda * r, -1)
        h22 = np.sum(db * db, -1) - np.sum(ddb * r, -1)
        h12 = -np.sum(da * db, -1)
        det = h11 * h22 - h12 ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            sa = np.where(det != 0, (h22 * g1 - h12 * g2) / det, 0.0)
            sb = np.where(det != 0, (h11 * g2 - h12 * g1) / det, 0.0)
        a, b = a - sa, b - sb
        if np.all(np.abs(sa) + np.abs(sb) <= tol):
            break
    xa, xb = A(a), B(b)
    dist = np.linalg.norm(xa - xb, axis=-1)
    bad = ~np.isfinite(dist) | (np.abs(a) > ra * (1 + 1e-9)) | (np.abs(b) > rb * (1 + 1e-9)) \
        | (dist > grid_d * (1 + 1e-12) + 1e-300)
    dist = np.where(bad, grid_d, dist)
    a = np.where(bad, pa, a)
    b = np.where(bad, pb, b)
    return dist, a, b, bad


def _grid_eval(leaf, g):
    # evaluate a batched leaf on a parameter grid: batch + (n,) + (3,)
    batch = np.shape(leaf.base)[:-1]
    p = np.broadcast_to(g, batch + g.shape)
    return leaf(p)


def axis_leaves(model, s, t, order=12, brush=None):
    """
    W^1 leaves through (0, 0, s) and W^3 leaves through (t, 0, 0), shaped for
    pairwise evaluation: unstable leaves batched as (n_s, 1), stable ones as
    (1, n_t).
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    U = brush_leaf(model, s, order, brush)
    z = np.stack([t, 0 * t, 0 * t], axis=-1)
    S = stable_leaf(model, z, order, check=False)
    return _reshape_leaf(U, (s.size, 1)), _reshape_leaf(S, (1, t.size))


def predicted_alpha(model, V):
    """
    Exponent predicted by the toy-case estimate d ~ |s| |T(t) - Q_hat(t)|.

    The unstable brush and the stable leaves agree to first order in t, and
    their difference h satisfies h(l1 t) = (l2 / l3) h(t), so
    h(t) ~ t^{log(l2/l3)/log l1}.  With |t| ~ l1^{-k1} and |s| ~ l3^{k2},
    k2 = V k1, the distance decays like exp(-alpha k1) with
    alpha = log(l2/l3) + V log(1/l3).
    """
    return math.log(model.l2 / model.l3) + V * math.log(1.0 / model.l3)


@dataclass
class QniReport:
    """
    Result of a QNI scan.

    ``thresholds`` holds the per-scale nu-quantile distance Q(k1); ``alpha``
    and ``C`` satisfy C exp(-alpha k1) <= Q(k1) on every scanned scale;
    ``fractions`` the share of y whose pass rate is at least 1 - nu at that
    threshold.
    """
    V: float
    nu: float
    scales: list
    thresholds: list
    fractions: list
    alpha: float
    C: float
    verdict: str
    inverse: bool = False
    samples: list = field(default_factory=list)
    matrices: list = field(default_factory=list)
    predicted_alpha: float = None
    notes: str = ""

    def to_dict(self):
        return {"V": self.V, "nu": self.nu, "scales": self.scales,
                "thresholds": self.thresholds, "fractions": self.fractions,
                "alpha": self.alpha, "C": self.C, "verdict": self.verdict,
                "inverse": self.inverse, "predicted_alpha": self.predicted_alpha,
                "notes": self.notes}


def _pairwise(U, S, workers=None):
    """leaf_distance over all (row, column) pairs, rows split across workers."""
    if not workers or workers <= 1:
        return leaf_distance(U, S)
    from concurrent.futures import ThreadPoolExecutor
    n = np.shape(U.base)[0]
    chunks = np.array_split(np.arange(n), min(workers, n))
    parts = [_reshape_leaf(U[c.tolist()], (c.size, 1)) for c in chunks]
    with ThreadPoolExecutor(workers) as ex:
        res = list(ex.map(lambda u: leaf_distance(u, S), parts))
    # concatenation in chunk order keeps the reduction deterministic
    return tuple(np.concatenate([r[i] for r in res], axis=0) for i in range(4))


def _midpoints(half, n):
    return (np.arange(n) + 0.5) / n * 2 * half - half


def qni_scan(model, V=1.0, kmin=1, kmax=5, nu=0.1, samples=24, order=12, inverse=False,
             floor=1e-13, workers=None):
    """
    Scan leaf-pair distances across scales and fit the QNI exponent.

    Parameters
    ----------
    model : ModelMap
    V : float
        Target ratio k2 / k1; pairs (k1, round(V k1)) inside the window
        (2V/3, 3V/2) are used.
    kmin, kmax : int
        Range of k1.
    nu : float
        Allowed failure fraction.
    samples : int
        Points per leaf piece (>= 16).
    inverse : bool
        Scan f^{-1}: the roles of the stable and unstable leaves swap.
    floor : float
        Distances at or below this level count as numerically zero.

    Returns
    -------
    QniReport
    """
    if samples < 16:
        raise ValidationError("qni_scan needs at least 16 samples per scale")
    if not 0 < nu < 1:
        raise ValidationError("nu must lie in (0, 1)")
    brush, _ = hopf_brush(model, order)
    lam1, lam3 = (1.0 / model.l3, 1.0 / model.l1) if inverse else (model.l1, model.l3)
    scales, thr, fracs, mats, raw = [], [], [], [], []
    for k1 in range(kmin, kmax + 1):
        k2 = int(round(V * k1))
        if k2 < 1 or not (2 * V / 3 < k2 / k1 < 1.5 * V):
            continue
        y_half, z_half = lam3 ** k2, lam1 ** -k1
        py, pz = _midpoints(y_half, samples), _midpoints(z_half, samples)
        if not inverse:
            # y = Phi3(s) on the stable axis, z = Phi1(t) on the unstable axis
            U, S = axis_leaves(model, py, pz, order, brush)
            D, pa, pb, fb = _pairwise(U, S, workers)
            P_hat = U(pa)[..., 2]
            Q_hat = U(pa)[..., 1]
        else:
            # for f^{-1}: y on the unstable axis (its stable leaf is W^1 of f)
            U, S = axis_leaves(model, pz, py, order, brush)
            D, pa, pb, fb = _pairwise(U, S, workers)
            D, pa, fb = D.T, pa.T, fb.T
            P_hat = U(pa.T)[..., 2].T
            Q_hat = U(pa.T)[..., 1].T
        # per-y nu-quantile over z, then nu-quantile over y
        row_q = np.quantile(D, nu, axis=1)
        Qk = float(np.quantile(row_q, nu))
        scales.append([k1, k2])
        thr.append(Qk)
        mats.append(D)
        for i in range(samples):
            for j in range(samples):
                raw.append({"k1": k1, "k2": k2, "s": float(py[i]), "t": float(pz[j]),
                            "distance": float(D[i, j]),
                            "branch": "P" if abs(P_hat[i, j]) >= abs(Q_hat[i, j]) else "Q",
                            "fallback": bool(fb[i, j])})
    if len(scales) < 2:
        raise ValidationError("fewer than two admissible (k1, k2) scales in the V-window")
    k = np.array([s[0] for s in scales], dtype=float)
    Q = np.array(thr)
    notes = ""
    if np.any(Q <= floor):
        verdict = "QNI-negative"
        alpha, C = math.inf, 0.0
        notes = f"quantile distance collapses to <= {floor:g} (numerically integrable)"
    else:
        logQ = np.log(Q)
        alpha = float(-np.polyfit(k, logQ, 1)[0])
        C = float(np.min(Q * np.exp(alpha * k)))
        accel = np.diff(logQ, 2) if Q.size >= 3 else np.zeros(0)
        if accel.size and np.all(accel < -1.0):
            verdict = "QNI-negative"
            notes = "log-distance decays faster than linearly in k (super-exponential collapse)"
        else:
            verdict = "QNI-positive"
    fr = []
    for (k1, _), D in zip(scales, mats):
        bound = C * math.exp(-alpha * k1) if math.isfinite(alpha) else 0.0
        rows = np.mean(D > bound * (1 - 1e-12), axis=1) if bound > 0 else np.mean(D > floor, axis=1)
        fr.append(float(np.mean(rows >= 1 - nu)))
    pred = predicted_alpha(model, V) if not inverse else None
    return QniReport(V, nu, scales, thr, fr, alpha, C, verdict, inverse, raw,
                     [m.tolist() for m in mats], pred, notes)


def symmetry_counts(M, nu):
    """
    Fubini check on a 0/1 pass matrix (rows y, columns z).

    If mean(M) >= (1 - nu)^2 then, by Markov's inequality, the fraction of
    columns with pass rate >= 1 - sqrt(nu) is at least 1 - 2 sqrt(nu).

    Returns (holds, info).
    """
    M = np.asarray(M, dtype=bool)
    mean = float(M.mean())
    col = M.mean(axis=0)
    frac = float(np.mean(col >= 1 - math.sqrt(nu)))
    premise = mean >= (1 - nu) ** 2
    holds = (not premise) or frac >= 1 - 2 * math.sqrt(nu)
    return holds, {"mean": mean, "premise": premise, "column_fraction": frac,
                   "bound": 1 - 2 * math.sqrt(nu)}


def qni_symmetry_check(report_f, report_finv, nu=None):
    """
    Check the transposition bound on both reports' pass matrices and that
    the forward and inverse scans reach the same verdict.
    """
    nu = report_f.nu if nu is None else nu
    details = []
    ok = True
    for rep in (report_f, report_finv):
        for (k1, _), D in zip(rep.scales, rep.matrices):
            D = np.asarray(D)
            bound = rep.C * math.exp(-rep.alpha * k1) if math.isfinite(rep.alpha) else 0.0
            holds, info = symmetry_counts(D > bound, nu)
            info.update({"inverse": rep.inverse, "k1": k1})
            details.append(info)
            ok = ok and holds
    same = report_f.verdict == report_finv.verdict
    return ok and same, {"counts": details, "same_verdict": same}


def estimate_holonomy_holder(model, chart=None, s_range=(1e-3, 1e-1), t_range=(-0.5, 0.5),
                             n_s=9, n_t=41, order=12):
    """
    Hoelder exponents of the unstable holonomy along the stable axis.

    The W^1 leaf through Phi3(s) is written in chart coordinates as
    (t', Q_hat(t'), P_hat(t')); the envelopes max / min over t' of
    |P_hat| + |Q_hat| are fitted against |s| on a log-log scale.

    Returns
    -------
    dict with gamma1, gamma2 (upper / lower envelope exponents), c1, c2 and
    the fit residuals.
    """
    lo, hi = s_range
    if lo < 1e-6 or hi / lo < 2 or n_s < 3:
        raise ValueError("s-range must lie above 1e-6 and span at least a factor 2 "
                         "with three or more samples")
    s = np.geomspace(lo, hi, n_s)
    brush, _ = hopf_brush(model, order)
    tp = np.linspace(*t_range, n_t)
    U = brush_leaf(model, s, order, brush)
    pts = _grid_eval(U, tp)
    if chart is not None:
        pts = chart.inverse_point(pts, pts)
    Qh, Ph = pts[..., 1], pts[..., 2]
    env = np.abs(Ph) + np.abs(Qh)
    up, dn = env.max(axis=1), env.min(axis=1)
    g1, l1 = np.polyfit(np.log(s), np.log(up), 1)
    g2, l2 = np.polyfit(np.log(s), np.log(dn), 1)
    r1 = float(np.max(np.abs(np.polyval([g1, l1], np.log(s)) - np.log(up))))
    r2 = float(np.max(np.abs(np.polyval([g2, l2], np.log(s)) - np.log(dn))))
    return {"gamma1": float(g1), "gamma2": float(g2), "c1": float(np.exp(l1)),
            "c2": float(np.exp(l2)), "residual1": r1, "residual2": r2}
