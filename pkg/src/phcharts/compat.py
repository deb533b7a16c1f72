"""
Compatibility of stable and unstable charts and joint-integrability surfaces.

The stable chart at the fixed point is the unstable-chart construction run
on the inverse map with the first and third coordinates swapped, then
mirrored back.  The transition psi = (iota')^{-1} o iota between the stable
chart iota and the unstable chart iota' is a polynomial jet; its second
component h2 on the plane {t2 = 0} measures how far the two charts are from
sharing a common invariant surface.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .charts import Chart, build_unstable_chart, improve_chart
from .errors import ContractError, NumericalError, ValidationError
from .jets import Jet, jet_compose, jet_inverse

__all__ = ["MirrorModel", "build_stable_chart", "raise_level", "CompatJets", "compat_jets",
           "transition_identity_error", "cutoff", "WhitneyExtension", "whitney_cross_extend",
           "JointSurface", "build_joint_surface", "tangency_order", "TangencyResult"]


def _swap(x):
    return [x[2], x[1], x[0]]


class MirrorModel:
    """
    The map P f^{-1} P with P swapping x1 and x3.

    Its unstable axis is the stable axis of ``model`` and vice versa, so the
    unstable-chart machinery applied to it yields stable charts of ``model``.
    """

    def __init__(self, model):
        self.base = model
        self.name = model.name + "~"
        self.l1, self.l2, self.l3 = 1.0 / model.l3, 1.0 / model.l2, 1.0 / model.l1
        self.eps = model.eps
        self.box = model.box

    @property
    def multipliers(self):
        return np.array([self.l1, self.l2, self.l3])

    @property
    def params(self):
        return {"mirror_of": self.base.name, **self.base.params}

    def key(self):
        return "mirror-" + self.base.key()

    def axis_stable_leaf(self, x, order):
        """
        Stable leaves through points (t, 0, 0) on the unstable axis.

        These are mirrored unstable leaves of the original map through its
        stable axis, read off the analytic brush.  The graph-transform
        recursion is not used here: along the mirrored orbit the leaf slopes
        grow faster than the recursion contracts.
        """
        from .nform import LeafParam, brush_leaf
        x = np.asarray(x, dtype=float)
        if np.max(np.abs(x[..., 1:])) > 1e-12:
            raise ValidationError("axis_stable_leaf needs points on the unstable axis")
        L = brush_leaf(self.base, x[..., 0], order)
        return LeafParam(x, 3, _swap(L.jets), 1.0 / np.asarray(L.lam),
                         meta={"source": "mirrored brush"})

    def forward(self, x):
        return _swap(self.base.inverse(_swap(x)))

    def inverse(self, y):
        return _swap(self.base.forward(_swap(y)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack(self.forward(np.moveaxis(x, -1, 0)), axis=-1)

    def inv(self, y):
        y = np.asarray(y, dtype=float)
        return np.stack(self.inverse(np.moveaxis(y, -1, 0)), axis=-1)

    def iterate(self, x, n):
        step = self.__call__ if n >= 0 else self.inv
        x = np.asarray(x, dtype=float)
        for _ in range(abs(int(n))):
            x = step(x)
        return x

    def __repr__(self):
        return f"MirrorModel({self.base!r})"


def raise_level(chart, level, grid=None, eps=0.01, tol=1e-7):
    """
    Improve ``chart`` until it is ``level``-good.

    Each step extracts the template, runs the polynomial test at the degree
    bound and shears by the template.

    Raises
    ------
    NumericalError
        If a template is not polynomial (the chart cannot be improved).
    """
    from .templates import classify_template, degree_bound, extract_template

    grid = np.linspace(-chart.radius, chart.radius, 41) if grid is None else np.asarray(grid)
    m = chart.model
    while chart.level < level:
        ell = chart.level
        T = extract_template(chart, ell, grid)
        d, _ = degree_bound(math.log(m.l1), math.log(m.l2), math.log(m.l3), ell, eps)
        v = classify_template(T, d, probe=False)
        if not v.polynomial:
            raise NumericalError(f"level-{ell} template is not polynomial of degree {d}; "
                                 f"chart stays at level {ell}", level=ell,
                                 residual=v.residual)
        chart = improve_chart(chart, T, grid, tol)
    return chart


def _mirror_chart(chart, model):
    x = [Jet.variable(i, 3, chart.order) for i in range(3)]
    iota = _swap([jet_compose(c, _swap(x)) for c in chart.iota])
    return Chart(iota, model, chart.level, chart.radius, chart.cocycle,
                 chart.history + ["mirrored from the inverse map"])


def build_stable_chart(model, level=0, order=10, radius=0.5, grid=None):
    """
    Stable chart of ``model`` at the fixed point, ``level``-good for f^{-1}.

    Built as the unstable chart of :class:`MirrorModel` and mirrored back, so
    iota(0, 0, t3) runs along the stable axis and iota(t1, 0, 0) along the
    unstable axis.
    """
    mm = MirrorModel(model)
    ch = build_unstable_chart(mm, order, radius, grid)
    if level > 0:
        ch = raise_level(ch, level, grid)
    return _mirror_chart(ch, model)


def _condition(chart):
    J = chart.jacobian(np.zeros(3))
    return float(np.linalg.cond(J))


@dataclass
class CompatJets:
    """
    Transition jets psi = (iota')^{-1} o iota restricted to {t2 = 0}.

    ``h`` holds the three components as bivariate jets in (t1, t3);
    ``partials[a, b]`` = d1^a d3^b h2(0, 0); ``index_set`` lists (a, b) with
    |partials| above ``threshold``.
    """
    h: list
    partials: np.ndarray
    index_set: list
    threshold: float
    compat_order: int
    order: int
    levels: tuple
    axis_error: float

    @property
    def empty(self):
        return not self.index_set

    def minimal_index(self, V):
        """K(V) = min over I_x of a + b V (inf when I_x is empty)."""
        if not self.index_set:
            return math.inf
        return min(a + b * V for a, b in self.index_set)

    def to_dict(self):
        n = self.order
        table = [{"a": a, "b": b, "value": float(self.partials[a, b])}
                 for a in range(n + 1) for b in range(n + 1 - a)]
        return {"order": n, "threshold": self.threshold, "index_set": self.index_set,
                "compat_order": self.compat_order, "levels": list(self.levels),
                "axis_error": self.axis_error, "h2": table}


def _transition(inner, outer_chart, order):
    if _condition(outer_chart) > 1e8:
        raise NumericalError("chart inversion is ill-conditioned",
                             condition=_condition(outer_chart))
    G = jet_inverse([c.with_order(order) for c in outer_chart.iota])
    return [jet_compose(g, [c.with_order(order) for c in inner.iota]) for g in G]


def compat_jets(stable, unstable, order=8, rel_tol=1e-7):
    """
    Jets of psi = (iota')^{-1} o iota on the plane {t2 = 0} up to ``order``.

    Parameters
    ----------
    stable, unstable : Chart
        iota and iota' at the same point.
    order : int
        Total degree of the jets (2 ell in the compatibility statement).
    rel_tol : float
        I_x threshold relative to the largest coefficient of psi.

    Returns
    -------
    CompatJets

    Raises
    ------
    NumericalError
        If iota' is ill-conditioned at the origin (condition number > 1e8).
    """
    if order > min(stable.order, unstable.order):
        raise ContractError(f"jet order {order} exceeds the chart orders "
                            f"({stable.order}, {unstable.order})")
    psi = _transition(stable, unstable, order)
    t1, t3 = Jet.variable(0, 2, order), Jet.variable(1, 2, order)
    plane = [t1, Jet.zeros(2, order), t3]
    h = [jet_compose(p, plane) for p in psi]
    scale = max(float(np.max(np.abs(p.coeffs))) for p in psi)
    thr = rel_tol * max(scale, 1.0)
    D = np.zeros((order + 1, order + 1))
    for a in range(order + 1):
        for b in range(order + 1 - a):
            D[a, b] = h[1].coeff((a, b)) * math.factorial(a) * math.factorial(b)
    idx = [(a, b) for a in range(order + 1) for b in range(order + 1 - a)
           if abs(D[a, b]) > thr]
    m = order + 1
    for a, b in idx:
        m = min(m, a + b)
    # h1(t1, 0) = t1, h3(0, t3) = t3 on the axes
    ax = 0.0
    for k in range(order + 1):
        ax = max(ax, abs(h[0].coeff((k, 0)) - (k == 1)), abs(h[2].coeff((0, k)) - (k == 1)))
    return CompatJets(h, D, idx, thr, m, order, (stable.level, unstable.level), float(ax))


def transition_identity_error(stable, unstable, order=8):
    """Max coefficient error of (iota^{-1} o iota') o ((iota')^{-1} o iota) - id."""
    a = _transition(stable, unstable, order)
    b = _transition(unstable, stable, order)
    comp = [jet_compose(g, a) for g in b]
    err = 0.0
    for i, c in enumerate(comp):
        ident = Jet.variable(i, 3, order)
        err = max(err, float(np.max(np.abs((c - ident).coeffs))))
    return err


# -- Whitney extension on the cross ------------------------------------------

def cutoff(x):
    """C-infinity cutoff: 1 on |x| <= 1/2, 0 on |x| >= 1."""
    x = np.abs(np.asarray(x, dtype=float))
    u = np.clip(2.0 * x - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
        b = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    return a / (a + b)


@dataclass
class WhitneyExtension:
    """
    phi(t1, t3) = chi(t1 / rho) sum_{i <= ell} t1^i / i! u_i(t3).

    ``u`` holds the t3-polynomial coefficients of u_i = d1^i h2(0, .).
    """
    u: np.ndarray
    ell: int
    rho: float
    checks: dict = field(default_factory=dict)

    def inner(self, t1, t3, d1=0, d3=0):
        """d1^{d1} d3^{d3} of the polynomial part (no cutoff)."""
        t1 = np.asarray(t1, dtype=float)
        t3 = np.asarray(t3, dtype=float)
        out = np.zeros(np.broadcast_shapes(t1.shape, t3.shape))
        for i in range(d1, self.ell + 1):
            ci = np.polynomial.polynomial.polyder(self.u[i], d3) if d3 else self.u[i]
            w = math.factorial(i) // math.factorial(i - d1)
            out = out + t1 ** (i - d1) / math.factorial(i) * w \
                * np.polynomial.polynomial.polyval(t3, ci)
        return out

    def __call__(self, t1, t3):
        return cutoff(np.asarray(t1) / self.rho) * self.inner(t1, t3)

    def to_dict(self):
        return {"ell": self.ell, "rho": self.rho, "u": np.asarray(self.u).tolist(),
                "checks": self.checks}


def whitney_cross_extend(data, ell, rho=0.5, tol=1e-7, n_check=21):
    """
    Extend cross jet data of h2 to a function phi on [-rho, rho]^2.

    Parameters
    ----------
    data : CompatJets or array_like
        Either compat jets (h2's Taylor table is used) or an array
        ``H[a, b]`` of Taylor coefficients of h2 in t1^a t3^b.
    ell : int
    rho : float
        Cutoff radius in t1.
    tol : float
        Flatness tolerance for the hypothesis check.

    Returns
    -------
    WhitneyExtension

    Raises
    ------
    ValidationError
        "cross data not order-(ell+1) flat" when a coefficient of degree
        <= ell is non-zero beyond ``tol``.
    """
    if isinstance(data, CompatJets):
        n = data.order
        H = np.zeros((n + 1, n + 1))
        for a in range(n + 1):
            for b in range(n + 1 - a):
                H[a, b] = data.h[1].coeff((a, b))
    else:
        H = np.atleast_2d(np.asarray(data, dtype=float))
    if ell + 1 > H.shape[0]:
        H = np.pad(H, ((0, ell + 1 - H.shape[0]), (0, 0)))
    # hypothesis: the cross data vanish to order ell + 1 at the origin
    low = [(a, b, H[a, b]) for a in range(H.shape[0]) for b in range(H.shape[1])
           if a + b <= ell and abs(H[a, b]) > tol]
    if low:
        a, b, v = max(low, key=lambda r: abs(r[2]))
        raise ValidationError(f"cross data not order-{ell + 1} flat: coefficient of "
                              f"t1^{a} t3^{b} is {v:.3g}")
    u = np.array([H[i] * math.factorial(i) for i in range(ell + 1)])
    ext = WhitneyExtension(u, ell, float(rho))
    # jet matching on the t3 axis and flatness along the t1 axis
    g = np.linspace(-rho, rho, n_check)
    match = 0.0
    for i in range(ell + 1):
        for j in range(ell + 1 - i):
            want = np.polynomial.polynomial.polyval(
                g, np.polynomial.polynomial.polyder(u[i], j) if j else u[i])
            got = ext.inner(0.0 * g, g, i, j)
            match = max(match, float(np.max(np.abs(got - want))))
    flat = 0.0
    t1 = g[g != 0]
    for j in range(ell + 1):
        v = cutoff(t1 / rho) * ext.inner(t1, 0.0 * t1, 0, j)
        flat = max(flat, float(np.max(np.abs(v) / np.abs(t1) ** (ell + 1 - j))))
    ext.checks = {"jet_match": match, "axis_flatness": flat}
    if match > 1e-6:
        raise NumericalError(f"extension misses the cross jets by {match:.3g}", match=match)
    return ext


# -- joint surface and tangency -------------------------------------------------

@dataclass
class JointSurface:
    """
    S = { iota'(a, phi(a, b), b) : |a|, |b| <= rho }.

    ``containment`` records the distance of the axis leaves from S.
    """
    chart: Chart
    phi: object
    rho: float
    containment: dict = field(default_factory=dict)

    def __call__(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        a, b = np.broadcast_arrays(a, b)
        p = 0.0 * a if self.phi is None else self.phi(a, b)
        return self.chart(np.stack([a, p, b], axis=-1))

    def coords(self, x):
        """Chart coordinates (a, gap, b) of points x: gap = s2 - phi(s1, s3)."""
        s = self.chart.inverse_point(x)
        p = 0.0 * s[..., 0] if self.phi is None else self.phi(s[..., 0], s[..., 2])
        return s[..., 0], s[..., 1] - p, s[..., 2]

    def distance(self, x, maxit=30):
        """Euclidean distance from points x to S (Gauss-Newton foot point)."""
        x = np.asarray(x, dtype=float)
        a, _, b = self.coords(x)
        h = 1e-7
        for _ in range(maxit):
            r = self(a, b) - x
            Ja = (self(a + h, b) - self(a - h, b)) / (2 * h)
            Jb = (self(a, b + h) - self(a, b - h)) / (2 * h)
            g = np.stack([np.sum(Ja * r, -1), np.sum(Jb * r, -1)], -1)
            M = np.stack([np.stack([np.sum(Ja * Ja, -1), np.sum(Ja * Jb, -1)], -1),
                          np.stack([np.sum(Ja * Jb, -1), np.sum(Jb * Jb, -1)], -1)], -2)
            step = np.linalg.solve(M, g[..., None])[..., 0]
            a, b = a - step[..., 0], b - step[..., 1]
            if np.max(np.abs(step)) < 1e-15:
                break
        return np.linalg.norm(self(a, b) - x, axis=-1)

    def to_dict(self):
        return {"rho": self.rho, "level": self.chart.level,
                "phi": None if self.phi is None else self.phi.to_dict(),
                "iota": [c.to_dict() for c in self.chart.iota],
                "containment": self.containment}


def build_joint_surface(stable, unstable, phi=None, rho=0.5, n=41, tol=1e-8):
    """
    Surface through both axis leaves, written in the unstable chart.

    Parameters
    ----------
    stable, unstable : Chart
    phi : WhitneyExtension or None
        Graph correction in the unstable chart; None means phi = 0.
    rho : float
        Half-width; clipped to the charts' radius.

    Raises
    ------
    NumericalError
        If W^1 or W^3 through the anchor leave S by more than ``tol``.
    """
    rho = min(rho, unstable.radius, stable.radius)
    S = JointSurface(unstable, phi, rho)
    g = np.linspace(-rho, rho, n)
    z = 0 * g
    w1 = stable(np.stack([g, z, z], -1))
    w3 = stable(np.stack([z, z, g], -1))
    d1 = float(np.max(S.distance(w1)))
    d3 = float(np.max(S.distance(w3)))
    S.containment = {"W1": d1, "W3": d3, "rho": rho}
    if max(d1, d3) > tol:
        raise NumericalError(f"axis leaves leave the surface (W1 {d1:.3g}, W3 {d3:.3g})",
                             W1=d1, W3=d3)
    return S


@dataclass
class TangencyResult:
    order: float
    C: float
    contained: bool
    truncated: bool
    max_distance: float
    table: list

    def label(self, ell_max=8):
        return f"order >= {ell_max}" if self.contained else f"order {self.order:.3f}"

    def to_dict(self):
        return {"order": self.order, "C": self.C, "contained": self.contained,
                "truncated": self.truncated, "max_distance": self.max_distance,
                "table": self.table}


def tangency_order(surface, leaf, r_max=0.3, decades=2.0, n=17, floor=1e-12):
    """
    Contact order of a leaf with the surface at the leaf's base point.

    ``leaf`` is LeafParam-like (unbatched).  Distances from leaf points to
    the surface are fitted against arc length on a log-log scale over
    ``decades`` decades below ``r_max``.

    Returns
    -------
    TangencyResult
        ``contained`` when every distance is below ``floor``; ``truncated``
        when part of the range left the surface chart.

    Raises
    ------
    ValidationError
        If the base point is not on the surface within 1e-8.
    """
    base = np.asarray(leaf(0.0), dtype=float)
    if float(surface.distance(base)) > 1e-8:
        raise ValidationError("base point is not on the surface")
    p = np.geomspace(r_max * 10 ** -decades, r_max, n)
    pts = leaf(p)
    # arc length by quadrature of |Phi'|
    q = np.linspace(0.0, 1.0, 65)
    sp = np.linalg.norm(leaf.derivative(p[:, None] * q[None, :]), axis=-1)
    arc = np.trapezoid(sp, q, axis=1) * p
    inside = np.all(np.abs(pts) <= surface.rho * 2 + np.abs(base), axis=-1)
    truncated = not bool(np.all(inside))
    arc, pts = arc[inside], pts[inside]
    d = surface.distance(pts)
    table = [{"arc": float(a), "distance": float(x)} for a, x in zip(arc, d)]
    if np.all(d <= floor):
        return TangencyResult(math.inf, 0.0, True, truncated, float(np.max(d)), table)
    keep = d > floor
    if keep.sum() < 3:
        raise NumericalError("too few resolvable distances for a tangency fit")
    k, c = np.polyfit(np.log(arc[keep]), np.log(d[keep]), 1)
    return TangencyResult(float(k), float(np.exp(c)), False, truncated, float(np.max(d)), table)
