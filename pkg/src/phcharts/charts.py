"""
Unstable charts and the cocycle normal-form reductions.

A chart is a polynomial map iota (three trivariate jets about the anchor)
whose first axis is the unstable leaf and whose third axis is the stable leaf.
In chart coordinates the map reads F = iota^{-1} o f o iota, and the lower
2x2 block of DF along the first axis,

    A(t) = [[d2 F2, d3 F2], [d2 F3, d3 F3]] (t, 0, 0),

is a linear cocycle over t -> l1 t (the action on TM / E1).  The reductions
below bring it to the form [[alpha, p(t)], [0, beta]] with constant diagonal
and polynomial p of degree <= d0:

* :func:`triangularize` kills the lower-left entry,
* :func:`constant_diagonal` makes the diagonal constant,
* :func:`polynomialize_offdiagonal` shears the off-diagonal into a polynomial.

Every reduction returns the accumulated basis change B(t) (columns are the
new frame in the old one), and :func:`build_unstable_chart` turns it into the
chart change (x1, x2, x3) -> (x1, B(x1) (x2, x3)).

The anchor is always the fixed point, so the base dynamics on the unstable
leaf is t -> l1 t and all families are stationary.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .errors import ContractError, NumericalError
from .jets import Jet, jet_compose, jet_inverse

__all__ = ["Cocycle2", "Chart", "triangularize", "constant_diagonal",
           "polynomialize_offdiagonal", "choose_d0", "identity_chart",
           "build_unstable_chart", "elljet_cocycle", "improve_chart",
           "push_forward_chart", "polynomial_tail", "poly_fn"]

SERIES_TOL = 1e-14
SERIES_CAP = 500


def poly_fn(coeffs):
    """Callable evaluating sum c_k t^k by Horner; works on arrays and jets."""
    c = [float(v) for v in np.asarray(coeffs, dtype=float).ravel()]

    def fn(t):
        out = 0.0 * t + c[-1] if c else 0.0 * t
        for v in reversed(c[:-1]):
            out = out * t + v
        return out
    fn.coeffs = np.array(c)
    return fn


def _const_fn(v):
    v = float(v)

    def fn(t):
        return 0.0 * t + v
    fn.coeffs = np.array([v])
    return fn


def _is_jet(t):
    return isinstance(t, Jet)


def _scale_arg(t, s):
    # t * s for arrays and univariate jets (scalar s)
    return t * s


@dataclass
class Cocycle2:
    """
    Stationary 2x2 cocycle A(t) = [[a, r], [q, b]](t) over t -> lam t.

    Entries are callables accepting arrays or univariate jets.  ``basis``
    holds the accumulated change of frame as a list of factors, each a 2x2
    nested list of callables; the frame change is their product, left to
    right.  ``history`` records the reductions applied.
    """
    a: object
    r: object
    q: object
    b: object
    lam: float
    basis: list = field(default_factory=list)
    d0: int = None
    history: list = field(default_factory=list)

    def matrix(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.stack([self.a(t), self.r(t)], -1),
                         np.stack([self.q(t), self.b(t)], -1)], -2)

    @property
    def alpha(self):
        return float(self.a(np.zeros(1))[0])

    @property
    def beta(self):
        return float(self.b(np.zeros(1))[0])

    def _basis(self, t, make_one):
        B = None
        for fac in self.basis:
            F = [[fac[i][j](t) for j in range(2)] for i in range(2)]
            if B is None:
                B = F
            else:
                B = [[B[i][0] * F[0][j] + B[i][1] * F[1][j] for j in range(2)]
                     for i in range(2)]
        if B is None:
            B = [[make_one(1.0), make_one(0.0)], [make_one(0.0), make_one(1.0)]]
        return B

    def basis_at(self, t):
        """Frame change B(t) as an array of shape t.shape + (2, 2)."""
        t = np.asarray(t, dtype=float)
        B = self._basis(t, lambda v: v + 0.0 * t)
        return np.stack([np.stack([B[i][j] + 0.0 * t for j in range(2)], -1)
                         for i in range(2)], -2)

    def basis_jets(self, order):
        """Taylor jets (order ``order``) of the basis entries."""
        tv = Jet.variable(0, 1, order)
        B = self._basis(tv, lambda v: Jet.constant(v, 1, order))
        return [[v if _is_jet(v) else Jet.constant(v, 1, order) for v in row] for row in B]

    def truncated(self, order):
        """
        Same cocycle with entries and frame factors replaced by their Taylor
        polynomials of degree ``order``.  Used by the chart pipeline, whose
        data are polynomial of that degree to begin with.
        """
        tv = Jet.variable(0, 1, order)

        def mat(fn):
            v = fn(tv)
            return poly_fn(v.coeffs if _is_jet(v) else np.r_[v, np.zeros(order)])
        basis = [[[mat(f) for f in row] for row in fac] for fac in self.basis]
        out = Cocycle2(mat(self.a), mat(self.r), mat(self.q), mat(self.b), self.lam, basis,
                       self.d0, self.history + [f"truncated({order})"])
        for name in ("u", "c", "c_perp"):
            if hasattr(self, name):
                setattr(out, name, mat(getattr(self, name)))
        return out

    def lower_left_max(self, grid):
        return float(np.max(np.abs(self.q(np.asarray(grid, dtype=float)))))

    def off_diagonal_coeffs(self, order):
        v = self.r(Jet.variable(0, 1, order))
        return v.coeffs if _is_jet(v) else np.r_[v, np.zeros(order)]

    def to_dict(self, order=10):
        return {"alpha": self.alpha, "beta": self.beta, "lam": self.lam, "d0": self.d0,
                "p_coeffs": self.off_diagonal_coeffs(order).tolist(),
                "history": list(self.history)}


def _compose_basis(B, C):
    """Append the factor C to the frame change B."""
    return list(B) + [C]


def _series_depth(ratio, lam, tol=SERIES_TOL):
    # number of backward steps until ratio^n (and the base contraction) are below tol
    r = max(ratio, 1.0 / lam)
    if r >= 1:
        return SERIES_CAP
    return min(SERIES_CAP, int(math.ceil(math.log(tol) / math.log(r))) + 2)


def triangularize(tc, depth=None):
    """
    Remove the lower-left entry by a basis change [[eta, 0], [p, 1]].

    eta and p solve the stationary forms of

        eta(t) q(t) + p(t) b(t) = a(0) p(lam t),
        eta(t) a(t) + p(t) r(t) = a(0) eta(lam t),

    by running them backward from t / lam^N with eta = 1, p = 0.  The
    resulting top-left entry is the constant a(0).

    Raises
    ------
    NumericalError
        If |b(0) / a(0)| >= 1, i.e. the fast direction does not dominate.
    """
    a0, b0 = tc.alpha, tc.beta
    ratio = abs(b0 / a0)
    if ratio >= 1:
        raise NumericalError(f"triangularize: series ratio |beta/alpha| = {ratio:.4g} >= 1",
                             ratio=ratio)
    lam = tc.lam
    N = depth or _series_depth(ratio, lam)
    a, r, q, b = tc.a, tc.r, tc.q, tc.b

    def solve(t):
        eta, p = 1.0 + 0.0 * t, 0.0 * t
        for m in range(N, 0, -1):
            s = _scale_arg(t, lam ** -m)
            eta, p = (a(s) * eta + r(s) * p) / a0, (q(s) * eta + b(s) * p) / a0
        return eta, p

    def eta_fn(t):
        return solve(t)[0]

    def p_fn(t):
        return solve(t)[1]

    def new_b(t):
        e1, p1 = solve(_scale_arg(t, lam))
        return b(t) - p1 * r(t) / e1

    def new_r(t):
        e1, _ = solve(_scale_arg(t, lam))
        return r(t) / e1

    basis = _compose_basis(tc.basis, [[eta_fn, _const_fn(0.0)], [p_fn, _const_fn(1.0)]])
    return Cocycle2(_const_fn(a0), new_r, _const_fn(0.0), new_b, lam, basis, tc.d0,
                    tc.history + [f"triangularize(N={N})"])


def constant_diagonal(tc, grid=None):
    """
    Rescale the frame by exp(c), exp(c_perp) so the diagonal becomes constant.

    c(t) = sum_{j >= 1} (log a(t / lam^j) - log a(0)) solves
    c(lam t) + log a(0) = log a(t) + c(t), with c(0) = 0.

    Raises
    ------
    NumericalError
        If a diagonal entry changes sign on ``grid``.
    """
    lam = tc.lam
    grid = np.linspace(-0.5, 0.5, 41) if grid is None else np.asarray(grid, dtype=float)
    a, b, r, q = tc.a, tc.b, tc.r, tc.q
    a0, b0 = tc.alpha, tc.beta
    for name, fn, v0 in (("alpha", a, a0), ("beta", b, b0)):
        vals = fn(grid) + 0.0 * grid
        if v0 == 0 or np.any(np.sign(vals) != np.sign(v0)):
            raise NumericalError(f"constant_diagonal: {name} changes sign on the grid",
                                 entry=name)
    sa, sb = math.copysign(1.0, a0), math.copysign(1.0, b0)
    N = _series_depth(0.0, lam)

    def csum(fn, v0, sign):
        def c(t):
            out = 0.0 * t
            for j in range(1, N + 1):
                out = out + jets.log(fn(_scale_arg(t, lam ** -j)) * sign) - math.log(abs(v0))
            return out
        return c

    c, cp = csum(a, a0, sa), csum(b, b0, sb)

    def new_r(t):
        return r(t) * jets.exp(cp(t)) / jets.exp(c(_scale_arg(t, lam)))

    def new_q(t):
        return q(t) * jets.exp(c(t)) / jets.exp(cp(_scale_arg(t, lam)))

    def e_c(t):
        return jets.exp(c(t))

    def e_cp(t):
        return jets.exp(cp(t))

    basis = _compose_basis(tc.basis, [[e_c, _const_fn(0.0)], [_const_fn(0.0), e_cp]])
    out = Cocycle2(_const_fn(a0), new_r, new_q, _const_fn(b0), lam, basis, tc.d0,
                   tc.history + [f"constant_diagonal(N={N})"])
    out.c = c
    out.c_perp = cp
    return out


def choose_d0(alpha, beta, chi1):
    """d0 = floor((log|alpha| - log|beta|) / chi1) + 1 (small slack absorbs roundoff)."""
    x = (math.log(abs(alpha)) - math.log(abs(beta))) / chi1
    return int(math.floor(x + 1e-9)) + 1


def polynomialize_offdiagonal(tc, chi1=None, d0=None, grid=None):
    """
    Shear the frame by [[1, u], [0, 1]] so the off-diagonal becomes polynomial.

    With r = p + r_hat (p the Taylor head of degree <= d0), u solves
    beta u(lam t) = r_hat(t) + alpha u(t), i.e.

        u(t) = sum_{j >= 1} alpha^{j-1} / beta^j r_hat(t / lam^j).

    The new off-diagonal is r + alpha u - beta u(lam t) = p.

    Raises
    ------
    ContractError
        If the diagonal is not constant.
    NumericalError
        If the series diverges, |alpha| >= |beta| lam^{d0+1}.
    """
    lam = tc.lam
    chi1 = math.log(lam) if chi1 is None else chi1
    alpha, beta = tc.alpha, tc.beta
    grid = np.linspace(-0.5, 0.5, 41) if grid is None else np.asarray(grid, dtype=float)
    for fn, v0 in ((tc.a, alpha), (tc.b, beta)):
        if np.max(np.abs(fn(grid) - v0)) > 1e-9:
            raise ContractError("polynomialize_offdiagonal needs constant diagonal entries")
    if d0 is None:
        d0 = choose_d0(alpha, beta, chi1)
    ratio = abs(alpha) / (abs(beta) * lam ** (d0 + 1))
    if ratio >= 1:
        raise NumericalError(f"polynomialize: divergent series, ratio {ratio:.4g} >= 1 "
                             f"(d0={d0} too small)", ratio=ratio, d0=d0)
    r = tc.r
    head = r(Jet.variable(0, 1, d0))
    pc = head.coeffs if _is_jet(head) else np.r_[head, np.zeros(d0)]
    p = poly_fn(pc)

    def rhat(t):
        return r(t) - p(t)

    def u(t):
        if _is_jet(t):
            # coefficientwise: u_k (beta lam^k - alpha) = rhat_k, valid for t a pure variable
            K = t.order
            tv = Jet.variable(0, 1, K)
            rc = rhat(tv).coeffs
            k = np.arange(K + 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                uc = np.where(k > d0, rc / (beta * lam ** k - alpha), 0.0)
            return jet_compose(Jet(uc, 1, K), [t])
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for j in range(1, SERIES_CAP + 1):
            term = alpha ** (j - 1) / beta ** j * rhat(t / lam ** j)
            out = out + term
            if np.max(np.abs(term)) < SERIES_TOL:
                break
        return out

    basis = _compose_basis(tc.basis, [[_const_fn(1.0), u], [_const_fn(0.0), _const_fn(1.0)]])
    out = Cocycle2(tc.a, p, tc.q, tc.b, lam, basis, d0,
                   tc.history + [f"polynomialize(d0={d0})"])
    out.u = u
    out.rhat = rhat
    return out


def polynomial_tail(values, t, degree, tol=1e-8):
    """
    Least-squares test for "polynomial of degree <= degree" on samples.

    Returns (ok, tail, coeffs): ``tail`` is the sup-norm misfit relative to
    max(1, |leading data|).
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    V = np.vander(t, degree + 1, increasing=True)
    c, *_ = np.linalg.lstsq(V, v, rcond=None)
    tail = float(np.max(np.abs(V @ c - v))) / max(1.0, float(np.max(np.abs(v))))
    return tail <= tol, tail, c


# charts ------------------------------------------------------------------------

@dataclass
class Chart:
    """
    Polynomial unstable chart at the anchor.

    Attributes
    ----------
    iota : list of 3 Jet (3 variables, order K)
        The chart as a polynomial map with iota(0) = anchor.
    model : ModelMap
    level : int
        Goodness level attained (-1 for a merely leaf-adapted chart).
    radius : float
        Domain half-width actually used (the working box; see README).
    cocycle : Cocycle2 or None
        Reduced cocycle data of the last level.
    """
    iota: list
    model: object
    level: int = -1
    radius: float = 0.5
    cocycle: object = None
    history: list = field(default_factory=list)

    @property
    def order(self):
        return self.iota[0].order

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([jets.jet_eval(c, x) for c in self.iota], axis=-1)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.stack([jets.jet_eval(c.deriv(j), x) for j in range(3)], -1)
                         for c in self.iota], -2)

    def inverse_point(self, y, guess=None, tol=1e-14, maxit=50):
        """Newton solve iota(x) = y."""
        y = np.asarray(y, dtype=float)
        x = y.copy() if guess is None else np.asarray(guess, dtype=float).copy()
        for _ in range(maxit):
            res = self(x) - y
            if np.max(np.abs(res)) <= tol * max(1.0, float(np.max(np.abs(y)))):
                return x
            x = x - np.linalg.solve(self.jacobian(x), res[..., None])[..., 0]
        if np.max(np.abs(self(x) - y)) > 1e-10:
            raise NumericalError("chart inversion did not converge",
                                 residual=float(np.max(np.abs(self(x) - y))))
        return x

    def F_origin(self, order=None):
        """Jet at 0 of F = iota^{-1} o f o iota."""
        K = order or self.order
        io = [c.with_order(K) for c in self.iota]
        fio = self.model.forward(io)
        G = jet_inverse(io)
        return [jet_compose(g, [h - float(h.const) for h in fio]) for g in G]

    def F_at(self, t, order):
        """
        Jets of F at the points (t, 0, 0) in the displacement, batched over t.
        """
        t = np.asarray(t, dtype=float)
        d = [Jet.variable(i, 3, order) for i in range(3)]
        shifted = [d[0] + t, d[1] + 0.0 * t, d[2] + 0.0 * t]
        io = self.iota
        at_x = [jet_compose(c, shifted) for c in io]
        fio = self.model.forward(at_x)
        img = np.stack([c.const for c in fio], axis=-1)
        guess = np.stack([self.model.l1 * t, 0 * t, 0 * t], axis=-1)
        c = self.inverse_point(img, guess)
        loc = [jet_compose(cc, [d[0] + c[..., 0], d[1] + c[..., 1], d[2] + c[..., 2]])
               for cc in io]
        loc = [l.with_order(order) if l.order > order else l for l in loc]
        G = jet_inverse(loc)
        out = [jet_compose(g, [h - h.const for h in fio]) for g in G]
        return [o + c[..., i] for i, o in enumerate(out)]

    def check_axes(self, grid, tol=1e-8):
        """Residuals of the 0-good axis conditions on (t, 0, 0), t in grid."""
        F = self.F_at(grid, 1)
        lam = self.model.multipliers
        return {"d2F2": float(np.max(np.abs(F[1].coeff((0, 1, 0)) - lam[1]))),
                "d3F3": float(np.max(np.abs(F[2].coeff((0, 0, 1)) - lam[2]))),
                "d2F3": float(np.max(np.abs(F[2].coeff((0, 1, 0))))),
                "axis": float(np.max(np.abs(np.stack([F[0].const - lam[0] * np.asarray(grid),
                                                      F[1].const, F[2].const])))), }

    def to_dict(self, grid=None):
        d = {"level": self.level, "order": self.order, "radius": self.radius,
             "iota": [c.to_dict() for c in self.iota],
             "F": [c.to_dict() for c in self.F_origin()], "history": list(self.history)}
        if self.cocycle is not None:
            d["cocycle"] = self.cocycle.to_dict(self.order - 1)
        return d


def identity_chart(model, order, radius=0.5):
    """
    Leaf-adapted chart at the fixed point.

    For the built-in models the coordinate axes are the unstable, centre and
    stable leaves at the origin with unit-speed normal forms, so the
    leaf-adapted chart is the identity.
    """
    iota = [Jet.variable(i, 3, order) for i in range(3)]
    return Chart(iota, model, -1, radius, history=["leaf-adapted (identity)"])


def _cocycle_from_chart(chart, ell=0):
    """The 2x2 cocycle [[d2F2, d3F2], [d2F3, d3F3]](t, 0, 0) from the origin jet of F."""
    K = chart.order
    F = chart.F_origin()
    ex = F[0].exponents

    def entry(comp, var):
        # coefficients of t^k x_var in F_comp, as a polynomial in t
        sel = [(k, i) for i, e in enumerate(ex) if e[1] + e[2] == 1 and e[var] == 1
               for k in [e[0]]]
        c = np.zeros(K)
        for k, i in sel:
            c[k] = F[comp].coeffs[i]
        return poly_fn(c)
    return Cocycle2(entry(1, 1), entry(1, 2), entry(2, 1), entry(2, 2), chart.model.l1)


def _apply_basis_change(chart, tc, K=None):
    """New chart iota(x1, B(x1) (x2, x3)) with B Taylor-truncated."""
    K = K or chart.order
    Bj = tc.basis_jets(K - 1)
    x = [Jet.variable(i, 3, K) for i in range(3)]

    def lift(j1):
        # univariate jet in x1 -> trivariate jet
        return jet_compose(j1.with_order(K) if j1.order < K else j1, [x[0]])

    B = [[lift(Bj[i][j]) for j in range(2)] for i in range(2)]
    new2 = B[0][0] * x[1] + B[0][1] * x[2]
    new3 = B[1][0] * x[1] + B[1][1] * x[2]
    iota = [jet_compose(c, [x[0], new2, new3]) for c in chart.iota]
    return iota


def build_unstable_chart(model, order=10, radius=0.5, grid=None, tol=1e-8):
    """
    0-good unstable chart at the fixed point.

    Starting from the leaf-adapted chart, the cocycle on TM / E1 along the
    unstable axis is triangularised, given constant diagonal and a polynomial
    off-diagonal; the accumulated frame change becomes the chart change.

    Returns
    -------
    Chart
        With ``level`` 0 and the reduced cocycle attached.

    Raises
    ------
    NumericalError
        If the 0-good conditions fail on the grid after the reductions.
    """
    grid = np.linspace(-radius, radius, 41) if grid is None else np.asarray(grid)
    chart = identity_chart(model, order, radius)
    K = order - 1
    tc = _cocycle_from_chart(chart)
    tc = triangularize(tc).truncated(K)
    tc = constant_diagonal(tc, grid).truncated(K)
    tc = polynomialize_offdiagonal(tc, math.log(model.l1), grid=grid).truncated(K)
    iota = _apply_basis_change(chart, tc)
    new = Chart(iota, model, 0, radius, tc,
                history=chart.history + ["cocycle normal form: " + ", ".join(tc.history)])
    verify_level(new, 0, grid, tol, d0=tc.d0)
    return new


def verify_level(chart, ell, grid, tol=1e-8, d0=None):
    """
    Check the axis conditions and polynomiality of d3^{ell+1} F2 (t, 0, 0).

    Returns a dict of residuals; raises NumericalError on failure.
    """
    res = chart.check_axes(grid)
    bad = {k: v for k, v in res.items() if v > tol}
    if bad:
        raise NumericalError(f"chart axis conditions fail: {bad}", **bad)
    F = chart.F_at(grid, ell + 1)
    e = (0, 0, ell + 1)
    vals = F[1].coeff(e)
    d0 = d0 if d0 is not None else choose_d0(chart.model.l2, chart.model.l3 ** (ell + 1),
                                            math.log(chart.model.l1))
    ok, tail, coeffs = polynomial_tail(vals, grid, d0, tol)
    res.update({"poly_tail": tail, "d0": d0})
    if not ok:
        i = int(np.argmax(np.abs(np.polyval(coeffs[::-1], grid) - vals)))
        raise NumericalError(f"d3^{ell + 1} F2 is not a polynomial of degree <= {d0}: "
                             f"tail {tail:.3g} at t={grid[i]:.4g}", tail=tail, t=float(grid[i]))
    return res


def elljet_cocycle(chart, ell, grid=None, tol=1e-7):
    """
    Cocycle on (ell+1)-jets of curves s -> (t, b s^{ell+1} + ..., c s) along the unstable axis.

    Returns Cocycle2 with entries [[l2, d3^{ell+1} F2 (t,0,0) / (ell+1)!], [0, l3^{ell+1}]].

    Raises
    ------
    NumericalError
        "chart not (ell-1)-good on this leaf" when some d3^i F2 (t, 0, 0),
        1 <= i <= ell, is nonzero beyond ``tol`` on the grid.
    """
    grid = np.linspace(-chart.radius, chart.radius, 41) if grid is None else np.asarray(grid)
    F = chart.F_at(grid, ell + 1)
    for i in range(1, ell + 1):
        v = float(np.max(np.abs(F[1].coeff((0, 0, i)))))
        if v > tol:
            raise NumericalError(f"chart not ({ell}-1)-good on this leaf: "
                                 f"max |d3^{i} F2 (t,0,0)| = {v:.3g}", order=i, value=v)
    K = chart.order
    Fo = chart.F_origin()
    c = np.zeros(max(K - ell, 1))
    for k in range(K - ell):
        c[k] = Fo[1].coeff((k, 0, ell + 1))
    m = chart.model
    return Cocycle2(_const_fn(m.l2), poly_fn(c), _const_fn(0.0), _const_fn(m.l3 ** (ell + 1)),
                    m.l1, history=[f"elljet(ell={ell})"])


def _shear_chart(chart, coeffs, power):
    """iota o (x1, x2 + u(x1) x3^power, x3) with u = sum coeffs_k x1^k."""
    K = chart.order
    x = [Jet.variable(i, 3, K) for i in range(3)]
    u = Jet.zeros(3, K)
    for k, v in enumerate(np.asarray(coeffs, dtype=float)):
        if v != 0 and k + power <= K:
            u = u + x[0] ** k * x[2] ** power * v if k else u + x[2] ** power * v
    return [jet_compose(c, [x[0], x[1] + u, x[2]]) for c in chart.iota]


def improve_chart(chart, template, grid=None, tol=1e-7):
    """
    Raise the goodness level by one: iota' = iota o psi with
    psi(t, u, s) = (t, u + T(t) s^{ell+1}, s).

    ``template`` is a Template that passed the polynomial test (its
    ``poly_coeffs`` are used).  After composing, the (ell+1)-jet cocycle is
    polynomialised (shear x2 -> x2 + u(x1) x3^{ell+2}) and the new template
    at level ell+1 is checked for vanishing lower coefficients.

    Raises
    ------
    ContractError
        If the template did not pass the polynomial test.
    NumericalError
        If the post-improvement checks fail (``info`` carries the offending t).
    """
    from .templates import extract_template

    ell = template.ell
    if not getattr(template, "is_polynomial", False) or template.poly_coeffs is None:
        raise ContractError("improve_chart needs a template that passed the polynomial test "
                            "(dichotomy branch: non-polynomial template)")
    if ell != chart.level:
        raise ContractError(f"template level {ell} does not match chart level {chart.level}")
    grid = np.linspace(-chart.radius, chart.radius, 41) if grid is None else np.asarray(grid)
    T = np.asarray(template.poly_coeffs, dtype=float)
    if np.all(T == 0):
        new = Chart(list(chart.iota), chart.model, ell + 1, chart.radius, chart.cocycle,
                    chart.history + ["improve: T = 0"])
    else:
        iota = _shear_chart(chart, T, ell + 1)
        new = Chart(iota, chart.model, ell + 1, chart.radius, None,
                    chart.history + [f"improve(ell={ell})"])
    if ell + 2 > new.order:
        raise ContractError(f"chart order {new.order} too small for level {ell + 1}")
    # polynomialise the next jet level
    tc = elljet_cocycle(new, ell + 1, grid, tol)
    tc = polynomialize_offdiagonal(tc, math.log(chart.model.l1), grid=grid)
    uc = tc.u(Jet.variable(0, 1, new.order)).coeffs
    if np.max(np.abs(uc)) > 0:
        new = Chart(_shear_chart(new, uc, ell + 2), new.model, ell + 1, new.radius, tc,
                    new.history + [f"polynomialize jet level {ell + 2}"])
    else:
        new.cocycle = tc
    # pullbacks of stable leaves now have vanishing s^{ell+1} terms
    after = extract_template(new, ell + 1, grid, check=False)
    low = after.lower_coeffs
    if low.size and np.max(np.abs(low)) > tol:
        i = int(np.unravel_index(np.argmax(np.abs(low)), low.shape)[0])
        raise NumericalError(f"improved chart leaves a residual s^{ell + 1} term "
                             f"{np.max(np.abs(low)):.3g} at t={grid[i]:.4g}", t=float(grid[i]))
    return new


def push_forward_chart(chart, D):
    """
    Chart at f(x) obtained as f o iota o D^{-1}, D = diag(d1, d2, d3).

    At the fixed point with D = diag(l1, l2, l3) and a linear model this is the
    same chart.
    """
    D = np.asarray(D, dtype=float)
    if D.shape != (3,) or np.any(D == 0):
        raise ContractError("D must be three non-zero diagonal entries")
    scaled = [c.scale([1.0 / D[0], 1.0 / D[1], 1.0 / D[2]]) for c in chart.iota]
    iota = chart.model.forward(scaled)
    return Chart(iota, chart.model, chart.level, chart.radius, chart.cocycle,
                 chart.history + ["push-forward"])
