"""
Truncated multivariate Taylor jets.

A jet of order K in n variables is a polynomial of total degree <= K whose
coefficients are stored densely in graded lexicographic order.  Arithmetic is
exact truncation: the product of two jets is the degree-K part of the full
product.  Coefficient arrays may carry leading batch axes, so one jet object
can hold the expansions at a whole grid of base points.

Ordering within one degree is lexicographic with the first variable most
significant, e.g. for three variables and degree 2::

    x1^2, x1 x2, x1 x3, x2^2, x2 x3, x3^2

The elementary functions ``sin``, ``cos``, ``exp``, ``log`` and ``sqrt`` in
this module accept either jets or plain arrays, so closed-form maps written
with them work on both.
"""
from functools import lru_cache
from math import factorial

import numpy as np

from .errors import ContractError

__all__ = [
    "Jet", "Jet1", "Jet2", "Jet3", "monomials", "n_monomials",
    "jet_compose", "jet_eval", "jet_inverse", "series_reversion",
    "sin", "cos", "exp", "log", "sqrt", "taylor_coeffs",
]


def _lex(nvars, deg):
    if nvars == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _lex(nvars - 1, deg - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def monomials(nvars, order):
    """Exponent table of shape (nmon, nvars) in graded lex order."""
    exps = [e for deg in range(order + 1) for e in _lex(nvars, deg)]
    out = np.array(exps, dtype=int).reshape(-1, nvars)
    out.setflags(write=False)
    return out


def n_monomials(nvars, order):
    return monomials(nvars, order).shape[0]


@lru_cache(maxsize=None)
def _index(nvars, order):
    return {tuple(int(v) for v in e): i for i, e in enumerate(monomials(nvars, order))}


def _codes(exps, order):
    base = (order + 1) ** np.arange(exps.shape[-1])
    return exps @ base


@lru_cache(maxsize=None)
def _product_table(nvars, order):
    # all pairs (i, j) with deg i + deg j <= order, grouped by target k
    exps = monomials(nvars, order)
    deg = exps.sum(axis=1)
    ii, jj = np.nonzero(deg[:, None] + deg[None, :] <= order)
    codes = _codes(exps, order)
    order_codes = np.argsort(codes)
    target = _codes(exps[ii] + exps[jj], order)
    kk = order_codes[np.searchsorted(codes[order_codes], target)]
    perm = np.argsort(kk, kind="stable")
    ii, jj, kk = ii[perm], jj[perm], kk[perm]
    starts = np.searchsorted(kk, np.arange(len(exps)))
    return ii, jj, starts


@lru_cache(maxsize=None)
def _deriv_table(nvars, order, var):
    exps = monomials(nvars, order)
    idx = _index(nvars, order)
    src, dst, fac = [], [], []
    for k, e in enumerate(exps):
        if e[var] > 0:
            f = e.copy()
            f[var] -= 1
            src.append(k)
            dst.append(idx[tuple(int(v) for v in f)])
            fac.append(float(e[var]))
    return np.array(src, int), np.array(dst, int), np.array(fac)


class Jet:
    """
    Truncated Taylor polynomial in ``nvars`` variables of total order ``order``.

    Parameters
    ----------
    coeffs : array_like, shape (..., nmon)
        Coefficients in graded lex order; leading axes are batch axes.
    nvars : int
    order : int
    """

    __array_ufunc__ = None  # keep numpy from broadcasting over jets

    def __init__(self, coeffs, nvars, order):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 0 or c.shape[-1] != n_monomials(nvars, order):
            raise ContractError(
                f"coefficient table of shape {c.shape} does not fit a jet with "
                f"{nvars} variables of order {order}")
        self.coeffs = c
        self.nvars = int(nvars)
        self.order = int(order)

    # construction ---------------------------------------------------------
    @classmethod
    def zeros(cls, nvars, order, batch=()):
        return cls(np.zeros(tuple(batch) + (n_monomials(nvars, order),)), nvars, order)

    @classmethod
    def constant(cls, value, nvars, order):
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (n_monomials(nvars, order),))
        c[..., 0] = value
        return cls(c, nvars, order)

    @classmethod
    def variable(cls, i, nvars, order, value=0.0):
        """The jet of coordinate ``x_i`` at base value ``value``."""
        j = cls.constant(value, nvars, order)
        if order >= 1:
            j.coeffs[..., 1 + i] = 1.0
        return j

    # basic queries --------------------------------------------------------
    @property
    def batch_shape(self):
        return self.coeffs.shape[:-1]

    @property
    def const(self):
        return self.coeffs[..., 0]

    @property
    def exponents(self):
        return monomials(self.nvars, self.order)

    def index(self, exp):
        return _index(self.nvars, self.order)[tuple(int(v) for v in exp)]

    def coeff(self, exp):
        """Taylor coefficient of the monomial with exponent ``exp``."""
        if sum(exp) > self.order:
            return np.zeros(self.batch_shape)
        return self.coeffs[..., self.index(exp)]

    def partial(self, exp):
        """Partial derivative value at the base point, d^|exp| / dx^exp."""
        return self.coeff(exp) * float(np.prod([factorial(int(e)) for e in exp]))

    def linear(self):
        """Gradient at the base point, shape (..., nvars)."""
        return self.coeffs[..., 1:1 + self.nvars]

    def degree_mask(self, lo, hi=None):
        deg = self.exponents.sum(axis=1)
        hi = self.order if hi is None else hi
        return (deg >= lo) & (deg <= hi)

    def max_abs(self):
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def copy(self):
        return Jet(self.coeffs.copy(), self.nvars, self.order)

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.coeffs[key + (Ellipsis, slice(None))], self.nvars, self.order)

    def __repr__(self):
        return f"Jet(nvars={self.nvars}, order={self.order}, batch={self.batch_shape})"

    # order changes ---------------------------------------------------------
    def with_order(self, order):
        """Truncate to, or zero-pad up to, a new order."""
        n_new = n_monomials(self.nvars, order)
        if order <= self.order:
            return Jet(self.coeffs[..., :n_new], self.nvars, order)
        c = np.zeros(self.batch_shape + (n_new,))
        c[..., :self.coeffs.shape[-1]] = self.coeffs
        return Jet(c, self.nvars, order)

    def without_const(self):
        c = self.coeffs.copy()
        c[..., 0] = 0.0
        return Jet(c, self.nvars, self.order)

    def keep_degrees(self, lo, hi=None):
        c = np.where(self.degree_mask(lo, hi), self.coeffs, 0.0)
        return Jet(c, self.nvars, self.order)

    # arithmetic ------------------------------------------------------------
    def _check(self, other):
        if other.nvars != self.nvars or other.order != self.order:
            raise ContractError(
                f"jet mismatch: ({self.nvars}, {self.order}) vs ({other.nvars}, {other.order})")

    def _add_const(self, value, sign=1.0):
        value = np.asarray(value, dtype=float)
        shape = np.broadcast_shapes(self.batch_shape, value.shape)
        c = np.broadcast_to(self.coeffs * sign, shape + (self.coeffs.shape[-1],)).copy()
        c[..., 0] += value
        return Jet(c, self.nvars, self.order)

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.coeffs + other.coeffs, self.nvars, self.order)
        return self._add_const(other)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.nvars, self.order)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.coeffs - other.coeffs, self.nvars, self.order)
        return self._add_const(-np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return self._add_const(other, sign=-1.0)

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            ii, jj, starts = _product_table(self.nvars, self.order)
            prod = self.coeffs[..., ii] * other.coeffs[..., jj]
            return Jet(np.add.reduceat(prod, starts, axis=-1), self.nvars, self.order)
        other = np.asarray(other, dtype=float)
        return Jet(self.coeffs * other[..., None], self.nvars, self.order)

    __rmul__ = __mul__

    def reciprocal(self):
        c = self.const
        if np.any(c == 0):
            raise ZeroDivisionError("reciprocal of a jet with zero constant term")
        k = np.arange(self.order + 1)
        derivs = [((-1.0) ** n) / c ** (n + 1) for n in k]
        return _series(self, derivs)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        other = np.asarray(other, dtype=float)
        return Jet(self.coeffs / other[..., None], self.nvars, self.order)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if not float(n).is_integer():
            return exp(log(self) * n)
        n = int(n)
        if n < 0:
            return self.reciprocal() ** (-n)
        result = Jet.constant(np.ones(self.batch_shape), self.nvars, self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # calculus --------------------------------------------------------------
    def deriv(self, i):
        """Partial derivative in variable ``i`` (order kept, top degree zero)."""
        src, dst, fac = _deriv_table(self.nvars, self.order, i)
        c = np.zeros_like(self.coeffs)
        c[..., dst] = self.coeffs[..., src] * fac
        return Jet(c, self.nvars, self.order)

    def scale(self, factors):
        """Substitute x_i -> factors[i] * x_i (factors may be batch arrays)."""
        factors = [np.asarray(f, dtype=float) for f in factors]
        if len(factors) != self.nvars:
            raise ContractError(f"{len(factors)} scale factors for {self.nvars} variables")
        shape = np.broadcast_shapes(*[f.shape for f in factors])
        exps = self.exponents
        w = np.ones(shape + (len(exps),))
        for i, f in enumerate(factors):
            w = w * np.broadcast_to(f, shape)[..., None] ** exps[:, i]
        return Jet(self.coeffs * w, self.nvars, self.order)

    def __call__(self, point):
        return jet_eval(self, point)

    # serialization -----------------------------------------------------------
    def to_dict(self):
        return {"arity": self.nvars, "order": self.order,
                "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["coeffs"], dtype=float), d["arity"], d["order"])


def Jet1(coeffs, order=None):
    """Univariate jet from its coefficient list c0, c1, ..., cK."""
    coeffs = np.asarray(coeffs, dtype=float)
    order = coeffs.shape[-1] - 1 if order is None else order
    return Jet(coeffs, 1, order)


def Jet2(coeffs, order):
    return Jet(coeffs, 2, order)


def Jet3(coeffs, order):
    return Jet(coeffs, 3, order)


def _series(x, derivs):
    # sum_n derivs[n] * (x - x0)^n, Horner form
    h = x.without_const()
    r = Jet.constant(np.broadcast_to(derivs[x.order], x.batch_shape), x.nvars, x.order)
    for n in range(x.order - 1, -1, -1):
        r = r * h + derivs[n]
    return r


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.const), np.cos(x.const)
    cyc = [s, c, -s, -c]
    return _series(x, [cyc[n % 4] / factorial(n) for n in range(x.order + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.const), np.cos(x.const)
    cyc = [c, -s, -c, s]
    return _series(x, [cyc[n % 4] / factorial(n) for n in range(x.order + 1)])


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.const)
    return _series(x, [e / factorial(n) for n in range(x.order + 1)])


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    c = x.const
    derivs = [np.log(c)] + [((-1.0) ** (n + 1)) / (n * c ** n) for n in range(1, x.order + 1)]
    return _series(x, derivs)


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    c = x.const
    derivs, coef = [], 1.0
    for n in range(x.order + 1):
        derivs.append(coef * c ** (0.5 - n))
        coef *= (0.5 - n) / (n + 1)
    return _series(x, derivs)


def jet_eval(j, point):
    """
    Evaluate the truncated polynomial at ``point``.

    For univariate jets ``point`` is an array of parameter values; otherwise
    its last axis holds the coordinates.  No remainder estimate is implied.
    """
    point = np.asarray(point, dtype=float)
    if j.nvars == 1:
        point = point[..., None]
    if point.shape[-1] != j.nvars:
        raise ContractError(f"point with {point.shape[-1]} coordinates for a {j.nvars}-variable jet")
    exps = j.exponents
    mon = np.prod(point[..., None, :] ** exps, axis=-1)
    return np.sum(j.coeffs * mon, axis=-1)


def jet_compose(outer, inners):
    """
    Substitute jets into a polynomial.

    Parameters
    ----------
    outer : Jet in m variables
        Treated as the polynomial it represents.
    inners : sequence of m Jets
        Common arity and order.

    Returns
    -------
    Jet
        Degree-K truncation of ``outer(inners)`` where K is the inner order.
    """
    inners = list(inners)
    if len(inners) != outer.nvars:
        raise ContractError(f"outer jet has {outer.nvars} variables, got {len(inners)} inner jets")
    k, K = inners[0].nvars, inners[0].order
    for g in inners[1:]:
        if g.nvars != k or g.order != K:
            raise ContractError("inner jets must share arity and order")
    nilpotent = all(np.all(g.const == 0) for g in inners)
    exps = outer.exponents
    deg = exps.sum(axis=1)
    batch = np.broadcast_shapes(outer.batch_shape, *[g.batch_shape for g in inners])
    result = Jet.zeros(k, K, batch)
    cache = {}
    one = Jet.constant(1.0, k, K)
    for idx, e in enumerate(exps):
        if nilpotent and deg[idx] > K:
            break
        if idx == 0:
            mon = one
        else:
            i = int(np.nonzero(e)[0][0])
            prev = e.copy()
            prev[i] -= 1
            mon = cache[tuple(prev)] * inners[i]
        cache[tuple(e)] = mon
        c = outer.coeffs[..., idx]
        if np.any(c != 0):
            result = result + mon * c
    return result


def jet_inverse(maps):
    """
    Local inverse of a square map given by jets.

    Parameters
    ----------
    maps : sequence of n Jets in n variables
        F(u) expanded in the displacement u.

    Returns
    -------
    list of Jet
        G with G(0) = 0 and F(G(v)) = F(0) + v up to the common order.
    """
    maps = list(maps)
    n = len(maps)
    if any(m.nvars != n for m in maps):
        raise ContractError("jet_inverse needs n jets in n variables")
    K = maps[0].order
    A = np.stack([m.linear() for m in maps], axis=-2)
    cond = np.linalg.cond(A)
    if not np.all(np.isfinite(cond)) or np.max(cond) > 1e12:
        raise ContractError(f"linear part is singular or ill-conditioned (cond={np.max(cond):.3g})")
    Ainv = np.linalg.inv(A)
    nonlin = [m.keep_degrees(2) for m in maps]
    v = [Jet.variable(i, n, K) for i in range(n)]

    def apply(M, vec):
        return [sum(vec[j] * M[..., i, j] for j in range(n)) for i in range(n)]

    G = apply(Ainv, v)
    for _ in range(K - 1):
        G = apply(Ainv, [v[i] - jet_compose(nonlin[i], G) for i in range(n)])
    return G


def series_reversion(j):
    """Inverse series of a univariate jet: r with j(r(s)) = j(0) + s."""
    return jet_inverse([j])[0]


def taylor_coeffs(fn, order):
    """Taylor coefficients at 0 of a function written with this module's elementary functions."""
    t = Jet.variable(0, 1, order)
    out = fn(t)
    if isinstance(out, Jet):
        return out.coeffs
    c = np.zeros(order + 1)
    c[0] = out
    return c
