"""
Polynomial and rational approximation diagnostics.

* spread sets: exact decision of the (k, sigma, eta)-spread property for
  finite sets,
* discrete minimax distance to polynomials of degree <= d (exchange
  algorithm),
* an upper bound on the distance to rational functions of type (d, d)
  (differential correction),
* interval families and constants for derivative / value bounds of a rational
  function away from its roots,
* the weighted measure of the set where a template is c-close to Q/P.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import NumericalError

__all__ = ["SpreadResult", "spread_check", "poly_distance", "RationalFn", "rational_distance",
           "rational_bounds_constants", "RationalBounds", "near_rational_measure",
           "rescaled_constants"]


# spread sets ---------------------------------------------------------------------

@dataclass
class SpreadResult:
    spread: bool
    intervals: list = field(default_factory=list)   # violating family when not spread
    witness: list = field(default_factory=list)     # separated survivors when spread
    min_cost: float = math.inf

    def __bool__(self):
        return self.spread


def _greedy_separated(xs, sigma):
    out = []
    for x in xs:
        if not out or x - out[-1] > sigma:
            out.append(x)
    return out


def spread_check(E, k, sigma, eta, atom=0.0):
    """
    Decide whether the finite set E is (k, sigma, eta)-spread.

    E is spread if after removing the points covered by any k+1 intervals of
    total length < eta, at least k+1 points with pairwise distances > sigma
    survive.  Covering a run of consecutive points x_i <= ... <= x_j costs
    x_j - x_i + 2 atom; ``atom`` > 0 treats every point as a small interval of
    half-width ``atom`` (with atom = 0 single points are removed for free, as
    in the literal definition with degenerate intervals).

    The decision is exact: a dynamic programme over the sorted points finds
    the cheapest removal (at most k+1 runs) after which the greedy count of
    sigma-separated survivors is at most k.

    Returns
    -------
    SpreadResult
        ``intervals`` holds a violating family (as (lo, hi) pairs) when E is
        not spread; ``witness`` holds k+1 separated surviving points of the
        unperturbed set otherwise.  ``min_cost`` is the cheapest killing cost.
    """
    if k < 0 or sigma <= 0 or eta <= 0:
        raise ValueError("k must be >= 0 and sigma, eta positive")
    xs = sorted(float(x) for x in set(np.asarray(E, dtype=float).ravel()))
    n = len(xs)
    if n == 0:
        return SpreadResult(False, [], [], 0.0)
    # state: (runs used, picked count, last picked index or -1, prev removed) -> (cost, back)
    states = {(0, 0, -1, False): (0.0, None)}
    history = []
    for i, x in enumerate(xs):
        new = {}

        def push(key, cost, back):
            if key[1] > k:
                return
            old = new.get(key)
            if old is None or cost < old[0] - 1e-15:
                new[key] = (cost, back)

        for key, (cost, _) in states.items():
            r, c, p, removed = key
            # remove x: extend the current run or open a new one
            if removed:
                push((r, c, p, True), cost + x - xs[i - 1], (key, "extend"))
            elif r < k + 1:
                push((r + 1, c, p, True), cost + 2 * atom, (key, "open"))
            # keep x: greedy picks it if it is sigma-separated from the last pick
            if p < 0 or x - xs[p] > sigma:
                push((r, c + 1, i, False), cost, (key, "pick"))
            else:
                push((r, c, p, False), cost, (key, "skip"))
        history.append(new)
        states = new
    if not states:
        # every path picked more than k points
        best = None
    else:
        best = min(states.items(), key=lambda kv: kv[1][0])
    if best is not None and best[1][0] < eta:
        # backtrack the removal runs
        actions = []
        key = best[0]
        for i in range(n - 1, -1, -1):
            cost, back = history[i][key]
            actions.append(back[1])
            key = back[0]
        actions.reverse()
        runs, start = [], None
        for i, a in enumerate(actions):
            if a in ("open", "extend"):
                if a == "open":
                    start = i
                if i == n - 1 or actions[i + 1] != "extend":
                    runs.append((xs[start] - atom, xs[i] + atom))
        return SpreadResult(False, runs, [], best[1][0])
    witness = _greedy_separated(xs, sigma)[:k + 1]
    return SpreadResult(True, [], witness, best[1][0] if best else math.inf)


# polynomial minimax ------------------------------------------------------------------

def _vander(t, d):
    return np.vander(t, d + 1, increasing=True)


def _scale(t):
    a, b = float(np.min(t)), float(np.max(t))
    mid, half = 0.5 * (a + b), 0.5 * (b - a) if b > a else 1.0
    return mid, half


def poly_distance(t, v, d, tol=1e-10, max_pass=100):
    """
    Discrete minimax distance from samples to polynomials of degree <= d.

    Single-point exchange (Remez) on the sample set, started from the d+2
    extremal alternating points of the least-squares fit.

    Returns
    -------
    dist : float
    coeffs : ndarray
        Coefficients (increasing degree) of the best polynomial in t.

    Raises
    ------
    ValueError
        Fewer than d+2 distinct sample points.
    NumericalError
        No convergence in ``max_pass`` exchanges (info carries the defect).
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    order = np.argsort(t)
    t, v = t[order], v[order]
    if np.unique(t).size < d + 2:
        raise ValueError(f"need at least {d + 2} distinct points for degree {d}")
    mid, half = _scale(t)
    x = (t - mid) / half
    V = _vander(x, d)
    m = d + 2
    c, *_ = np.linalg.lstsq(V, v, rcond=None)
    err = v - V @ c
    if np.max(np.abs(err)) <= 1e-15 * max(1.0, np.max(np.abs(v))):
        return 0.0, _unscale(c, mid, half)
    ref = _initial_reference(err, m)
    signs = (-1.0) ** np.arange(m)
    defect = np.inf
    for _ in range(max_pass):
        M = np.column_stack([V[ref], signs])
        sol = np.linalg.lstsq(M, v[ref], rcond=None)[0]
        c, h = sol[:-1], sol[-1]
        err = v - V @ c
        i = int(np.argmax(np.abs(err)))
        emax = abs(err[i])
        defect = (emax - abs(h)) / max(emax, 1e-300)
        if defect < tol or emax <= 1e-14 * max(1.0, np.max(np.abs(v))):
            return float(emax), _unscale(c, mid, half)
        ref = _exchange(ref, i, err)
    raise NumericalError(f"exchange algorithm did not converge in {max_pass} passes "
                         f"(defect {defect:.3g})", defect=float(defect))


def _initial_reference(err, m):
    # alternating extrema: one extreme per sign run, then keep the m largest alternating
    n = err.size
    runs = []
    i = 0
    while i < n:
        s = np.sign(err[i]) or 1.0
        j = i
        best = i
        while j < n and (np.sign(err[j]) or 1.0) == s:
            if abs(err[j]) > abs(err[best]):
                best = j
            j += 1
        runs.append(best)
        i = j
    while len(runs) > m:
        # drop the smaller end, or merge the weakest adjacent pair
        vals = [abs(err[r]) for r in runs]
        if len(runs) - m == 1:
            runs.pop(0 if vals[0] < vals[-1] else -1)
        else:
            k = int(np.argmin(vals))
            runs.pop(k)
            # removing an interior point merges two same-sign neighbours; keep the larger
            if 0 < k < len(runs) and np.sign(err[runs[k - 1]]) == np.sign(err[runs[k]]):
                runs.pop(k if abs(err[runs[k]]) < abs(err[runs[k - 1]]) else k - 1)
    if len(runs) < m:
        extra = [i for i in np.argsort(-np.abs(err)) if i not in runs]
        runs = sorted(runs + extra[:m - len(runs)])
    return np.array(sorted(runs[:m]))


def _exchange(ref, i, err):
    ref = list(ref)
    if i in ref:
        return np.array(ref)
    s = np.sign(err[i])
    pos = int(np.searchsorted(ref, i))
    if pos == 0:
        if np.sign(err[ref[0]]) == s:
            ref[0] = i
        else:
            ref = [i] + ref[:-1]
    elif pos == len(ref):
        if np.sign(err[ref[-1]]) == s:
            ref[-1] = i
        else:
            ref = ref[1:] + [i]
    else:
        if np.sign(err[ref[pos - 1]]) == s:
            ref[pos - 1] = i
        else:
            ref[pos] = i
    return np.array(ref)


def _unscale(c, mid, half):
    # coefficients in x = (t - mid)/half  ->  coefficients in t
    P = np.polynomial.Polynomial(c)
    sub = np.polynomial.Polynomial([-mid / half, 1.0 / half])
    out = np.zeros(len(c))
    res = P(sub).coef
    out[:res.size] = res
    return out


# rational functions ------------------------------------------------------------------

@dataclass
class RationalFn:
    """
    R(t) = Q(x) / P(x) with x = (t - mid) / half the affine image of the
    domain [a, b] on [-1, 1]; coefficients in increasing degree of x.
    """
    num: np.ndarray
    den: np.ndarray
    domain: tuple = (-1.0, 1.0)
    margin: float = 0.0
    heuristic: bool = True
    flag: str = ""

    @property
    def _map(self):
        a, b = self.domain
        return 0.5 * (a + b), 0.5 * (b - a)

    def _x(self, t):
        mid, half = self._map
        return (np.asarray(t, dtype=float) - mid) / half

    def numerator(self, t):
        return np.polynomial.polynomial.polyval(self._x(t), self.num)

    def denominator(self, t):
        return np.polynomial.polynomial.polyval(self._x(t), self.den)

    def __call__(self, t):
        return self.numerator(t) / self.denominator(t)

    def derivative(self, t):
        x = self._x(t)
        P = np.polynomial.Polynomial(self.den)
        Q = np.polynomial.Polynomial(self.num)
        _, half = self._map
        return ((Q.deriv() * P - Q * P.deriv())(x) / P(x) ** 2) / half

    def denominator_margin(self, n=1001):
        grid = np.linspace(*self.domain, n)
        return float(np.min(np.abs(self.denominator(grid))))

    def in_t(self):
        """(Q, P) as numpy Polynomials in the original variable t."""
        mid, half = self._map
        sub = np.polynomial.Polynomial([-mid / half, 1.0 / half])
        return np.polynomial.Polynomial(self.num)(sub), np.polynomial.Polynomial(self.den)(sub)

    def to_dict(self):
        return {"num": list(map(float, self.num)), "den": list(map(float, self.den)),
                "domain": list(self.domain), "margin": self.margin,
                "heuristic": self.heuristic, "flag": self.flag}


def rational_distance(t, v, d, margin=1e-3, iters=40, tol=1e-13):
    """
    Upper bound on the discrete minimax distance to rational functions of
    type (d, d), by differential correction.

    Each step solves the linear programme
        minimise  max_i (|v_i P(x_i) - Q(x_i)| - delta P(x_i)) / P_k(x_i)
    over Q, P with P >= margin on the grid and max |P coefficient| <= 1;
    iterates whose denominator drops below ``margin`` on a 1001-point grid
    of the domain are rejected.

    Returns
    -------
    dist : float
    R : RationalFn
        ``heuristic`` is always True; ``flag`` is "polynomial-fallback" when
        no rational iterate improved on the polynomial fit.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.unique(t).size < 2 * d + 2:
        raise ValueError(f"need at least {2 * d + 2} distinct points for type ({d}, {d})")
    dist0, c0 = poly_distance(t, v, d)
    mid, half = _scale(t)
    domain = (mid - half, mid + half)
    x = (t - mid) / half
    V = _vander(x, d)
    Vd = _vander(np.linspace(-1, 1, 1001), d)
    # polynomial start in the scaled variable
    cx, *_ = np.linalg.lstsq(V, np.polynomial.polynomial.polyval(t, c0), rcond=None)
    best = RationalFn(cx, np.r_[1.0, np.zeros(d)], domain, 1.0, True, "polynomial-fallback")
    best_dist = dist0
    Pk = np.ones_like(x)
    delta = dist0
    n, m = V.shape
    for _ in range(iters):
        # variables: q (d+1), p (d+1), z
        nv = 2 * m + 1
        cost = np.zeros(nv)
        cost[-1] = 1.0
        A, b = [], []
        for sgn in (1.0, -1.0):
            # sgn (v P - Q) - delta P - z Pk <= 0
            rows = np.hstack([-sgn * V, (sgn * v - delta)[:, None] * V, -Pk[:, None]])
            A.append(rows)
            b.append(np.zeros(n))
        A.append(np.hstack([np.zeros((Vd.shape[0], m)), -Vd, np.zeros((Vd.shape[0], 1))]))
        b.append(-margin * np.ones(Vd.shape[0]))
        bounds = [(None, None)] * m + [(-1.0, 1.0)] * m + [(None, None)]
        res = linprog(cost, A_ub=np.vstack(A), b_ub=np.concatenate(b), bounds=bounds,
                      method="highs")
        if res.status != 0:
            break
        q, p = res.x[:m], res.x[m:2 * m]
        Pv = V @ p
        if np.min(Vd @ p) < margin * (1 - 1e-9) or np.min(Pv) <= 0:
            break
        err = float(np.max(np.abs(v - (V @ q) / Pv)))
        if err < best_dist - tol:
            best = RationalFn(q, p, domain, float(np.min(np.abs(Vd @ p))), True, "")
            best_dist = err
            delta = err
            Pk = Pv
        else:
            break
    return best_dist, best


# interval families and constants -----------------------------------------------------

@dataclass
class RationalBounds:
    I: list
    J: list
    C_deriv: float
    C_value: float
    C: float
    A: float
    budget_I: float
    budget_J: float

    def to_dict(self):
        return {k: getattr(self, k) for k in ("I", "J", "C_deriv", "C_value", "C", "A",
                                              "budget_I", "budget_J")}


def _real_parts(roots, lo=-1.0, hi=1.0, pad=0.0):
    out = []
    for r in roots:
        x = float(np.real(r))
        if lo - pad <= x <= hi + pad and not any(abs(x - y) < 1e-12 for y in out):
            out.append(x)
    return sorted(out)


def _complement(intervals, lo=-1.0, hi=1.0):
    """Closed pieces of [lo, hi] minus the union of the open intervals."""
    pieces, cur = [], lo
    for a, b in sorted(intervals):
        if a > cur:
            pieces.append((cur, min(a, hi)))
        cur = max(cur, b)
        if cur >= hi:
            break
    if cur < hi:
        pieces.append((cur, hi))
    return [(a, b) for a, b in pieces if b >= a]


def _sup_on(poly_fn, crit_roots, pieces, mode):
    vals = []
    for a, b in pieces:
        pts = [a, b] + [float(np.real(r)) for r in crit_roots
                        if abs(np.imag(r)) < 1e-10 and a <= np.real(r) <= b]
        vals.extend(abs(poly_fn(p)) for p in pts)
    if not vals:
        return 0.0 if mode == "max" else math.inf
    return max(vals) if mode == "max" else min(vals)


def rational_bounds_constants(E, R, eta):
    """
    Interval families and constants for a rational function on [-1, 1].

    R is first normalised so that sup_E |R| = 1 (A is the original sup).
    I-intervals (at most d+1) are centred at the real parts of the
    denominator roots, J-intervals (at most 2d+1) at the real parts of all
    roots; each family has total length < eta.  Outside them the derivative
    and the size of R are bounded from the exact extrema (endpoints plus
    critical points).

    Parameters
    ----------
    E : array_like
        Points in [-1, 1] (the spread set).
    R : RationalFn
        With domain [-1, 1].
    eta : float

    Returns
    -------
    RationalBounds
        C_deriv bounds |R'| off the I-family, 1/C_value bounds |R| from below
        off the J-family, and C is the larger of the two.
    """
    E = np.asarray(E, dtype=float)
    if tuple(R.domain) != (-1.0, 1.0):
        raise ValueError("rational_bounds_constants works on [-1, 1]; rescale first")
    A = float(np.max(np.abs(R(E))))
    if not A > 0:
        raise ValueError("R vanishes on E")
    Q = np.polynomial.Polynomial(R.num) / A
    P = np.polynomial.Polynomial(R.den)
    try:
        den_roots = P.trim(1e-300).roots() if P.degree() > 0 else []
        num_roots = Q.trim(1e-300).roots() if Q.degree() > 0 else []
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"root finding failed: {e}") from e
    I_c = _real_parts(den_roots, pad=eta)
    J_c = _real_parts(list(den_roots) + list(num_roots), pad=eta)
    wI = eta / (len(I_c) + 1)
    wJ = eta / (len(J_c) + 1)
    I = [(c - wI / 2, c + wI / 2) for c in I_c]
    J = [(c - wJ / 2, c + wJ / 2) for c in J_c]
    N1 = Q.deriv() * P - Q * P.deriv()                # R' = N1 / P^2
    N2 = N1.deriv() * P - 2 * N1 * P.deriv()          # R'' = N2 / P^3

    def dR(x):
        return N1(x) / P(x) ** 2

    def R_(x):
        return Q(x) / P(x)

    crit_d = N2.roots() if N2.degree() > 0 else []
    crit_v = N1.roots() if N1.degree() > 0 else []
    C_deriv = _sup_on(dR, crit_d, _complement(I), "max") * (1 + 1e-9)
    mn = _sup_on(R_, crit_v, _complement(J), "min")
    C_value = (1.0 / mn) * (1 + 1e-9) if mn > 0 else math.inf
    return RationalBounds(I, J, C_deriv, C_value, max(C_deriv, C_value), A,
                          wI * len(I), wJ * len(J))


def rescaled_constants(C_deriv, C_value, A, a, b):
    """
    Bounds for R on [a, b] from those of R_hat(x) = R(xi^{-1}(x)) / A on
    [-1, 1], xi the affine bijection [a, b] -> [-1, 1]:
    |R'| <= 2 A C_deriv / (b - a) and |R| >= A / C_value.
    """
    return 2.0 * A * C_deriv / (b - a), A / C_value


def near_rational_measure(t, values, P, Q, c, weights=None, margin=0.0):
    """
    Weighted fraction of grid points with |T(t) - Q(t) / P(t)| <= c.

    P and Q are callables (or RationalFn parts); the denominator must stay
    above ``margin`` in absolute value on the grid.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    Pv = np.asarray(P(t), dtype=float) * np.ones_like(t)
    if np.min(np.abs(Pv)) <= margin:
        raise ValueError("denominator comes within the positivity margin on the grid")
    inside = np.abs(values - np.asarray(Q(t), dtype=float) / Pv) <= c
    return float(np.sum(w[inside]) / np.sum(w))
