"""
Independent reference computations used by the tests.

None of these call into the package's algorithms; they use closed forms,
brute force or generic library routines.
"""
import itertools
import math

import numpy as np
from scipy.optimize import linprog

L1, L2, L3, EPS = 2.0, 1.2, 0.3, 0.1


def closed_form(name, x, l1=L1, l2=L2, l3=L3, eps=EPS):
    x1, x2, x3 = x
    g = {"A": 0.0, "B": x1, "C": math.sin(x1)}[name]
    return np.array([l1 * x1, l2 * x2 + eps * g * x3, l3 * x3])


def fd_jacobian(fn, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.column_stack(cols)


def fd_hessian_entry(fn, x, comp, i, j, h=1e-4):
    x = np.asarray(x, dtype=float)
    ei, ej = np.zeros(3), np.zeros(3)
    ei[i], ej[j] = h, h
    return (fn(x + ei + ej)[comp] - fn(x + ei - ej)[comp] - fn(x - ei + ej)[comp]
            + fn(x - ei - ej)[comp]) / (4 * h * h)


def sin_taylor(a, K):
    """Taylor coefficients of sin(a t) up to t^K."""
    c = np.zeros(K + 1)
    for k in range(1, K + 1, 2):
        c[k] = (-1) ** ((k - 1) // 2) * a ** k / math.factorial(k)
    return c


def template_series(t, l1=L1, l2=L2, l3=L3, eps=EPS, tol=1e-17):
    """-(eps/l2) sum_k (l3/l2)^k sin(l1^k t), summed until the weight drops below tol."""
    out = np.zeros_like(np.asarray(t, dtype=float))
    k = 0
    while (l3 / l2) ** k > tol:
        out = out + (l3 / l2) ** k * np.sin(l1 ** k * np.asarray(t))
        k += 1
    return -(eps / l2) * out


def stable_slope_graph_transform(x1, depth=80, l1=L1, l2=L2, l3=L3, eps=EPS):
    """
    Slope m(x1) of the MODEL-B stable line through (x1, 0, 0), from the
    graph-transform recursion m(x) = (l3 m(l1 x) - eps x) / l2 seeded with 0.
    """
    m = 0.0
    for n in range(depth, -1, -1):
        xn = l1 ** n * x1
        m = (l3 * m - eps * xn) / l2
    return m


def qr_lyapunov(jac, fn, x0, n):
    """Exponents from QR of the Jacobian product along n forward steps."""
    Q = np.eye(3)
    x = np.asarray(x0, dtype=float)
    acc = np.zeros(3)
    for _ in range(n):
        Q, R = np.linalg.qr(jac(x) @ Q)
        s = np.sign(np.diag(R))
        Q, R = Q * s, (R.T * s).T
        acc += np.log(np.abs(np.diag(R)))
        x = fn(x)
    return acc / n


def brute_spread(xs, k, sigma, eta, atom=0.0):
    """Exhaustive removal over all subsets of consecutive runs."""
    xs = sorted(xs)
    n = len(xs)
    for mask in range(1 << n):
        rem = [(mask >> i) & 1 for i in range(n)]
        runs, i = [], 0
        while i < n:
            if rem[i]:
                j = i
                while j + 1 < n and rem[j + 1]:
                    j += 1
                runs.append((i, j))
                i = j + 1
            else:
                i += 1
        if len(runs) > k + 1:
            continue
        if sum(xs[j] - xs[i] + 2 * atom for i, j in runs) >= eta:
            continue
        surv = [x for x, r in zip(xs, rem) if not r]
        g = []
        for x in surv:
            if not g or x - g[-1] > sigma:
                g.append(x)
        if len(g) <= k:
            return False
    return True


def lp_minimax(t, v, d):
    """Discrete minimax distance to degree-d polynomials as a linear programme."""
    V = np.vander(np.asarray(t, dtype=float), d + 1, increasing=True)
    n, m = V.shape
    A = np.vstack([np.hstack([V, -np.ones((n, 1))]), np.hstack([-V, -np.ones((n, 1))])])
    b = np.r_[v, -v]
    r = linprog(np.r_[np.zeros(m), 1.0], A_ub=A, b_ub=b, bounds=[(None, None)] * (m + 1),
                method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                         "dual_feasibility_tolerance": 1e-10})
    return float(r.fun)


def levelled_line_error(t, v):
    """
    Best line in the discrete sup norm by enumerating reference triples:
    the minimax value is the largest levelled error over all triples.
    """
    best = 0.0
    for i, j, k in itertools.combinations(range(len(t)), 3):
        M = np.array([[1, t[i], 1], [1, t[j], -1], [1, t[k], 1]], dtype=float)
        try:
            c0, c1, h = np.linalg.solve(M, [v[i], v[j], v[k]])
        except np.linalg.LinAlgError:
            continue
        best = max(best, abs(h))
    return best


def line_distance(p0, d0, p1, d1):
    """Distance between two non-parallel lines in R^3."""
    n = np.cross(d0, d1)
    return abs(np.dot(np.asarray(p1) - np.asarray(p0), n)) / np.linalg.norm(n)


def model_b_unstable_line(y2, s):
    """MODEL-B unstable leaf through (0, y2, s): (tau, y2 - s tau / 6, s)."""
    return np.array([0.0, y2, s]), np.array([1.0, -s / 6, 0.0])


def model_b_stable_line(t):
    """MODEL-B stable leaf through (t, 0, 0): (t, -t u / 6, u)."""
    return np.array([t, 0.0, 0.0]), np.array([0.0, -t / 6, 1.0])
