"""
Normal-form parametrizations of strong stable and unstable leaves.

A leaf parametrization Phi_x : R -> R^3 satisfies Phi_x(0) = x,
|Phi_x'(0)| = 1 and the conjugacy

    f(Phi_x(t)) = Phi_{f(x)}(lam_x t).

Leaves are transported along orbits as univariate jets.  Stable leaves are
pulled back from the forward orbit, Phi_y(s) = f^{-1}(Phi_{f y}(lam_y s));
unstable leaves are pushed forward from the backward orbit,
Phi_{f y}(s) = f(Phi_y(s / lam_y)).  Each step renormalises the derivative,
so the multipliers fall out of the recursion (it is a power iteration on the
leaf jets).  The recursion is seeded with a straight segment at the far end;
the seed error contracts geometrically when the leaf is dynamically defined.

Unstable leaves through points of the stable axis are not dynamically
defined for the global model maps (the backward orbit escapes along x3 and
the seed error grows).  For those, :func:`hopf_brush` provides the analytic
invariant family H(tau, s) with f(H(tau, s)) = H(l1 tau, l3 s).
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .jets import Jet, jet_compose

__all__ = ["LeafParam", "ScaledLeaf", "stable_leaf", "unstable_leaf", "build_leaf_param",
           "hopf_brush", "brush_leaf", "scaled_leaf", "conjugacy_residual",
           "SEED_CONVENTION"]

SEED_CONVENTION = "linear seed along the frame direction at depth n0, renormalised each step"


@dataclass
class LeafParam:
    """
    Jet of a normal-form leaf parametrization.

    Attributes
    ----------
    base : ndarray, shape (..., 3)
    index : {1, 3}
    jets : list of 3 univariate Jet
        Components of Phi(t); constants equal ``base``.
    lam : ndarray
        Multiplier lam_{i, base} (maps this leaf to the leaf at f(base)).
    radius : float
        Validity radius in the leaf parameter.
    meta : dict
        Seeding depth, convention and contraction diagnostics.
    """
    base: np.ndarray
    index: int
    jets: list
    lam: np.ndarray
    radius: float = 0.5
    meta: dict = None

    @property
    def order(self):
        return self.jets[0].order

    def __call__(self, t):
        """Points Phi(t); ``t`` broadcasts against the batch shape."""
        t = np.asarray(t, dtype=float)
        return np.stack([jet_eval_1d(j, t) for j in self.jets], axis=-1)

    def derivative(self, t, n=1):
        t = np.asarray(t, dtype=float)
        out = []
        for j in self.jets:
            d = j
            for _ in range(n):
                d = d.deriv(0)
            out.append(jet_eval_1d(d, t))
        return np.stack(out, axis=-1)

    def coeffs(self):
        """Coefficient array of shape (..., 3, K+1)."""
        return np.stack([j.coeffs for j in self.jets], axis=-2)

    def __getitem__(self, key):
        return LeafParam(self.base[key], self.index, [j[key] for j in self.jets],
                         np.asarray(self.lam)[key], self.radius, self.meta)

    def to_dict(self):
        return {"base": np.asarray(self.base).tolist(), "index": self.index,
                "coeffs": self.coeffs().tolist(), "lam": np.asarray(self.lam).tolist(),
                "radius": self.radius, "meta": self.meta or {}}


def jet_eval_1d(j, t):
    """Evaluate a (batched) univariate jet at parameter values ``t``.

    ``t`` may carry extra trailing axes beyond the batch shape of ``j``.
    """
    c = j.coeffs
    t = np.asarray(t, dtype=float)
    extra = t.ndim - c.ndim + 1
    if extra > 0:
        c = c.reshape(c.shape[:-1] + (1,) * extra + c.shape[-1:])
    out = np.zeros(np.broadcast_shapes(c.shape[:-1], t.shape))
    for k in range(c.shape[-1] - 1, -1, -1):
        out = out * t + c[..., k]
    return out


def _line(base, direction, order):
    return [Jet.variable(0, 1, order, 0.0) * direction[..., i] + base[..., i] for i in range(3)]


def _transport(step, orbit, seed_dir, order, expanding, keep=0):
    """Run the leaf recursion from orbit[-1] down to orbit[0].

    ``step`` maps a leaf jet at orbit[n+1] (or orbit[n-1]) to an unnormalised
    jet at orbit[n]; renormalisation fixes |Phi'(0)| = 1.  With ``keep`` > 0
    the leaves at orbit[0:keep] are returned as a list instead.
    """
    phi = _line(orbit[-1], seed_dir, order)
    lams = []
    kept = []
    for n in range(len(orbit) - 2, -1, -1):
        g = step(phi)
        speed = np.linalg.norm(np.stack([c.coeffs[..., 1] for c in g], axis=-1), axis=-1)
        # stable: Phi_y(s) = G(lam s) with lam = 1/|G'(0)|
        # unstable: Phi_{fy}(s) = G(s/lam) with lam = |G'(0)|
        lam = speed if expanding else 1.0 / speed
        fac = 1.0 / speed
        phi = [c.scale([fac]) for c in g]
        for i in range(3):
            phi[i].coeffs[..., 0] = orbit[n][..., i]
        lams.append(lam)
        if n < keep:
            kept.append(phi)
    if keep:
        return kept[::-1], lams[::-1]
    return phi, lams[::-1]


def _seed_dir(index, shape, seed_dir):
    d = np.zeros(3)
    d[index - 1] = 1.0
    if seed_dir is not None:
        d = np.asarray(seed_dir, dtype=float)
    return np.broadcast_to(d / np.linalg.norm(d, axis=-1, keepdims=True), shape + (3,))


def _leaf(model, x, order, depth, seed_dir, index, check, tol):
    x = np.asarray(x, dtype=float)
    batch = x.shape[:-1]
    if index == 3:
        orbit = [x]
        for _ in range(depth):
            orbit.append(model(orbit[-1]))

        def step(phi):
            return model.inverse(phi)
        expanding = False
    else:
        orbit = [x]
        for _ in range(depth):
            orbit.append(model.inv(orbit[-1]))

        def step(phi):
            return model.forward(phi)
        expanding = True
    d = _seed_dir(index, batch, seed_dir)
    with np.errstate(over="ignore", invalid="ignore"):
        phi, lams = _transport(step, orbit, d, order, expanding)
    meta = {"depth": depth, "seed": SEED_CONVENTION}
    if check:
        # second run with a bent seed measures how much the seed still matters
        bend = np.zeros(batch + (3,))
        bend[..., 1] = 1e-3
        d2 = d + bend
        d2 = d2 / np.linalg.norm(d2, axis=-1, keepdims=True)
        with np.errstate(over="ignore", invalid="ignore"):
            phi2, _ = _transport(step, orbit, d2, order, expanding)
        diff = max(float(np.nanmax(np.abs(a.coeffs - b.coeffs))) if a.coeffs.size else 0.0
                   for a, b in zip(phi, phi2))
        if not np.isfinite(diff):
            diff = np.inf
        ratio = (max(diff, 1e-300) / 1e-3) ** (1.0 / depth)
        meta["seed_sensitivity"] = diff
        meta["contraction_ratio"] = ratio
        if not diff <= tol:
            raise NumericalError(
                f"leaf recursion (index {index}) does not contract: seed sensitivity {diff:.3g} "
                f"after {depth} steps, contraction ratio {ratio:.3g}",
                contraction_ratio=ratio, sensitivity=diff)
        # domination: near x the leaf must stretch faster (contract harder) than
        # the centre rate, otherwise the recursion collapsed onto the centre bundle
        l1, l2, l3 = (abs(v) for v in model.multipliers)
        near = np.log(np.abs(np.stack(lams[:min(depth, 8)])))
        rate = float(np.nanmean(near))
        cut = 0.5 * (np.log(l1) + np.log(l2)) if index == 1 else 0.5 * (np.log(l2) + np.log(l3))
        meta["log_rate"] = rate
        if not (rate > cut if index == 1 else rate < cut):
            raise NumericalError(
                f"leaf recursion (index {index}) lost domination near {x.tolist()}: "
                f"mean log multiplier {rate:.4g} vs threshold {cut:.4g} "
                "(the orbit leaves the region of uniform splitting)",
                log_rate=rate, threshold=cut)
    return LeafParam(x, index, phi, lams[0], meta=meta)


def stable_leaf(model, x, order, depth=60, seed_dir=None, check=True, tol=1e-10):
    """
    Normal-form jet of the strong stable leaf through ``x`` (batched).

    Parameters
    ----------
    model : ModelMap
    x : array_like, shape (..., 3)
    order : int
        Jet order K.
    depth : int
        Number of forward iterates used; the linear seed sits at f^depth(x).
    seed_dir : array_like, optional
        Seed direction (default: the x3 axis, the stable direction at the
        fixed point).
    check : bool
        Rerun with a perturbed seed and raise if the result moved by more than
        ``tol``.

    Returns
    -------
    LeafParam
    """
    return _leaf(model, x, order, depth, seed_dir, 3, check, tol)


def unstable_leaf(model, x, order, depth=60, seed_dir=None, check=True, tol=1e-10):
    """Normal-form jet of the strong unstable leaf through ``x`` (see :func:`stable_leaf`)."""
    return _leaf(model, x, order, depth, seed_dir, 1, check, tol)


def build_leaf_param(model, segment, i, K, depth=60):
    """
    Leaf parametrizations at every point of an orbit segment.

    One recursion runs along the whole segment (plus ``depth`` seeding steps
    beyond its far end), so the leaf at each point is the conjugacy image of
    its neighbour's leaf.

    Returns
    -------
    LeafParam
        Batched over the segment points.
    """
    if i not in (1, 3):
        raise ValueError("leaf index must be 1 or 3")
    pts = np.asarray(segment.points, dtype=float)
    n = len(pts)
    if i == 3:
        # forward orbit from the first point; leaves are needed at orbit[0:n]
        orbit = list(pts)
        for _ in range(depth):
            orbit.append(model(orbit[-1]))
        step, expanding = model.inverse, False
    else:
        orbit = list(pts[::-1])
        for _ in range(depth):
            orbit.append(model.inv(orbit[-1]))
        step, expanding = model.forward, True
    d = _seed_dir(i, (), None)
    with np.errstate(over="ignore", invalid="ignore"):
        kept, lams = _transport(step, orbit, d, K, expanding, keep=n)
    if i == 1:
        kept = kept[::-1]
        # lams[j] maps orbit[j+1] -> orbit[j]; reindex to the forward direction
        lam = np.array([lams[n - 2 - j] for j in range(n - 1)] + [np.nan])
    else:
        lam = np.array(lams[:n])
    jets = [Jet(np.stack([kp[c].coeffs for kp in kept]), 1, K) for c in range(3)]
    return LeafParam(pts, i, jets, lam, meta={"depth": depth, "seed": SEED_CONVENTION,
                                               "transported": True})


# analytic invariant family through the axes ------------------------------------

def hopf_brush(model, order, tol=1e-12):
    """
    Bivariate jet H(tau, s) with f(H(tau, s)) = H(l1 tau, l3 s).

    H(tau, 0) and H(0, s) are the unstable and stable axis leaves at the fixed
    point.  Coefficients are solved degree by degree; at a resonance
    l_i = l1^a l3^b the coefficient is set to zero, which is consistent only
    if the forcing vanishes there (checked against ``tol``).

    Returns
    -------
    list of 3 Jet in 2 variables (tau, s)
    meta : dict
        Resonances met and their forcing sizes.
    """
    lam = model.multipliers
    tau = Jet.variable(0, 2, order)
    s = Jet.variable(1, 2, order)
    H = [tau, Jet.zeros(2, order), s]
    exps = H[0].exponents
    deg = exps.sum(axis=1)
    rate = lam[0] ** exps[:, 0] * lam[2] ** exps[:, 1]
    resonances = []
    for m in range(2, order + 1):
        fH = model.forward(H)
        HL = [h.scale([lam[0], lam[2]]) for h in H]
        sel = deg == m
        for i in range(3):
            forcing = (fH[i] - HL[i]).coeffs[sel]
            denom = lam[i] - rate[sel]
            c = H[i].coeffs.copy()
            res = np.abs(denom) < 1e-12
            if np.any(res):
                for k in np.nonzero(res)[0]:
                    resonances.append({"component": i + 1, "exponent": exps[sel][k].tolist(),
                                       "forcing": float(abs(forcing[k]))})
                    if abs(forcing[k]) > tol:
                        raise NumericalError(
                            f"resonant term {exps[sel][k].tolist()} in component {i + 1} "
                            f"has forcing {forcing[k]:.3g}", forcing=float(forcing[k]))
            vals = np.where(res, 0.0, -forcing / np.where(res, 1.0, denom))
            c[sel] = vals
            H[i] = Jet(c, 2, order)
    return H, {"resonances": resonances}


def brush_leaf(model, s, order, brush=None):
    """
    Unstable leaf through the stable-axis point H(0, s), read off the brush.

    The curve tau -> H(tau, s) is reparametrised to unit initial speed.
    """
    s = np.asarray(s, dtype=float)
    if brush is None:
        brush, _ = hopf_brush(model, max(order, 12))
    tvar = Jet.variable(0, 1, order)
    sconst = Jet.constant(s, 1, order)
    speed0 = np.linalg.norm(np.stack([_eval_brush_dtau(h, s) for h in brush], axis=-1), axis=-1)
    inner = [tvar * (1.0 / speed0), sconst]
    comps = [jet_compose(h, inner) for h in brush]
    base = np.stack([c.const for c in comps], axis=-1)
    # f(H(tau/v(s), s)) = H(l1 tau/v(s), l3 s), so lam = l1 v(l3 s)/v(s)
    speed1 = np.linalg.norm(np.stack([_eval_brush_dtau(h, model.l3 * s) for h in brush], axis=-1),
                            axis=-1)
    lam = model.l1 * speed1 / speed0
    return LeafParam(base, 1, comps, lam, radius=1.0, meta={"source": "hopf_brush"})


def _eval_brush_dtau(h, s):
    # d/dtau H(tau, s) at tau = 0
    d = h.deriv(0)
    pts = np.stack([np.zeros_like(s), s], axis=-1)
    return d(pts)


def scaled_leaf(model, leaf, k, rho=1.0, n=33, tol=1e-8):
    """
    Dynamically scaled leaf piece W^{i,k}_rho at the leaf's base point.

    For an unstable leaf the parameter range is (-rho/lam^{(k)}, rho/lam^{(k)})
    with lam^{(k)} the k-step product of unstable multipliers; for a stable
    leaf it is (-rho lam^{(k)}, rho lam^{(k)}) with stable multipliers of the
    backward orbit.  Sampling is uniform in the normal-form parameter.

    Raises
    ------
    DomainError
        If k is negative or the scale is too deep to resolve in double precision.
    """
    if k < 0:
        raise DomainError("scale k must be non-negative")
    base = np.asarray(leaf.base, dtype=float)
    if leaf.index == 1:
        far = model.iterate(base, k)
        far_leaf = unstable_leaf(model, far, leaf.order, check=False)
        prod = _multiplier_product(model, base, k, 1)
        half = rho / prod
    else:
        far = model.iterate(base, -k)
        far_leaf = stable_leaf(model, far, leaf.order, check=False)
        prod = _multiplier_product(model, far, k, 3)
        half = rho * prod
    if not np.all(half > 1e-14):
        raise DomainError(f"scale k={k} too deep for radius {rho}")
    t = np.linspace(-1.0, 1.0, n) * np.asarray(half)[..., None]
    pts = leaf(t)
    ends = leaf(np.stack([-half, half], axis=-1))
    mapped = model.iterate(ends, k if leaf.index == 1 else -k)
    target = far_leaf(np.stack([-rho * np.ones_like(half), rho * np.ones_like(half)], axis=-1))
    err = float(np.max(np.abs(mapped - target)))
    if err > tol:
        raise NumericalError(f"scaled leaf endpoints miss the far leaf by {err:.3g}", error=err)
    return ScaledLeaf(base, leaf.index, k, rho, t, pts, err)


def _multiplier_product(model, x, k, index):
    # product of k multipliers starting at x along the forward orbit
    prod = np.ones(np.asarray(x).shape[:-1])
    y = np.asarray(x, dtype=float)
    fn = unstable_leaf if index == 1 else stable_leaf
    for _ in range(k):
        lp = fn(model, y, 1, check=False)
        prod = prod * lp.lam
        y = model(y)
    return prod


@dataclass
class ScaledLeaf:
    base: np.ndarray
    index: int
    k: int
    rho: float
    params: np.ndarray
    points: np.ndarray
    endpoint_error: float


def conjugacy_residual(model, leaf_x, leaf_fx, rho=0.5, n=41):
    """
    sup over a uniform grid in [-rho, rho] of |f(Phi_x(t)) - Phi_{f x}(lam_x t)|.
    """
    t = np.linspace(-rho, rho, n)
    lam = np.asarray(leaf_x.lam)[..., None]
    shape = np.broadcast_shapes(np.shape(lam), t.shape)
    tt = np.broadcast_to(t, shape)
    lhs = model(leaf_x(tt))
    rhs = leaf_fx(lam * tt)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=-1)))
