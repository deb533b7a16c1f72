"""
Invariant splitting E1 + E2 + E3 and per-step multipliers along orbits.

Frames come from power iteration on the derivative cocycle: e1 by pushing a
vector forward from the backward orbit, e3 by pulling a vector back with
Df^{-1} from the forward orbit, and e2 as the intersection of the
centre-unstable and centre-stable planes (each obtained by QR iteration of a
2-plane).  Multipliers satisfy Df(x) e_i(x) = lam_i e_i(f x) with all lam_i
positive.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

__all__ = ["SplittingFrame", "OrbitSegment", "compute_frame", "orbit_segment",
           "lyapunov_exponents", "save_segment", "load_segment"]

_AXES = np.eye(3)


@dataclass
class SplittingFrame:
    """Unit frame at ``x`` with multipliers lam1 > lam2 > lam3 (all positive)."""
    x: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    lam1: float
    lam2: float
    lam3: float
    residual: float = 0.0
    depth: int = 0

    @property
    def matrix(self):
        return np.column_stack([self.e1, self.e2, self.e3])

    @property
    def lams(self):
        return np.array([self.lam1, self.lam2, self.lam3])

    def to_dict(self):
        return {"x": list(map(float, self.x)), "e1": list(map(float, self.e1)),
                "e2": list(map(float, self.e2)), "e3": list(map(float, self.e3)),
                "lam": [self.lam1, self.lam2, self.lam3], "residual": self.residual,
                "depth": self.depth}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["x"]), np.array(d["e1"]), np.array(d["e2"]), np.array(d["e3"]),
                   *d["lam"], residual=d["residual"], depth=d["depth"])


def _unit(v):
    return v / np.linalg.norm(v)


def _orient(v, ref):
    return v if np.dot(v, ref) >= 0 else -v


def _estimate(model, x, m):
    """Frame estimate at x from orbit data of depth m (no convergence check)."""
    back = [np.asarray(x, dtype=float)]
    for _ in range(m):
        back.append(model.inv(back[-1]))
    fwd = [np.asarray(x, dtype=float)]
    for _ in range(m + 1):
        fwd.append(model(fwd[-1]))
    Jb = model.jacobian(np.array(back[::-1][:-1]))   # at f^{-m}x ... f^{-1}x
    Jf = model.jacobian(np.array(fwd[:-1]))          # at x ... f^{m}x

    v = _AXES[0].copy()
    P = _AXES[:, :2].copy()
    for J in Jb:
        v = _unit(J @ v)
        P, _ = np.linalg.qr(J @ P)
    e1 = _orient(v, _AXES[0])
    n_cu = np.cross(P[:, 0], P[:, 1])

    w = _AXES[2].copy()
    S = _AXES[:, 1:].copy()
    for J in Jf[m - 1::-1]:
        Ji = np.linalg.inv(J)
        w = _unit(Ji @ w)
        S, _ = np.linalg.qr(Ji @ S)
    e3 = _orient(w, _AXES[2])
    n_cs = np.cross(S[:, 0], S[:, 1])
    e2 = _orient(_unit(np.cross(n_cu, n_cs)), _AXES[1])
    return e1, e2, e3


def compute_frame(model, x, n_power=200, tol=1e-9):
    """
    Invariant frame and multipliers at ``x``.

    Parameters
    ----------
    model : ModelMap
    x : array_like, shape (3,)
    n_power : int
        Maximal orbit depth used by the power iterations.
    tol : float
        Acceptance threshold for the invariance residual.

    Returns
    -------
    SplittingFrame

    Raises
    ------
    NumericalError
        If the estimates do not settle within ``n_power`` steps; ``info``
        carries the last residual.
    """
    x = np.asarray(x, dtype=float)
    depths = [d for d in (4, 8, 16, 32, 64, 128) if d < n_power] + [n_power]
    prev = None
    last = np.inf
    for m in depths:
        with np.errstate(all="ignore"):
            try:
                cur = _estimate(model, x, m)
                nxt = _estimate(model, model(x), m)
            except np.linalg.LinAlgError:
                break
        if not all(np.all(np.isfinite(v)) for v in cur + nxt):
            break
        if prev is not None:
            change = max(np.linalg.norm(a - b) for a, b in zip(cur, prev))
            J = model.jacobian(x)
            lam = [np.linalg.norm(J @ cur[0]), np.linalg.norm(J @ cur[1]),
                   1.0 / np.linalg.norm(np.linalg.inv(J) @ nxt[2])]
            res = max(np.linalg.norm(J @ e - l * en) for e, l, en in zip(cur, lam, nxt))
            last = max(change, res)
            if last <= tol:
                lam = [float(l * np.sign(np.dot(J @ e, en))) for e, l, en in zip(cur, lam, nxt)]
                if not (lam[0] > lam[1] > lam[2] > 0 and lam[0] > 1 > lam[2]):
                    raise NumericalError("frame multipliers are not dominated",
                                         lams=lam, x=x.tolist())
                return SplittingFrame(x, *cur, *lam, residual=float(res), depth=m)
        prev = cur
    raise NumericalError(
        f"frame at {x.tolist()} did not converge within {n_power} steps "
        f"(last residual {last:.3g})", residual=float(last), x=x.tolist())


@dataclass
class OrbitSegment:
    """
    Orbit f^{-N}(x), ..., f^{N}(x) with frames and per-step multipliers.

    ``lams[j]`` holds the multipliers at ``points[j]`` (mapping it to
    ``points[j+1]``); ``log_products[n]`` is the running sum of log lams over
    the first n points, so lam^{(n)} at the first point is its exponential.
    """
    points: np.ndarray
    frames: list
    lams: np.ndarray
    anchor_index: int
    model_key: str = ""
    log_products: np.ndarray = field(init=False)

    def __post_init__(self):
        self.log_products = np.concatenate(
            [np.zeros((1, 3)), np.cumsum(np.log(np.abs(self.lams)), axis=0)])

    @property
    def n_steps(self):
        return len(self.points) - 1

    def product(self, i, start, n):
        """lam^{(n)}_{i, points[start]} = lam_{i, f^{n-1}y} ... lam_{i, y}."""
        return float(np.prod(self.lams[start:start + n, i]))

    def to_records(self):
        return [{"index": j - self.anchor_index, **fr.to_dict()} for j, fr in enumerate(self.frames)]


def orbit_segment(model, x, N, n_power=200, tol=1e-9):
    """
    Build the segment of length 2N+1 centred on ``x``.

    Orientation is transported along the segment: each frame vector is
    flipped if needed so that successive vectors have positive inner product.
    """
    x = np.asarray(x, dtype=float)
    pts = [model.iterate(x, j) for j in range(-N, N + 1)]
    frames = [compute_frame(model, p, n_power, tol) for p in pts]
    for a, b in zip(frames[:-1], frames[1:]):
        for name in ("e1", "e2", "e3"):
            if np.dot(getattr(a, name), getattr(b, name)) < 0:
                setattr(b, name, -getattr(b, name))
    lams = np.array([fr.lams for fr in frames])
    return OrbitSegment(np.array(pts), frames, lams, N, model.key())


def lyapunov_exponents(segment):
    """
    Exponents from the stored multiplier products.

    Returns
    -------
    chi : ndarray, shape (3,)
        (1/n) log |lam^{(n)}_i| over the whole segment, n = number of steps.
    band : ndarray, shape (3,)
        Largest deviation of a single-step log multiplier from chi_i, the
        empirical stand-in for the slack parameter of the Lyapunov norm.
    """
    n = segment.n_steps
    if n < 1:
        raise ValueError("segment needs at least two points")
    logs = np.log(np.abs(segment.lams[:n]))
    chi = logs.sum(axis=0) / n
    band = np.max(np.abs(logs - chi), axis=0)
    return chi, band


def save_segment(segment, path, key=None):
    """Write the orbit cache as JSON lines, first line a header with the key."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"cache_key": key or segment.model_key,
                             "anchor_index": segment.anchor_index}, sort_keys=True) + "\n")
        for rec in segment.to_records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_segment(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        frames = [SplittingFrame.from_dict(json.loads(line)) for line in fh if line.strip()]
    pts = np.array([fr.x for fr in frames])
    lams = np.array([fr.lams for fr in frames])
    return OrbitSegment(pts, frames, lams, header["anchor_index"], header["cache_key"])
