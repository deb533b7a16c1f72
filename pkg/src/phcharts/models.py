"""
Analytic model diffeomorphisms of R^3 and scenario files.

All built-in models have the form

    f(x1, x2, x3) = (l1 x1, l2 x2 + eps g(x1) x3, l3 x3)

with shear profile g = 0 (MODEL-A), g(x) = x (MODEL-B) or g(x) = sin x
(MODEL-C).  They fix the origin and have explicit inverses.  The maps are
written with the generic functions of :mod:`phcharts.jets`, so the same code
evaluates points, arrays of points and jets.
"""
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import jets
from .errors import DomainError, ValidationError
from .jets import Jet

__all__ = ["ModelMap", "make_model", "model_eval", "model_inverse_eval",
           "Scenario", "load_scenario", "scenario_from_dict", "DEFAULT_PARAMS"]

DEFAULT_PARAMS = {"l1": 2.0, "l2": 1.2, "l3": 0.3, "eps": 0.1}

_SHEARS = {
    "A": (lambda x: 0.0 * x, lambda x: 0.0 * x),
    "B": (lambda x: x, lambda x: 0.0 * x + 1.0),
    "C": (jets.sin, jets.cos),
}


def _canonical_name(name):
    n = str(name).upper().replace("MODEL-", "").replace("MODEL_", "")
    if n not in _SHEARS:
        raise ValidationError(f"unknown model {name!r}; expected one of A, B, C")
    return n


class ModelMap:
    """
    A closed-form model map on the working box [-1, 1]^3.

    Parameters
    ----------
    name : {'A', 'B', 'C'}
    l1, l2, l3 : float
        Multipliers along the three axes at the fixed point.
    eps : float
        Shear strength.
    box : float
        Half-width of the working box.
    """

    def __init__(self, name="A", l1=2.0, l2=1.2, l3=0.3, eps=0.1, box=1.0):
        self.name = _canonical_name(name)
        self.l1, self.l2, self.l3, self.eps = float(l1), float(l2), float(l3), float(eps)
        self.box = float(box)
        self._g, self._dg = _SHEARS[self.name]
        check_partial_hyperbolicity(self.l1, self.l2, self.l3)

    @property
    def params(self):
        return {"l1": self.l1, "l2": self.l2, "l3": self.l3, "eps": self.eps}

    @property
    def multipliers(self):
        return np.array([self.l1, self.l2, self.l3])

    def key(self):
        """Stable identifier used for cache keys."""
        blob = json.dumps({"model": self.name, **self.params}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __repr__(self):
        return f"ModelMap({self.name!r}, l1={self.l1}, l2={self.l2}, l3={self.l3}, eps={self.eps})"

    # maps -------------------------------------------------------------------
    def forward(self, x):
        x1, x2, x3 = x[0], x[1], x[2]
        return [self.l1 * x1, self.l2 * x2 + self.eps * self._g(x1) * x3, self.l3 * x3]

    def inverse(self, y):
        y1, y2, y3 = y[0], y[1], y[2]
        x1 = y1 / self.l1
        x3 = y3 / self.l3
        return [x1, (y2 - self.eps * self._g(x1) * x3) / self.l2, x3]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack(self.forward(np.moveaxis(x, -1, 0)), axis=-1)

    def inv(self, y):
        y = np.asarray(y, dtype=float)
        return np.stack(self.inverse(np.moveaxis(y, -1, 0)), axis=-1)

    def iterate(self, x, n):
        """f^n(x) for integer n of either sign."""
        x = np.asarray(x, dtype=float)
        step = self.__call__ if n >= 0 else self.inv
        for _ in range(abs(int(n))):
            x = step(x)
        return x

    def jacobian(self, x):
        """Df at points x of shape (..., 3); returns (..., 3, 3)."""
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 0, 0] = self.l1
        J[..., 1, 1] = self.l2
        J[..., 2, 2] = self.l3
        J[..., 1, 0] = self.eps * self._dg(x[..., 0]) * x[..., 2]
        J[..., 1, 2] = self.eps * self._g(x[..., 0])
        return J

    def in_box(self, x, tol=1e-12):
        return bool(np.all(np.abs(np.asarray(x, dtype=float)) <= self.box + tol))


def check_partial_hyperbolicity(l1, l2, l3):
    ok = abs(l1) > max(1.0, abs(l2)) and abs(l3) < min(1.0, abs(l2))
    if not ok:
        raise ValidationError(
            "partial hyperbolicity requires |l1| > max(1, |l2|) and |l3| < min(1, |l2|); "
            f"got l1={l1}, l2={l2}, l3={l3}", )


def make_model(name, **params):
    p = dict(DEFAULT_PARAMS)
    p.update(params)
    return ModelMap(name, **p)


def _jet_at(fn, x, order, box, check):
    x = np.asarray(x, dtype=float)
    if check and np.any(np.abs(x) > box + 1e-12):
        raise DomainError(f"point {x.tolist()} outside the working box [-{box}, {box}]^3")
    u = [Jet.variable(i, 3, order, x[..., i]) for i in range(3)]
    return fn(u)


def model_eval(model, x, order):
    """
    Jet of the forward map at ``x``.

    Parameters
    ----------
    model : ModelMap
    x : array_like, shape (..., 3)
        Base point(s), inside the working box.
    order : int

    Returns
    -------
    list of 3 Jet
        Components of f(x + u) as jets in the displacement u.

    Raises
    ------
    DomainError
        If ``x`` leaves the working box.
    """
    return _jet_at(model.forward, x, order, model.box, True)


def model_inverse_eval(model, y, order, check=True):
    """Jet of the inverse map at ``y`` (same conventions as :func:`model_eval`)."""
    return _jet_at(model.inverse, y, order, model.box, check)


# scenarios ---------------------------------------------------------------------

_GRID_DEFAULTS = {"t_points": 41, "s_points": 9, "t_max": 0.5, "probe_points": 65,
                  "approx_points": 257}
_TOL_DEFAULTS = {"conjugacy": 1e-7, "series": 1e-14, "poly_tail": 1e-8,
                 "template": 1e-7, "eps_dev": 0.01}
_QNI_DEFAULTS = {"V": 1.0, "nu": 0.1, "kmin": 1, "kmax": 5, "samples_per_scale": 24}
_TOP_KEYS = {"model", "params", "order", "radius", "ell", "anchor", "depth",
             "grids", "tolerances", "qni", "out_dir", "seed", "stages"}
ALL_STAGES = ("splitting", "nform", "charts", "templates", "approx", "qni", "compat")


@dataclass
class Scenario:
    """Validated run configuration; see README for the file format."""
    model: str = "A"
    params: dict = field(default_factory=lambda: dict(DEFAULT_PARAMS))
    order: int = 8
    radius: float = 0.5
    ell: int = 0
    anchor: str = "fixed"
    depth: int = 60
    grids: dict = field(default_factory=lambda: dict(_GRID_DEFAULTS))
    tolerances: dict = field(default_factory=lambda: dict(_TOL_DEFAULTS))
    qni: dict = field(default_factory=lambda: dict(_QNI_DEFAULTS))
    out_dir: str = "out"
    seed: int = 0
    stages: list = field(default_factory=lambda: list(ALL_STAGES))

    def build_model(self):
        return ModelMap(self.model, **self.params)

    def to_dict(self):
        return asdict(self)

    def hash(self, exclude=("out_dir",)):
        d = self.to_dict()
        for k in exclude:
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def cache_key(self):
        """Hash of the fields that cached stages depend on (QNI settings,
        stage list and seed excluded)."""
        return self.hash(exclude=("out_dir", "qni", "stages", "seed"))


def _merge(name, given, defaults):
    if not isinstance(given, dict):
        raise ValidationError(f"{name} must be a table")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown key(s) in {name}: {sorted(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


def scenario_from_dict(d):
    """Build and validate a Scenario from a parsed mapping."""
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown key(s): {sorted(unknown)}")
    sc = Scenario()
    if "model" in d:
        sc.model = _canonical_name(d["model"])
    sc.params = _merge("params", d.get("params", {}), DEFAULT_PARAMS)
    sc.grids = _merge("grids", d.get("grids", {}), _GRID_DEFAULTS)
    sc.tolerances = _merge("tolerances", d.get("tolerances", {}), _TOL_DEFAULTS)
    sc.qni = _merge("qni", d.get("qni", {}), _QNI_DEFAULTS)
    for k in ("order", "ell", "depth", "seed"):
        if k in d:
            if not isinstance(d[k], int) or isinstance(d[k], bool):
                raise ValidationError(f"{k} must be an integer")
            setattr(sc, k, d[k])
    if "radius" in d:
        sc.radius = float(d["radius"])
    if "anchor" in d:
        sc.anchor = str(d["anchor"])
    if "out_dir" in d:
        sc.out_dir = str(d["out_dir"])
    if "stages" in d:
        sc.stages = list(d["stages"])
    validate_scenario(sc)
    return sc


def validate_scenario(sc):
    for k, v in sc.params.items():
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError(f"params.{k} must be a finite number")
    check_partial_hyperbolicity(sc.params["l1"], sc.params["l2"], sc.params["l3"])
    if sc.anchor != "fixed":
        raise ValidationError(f"anchor {sc.anchor!r} not supported; only 'fixed' (the origin)")
    if sc.ell < 0:
        raise ValidationError("ell must be >= 0")
    if sc.order < sc.ell + 2:
        raise ValidationError(f"order: K >= ell+2 required (K={sc.order}, ell={sc.ell})")
    if not 0 < sc.radius <= 1:
        raise ValidationError("radius must lie in (0, 1]")
    if not 0 < sc.grids["t_max"] <= 1:
        raise ValidationError("grids.t_max must lie in (0, 1]")
    for k in ("t_points", "s_points", "probe_points", "approx_points"):
        if int(sc.grids[k]) < 1:
            raise ValidationError(f"grids.{k} must be non-empty")
    q = sc.qni
    if not 0 < q["nu"] < 1:
        raise ValidationError("qni.nu must lie in (0, 1)")
    if q["V"] <= 0:
        raise ValidationError("qni.V must be positive")
    if not 1 <= q["kmin"] <= q["kmax"]:
        raise ValidationError("qni.kmin/kmax must satisfy 1 <= kmin <= kmax")
    if q["samples_per_scale"] < 16:
        raise ValidationError("qni.samples_per_scale must be >= 16")
    if sc.depth < 8:
        raise ValidationError("depth must be >= 8")
    bad = [s for s in sc.stages if s not in ALL_STAGES]
    if bad:
        raise ValidationError(f"unknown stage(s): {bad}")


def load_scenario(path):
    """
    Read a TOML scenario file and validate every field eagerly.

    Raises
    ------
    ValidationError
        On parse errors (message carries line/column) or invariant violations
        (message names the field).
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"{path}: parse error: {e}") from e
    except OSError as e:
        raise ValidationError(f"{path}: {e}") from e
    return scenario_from_dict(data)
