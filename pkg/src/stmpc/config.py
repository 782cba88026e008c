"""Experiment configuration: JSON in, validated objects out.

A configuration is a JSON object with the sections below.  Only ``system``
and ``constraints`` are required; everything else falls back to the
defaults shown (those of the two-state benchmark)::

    {
      "system": {"A": [[...]], "B": [[...]], "W": [[...]]},
      "constraints": {
        "X": {"box": {"lower": [...], "upper": [...]}},
        "U": {"H": [[...]], "h": [...]}
      },
      "chance": {"epsilon": 0.2, "quantile": "paper-literal"},
      "cost": {"Q": identity, "R": identity},
      "controller": {"variant": "pTTSMPC", "N": 8, "gamma": 100.0,
                     "init_mode": "flexible"},
      "sim": {"N_sim": 15, "N_s": 1000, "seed": 0, "x0": [2.5, 2.8],
              "avg_window": min(6, N_sim)},
      "tolerances": {"qp_tol": 1e-9, "set_tol": 1e-7, "mrpi_eps": 1e-5,
                     "lambda_tol": 1e-6}
    }

``set_tol`` is the convergence tolerance of the tube sequence.  Unknown
keys are rejected so that typos do not silently fall back to defaults.
"""

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .controller import INIT_MODES, VARIANTS, TubeSMPC
from .exceptions import ConfigError
from .reachability import QUANTILE_CONVENTIONS
from .sets import HPolytope
from .simulation import SimConfig
from .synthesis import SystemModel

DEFAULTS = {
    "chance": {"epsilon": 0.2, "quantile": "paper-literal"},
    "controller": {"variant": "pTTSMPC", "N": 8, "gamma": 100.0, "init_mode": "flexible"},
    "sim": {"N_sim": 15, "N_s": 1000, "seed": 0, "x0": [2.5, 2.8], "avg_window": 6},
    "tolerances": {"qp_tol": 1e-9, "set_tol": 1e-7, "mrpi_eps": 1e-5, "lambda_tol": 1e-6},
}

PAPER_EXAMPLE = {
    "system": {
        "A": [[1.0, 0.0075], [-0.143, 0.996]],
        "B": [[4.798], [0.115]],
        "W": [[0.0016, 0.0], [0.0, 0.0016]],
    },
    "constraints": {
        "X": {"box": {"lower": [-2.0, -3.0], "upper": [2.0, 3.0]}},
        "U": {"box": {"lower": [-0.2], "upper": [0.2]}},
    },
    "chance": {"epsilon": 0.2, "quantile": "paper-literal"},
    "cost": {"Q": [[1.0, 0.0], [0.0, 10.0]], "R": [[1.0]]},
    "controller": {"variant": "pTTSMPC", "N": 8, "gamma": 100.0, "init_mode": "flexible"},
    "sim": {"N_sim": 15, "N_s": 1000, "seed": 0, "x0": [2.5, 2.8], "avg_window": 6},
    "tolerances": {"qp_tol": 1e-9, "set_tol": 1e-7, "mrpi_eps": 1e-5, "lambda_tol": 1e-6},
}

_SECTIONS = ("system", "constraints", "chance", "cost", "controller", "sim", "tolerances")


def _matrix(value, path, shape=None):
    try:
        M = np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a numeric matrix") from None
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ConfigError(path, "expected a finite 2-D numeric array")
    if shape is not None and M.shape != shape:
        raise ConfigError(path, f"expected shape {shape}, got {M.shape}")
    return M


def _vector(value, path, length=None):
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a numeric vector") from None
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise ConfigError(path, "expected a finite 1-D numeric array")
    if length is not None and v.size != length:
        raise ConfigError(path, f"expected length {length}, got {v.size}")
    return v


def _check_keys(section, allowed, path):
    if not isinstance(section, dict):
        raise ConfigError(path, "expected an object")
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}", "unknown field")


def _parse_set(spec, path, dim):
    """Normalize a set spec to either the box or the ``H``/``h`` form."""
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object with 'box' or 'H'/'h'")
    if "box" in spec:
        _check_keys(spec, ("box",), path)
        box = spec["box"]
        _check_keys(box, ("lower", "upper"), f"{path}.box")
        for key in ("lower", "upper"):
            if key not in box:
                raise ConfigError(f"{path}.box.{key}", "missing field")
        lo = _vector(box["lower"], f"{path}.box.lower", dim)
        hi = _vector(box["upper"], f"{path}.box.upper", dim)
        if np.any(lo >= hi):
            raise ConfigError(f"{path}.box", "lower must be strictly below upper")
        return {"box": {"lower": lo.tolist(), "upper": hi.tolist()}}
    _check_keys(spec, ("H", "h"), path)
    for key in ("H", "h"):
        if key not in spec:
            raise ConfigError(f"{path}.{key}", "missing field")
    H = _matrix(spec["H"], f"{path}.H")
    if H.shape[1] != dim:
        raise ConfigError(f"{path}.H", f"expected {dim} columns, got {H.shape[1]}")
    h = _vector(spec["h"], f"{path}.h", H.shape[0])
    return {"H": H.tolist(), "h": h.tolist()}


def _to_polytope(spec):
    if "box" in spec:
        return HPolytope.from_box(spec["box"]["lower"], spec["box"]["upper"])
    return HPolytope(spec["H"], spec["h"])


def _choice(value, options, path):
    if value not in options:
        raise ConfigError(path, f"expected one of {list(options)}, got {value!r}")
    return value


def _number(value, path, lo=None, hi=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "expected a number")
    if integer and int(value) != value:
        raise ConfigError(path, "expected an integer")
    value = int(value) if integer else float(value)
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(path, f"value {value} outside [{lo}, {hi}]")
    return value


@dataclass
class ExperimentConfig:
    """Validated experiment description; see the module docstring for the layout."""

    data: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("$", "expected a JSON object")
        _check_keys(raw, _SECTIONS, "$")
        for sec in ("system", "constraints"):
            if sec not in raw:
                raise ConfigError(sec, "missing section")
        out = {}

        sysd = raw["system"]
        _check_keys(sysd, ("A", "B", "W"), "system")
        for key in ("A", "B", "W"):
            if key not in sysd:
                raise ConfigError(f"system.{key}", "missing field")
        A = _matrix(sysd["A"], "system.A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigError("system.A", f"expected a square matrix, got {A.shape}")
        B = _matrix(sysd["B"], "system.B")
        if B.shape[0] != n:
            raise ConfigError("system.B", f"expected {n} rows, got {B.shape[0]}")
        m = B.shape[1]
        W = _matrix(sysd["W"], "system.W", (n, n))
        if not np.allclose(W, W.T) or np.linalg.eigvalsh(0.5 * (W + W.T)).min() < -1e-12:
            raise ConfigError("system.W", "covariance must be symmetric positive semidefinite")
        out["system"] = {"A": A.tolist(), "B": B.tolist(), "W": W.tolist()}

        cons = raw["constraints"]
        _check_keys(cons, ("X", "U"), "constraints")
        for key in ("X", "U"):
            if key not in cons:
                raise ConfigError(f"constraints.{key}", "missing field")
        out["constraints"] = {
            "X": _parse_set(cons["X"], "constraints.X", n),
            "U": _parse_set(cons["U"], "constraints.U", m),
        }

        ch = {**DEFAULTS["chance"], **raw.get("chance", {})}
        _check_keys(ch, DEFAULTS["chance"], "chance")
        out["chance"] = {
            "epsilon": _number(ch["epsilon"], "chance.epsilon", 0.0, 1.0),
            "quantile": _choice(ch["quantile"], QUANTILE_CONVENTIONS, "chance.quantile"),
        }
        if not 0.0 < out["chance"]["epsilon"] < 1.0:
            raise ConfigError("chance.epsilon", "must lie strictly between 0 and 1")

        cost = raw.get("cost", {})
        _check_keys(cost, ("Q", "R"), "cost")
        Q = _matrix(cost.get("Q", np.eye(n)), "cost.Q", (n, n))
        R = _matrix(cost.get("R", np.eye(m)), "cost.R", (m, m))
        out["cost"] = {"Q": Q.tolist(), "R": R.tolist()}

        ctl = {**DEFAULTS["controller"], **raw.get("controller", {})}
        _check_keys(ctl, DEFAULTS["controller"], "controller")
        out["controller"] = {
            "variant": _choice(ctl["variant"], VARIANTS, "controller.variant"),
            "N": _number(ctl["N"], "controller.N", 1, integer=True),
            "gamma": _number(ctl["gamma"], "controller.gamma", 0.0),
            "init_mode": _choice(ctl["init_mode"], INIT_MODES, "controller.init_mode"),
        }

        sim = {**DEFAULTS["sim"], **raw.get("sim", {})}
        _check_keys(sim, DEFAULTS["sim"], "sim")
        N_sim = _number(sim["N_sim"], "sim.N_sim", 1, integer=True)
        if "avg_window" not in raw.get("sim", {}):
            sim["avg_window"] = min(sim["avg_window"], N_sim)
        out["sim"] = {
            "N_sim": N_sim,
            "N_s": _number(sim["N_s"], "sim.N_s", 1, integer=True),
            "seed": _number(sim["seed"], "sim.seed", 0, 2 ** 64 - 1, integer=True),
            "x0": _vector(sim["x0"], "sim.x0", n).tolist(),
            "avg_window": _number(sim["avg_window"], "sim.avg_window", 1, N_sim, integer=True),
        }

        tol = {**DEFAULTS["tolerances"], **raw.get("tolerances", {})}
        _check_keys(tol, DEFAULTS["tolerances"], "tolerances")
        out["tolerances"] = {k: _number(v, f"tolerances.{k}", 0.0) for k, v in tol.items()}
        for k, v in out["tolerances"].items():
            if v <= 0:
                raise ConfigError(f"tolerances.{k}", "must be positive")
        return cls(out)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(raw)

    @classmethod
    def paper_example(cls):
        return cls.from_dict(copy.deepcopy(PAPER_EXAMPLE))

    def to_dict(self):
        return copy.deepcopy(self.data)

    def dumps(self):
        return json.dumps(self.data, indent=2, sort_keys=True)

    # ------------------------------------------------------------ builders
    def system(self):
        s = self.data["system"]
        return SystemModel(np.array(s["A"]), np.array(s["B"]), np.array(s["W"]))

    def constraint_sets(self):
        c = self.data["constraints"]
        return _to_polytope(c["X"]), _to_polytope(c["U"])

    def controller(self, variant=None, init_mode=None):
        """Unfitted :class:`TubeSMPC`; ``variant``/``init_mode`` override the file."""
        ctl, tol = self.data["controller"], self.data["tolerances"]
        return TubeSMPC(
            variant=variant or ctl["variant"],
            horizon=ctl["N"],
            gamma=ctl["gamma"],
            init_mode=init_mode or ctl["init_mode"],
            epsilon=self.data["chance"]["epsilon"],
            quantile=self.data["chance"]["quantile"],
            Q=np.array(self.data["cost"]["Q"]),
            R=np.array(self.data["cost"]["R"]),
            qp_tol=tol["qp_tol"],
            conv_tol=tol["set_tol"],
            mrpi_eps=tol["mrpi_eps"],
            lambda_tol=tol["lambda_tol"],
        )

    def fitted_controller(self, variant=None, init_mode=None):
        X, U = self.constraint_sets()
        return self.controller(variant, init_mode).fit(self.system(), X, U)

    def sim_config(self, seed=None, runs=None):
        s = self.data["sim"]
        return SimConfig(
            N_sim=s["N_sim"],
            N_s=s["N_s"] if runs is None else int(runs),
            seed=s["seed"] if seed is None else int(seed),
            x0=tuple(s["x0"]),
            avg_window=s["avg_window"],
        )
