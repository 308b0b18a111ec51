"""YAML run configuration with validation and field/line diagnostics."""

from __future__ import annotations

import copy
import hashlib
from pathlib import Path

import numpy as np
import yaml

DEFAULTS = {
    "geometry": {"Nx": 16, "Ny": 16},
    "galerkin": {"n": 16},
    "time": {"T": 0.2, "dt": 0.002},
    "ensemble": {"M": 4, "seed": 0},
    "potential": {"c_f": 12.0, "theta": 1.0, "delta": 1.0, "xi": 1.0},
    "slip": {"alpha": 1.0},
    "noise": {"sigma": [0.5, 0.3], "cutoff": [4, 3], "h_amp": [0.2, 0.0], "h_mode": [0, 1], "K": None},
    "initial": {"kind": "stripe", "amplitude": 0.9, "width": 0.5},
    "control": {"kc": 1, "knots": 1, "params": None},
    "family": {"bound_a": 0.1, "bound_b": 0.3},
    "targets": {"source": "zero", "params": None, "files": []},
    "monitor": {"C0": 1.0, "p": 3.0, "delta": 10.0, "c_ledger": 1.0},
    "cost": {"lambda1": 0.0, "lambda2": 0.0, "variant": "graded"},
    "optimize": {"budget": 20, "restarts": 4, "seed": 0, "step0": 0.25},
    "audit": {"samples": 50, "seed": 0, "decay": 2.0, "q": 4.0, "pairs": 200},
    "verify": {"inject_violation": False, "epsilon": 0.01},
    "output": {"dir": "out"},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"{path}{k}: unknown field")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{path}{k}: expected a mapping")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def _line_index(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    index = {}
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return index

    def walk(n, prefix):
        if isinstance(n, yaml.MappingNode):
            for knode, vnode in n.value:
                key = f"{prefix}{knode.value}"
                index[key] = knode.start_mark.line + 1
                walk(vnode, key + ".")

    if node is not None:
        walk(node, "")
    return index


class RunConfig:
    """Validated nested configuration; attribute access via ``cfg["section"]["key"]``."""

    def __init__(self, data: dict | None = None, text: str | None = None):
        self.text = text
        self.lines = _line_index(text) if text else {}
        try:
            self.data = _merge(DEFAULTS, data or {})
        except ConfigError as e:
            raise ConfigError(self._where(str(e))) from None
        self.validate()

    def _where(self, msg: str) -> str:
        key = msg.split(":")[0]
        line = self.lines.get(key)
        return f"{msg} (line {line})" if line else msg

    def __getitem__(self, k):
        return self.data[k]

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"YAML parse error: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping")
        return cls(data, text)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"YAML parse error: {e}") from None
        return cls(data, text)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=None)

    def digest(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()

    def override(self, **kw) -> "RunConfig":
        d = copy.deepcopy(self.data)
        if kw.get("seed") is not None:
            d["ensemble"]["seed"] = int(kw["seed"])
        if kw.get("paths") is not None:
            d["ensemble"]["M"] = int(kw["paths"])
        if kw.get("out") is not None:
            d["output"]["dir"] = str(kw["out"])
        return RunConfig(d, self.text)

    # -- validation -------------------------------------------------------

    def _fail(self, key, msg):
        raise ConfigError(self._where(f"{key}: {msg}"))

    def _num(self, key, positive=False, nonneg=False, integer=False):
        sec, name = key.split(".")
        v = self.data[sec][name]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self._fail(key, f"expected a number, got {v!r}")
        if integer and int(v) != v:
            self._fail(key, f"expected an integer, got {v!r}")
        if not np.isfinite(v):
            self._fail(key, "must be finite")
        if positive and v <= 0:
            self._fail(key, f"must be positive, got {v}")
        if nonneg and v < 0:
            self._fail(key, f"must be nonnegative, got {v}")
        return v

    def validate(self):
        d = self.data
        nx = self._num("geometry.Nx", positive=True, integer=True)
        ny = self._num("geometry.Ny", positive=True, integer=True)
        if nx < 4 or nx % 2:
            self._fail("geometry.Nx", "must be even and >= 4")
        if ny < 4:
            self._fail("geometry.Ny", "must be >= 4")
        self._num("galerkin.n", positive=True, integer=True)
        T = self._num("time.T", nonneg=True)
        dt = self._num("time.dt", positive=True)
        if T > 0 and abs(round(T / dt) * dt - T) > 1e-9 * T:
            self._fail("time.T", "must be an integer multiple of time.dt")
        self._num("ensemble.M", positive=True, integer=True)
        s = self._num("ensemble.seed", nonneg=True, integer=True)
        if s >= 2**64:
            self._fail("ensemble.seed", "must fit in 64 bits")
        for k in ("c_f", "theta", "delta", "xi"):
            self._num(f"potential.{k}", positive=True)
        if d["potential"]["delta"] > d["potential"]["xi"]:
            self._fail("potential.delta", "must not exceed potential.xi")
        self._num("slip.alpha", positive=True)
        nz = d["noise"]
        m = len(nz["sigma"] or [])
        for k in ("cutoff", "h_amp", "h_mode"):
            if len(nz[k] or []) != m:
                self._fail(f"noise.{k}", f"needs {m} entries (one per channel)")
        if any(c < 0 for c in nz["cutoff"] or []) or any(h < 0 for h in nz["h_mode"] or []):
            self._fail("noise.cutoff", "mode indices must be nonnegative")
        if nz["K"] is not None:
            self._num("noise.K", nonneg=True)
        if d["initial"]["kind"] not in ("stripe", "zero"):
            self._fail("initial.kind", "must be 'stripe' or 'zero'")
        self._num("control.kc", nonneg=True, integer=True)
        self._num("control.knots", positive=True, integer=True)
        self._num("family.bound_a", nonneg=True)
        self._num("family.bound_b", nonneg=True)
        if d["targets"]["source"] not in ("zero", "control", "csv"):
            self._fail("targets.source", "must be zero, control or csv")
        if d["targets"]["source"] == "csv" and not d["targets"]["files"]:
            self._fail("targets.files", "needed when targets.source is csv")
        self._num("monitor.C0", positive=True)
        if self._num("monitor.p", positive=True) <= 2:
            self._fail("monitor.p", "must exceed 2")
        self._num("monitor.delta", positive=True)
        self._num("monitor.c_ledger", positive=True)
        self._num("cost.lambda1", nonneg=True)
        self._num("cost.lambda2", nonneg=True)
        if d["cost"]["variant"] not in ("graded", "l2"):
            self._fail("cost.variant", "must be graded or l2")
        self._num("optimize.budget", positive=True, integer=True)
        self._num("optimize.restarts", nonneg=True, integer=True)
        self._num("optimize.step0", positive=True)
        self._num("audit.samples", positive=True, integer=True)
        self._num("audit.pairs", positive=True, integer=True)
        self._num("audit.decay", positive=True)
        self._num("audit.q", positive=True)
        self._num("verify.epsilon", positive=True)
        kc, nk = int(d["control"]["kc"]), int(d["control"]["knots"])
        dim = nk * (4 * kc + 2 * (2 * kc + 1))
        for sec in ("control", "targets"):
            p = d[sec]["params"]
            if p is not None and np.asarray(p, dtype=float).size != dim:
                self._fail(f"{sec}.params", f"needs {dim} entries for kc={kc}, knots={nk}")
