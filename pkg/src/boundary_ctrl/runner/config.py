"""Experiment configuration: parsing, validation and state specifiers."""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import ConfigError
from ..spectral import FourierBasis, Spectrum


@dataclass(frozen=True)
class ExperimentConfig:
    l: float = 2 * math.pi
    N: int = 8
    a: float = 0.0
    c: float = 5.0
    tau: float = 1.0
    horizon: float = 50.0
    tolerance: float = 1e-3
    Q: int = 10 ** 6
    seed: int = 0
    initial: str = "eigenstate:0"
    target: str = "eigenstate:1"
    mu0: float = 0.0
    mu1: float = 0.0
    coupling_indices: tuple = ()
    fidelity_target: float = 0.9
    rule: str = "midpoint"
    max_k: int = 2 ** 16
    trials: int = 100
    noise: float = 1e-2

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.type == "float":
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{f.name}: expected a number, got {value!r}", f.name)
                if not math.isfinite(value):
                    raise ConfigError(f"{f.name}: must be finite, got {value!r}", f.name)
                object.__setattr__(self, f.name, float(value))
            elif f.type == "int":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{f.name}: expected an integer, got {value!r}", f.name)
        checks = [
            ("l", self.l > 0, "must be > 0"),
            ("N", self.N >= 1, "must be >= 1"),
            ("c", self.c > 0, "must be > 0"),
            ("tau", self.tau > 0, "must be > 0"),
            ("horizon", self.horizon >= 0, "must be >= 0"),
            ("tolerance", self.tolerance > 0, "must be > 0"),
            ("Q", self.Q >= 1, "must be >= 1"),
            ("seed", self.seed >= 0, "must be >= 0"),
            ("fidelity_target", 0 < self.fidelity_target <= 1, "must lie in (0, 1]"),
            ("rule", self.rule in ("left", "midpoint"), "must be 'left' or 'midpoint'"),
            ("max_k", self.max_k >= 1, "must be >= 1"),
            ("trials", self.trials >= 1, "must be >= 1"),
            ("noise", self.noise >= 0, "must be >= 0"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}, got {getattr(self, name)!r}", name)
        for name in ("initial", "target"):
            parse_state_spec(getattr(self, name), name)
        try:
            idx = tuple(int(i) for i in self.coupling_indices)
        except (TypeError, ValueError):
            raise ConfigError("coupling_indices: expected a list of integers", "coupling_indices") from None
        object.__setattr__(self, "coupling_indices", idx)

    @property
    def basis(self) -> FourierBasis:
        return FourierBasis.on_interval(self.l, self.N)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["coupling_indices"] = list(self.coupling_indices)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw):
    kind = _FIELDS[name].type
    if not isinstance(raw, str):
        if kind == "tuple":
            return tuple(raw) if isinstance(raw, (list, tuple)) else raw
        if kind == "float" and isinstance(raw, int) and not isinstance(raw, bool):
            return float(raw)
        return raw
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "tuple":
            return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}", name) from None
    return text


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    unknown = sorted(set(mapping) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration key", unknown[0])
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in mapping.items()})


def load_config(path) -> ExperimentConfig:
    """Read ``key = value`` lines (``#`` comments) or, for ``.json`` files, a JSON object."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be an object")
        return config_from_mapping(data)
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       delimiters=("=",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return config_from_mapping(dict(parser["config"]))


# --------------------------------------------------------------------------
# state specifiers


def parse_state_spec(spec: str, name: str = "state"):
    """Split ``eigenstate:k``, ``mode:n`` or ``vector:z0,z1,...`` into kind and payload."""
    if not isinstance(spec, str) or ":" not in spec:
        raise ConfigError(f"{name}: expected 'eigenstate:k', 'mode:n' or 'vector:...', got {spec!r}", name)
    kind, _, body = spec.partition(":")
    kind = kind.strip()
    try:
        if kind in ("eigenstate", "mode"):
            return kind, int(body)
        if kind == "vector":
            return kind, np.array([complex(z.strip().replace(" ", "")) for z in body.split(",")])
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {spec!r}", name) from None
    raise ConfigError(f"{name}: unknown state kind {kind!r}", name)


def resolve_state(spec: str, basis: FourierBasis, spectrum: Spectrum, name: str = "state") -> np.ndarray:
    kind, payload = parse_state_spec(spec, name)
    if kind == "eigenstate":
        if not 0 <= payload < spectrum.dim:
            raise ConfigError(f"{name}: eigenstate index {payload} out of range", name)
        return spectrum.eigenstate(payload)
    if kind == "mode":
        if abs(payload) > basis.N:
            raise ConfigError(f"{name}: mode {payload} outside |n| <= {basis.N}", name)
        return basis.mode_vector(payload)
    if len(payload) != basis.dim:
        raise ConfigError(f"{name}: vector has {len(payload)} entries, expected {basis.dim}", name)
    nrm = np.linalg.norm(payload)
    if nrm == 0:
        raise ConfigError(f"{name}: zero vector", name)
    return payload / nrm
