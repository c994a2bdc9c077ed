"""Parameter types, per-unit conversions and the plant parameter file loader.

Parameter files are flat ``section.key = value`` text::

    waterway.T_w = 1.211   # penstock water starting time [s]
    turbine.A_t  = 1.075

Everything is per unit on the plant bases (``Q_R``, ``H_R``) unless the key
says otherwise. The reference file shipped with the package lives in
``vshp/data/reference.cfg``.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

logger = logging.getLogger(__name__)

DEFAULT_PARAMS_FILE = "reference.cfg"


class ParamError(ValueError):
    """Raised when a parameter file cannot be turned into valid parameters."""


class MissingKeyError(ParamError):
    pass


class ValidationError(ParamError):
    pass


class PenstockMode(str, enum.Enum):
    DELAY = "delay"          # travelling wave with a 2*T_e delay line
    LUMPED = "lumped"        # rational approximation of tanh(s T_e)
    INELASTIC = "inelastic"  # rigid water column, h = -T_w dq/dt

    @classmethod
    def parse(cls, value) -> "PenstockMode":
        if isinstance(value, cls):
            return value
        aliases = {
            "travellingwavedelay": cls.DELAY,
            "lumpedtanh": cls.LUMPED,
        }
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(
                f"unknown penstock mode {value!r}; expected one of "
                f"{', '.join(m.value for m in cls)}") from None


ROTOR_LAWS = ("torque", "power", "unscaled")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


@dataclass(frozen=True)
class WaterwayParams:
    T_w: float
    T_e: float
    Z_0: float
    f_p1: float
    f_p0: float
    C_s: float
    T_w2: float
    f_p2: float
    Q_R: float
    H_R: float

    def __post_init__(self):
        for name in ("T_w", "T_e", "C_s", "T_w2"):
            _require(getattr(self, name) > 0, f"{name} must be > 0")
        for name in ("f_p0", "f_p1", "f_p2"):
            _require(getattr(self, name) >= 0, f"{name} must be >= 0")
        _require(self.Z_0 > 0, "Z_0 must be > 0")
        _require(self.Q_R > 0 and self.H_R > 0, "Q_R and H_R must be > 0")
        mismatch = abs(self.Z_0 - self.T_w / self.T_e) / self.Z_0
        _require(mismatch <= 1e-2,
                 f"Z_0 must equal T_w/T_e within 1% (got {self.Z_0} vs "
                 f"{self.T_w / self.T_e:.4f})")


@dataclass(frozen=True)
class TurbineParams:
    A_t: float
    q_nl: float
    D_t: float
    psi: float
    xi: float
    sigma: float
    alpha_1R: float
    Q_Rt: float
    H_Rt: float
    Omega_R: float = 750.0
    T_a: float = 6.0
    rotor_law: str = "torque"
    head_sign: int = 1

    def __post_init__(self):
        _require(self.xi > self.psi, "xi must be > psi")
        _require(0 < self.alpha_1R < math.pi / 2, "alpha_1R must lie in (0, pi/2)")
        _require(self.Q_Rt > 0 and self.H_Rt > 0, "Q_Rt and H_Rt must be > 0")
        _require(self.T_a > 0, "T_a must be > 0")
        _require(self.rotor_law in ROTOR_LAWS,
                 f"rotor_law must be one of {', '.join(ROTOR_LAWS)}")
        _require(self.head_sign in (1, -1), "head_sign must be +1 or -1")


@dataclass(frozen=True)
class GovernorParams:
    k_gp: float
    k_gi: float
    k_gd: float
    T_G: float
    rate_limit: float
    T_f: float = 0.1
    g_min: float = 0.0
    g_max: float = 1.0

    def __post_init__(self):
        for name in ("k_gp", "k_gi", "k_gd"):
            _require(getattr(self, name) >= 0, f"{name} must be >= 0")
        _require(self.T_G > 0, "T_G must be > 0")
        _require(self.T_f > 0, "T_f must be > 0")
        _require(self.rate_limit > 0, "rate_limit must be > 0")
        _require(self.g_min < self.g_max, "g_min must be < g_max")


@dataclass(frozen=True)
class PlantParams:
    waterway: WaterwayParams
    turbine: TurbineParams
    governor: GovernorParams
    tanh_order: tuple[int, int] = (1, 2)
    penstock_mode: PenstockMode = PenstockMode.LUMPED
    T_conv: float = 0.0
    defaulted: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        n_num, n_den = self.tanh_order
        _require(n_num >= 0 and n_den >= n_num,
                 "tanh order must satisfy 0 <= n_num <= n_den")
        _require(self.T_conv >= 0, "T_conv must be >= 0")
        object.__setattr__(self, "penstock_mode", PenstockMode.parse(self.penstock_mode))
        object.__setattr__(self, "tanh_order", (int(n_num), int(n_den)))

    def replace(self, **overrides) -> "PlantParams":
        """Copy with dotted-key overrides, e.g. ``replace(**{"turbine.A_t": 1.0})``."""
        return with_overrides(self, overrides)

    def digest(self) -> str:
        """Stable SHA-256 of every parameter value; used in output metadata."""
        return hashlib.sha256(
            json.dumps(as_flat_dict(self), sort_keys=True).encode()).hexdigest()


# --- file format -----------------------------------------------------------

_SECTIONS = {
    "waterway": WaterwayParams,
    "turbine": TurbineParams,
    "governor": GovernorParams,
}
_PLANT_KEYS = {"penstock_mode", "tanh_num", "tanh_den", "T_conv"}
_STRING_KEYS = {"turbine.rotor_law", "plant.penstock_mode"}
_INT_KEYS = {"turbine.head_sign", "plant.tanh_num", "plant.tanh_den"}


def _coerce(key: str, raw: str):
    if key in _STRING_KEYS:
        return raw.strip()
    try:
        value = float(raw)
    except ValueError:
        raise ParamError(f"value for {key} is not a number: {raw!r}") from None
    if key in _INT_KEYS:
        if value != int(value):
            raise ParamError(f"value for {key} must be an integer: {raw!r}")
        return int(value)
    return value


def parse_params_text(text: str, source: str = "<string>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key.count(".") != 1:
            raise ParamError(f"{source}:{lineno}: key {key!r} needs a section prefix")
        if key in values:
            raise ParamError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def params_from_mapping(values: Mapping[str, object]) -> PlantParams:
    """Build validated parameters from a flat ``section.key`` mapping."""
    defaulted = []
    grouped: dict[str, dict[str, object]] = {name: {} for name in _SECTIONS}
    plant: dict[str, object] = {}
    for key, value in values.items():
        section, name = key.split(".", 1)
        if section == "plant":
            if name not in _PLANT_KEYS:
                raise ParamError(f"unknown key {key!r}")
            plant[name] = value
        elif section in _SECTIONS:
            known = {f.name for f in dataclasses.fields(_SECTIONS[section])}
            if name not in known:
                raise ParamError(f"unknown key {key!r}")
            grouped[section][name] = value
        else:
            raise ParamError(f"unknown section in key {key!r}")

    parts = {}
    for section, cls in _SECTIONS.items():
        kwargs = grouped[section]
        for f in dataclasses.fields(cls):
            if f.name in kwargs:
                continue
            if f.default is dataclasses.MISSING:
                raise MissingKeyError(f"missing mandatory key '{section}.{f.name}'")
            defaulted.append(f"{section}.{f.name}")
        parts[section] = cls(**kwargs)

    plant_defaults = {"penstock_mode": "lumped", "tanh_num": 1, "tanh_den": 2, "T_conv": 0.0}
    for name, default in plant_defaults.items():
        if name not in plant:
            plant[name] = default
            defaulted.append(f"plant.{name}")

    params = PlantParams(
        waterway=parts["waterway"],
        turbine=parts["turbine"],
        governor=parts["governor"],
        tanh_order=(plant["tanh_num"], plant["tanh_den"]),
        penstock_mode=PenstockMode.parse(plant["penstock_mode"]),
        T_conv=float(plant["T_conv"]),
        defaulted=tuple(defaulted),
    )
    for key in params.defaulted:
        logger.info("defaulted %s = %s", key, lookup(params, key))
    return params


def load_params(path) -> PlantParams:
    """Read and validate a parameter file.

    Omitted optional keys are filled with their documented defaults and listed
    in ``PlantParams.defaulted``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParamError(f"cannot read parameter file {path}: {exc.strerror}") from exc
    return params_from_mapping(parse_params_text(text, source=str(path)))


def default_params() -> PlantParams:
    """The shipped reference parameter set."""
    text = resources.files("vshp.data").joinpath(DEFAULT_PARAMS_FILE).read_text()
    return params_from_mapping(parse_params_text(text, source=DEFAULT_PARAMS_FILE))


def lookup(params: PlantParams, key: str):
    section, name = key.split(".", 1)
    if section == "plant":
        if name == "tanh_num":
            return params.tanh_order[0]
        if name == "tanh_den":
            return params.tanh_order[1]
        value = getattr(params, name)
        return value.value if isinstance(value, PenstockMode) else value
    return getattr(getattr(params, section), name)


def as_flat_dict(params: PlantParams) -> dict[str, object]:
    flat: dict[str, object] = {}
    for section in _SECTIONS:
        for key, value in dataclasses.asdict(getattr(params, section)).items():
            flat[f"{section}.{key}"] = value
    for name in sorted(_PLANT_KEYS):
        flat[f"plant.{name}"] = lookup(params, f"plant.{name}")
    return flat


def with_overrides(params: PlantParams, overrides: Mapping[str, object]) -> PlantParams:
    if not overrides:
        return params
    flat = as_flat_dict(params)
    for key, value in overrides.items():
        if key not in flat:
            raise ParamError(f"unknown key {key!r}")
        flat[key] = _coerce(key, str(value)) if isinstance(value, str) else value
    new = params_from_mapping(flat)
    # keys defaulted in the original stay reported as defaulted
    kept = tuple(k for k in params.defaulted if k not in overrides)
    return dataclasses.replace(new, defaulted=kept)


def lossless_turbine(params: PlantParams) -> PlantParams:
    """Ideal-turbine variant: A_t = 1, q_nl = 0, D_t = 0."""
    return with_overrides(params, {"turbine.A_t": 1.0, "turbine.q_nl": 0.0, "turbine.D_t": 0.0})


# --- per-unit helpers --------------------------------------------------------

def plant_to_turbine_pu(q, h, p: TurbineParams, w: WaterwayParams):
    """Convert plant-base flow and head to the turbine's own rated bases."""
    return q * (w.Q_R / p.Q_Rt), h * (w.H_R / p.H_Rt)


def turbine_to_plant_pu(q_t, h_t, p: TurbineParams, w: WaterwayParams):
    return q_t * (p.Q_Rt / w.Q_R), h_t * (p.H_Rt / w.H_R)


def friction_head_loss(f, q):
    """Quadratic friction loss ``f * q * |q|``; odd in q so reverse flow loses head too."""
    return f * q * abs(q)
