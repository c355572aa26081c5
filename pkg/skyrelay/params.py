# skyrelay/params.py

"""
System parameters: one YAML document in, one immutable SystemParams out.

Units inside SystemParams are always SI (m, m^-2, J, W, s). The document
picks a unit by key suffix, e.g. ``lambda_t_per_km2`` or ``lambda_t_per_m2``,
``B_max_wh`` or ``B_max_j``, ``eta_n_db`` or ``eta_n``. ``serialize`` writes
the SI spelling back, so loading a serialized document is a no-op.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Literal, Mapping

import yaml
from django.conf import settings
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from skyrelay.exceptions import ConfigError

logger = logging.getLogger(__name__)

STANDARD_GRAVITY = 9.80665

_DB = "db"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class RotorParams(_Frozen):
    """Rotary-wing constants; W_total includes the average package."""

    W_total: PositiveFloat
    rho_air: PositiveFloat
    R_rotor: PositiveFloat
    A_disc: PositiveFloat
    v0: PositiveFloat
    U_tip: PositiveFloat
    s_solidity: PositiveFloat
    Omega: PositiveFloat
    k_corr: PositiveFloat
    delta_drag: PositiveFloat
    d0: PositiveFloat


class PowerProfile(_Frozen):
    p_m: PositiveFloat
    p_mp: PositiveFloat
    p_s: PositiveFloat
    p_sp: PositiveFloat
    v: PositiveFloat
    v_p: PositiveFloat
    rotor: RotorParams | None = None
    comm_power: NonNegativeFloat = 0.0

    @model_validator(mode="after")
    def _heavier_never_cheaper(self) -> "PowerProfile":
        if self.p_mp < self.p_m:
            raise ValueError(f"p_mp ({self.p_mp}) must be >= p_m ({self.p_m})")
        if self.p_sp < self.p_s:
            raise ValueError(f"p_sp ({self.p_sp}) must be >= p_s ({self.p_s})")
        return self


class LinkSpec(_Frozen):
    """
    Physics of one link. Aerial links mix LoS/NLoS Nakagami states whose
    probabilities depend on elevation; ground links are Rayleigh with
    exponent alpha_ground. ``distance_average`` picks how a cluster device
    distance enters the SNR law: "mixture" averages the CCDF over devices,
    "mean_power" takes the mean received power before the fading.
    """

    kind: Literal["aerial", "ground"]
    rho_tx: PositiveFloat
    sigma2: PositiveFloat
    h: NonNegativeFloat = 0.0
    alpha_l: float = Field(default=2.1, ge=2.0)
    alpha_n: float = Field(default=4.0, gt=2.0)
    alpha_ground: float = Field(default=4.0, gt=2.0)
    m_l: int = Field(default=3, ge=1)
    m_n: int = Field(default=1, ge=1)
    eta_l: PositiveFloat = 1.0
    eta_n: PositiveFloat = 1.0
    los_a: PositiveFloat = 4.9
    los_b: PositiveFloat = 0.43
    distance_average: Literal["mixture", "mean_power"] = "mixture"

    @model_validator(mode="after")
    def _aerial_needs_altitude(self) -> "LinkSpec":
        if self.kind == "aerial" and self.h <= 0:
            raise ValueError("aerial link needs a positive altitude h")
        return self


class Links(_Frozen):
    i2u: LinkSpec
    u2b: LinkSpec
    i2b: LinkSpec


class RunSettings(_Frozen):
    trials: PositiveInt = 1000
    seed: int = Field(default=7, ge=0)
    grid_step_m: PositiveFloat = 25.0
    snr_floor: PositiveFloat = 1e-4
    tau_cap: PositiveFloat = 50.0
    area_resolution_fraction: PositiveFloat = 0.005
    area_resolution_floor_m: PositiveFloat = 0.25
    cdf_points: int = Field(default=512, ge=16)
    cdf_tail: float = Field(default=1e-6, gt=0.0, le=1e-2)
    hover_grid: int = Field(default=4096, ge=64)
    histogram_bins: int = Field(default=30, ge=2)
    tbs_candidates: int = Field(default=48, ge=8)
    tbs_search_step_m: PositiveFloat = 100.0


class SystemParams(_Frozen):
    lambda_t: PositiveFloat
    lambda_i: PositiveFloat
    r_c: PositiveFloat
    c_t: NonNegativeFloat
    L2: PositiveFloat
    M_over_bw: NonNegativeFloat
    B_max: PositiveFloat
    h: PositiveFloat
    a: PositiveFloat
    b: PositiveFloat
    sigma2: PositiveFloat
    package_mass: PositiveFloat = 1.0
    power: PowerProfile
    links: Links
    run: RunSettings = RunSettings()
    strict: bool = True

    @model_validator(mode="after")
    def _links_share_altitude(self) -> "SystemParams":
        for name in ("i2u", "u2b"):
            link = getattr(self.links, name)
            if link.h != self.h:
                raise ValueError(f"links.{name}.h ({link.h}) differs from h ({self.h})")
        return self


# Document grammar: section -> canonical name -> {document key: unit factor}.
# The first key of each entry is the SI spelling used by serialize().
_QUANTITIES: Dict[str, Dict[str, Dict[str, Any]]] = {
    "densities": {
        "lambda_t": {"lambda_t_per_m2": 1.0, "lambda_t_per_km2": 1e-6},
        "lambda_i": {"lambda_i_per_m2": 1.0, "lambda_i_per_km2": 1e-6},
    },
    "cluster": {
        "r_c": {"r_c_m": 1.0, "r_c_km": 1e3},
        "c_t": {"c_t": 1.0},
    },
    "mission": {
        "L2": {"L2_m": 1.0, "L2_km": 1e3},
        "M_over_bw": {"M_over_bw": 1.0},
    },
    "uav": {
        "h": {"h_m": 1.0, "h_km": 1e3},
        "B_max": {"B_max_j": 1.0, "B_max_wh": 3600.0},
        "package_mass": {"package_mass_kg": 1.0},
    },
    "environment": {
        "a": {"a": 1.0},
        "b": {"b": 1.0},
        "sigma2": {"sigma2_w": 1.0},
    },
    "power": {
        "p_m": {"p_m_w": 1.0},
        "p_mp": {"p_mp_w": 1.0},
        "p_s": {"p_s_w": 1.0},
        "p_sp": {"p_sp_w": 1.0},
        "v": {"v_mps": 1.0, "v_kmh": 1.0 / 3.6},
        "v_p": {"v_p_mps": 1.0, "v_p_kmh": 1.0 / 3.6},
        "comm_power": {"comm_power_w": 1.0},
    },
    "links": {
        "rho_i": {"rho_i_w": 1.0},
        "rho_u": {"rho_u_w": 1.0},
        "alpha_l": {"alpha_l": 1.0},
        "alpha_n": {"alpha_n": 1.0},
        # Written alpha_b or alpha_t in some sources; one symbol here.
        "alpha_ground": {"alpha_ground": 1.0},
        "m_l": {"m_l": 1.0},
        "m_n": {"m_n": 1.0},
        "eta_l": {"eta_l": 1.0, "eta_l_db": _DB},
        "eta_n": {"eta_n": 1.0, "eta_n_db": _DB},
        "distance_average": {"distance_average": 1.0},
    },
}

_OPTIONAL = {"package_mass", "comm_power", "eta_l", "eta_n", "distance_average"}
_AGGREGATE_POWER = ("p_m", "p_mp", "p_s", "p_sp", "v", "v_p")
_PASSTHROUGH = {"power": ("rotor",)}
_TOP_LEVEL = set(_QUANTITIES) | {"run", "strict"}


def _convert(value: Any, unit: Any) -> Any:
    if unit == _DB:
        return 10.0 ** (float(value) / 10.0)
    if unit == 1.0:
        return value
    return float(value) * unit


def _unknown(where: str, strict: bool) -> None:
    if strict:
        raise ConfigError(f"unknown key {where}", field=where)
    logger.warning("Ignoring unknown config key %s", where, extra={"config_key": where})


def _read_section(
    doc: Mapping[str, Any], section: str, strict: bool
) -> Dict[str, Any]:
    raw = doc.get(section)
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"section {section} must be a mapping", field=section)

    out: Dict[str, Any] = {}
    used = set(_PASSTHROUGH.get(section, ()))
    for name, spellings in _QUANTITIES[section].items():
        given = [key for key in spellings if key in raw]
        if len(given) > 1:
            raise ConfigError(
                f"{section}: give only one of {', '.join(given)}",
                field=f"{section}.{name}",
            )
        if given:
            key = given[0]
            used.add(key)
            out[name] = _convert(raw[key], spellings[key])

    for key in raw:
        if key not in used:
            _unknown(f"{section}.{key}", strict)
    for key in _PASSTHROUGH.get(section, ()):
        if key in raw:
            out[key] = raw[key]
    return out


def _require(values: Dict[str, Any], section: str, names) -> None:
    for name in names:
        if name not in values:
            spelling = next(iter(_QUANTITIES[section][name]))
            raise ConfigError(
                f"missing required key {section}.{spelling}", field=f"{section}.{name}"
            )


def _validation_error(e: ValidationError) -> ConfigError:
    first = e.errors()[0]
    loc = ".".join(str(part) for part in first.get("loc", ())) or None
    msg = first.get("msg", str(e))
    return ConfigError(f"{loc or 'document'}: {msg}" if loc else msg, field=loc)


def _build_power(values: Dict[str, Any], package_mass: float, strict: bool) -> PowerProfile:
    rotor_doc = values.get("rotor")
    comm_power = values.get("comm_power", 0.0)

    if rotor_doc is None:
        _require(values, "power", _AGGREGATE_POWER)
        return PowerProfile(**{k: values[k] for k in _AGGREGATE_POWER}, comm_power=comm_power)

    aggregate = [k for k in _AGGREGATE_POWER if k in values]
    if aggregate:
        raise ConfigError(
            "power: rotor constants and aggregate powers are mutually exclusive "
            f"(got {', '.join(aggregate)})",
            field="power.rotor",
        )
    if not isinstance(rotor_doc, Mapping):
        raise ConfigError("power.rotor must be a mapping", field="power.rotor")

    rotor_doc = dict(rotor_doc)
    for key in list(rotor_doc):
        if key not in RotorParams.model_fields:
            _unknown(f"power.rotor.{key}", strict)
            rotor_doc.pop(key)
    rotor = RotorParams(**rotor_doc)

    # energy imports params for its types
    from skyrelay.energy import power_profile_from_rotor

    return power_profile_from_rotor(
        rotor,
        package_weight=package_mass * STANDARD_GRAVITY,
        comm_power=comm_power,
    )


def load_and_validate(config: str | Mapping[str, Any], strict: bool | None = None) -> SystemParams:
    """
    Parse a parameter document (YAML text or an already-parsed mapping)
    into SystemParams with units normalized.

    ``strict`` overrides the document's own ``strict`` key (default True):
    strict documents reject unknown keys, lenient ones log and drop them.
    """
    if isinstance(config, str):
        try:
            doc = yaml.safe_load(config)
        except yaml.YAMLError as e:
            raise ConfigError(f"parameter document does not parse: {e}") from e
    else:
        doc = config
    if not isinstance(doc, Mapping):
        raise ConfigError("parameter document must be a mapping at top level")

    if strict is None:
        strict = bool(doc.get("strict", True))

    for key in doc:
        if key not in _TOP_LEVEL:
            _unknown(str(key), strict)

    sections = {name: _read_section(doc, name, strict) for name in _QUANTITIES}
    for name in ("densities", "cluster", "mission", "uav", "environment"):
        _require(
            sections[name],
            name,
            [q for q in _QUANTITIES[name] if q not in _OPTIONAL],
        )
    _require(
        sections["links"],
        "links",
        [q for q in _QUANTITIES["links"] if q not in _OPTIONAL],
    )

    run_doc = doc.get("run") or {}
    if not isinstance(run_doc, Mapping):
        raise ConfigError("section run must be a mapping", field="run")
    run_doc = dict(run_doc)
    for key in list(run_doc):
        if key not in RunSettings.model_fields:
            _unknown(f"run.{key}", strict)
            run_doc.pop(key)

    uav = sections["uav"]
    env = sections["environment"]
    links = sections["links"]
    package_mass = uav.get("package_mass", 1.0)

    try:
        power = _build_power(sections["power"], package_mass, strict)

        common = {
            "sigma2": env["sigma2"],
            "alpha_l": links["alpha_l"],
            "alpha_n": links["alpha_n"],
            "alpha_ground": links["alpha_ground"],
            "m_l": links["m_l"],
            "m_n": links["m_n"],
            "eta_l": links.get("eta_l", 1.0),
            "eta_n": links.get("eta_n", 1.0),
            "los_a": env["a"],
            "los_b": env["b"],
            "distance_average": links.get("distance_average", "mixture"),
        }
        link_specs = Links(
            i2u=LinkSpec(kind="aerial", rho_tx=links["rho_i"], h=uav["h"], **common),
            u2b=LinkSpec(kind="aerial", rho_tx=links["rho_u"], h=uav["h"], **common),
            i2b=LinkSpec(kind="ground", rho_tx=links["rho_i"], h=0.0, **common),
        )

        params = SystemParams(
            **sections["densities"],
            **sections["cluster"],
            **sections["mission"],
            h=uav["h"],
            B_max=uav["B_max"],
            package_mass=package_mass,
            a=env["a"],
            b=env["b"],
            sigma2=env["sigma2"],
            power=power,
            links=link_specs,
            run=RunSettings(**run_doc),
            strict=strict,
        )
    except ValidationError as e:
        raise _validation_error(e) from e

    logger.debug(
        "Loaded parameters",
        extra={"L2": params.L2, "M_over_bw": params.M_over_bw, "strict": strict},
    )
    return params


def load_params(path: str | Path | None = None, strict: bool | None = None) -> SystemParams:
    """Load the parameter document at ``path`` (default: settings.SKYRELAY_DEFAULT_CONFIG)."""
    path = Path(path or settings.SKYRELAY_DEFAULT_CONFIG)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read parameter document {path}: {e}") from e
    return load_and_validate(text, strict=strict)


def serialize(params: SystemParams) -> Dict[str, Any]:
    """
    Parameter document for ``params`` using SI spellings. Rotor-mode
    profiles are written back as their rotor block so the mode survives.
    """
    link = params.links.i2u

    def si(section: str, name: str) -> str:
        return next(iter(_QUANTITIES[section][name]))

    power = params.power
    if power.rotor is not None:
        power_doc: Dict[str, Any] = {"rotor": power.rotor.model_dump()}
    else:
        power_doc = {si("power", k): getattr(power, k) for k in _AGGREGATE_POWER}
    power_doc[si("power", "comm_power")] = power.comm_power

    return {
        "strict": params.strict,
        "densities": {
            si("densities", "lambda_t"): params.lambda_t,
            si("densities", "lambda_i"): params.lambda_i,
        },
        "cluster": {si("cluster", "r_c"): params.r_c, "c_t": params.c_t},
        "mission": {si("mission", "L2"): params.L2, "M_over_bw": params.M_over_bw},
        "uav": {
            si("uav", "h"): params.h,
            si("uav", "B_max"): params.B_max,
            si("uav", "package_mass"): params.package_mass,
        },
        "environment": {
            "a": params.a,
            "b": params.b,
            si("environment", "sigma2"): params.sigma2,
        },
        "power": power_doc,
        "links": {
            si("links", "rho_i"): params.links.i2u.rho_tx,
            si("links", "rho_u"): params.links.u2b.rho_tx,
            "alpha_l": link.alpha_l,
            "alpha_n": link.alpha_n,
            "alpha_ground": link.alpha_ground,
            "m_l": link.m_l,
            "m_n": link.m_n,
            "eta_l": link.eta_l,
            "eta_n": link.eta_n,
            "distance_average": link.distance_average,
        },
        "run": params.run.model_dump(),
    }


def with_overrides(
    params: SystemParams, *, run: Mapping[str, Any] | None = None, **fields: Any
) -> SystemParams:
    """
    Copy of ``params`` with top-level fields and/or run settings replaced,
    re-validated against the same invariants as a loaded document.
    """
    data = params.model_dump()
    for key, value in fields.items():
        if key not in SystemParams.model_fields:
            raise ConfigError(f"unknown parameter override {key}", field=key)
        data[key] = value
    if run:
        for key in run:
            if key not in RunSettings.model_fields:
                raise ConfigError(f"unknown run override {key}", field=f"run.{key}")
        data["run"] = {**data["run"], **run}
    try:
        return SystemParams.model_validate(data)
    except ValidationError as e:
        raise _validation_error(e) from e
