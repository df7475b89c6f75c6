"""Problem instances: geometry, budgets, reliability/secrecy targets and discretization.

A scenario file is a flat ``key = value`` document (TOML syntax, no tables).
Keys match :class:`Scenario` field names.  Positions are 3-element arrays in
meters.  Power-like quantities (``p_tot_*``, ``p_max_*``, ``noise_*``) must be
given exactly once, either as ``<name>_w`` (watts) or ``<name>_dbm``.  The
reference gain may be given as ``beta0`` (linear) or ``beta0_db``.  Missing keys
take the default-scenario values.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as _toml

Vec3 = tuple[float, float, float]

POWER_KEYS = ("p_tot_alice", "p_tot_uav", "p_max_alice", "p_max_uav", "noise_r", "noise_b", "noise_e")
POSITION_KEYS = ("alice_pos", "bob_pos", "eve_est_pos", "uav_start", "uav_end")


class ScenarioParseError(ValueError):
    """The scenario file is malformed or uses unknown keys."""


class ScenarioValidationError(ValueError):
    """The scenario violates one or more invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance, SI linear units throughout.

    ``n_slots`` is derived from ``mission_time / slot_duration``.  Total budgets
    are in watts x channel uses since they bound ``sum(p[n] * l[n])``.
    ``bandwidth`` only converts blocklengths to air time for reporting.
    """

    alice_pos: Vec3 = (-700.0, 0.0, 0.0)
    bob_pos: Vec3 = (700.0, 0.0, 0.0)
    eve_est_pos: Vec3 = (-500.0, 900.0, 0.0)
    eve_uncertainty: float = 10.0
    uav_start: Vec3 = (-500.0, -1000.0, 60.0)
    uav_end: Vec3 = (1000.0, 500.0, 60.0)
    mission_time: float = 100.0
    slot_duration: float = 1.0
    bandwidth: float = 1.0e6
    p_tot_alice: float = 1.0
    p_tot_uav: float = 1.0
    p_max_alice: float = 0.1
    p_max_uav: float = 0.1
    l_max: int = 400
    h_min: float = 60.0
    h_max: float = 120.0
    v_xy_max: float = 30.0
    v_z_max: float = 5.0
    beta0: float = 1.0e-7
    alpha: float = 3.0
    noise_r: float = 1.0e-17
    noise_b: float = 1.0e-17
    noise_e: float = 1.0e-17
    eps_r: float = 1.0e-3
    eps_b: float = 1.0e-3
    eta_e: float = 1.0e-2
    epsilon_conv: float = 1.0e-3
    rng_seed: int = 0

    @property
    def n_slots(self) -> int:
        return int(round(self.mission_time / self.slot_duration))

    # numpy views ---------------------------------------------------------
    @property
    def q_a(self) -> np.ndarray:
        return np.asarray(self.alice_pos, dtype=float)

    @property
    def q_b(self) -> np.ndarray:
        return np.asarray(self.bob_pos, dtype=float)

    @property
    def q_e(self) -> np.ndarray:
        return np.asarray(self.eve_est_pos, dtype=float)

    @property
    def q_i(self) -> np.ndarray:
        return np.asarray(self.uav_start, dtype=float)

    @property
    def q_f(self) -> np.ndarray:
        return np.asarray(self.uav_end, dtype=float)

    @property
    def rho_r(self) -> float:
        return self.beta0 / self.noise_r

    @property
    def rho_b(self) -> float:
        return self.beta0 / self.noise_b

    @property
    def rho_e(self) -> float:
        return self.beta0 / self.noise_e

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def airtime(self, blocklength: float) -> float:
        """Seconds taken by ``blocklength`` channel uses."""
        return blocklength / self.bandwidth


def default_scenario() -> Scenario:
    return Scenario()


def validate(s: Scenario) -> list[str]:
    """Return every violated invariant as a message naming the fields involved."""
    out: list[str] = []

    for key in POSITION_KEYS:
        v = getattr(s, key)
        if len(v) != 3 or not all(math.isfinite(c) for c in v):
            out.append(f"{key}: position must be 3 finite coordinates")
    if out:
        return out

    if not s.slot_duration > 0:
        out.append("slot_duration must be > 0")
        return out
    ratio = s.mission_time / s.slot_duration
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, abs(ratio)):
        out.append("mission_time must be an integer multiple of slot_duration (T = N * delta_t)")
    if s.n_slots < 2:
        out.append(f"n_slots ≥ 2 required (mission_time / slot_duration = {ratio:g})")

    for key in ("alice_pos", "bob_pos", "eve_est_pos"):
        if getattr(s, key)[2] != 0.0:
            out.append(f"{key}: ground node must have z = 0")

    for key in ("uav_start", "uav_end"):
        z = getattr(s, key)[2]
        if not (s.h_min <= z <= s.h_max):
            out.append(f"altitude bound violated: {key}.z = {z:g} outside [h_min, h_max] = [{s.h_min:g}, {s.h_max:g}]")
    if s.h_min > s.h_max:
        out.append("altitude bound violated: h_min > h_max")
    if s.h_min <= 0:
        out.append("h_min must be > 0 (UAV strictly above ground)")

    positive = ("p_tot_alice", "p_tot_uav", "p_max_alice", "p_max_uav", "noise_r", "noise_b", "noise_e",
                "beta0", "v_xy_max", "v_z_max", "bandwidth", "epsilon_conv")
    for key in positive:
        v = getattr(s, key)
        if not (math.isfinite(v) and v > 0):
            out.append(f"{key} must be finite and > 0")
    if s.eve_uncertainty < 0 or not math.isfinite(s.eve_uncertainty):
        out.append("eve_uncertainty must be finite and ≥ 0")
    if int(s.l_max) != s.l_max or s.l_max < 2:
        out.append("l_max must be an integer ≥ 2")
    if not (2.0 < s.alpha <= 4.0):
        out.append("alpha must satisfy 2 < alpha ≤ 4")
    for key in ("eps_r", "eps_b", "eta_e"):
        v = getattr(s, key)
        if not (0.0 < v < 0.5):
            out.append(f"{key} must lie in (0, 0.5)")

    d_ae = float(np.linalg.norm(s.q_a - s.q_e))
    d_be = float(np.linalg.norm(s.q_b - s.q_e))
    if d_ae < s.eve_uncertainty:
        out.append(f"Eve uncertainty exceeds Alice–Eve distance (eve_uncertainty = {s.eve_uncertainty:g} > {d_ae:.3f})")
    if d_be < s.eve_uncertainty:
        out.append(f"Eve uncertainty exceeds Bob–Eve distance (eve_uncertainty = {s.eve_uncertainty:g} > {d_be:.3f})")

    n = s.n_slots
    if n >= 2 and s.v_xy_max > 0 and s.v_z_max > 0 and s.slot_duration > 0:
        delta = s.q_f - s.q_i
        if np.linalg.norm(delta[:2]) / (n - 1) > s.v_xy_max * s.slot_duration * (1 + 1e-12):
            out.append("uav_end unreachable: horizontal distance exceeds (n_slots - 1) * v_xy_max * slot_duration")
        if abs(delta[2]) / (n - 1) > s.v_z_max * s.slot_duration * (1 + 1e-12):
            out.append("uav_end unreachable: vertical distance exceeds (n_slots - 1) * v_z_max * slot_duration")
    return out


def check(s: Scenario) -> Scenario:
    """Return ``s`` unchanged or raise :class:`ScenarioValidationError`."""
    violations = validate(s)
    if violations:
        raise ScenarioValidationError(violations)
    return s


# --------------------------------------------------------------------------
# file format

def _as_vec3(key: str, v) -> Vec3:
    if not isinstance(v, list) or len(v) != 3:
        raise ScenarioParseError(f"{key}: expected a 3-element array")
    try:
        return tuple(float(c) for c in v)  # type: ignore[return-value]
    except (TypeError, ValueError) as exc:
        raise ScenarioParseError(f"{key}: non-numeric coordinate") from exc


def _as_float(key: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioParseError(f"{key}: expected a number, got {v!r}")
    return float(v)


def from_mapping(data: dict) -> Scenario:
    """Build a scenario from parsed key/values, applying unit suffixes and defaults."""
    fields = {f.name: f for f in dataclasses.fields(Scenario)}
    kwargs: dict = {}
    seen: set[str] = set()
    for key, value in data.items():
        if key in POSITION_KEYS:
            kwargs[key] = _as_vec3(key, value)
            continue
        base, conv = key, None
        if key.endswith("_dbm") and key[:-4] in POWER_KEYS:
            base, conv = key[:-4], dbm_to_watts
        elif key.endswith("_w") and key[:-2] in POWER_KEYS:
            base = key[:-2]
        elif key == "beta0_db":
            base, conv = "beta0", db_to_linear
        elif key in POWER_KEYS:
            raise ScenarioParseError(f"{key}: power keys need a unit suffix (_w or _dbm)")
        if base == "n_slots":
            raise ScenarioParseError("n_slots is derived from mission_time / slot_duration; set those instead")
        if base not in fields:
            raise ScenarioParseError(f"unknown key {key!r}")
        if base in seen:
            raise ScenarioParseError(f"{base}: given more than once (use exactly one unit variant)")
        seen.add(base)
        if base in ("l_max", "rng_seed"):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
                raise ScenarioParseError(f"{key}: expected an integer")
            kwargs[base] = int(value)
        else:
            v = _as_float(key, value)
            kwargs[base] = conv(v) if conv else v
    return Scenario(**kwargs)


def parse_scenario(text: str) -> Scenario:
    try:
        data = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ScenarioParseError(f"malformed scenario file: {exc}") from exc
    for key, value in data.items():
        if isinstance(value, dict):
            raise ScenarioParseError(f"{key}: tables are not allowed; the format is flat key = value")
    return from_mapping(data)


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file."""
    text = Path(path).read_text(encoding="utf-8")
    return check(parse_scenario(text))


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return "[" + ", ".join(_fmt(c) for c in v) + "]"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def dumps_scenario(s: Scenario) -> str:
    """Serialize every field; reparsing the text reproduces ``s`` exactly."""
    lines = ["# spcrelay scenario (SI units; powers in watts)"]
    for f in dataclasses.fields(Scenario):
        v = getattr(s, f.name)
        key = f"{f.name}_w" if f.name in POWER_KEYS else f.name
        lines.append(f"{key} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps_scenario(s), encoding="utf-8")
