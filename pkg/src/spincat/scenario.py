"""Scenario files: TOML blocks describing a model, its bath and the scans to run.

A scenario has a ``[model]`` block and any of ``[environment]``,
``[scan]``, ``[[sweep]]``, ``[trajectory]``, ``[separatrix]`` and
``[triple]``.  Keys carry their unit as a suffix (``_K``, ``_T``, ``_Tps``).
Unknown keys are rejected so that typos fail loudly.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .dynamics import PhononEnvironment, SweepSchedule
from .errors import ConfigError, SpincatError
from .spinops import SpinModel
from .trajectory import FieldTrajectory

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

PRESETS = ("fe8", "fe8_fig1", "fe4", "arb4", "case1", "case2")

_MODEL_KEYS = {
    "S": "S",
    "D_K": "D",
    "E_K": "E",
    "B40_K": "B40",
    "B42_K": "B42",
    "B43_K": "B43",
    "B44_K": "B44",
    "g": "g",
    "ref_spin": "ref_spin",
}
_FIELD_KEYS = ("Bx_T", "By_T", "Bz_T")
_ENV_KEYS = {"C_rate", "D1_K", "D2_K", "T_K", "gamma_t", "gamma_t_pairs"}
_SCAN_KEYS = {"axis", "min_T", "max_T", "steps", "dB_T", "states"}
_SWEEP_KEYS = {"sweep_Tps", "min_T", "max_T", "tilt_deg", "pattern", "gamma_t", "outputs", "field_step_T", "start"}
_TRAJ_KEYS = {"amplitude_T", "Bx0_T", "Bz0_T", "steps", "S", "bloch_wt", "states"}
_SEP_KEYS = {"r1_K", "r2_K", "resolution", "grid"}
_TRIPLE_KEYS = {"seed_r1_K", "seed_r2_K", "gap_axis", "gap_bracket", "gap_upper", "gap_S"}
_TOP_KEYS = {"name", "model", "environment", "scan", "sweep", "trajectory", "separatrix", "triple"}


@dataclass(frozen=True)
class Scan:
    """Field scan along one axis with ``steps`` points."""

    axis: str = "Bz"
    lo: float = -1.0
    hi: float = 1.0
    steps: int = 201
    dB: float = 1e-3
    states: Tuple[int, ...] = (0,)

    def values(self, steps: Optional[int] = None):
        import numpy as np

        return np.linspace(self.lo, self.hi, steps or self.steps)


@dataclass(frozen=True)
class Sweep:
    """One hysteresis run: a schedule plus its tunnelling rate."""

    schedule: SweepSchedule
    gamma_t: Optional[float] = None
    outputs: int = 1401
    field_step: float = 2e-4
    start: str = "saturated"


@dataclass(frozen=True)
class TrajectorySpec:
    trajectory: FieldTrajectory
    steps: int = 512
    S: Optional[float] = None
    bloch_wt: Tuple[float, ...] = ()
    states: Tuple[int, ...] = (0,)


@dataclass(frozen=True)
class SeparatrixSpec:
    r1: Tuple[float, float]
    r2: Tuple[float, float]
    resolution: Tuple[int, int] = (600, 600)
    grid: int = 800


@dataclass(frozen=True)
class TripleSpec:
    seed: Tuple[float, float]
    gap_axis: str = "r2"
    gap_bracket: Optional[Tuple[float, float]] = None
    gap_upper: int = 1
    gap_S: Optional[float] = None


@dataclass(frozen=True)
class Scenario:
    """Fully resolved scenario; ``source`` keeps the parsed TOML."""

    name: str
    model: SpinModel
    environment: Optional[PhononEnvironment] = None
    scan: Optional[Scan] = None
    sweeps: Tuple[Sweep, ...] = ()
    trajectory: Optional[TrajectorySpec] = None
    separatrix: Optional[SeparatrixSpec] = None
    triple: Optional[TripleSpec] = None
    source: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def require(self, *blocks: str) -> None:
        """Raise :class:`ConfigError` naming every missing block."""
        missing = [b for b in blocks if not getattr(self, b)]
        if missing:
            names = ", ".join("[[sweep]]" if b == "sweeps" else f"[{b}]" for b in missing)
            raise ConfigError(f"scenario {self.name!r} is missing block(s): {names}")


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _check_keys(block: dict, allowed, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def _number(block: dict, key: str, where: str, default=None, required=False) -> Optional[float]:
    if key not in block:
        if required:
            raise ConfigError(f"[{where}] needs key {key!r}")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"[{where}] {key} must be a finite number, got {value!r}")
    return float(value)


def _integer(block: dict, key: str, where: str, default=None) -> Optional[int]:
    value = block.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"[{where}] {key} must be an integer, got {value!r}")
    return value


def _pair(block: dict, key: str, where: str, default=None) -> Optional[Tuple[float, float]]:
    if key not in block:
        return default
    value = block[key]
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"[{where}] {key} must be a two-element list")
    return (_number({key: value[0]}, key, where), _number({key: value[1]}, key, where))


def _guard(where: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except (SpincatError, ValueError, TypeError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def _model(block: dict) -> SpinModel:
    _check_keys(block, set(_MODEL_KEYS) | set(_FIELD_KEYS), "model")
    if "S" not in block:
        raise ConfigError("[model] needs key 'S'")
    kwargs = {}
    for key, name in _MODEL_KEYS.items():
        if key in block:
            kwargs[name] = _number(block, key, "model")
    B = tuple(_number(block, k, "model", 0.0) for k in _FIELD_KEYS)
    return _guard("model", lambda: SpinModel(B=B, **kwargs))


def _environment(block: dict) -> PhononEnvironment:
    _check_keys(block, _ENV_KEYS, "environment")
    pairs = block.get("gamma_t_pairs", [])
    if not isinstance(pairs, list) or not all(isinstance(p, list) and len(p) == 2 for p in pairs):
        raise ConfigError("[environment] gamma_t_pairs must be a list of [m, m'] pairs")
    return _guard(
        "environment",
        lambda: PhononEnvironment(
            C=_number(block, "C_rate", "environment", required=True),
            D1=_number(block, "D1_K", "environment", required=True),
            D2=_number(block, "D2_K", "environment", required=True),
            T=_number(block, "T_K", "environment", required=True),
            gamma_t=_number(block, "gamma_t", "environment", 0.0),
            gamma_t_pairs=tuple(tuple(p) for p in pairs),
        ),
    )


def _scan(block: dict) -> Scan:
    _check_keys(block, _SCAN_KEYS, "scan")
    axis = block.get("axis", "Bz")
    if axis not in ("Bx", "Bz"):
        raise ConfigError(f"[scan] axis must be 'Bx' or 'Bz', got {axis!r}")
    steps = _integer(block, "steps", "scan", 201)
    if steps < 2:
        raise ConfigError("[scan] steps must be at least 2")
    scan = Scan(
        axis,
        _number(block, "min_T", "scan", required=True),
        _number(block, "max_T", "scan", required=True),
        steps,
        _number(block, "dB_T", "scan", 1e-3),
        tuple(int(k) for k in block.get("states", [0])),
    )
    if not scan.hi > scan.lo or not scan.dB > 0:
        raise ConfigError("[scan] needs min_T < max_T and dB_T > 0")
    return scan


def _sweep(block: dict, i: int) -> Sweep:
    where = f"sweep.{i}"
    _check_keys(block, _SWEEP_KEYS, where)
    tilt = _number(block, "tilt_deg", where, 0.0)
    start = block.get("start", "saturated")
    if start not in ("saturated", "equilibrium"):
        raise ConfigError(f"[{where}] start must be 'saturated' or 'equilibrium'")
    schedule = _guard(
        where,
        lambda: SweepSchedule(
            rate=_number(block, "sweep_Tps", where, required=True),
            b_min=_number(block, "min_T", where, required=True),
            b_max=_number(block, "max_T", where, required=True),
            direction=SweepSchedule.tilted(tilt),
            pattern=block.get("pattern", "loop"),
        ),
    )
    return Sweep(
        schedule,
        _number(block, "gamma_t", where),
        _integer(block, "outputs", where, 1401),
        _number(block, "field_step_T", where, 2e-4),
        start,
    )


def _trajectory(block: dict) -> TrajectorySpec:
    _check_keys(block, _TRAJ_KEYS, "trajectory")
    traj = _guard(
        "trajectory",
        lambda: FieldTrajectory(
            _number(block, "amplitude_T", "trajectory", required=True),
            _number(block, "Bx0_T", "trajectory", 0.0),
            _number(block, "Bz0_T", "trajectory", 0.0),
        ),
    )
    steps = _integer(block, "steps", "trajectory", 512)
    if steps < 64:
        raise ConfigError("[trajectory] steps must be at least 64")
    return TrajectorySpec(
        traj,
        steps,
        _number(block, "S", "trajectory"),
        tuple(float(w) for w in block.get("bloch_wt", [])),
        tuple(int(k) for k in block.get("states", [0])),
    )


def _separatrix(block: dict) -> SeparatrixSpec:
    _check_keys(block, _SEP_KEYS, "separatrix")
    res = block.get("resolution", [600, 600])
    if not (isinstance(res, list) and len(res) == 2 and all(isinstance(x, int) and x >= 16 for x in res)):
        raise ConfigError("[separatrix] resolution must be [W, H] with W, H >= 16")
    r1 = _pair(block, "r1_K", "separatrix")
    r2 = _pair(block, "r2_K", "separatrix")
    if r1 is None or r2 is None or not (r1[1] > r1[0] and r2[1] > r2[0]):
        raise ConfigError("[separatrix] needs increasing r1_K and r2_K ranges")
    return SeparatrixSpec(r1, r2, tuple(res), _integer(block, "grid", "separatrix", 800))


def _triple(block: dict) -> TripleSpec:
    _check_keys(block, _TRIPLE_KEYS, "triple")
    axis = block.get("gap_axis", "r2")
    if axis not in ("r1", "r2", "Bx", "Bz"):
        raise ConfigError(f"[triple] gap_axis {axis!r} is not a scan axis")
    return TripleSpec(
        (
            _number(block, "seed_r1_K", "triple", required=True),
            _number(block, "seed_r2_K", "triple", required=True),
        ),
        axis,
        _pair(block, "gap_bracket", "triple"),
        _integer(block, "gap_upper", "triple", 1),
        _number(block, "gap_S", "triple"),
    )


def parse_scenario(data: Dict[str, Any], name: str = "scenario") -> Scenario:
    """Build a :class:`Scenario` from a parsed TOML document."""
    _check_keys(data, _TOP_KEYS, "top level")
    if "model" not in data:
        raise ConfigError("scenario is missing the [model] block")
    name = str(data.get("name", name))
    sweeps = data.get("sweep", [])
    if isinstance(sweeps, dict):
        sweeps = [sweeps]
    return Scenario(
        name=name,
        model=_model(data["model"]),
        environment=_environment(data["environment"]) if "environment" in data else None,
        scan=_scan(data["scan"]) if "scan" in data else None,
        sweeps=tuple(_sweep(b, i) for i, b in enumerate(sweeps)),
        trajectory=_trajectory(data["trajectory"]) if "trajectory" in data else None,
        separatrix=_separatrix(data["separatrix"]) if "separatrix" in data else None,
        triple=_triple(data["triple"]) if "triple" in data else None,
        source=data,
    )


def load_scenario(spec: str) -> Scenario:
    """Load ``preset:<name>`` or a path to a TOML file.

    Raises
    ------
    ConfigError
        for unreadable files, TOML syntax errors (with line and column),
        unknown keys and missing blocks.
    """
    if spec.startswith("preset:"):
        key = spec.split(":", 1)[1]
        if key not in PRESETS:
            raise ConfigError(f"unknown preset {key!r}; available: {', '.join(PRESETS)}")
        text = resources.files("spincat").joinpath("presets", f"{key}.toml").read_text(encoding="utf-8")
        default = key
    else:
        path = Path(spec)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {spec!r}: {exc.strerror}") from None
        default = path.stem
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{spec}: {exc}") from None
    return parse_scenario(data, default)


def load_preset(name: str) -> Scenario:
    return load_scenario(f"preset:{name}")
