"""Scenario files: parsing, validation and preset expansion.

A scenario is a YAML (or JSON) mapping::

    name: reverse_sweep
    mode: reverse                  # forward | reverse
    ensemble: maximally_mixed      # preset, or a mapping (see _parse_ensemble)
    angles:
      theta: {start: 0, stop: 90deg, steps: 9}
      phi: 0
    later_basis: bell              # bell | none | {product: {theta, phi}} | 4x4 [re, im] rows
    trials: 100000                 # 0 = exact only
    seed: 42
    chsh_settings: {a: 0, a_prime: 45deg, b: 22.5deg, b_prime: 67.5deg}
    outputs: [summary_table, joint_csv, records_csv, report_json]

Angles are radians unless written as strings with a ``deg`` suffix
(``"22.5deg"``) or as multiples of pi (``"pi/8"``, ``"3pi/8"``).  Complex
numbers are ``[re, im]`` pairs.  All violations are collected and raised
together, each prefixed with its field path.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .ensembles import (
    AlphaTable,
    EnsembleSpec,
    maximally_mixed,
    product_mixture,
    uniform_bell_mixture,
    validate,
)
from .errors import ConfigParseError, ConfigValidationError, InvalidEnsembleError, InvalidStateError
from .qmath import TOL, Basis4, ProductAngles, PureState4, bell_basis, product_basis, verify_unitarity

MODES = ("forward", "reverse")
OUTPUTS = ("summary_table", "joint_csv", "records_csv", "report_json")
ENSEMBLE_PRESETS = ("uniform_bell", "maximally_mixed")
MAX_SEED = (1 << 64) - 1

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_DEG = re.compile(rf"^\s*({_NUM})\s*deg\s*$")
_PI = re.compile(rf"^\s*([+-]?|{_NUM})\s*\*?\s*pi\s*(?:/\s*({_NUM}))?\s*$")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    mode: str
    ensemble: EnsembleSpec
    settings: tuple[ProductAngles, ...]
    later_basis: Optional[Basis4]
    trials: int
    seed: int
    chsh_settings: Optional[tuple[float, float, float, float]]
    outputs: tuple[str, ...]
    self_check: bool = False
    resolved: dict = field(default_factory=dict, compare=False)

    def with_overrides(self, *, trials: Optional[int] = None, seed: Optional[int] = None) -> "ScenarioConfig":
        resolved = dict(self.resolved)
        trials = self.trials if trials is None else int(trials)
        seed = self.seed if seed is None else int(seed)
        if trials < 0:
            raise ConfigValidationError([f"trials: must be >= 0, got {trials}"])
        if not 0 <= seed <= MAX_SEED:
            raise ConfigValidationError([f"seed: must be a 64-bit unsigned integer, got {seed}"])
        resolved.update(trials=trials, seed=seed)
        return ScenarioConfig(
            self.name, self.mode, self.ensemble, self.settings, self.later_basis,
            trials, seed, self.chsh_settings, self.outputs, self.self_check, resolved,
        )


def parse_angle(value: Any) -> float:
    """Radians from a number, ``"<x>deg"`` or a multiple of pi."""
    if isinstance(value, bool):
        raise ValueError(f"not an angle: {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _DEG.match(value)
        if m:
            out = math.radians(float(m.group(1)))
        else:
            m = _PI.match(value)
            if not m:
                try:
                    out = float(value)
                except ValueError:
                    raise ValueError(f"not an angle: {value!r}") from None
            else:
                coef = m.group(1)
                k = {"": 1.0, "+": 1.0, "-": -1.0}.get(coef)
                k = float(coef) if k is None else k
                out = k * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
    else:
        raise ValueError(f"not an angle: {value!r}")
    if not math.isfinite(out):
        raise ValueError(f"angle must be finite: {value!r}")
    return out


def _complex(value: Any) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(float(value), 0.0)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise ValueError(f"expected [re, im], got {value!r}")


def _state(value: Any) -> PureState4:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValueError("state needs exactly 4 amplitudes")
    return PureState4([_complex(v) for v in value])


def _matrix_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


class _Collector:
    def __init__(self):
        self.violations: list[str] = []

    def add(self, path: str, message: str) -> None:
        self.violations.append(f"{path}: {message}")


def _parse_axis(raw: Any, path: str, errs: _Collector) -> list[float]:
    if isinstance(raw, dict):
        missing = [k for k in ("start", "stop", "steps") if k not in raw]
        if missing:
            errs.add(path, f"sweep needs {', '.join(missing)}")
            return []
        steps = raw["steps"]
        if not isinstance(steps, int) or isinstance(steps, bool) or steps < 2:
            errs.add(f"{path}.steps", f"sweep steps must be an integer >= 2, got {steps!r}")
            return []
        try:
            start, stop = parse_angle(raw["start"]), parse_angle(raw["stop"])
        except ValueError as exc:
            errs.add(path, str(exc))
            return []
        return [float(x) for x in np.linspace(start, stop, steps)]
    try:
        return [parse_angle(raw)]
    except ValueError as exc:
        errs.add(path, str(exc))
        return []


def _parse_angles(raw: Any, path: str, errs: _Collector) -> list[ProductAngles]:
    if not isinstance(raw, dict) or "theta" not in raw or "phi" not in raw:
        errs.add(path, "expected a mapping with theta and phi")
        return []
    thetas = _parse_axis(raw["theta"], f"{path}.theta", errs)
    phis = _parse_axis(raw["phi"], f"{path}.phi", errs)
    return [ProductAngles(t, p) for t in thetas for p in phis]


def _parse_single_angles(raw: Any, path: str, errs: _Collector) -> Optional[ProductAngles]:
    settings = _parse_angles(raw, path, errs)
    if len(settings) > 1:
        errs.add(path, "a sweep is not allowed here")
        return None
    return settings[0] if settings else None


def _parse_ensemble(raw: Any, path: str, errs: _Collector, normalize: bool) -> tuple[Optional[EnsembleSpec], Any]:
    """Accepted forms: a preset name; ``{bell: k}``; ``{alpha: [4], angles: {...}}``;
    ``{components: [{weight: w, state: [4 x [re, im]]}, ...]}``."""
    if isinstance(raw, str):
        if raw == "uniform_bell":
            return uniform_bell_mixture(), raw
        if raw == "maximally_mixed":
            return maximally_mixed(), raw
        errs.add(path, f"unknown preset {raw!r} (expected one of {', '.join(ENSEMBLE_PRESETS)})")
        return None, raw
    if not isinstance(raw, dict):
        errs.add(path, "expected a preset name or a mapping")
        return None, raw
    if "bell" in raw:
        k = raw["bell"]
        if k not in (1, 2, 3, 4):
            errs.add(f"{path}.bell", f"Bell index must be 1..4, got {k!r}")
            return None, raw
        return EnsembleSpec.pure(bell_basis().row(k)), raw
    if "alpha" in raw:
        angles = _parse_single_angles(raw.get("angles", {"theta": 0, "phi": 0}), f"{path}.angles", errs)
        try:
            alpha = np.array([float(x) for x in raw["alpha"]], dtype=float)
            if alpha.shape != (4,):
                raise ValueError("alpha needs 4 entries")
            if normalize and alpha.sum() > 0:
                alpha = alpha / alpha.sum()
            table = AlphaTable(alpha)
        except InvalidEnsembleError as exc:
            for v in exc.violations:
                errs.add(f"{path}.alpha", v)
            return None, raw
        except (TypeError, ValueError) as exc:
            errs.add(f"{path}.alpha", str(exc))
            return None, raw
        if angles is None:
            return None, raw
        return product_mixture(table, angles), raw
    if "components" in raw:
        comps = raw["components"]
        if not isinstance(comps, list) or not comps:
            errs.add(f"{path}.components", "expected a non-empty list")
            return None, raw
        parsed = []
        for k, c in enumerate(comps):
            cpath = f"{path}.components[{k}]"
            if not isinstance(c, dict) or "weight" not in c or "state" not in c:
                errs.add(cpath, "expected {weight, state}")
                continue
            try:
                parsed.append((float(c["weight"]), _state(c["state"])))
            except (TypeError, ValueError, InvalidStateError) as exc:
                errs.add(cpath, str(exc))
        if len(parsed) != len(comps):
            return None, raw
        spec = EnsembleSpec.from_pairs(parsed, normalize=normalize)
        bad = validate(spec)
        for v in bad:
            errs.add(path, v)
        return (None if bad else spec), raw
    errs.add(path, "mapping needs one of bell, alpha, components")
    return None, raw


def _parse_basis(raw: Any, path: str, errs: _Collector) -> tuple[Optional[Basis4], bool]:
    """Returns (basis, ok); ``none`` yields (None, True)."""
    if raw == "none" or raw is None:
        return None, True
    if raw == "bell":
        return bell_basis(), True
    if isinstance(raw, dict) and "product" in raw:
        angles = _parse_single_angles(raw["product"], f"{path}.product", errs)
        return (product_basis(angles), True) if angles else (None, False)
    if isinstance(raw, list):
        try:
            if len(raw) != 4:
                raise ValueError("basis needs 4 rows")
            rows = []
            for row in raw:
                if not isinstance(row, list) or len(row) != 4:
                    raise ValueError("each basis row needs 4 entries")
                rows.append([_complex(z) for z in row])
            basis = Basis4(rows)
        except (TypeError, ValueError) as exc:
            errs.add(path, str(exc))
            return None, False
        residual = verify_unitarity(basis)
        if residual > TOL:
            errs.add(path, f"unitarity residual {residual:.6g} exceeds {TOL:g}")
            return None, False
        return basis, True
    errs.add(path, f"expected 'bell', 'none', {{product: ...}} or a 4x4 matrix, got {raw!r}")
    return None, False


def _resolve_ensemble(spec: EnsembleSpec) -> list[dict]:
    return [
        {"weight": c.weight, "state": [[float(z.real), float(z.imag)] for z in c.state.amps]}
        for c in spec.components
    ]


def build_config(data: Any) -> ScenarioConfig:
    """Validate an already-parsed mapping."""
    if not isinstance(data, dict):
        raise ConfigParseError("scenario file must contain a mapping at top level")
    errs = _Collector()
    known = {"name", "mode", "ensemble", "angles", "later_basis", "trials", "seed",
             "chsh_settings", "outputs", "normalize_weights", "self_check"}
    for key in sorted(set(data) - known, key=str):
        errs.add(str(key), "unknown field")

    name = data.get("name", "scenario")
    if not isinstance(name, str) or not name:
        errs.add("name", "must be a non-empty string")

    mode = data.get("mode")
    if mode not in MODES:
        errs.add("mode", f"must be one of {', '.join(MODES)}, got {mode!r}")

    normalize = bool(data.get("normalize_weights", False))
    ensemble = None
    if "ensemble" not in data:
        errs.add("ensemble", "required")
    else:
        ensemble, _ = _parse_ensemble(data["ensemble"], "ensemble", errs, normalize)

    settings = _parse_angles(data.get("angles"), "angles", errs) if "angles" in data else []
    if "angles" not in data:
        errs.add("angles", "required")

    later, later_ok = None, True
    if mode == "forward":
        if data.get("later_basis") not in (None, "none"):
            errs.add("later_basis", "later_basis forbidden in forward mode")
            later_ok = False
    elif mode == "reverse":
        if "later_basis" not in data:
            errs.add("later_basis", "required in reverse mode ('bell', 'none', {product: ...} or a matrix)")
            later_ok = False
        else:
            later, later_ok = _parse_basis(data["later_basis"], "later_basis", errs)

    trials = data.get("trials", 0)
    if not isinstance(trials, int) or isinstance(trials, bool) or trials < 0:
        errs.add("trials", f"must be an integer >= 0, got {trials!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= MAX_SEED:
        errs.add("seed", f"must be a 64-bit unsigned integer, got {seed!r}")

    chsh_settings = None
    if data.get("chsh_settings") is not None:
        raw = data["chsh_settings"]
        if not isinstance(raw, dict):
            errs.add("chsh_settings", "expected {a, a_prime, b, b_prime}")
        else:
            vals = []
            for key in ("a", "a_prime", "b", "b_prime"):
                if key not in raw:
                    errs.add(f"chsh_settings.{key}", "required")
                    continue
                try:
                    vals.append(parse_angle(raw[key]))
                except ValueError as exc:
                    errs.add(f"chsh_settings.{key}", str(exc))
            if len(vals) == 4:
                chsh_settings = tuple(vals)

    outputs = data.get("outputs", list(OUTPUTS))
    if not isinstance(outputs, list) or any(o not in OUTPUTS for o in outputs):
        errs.add("outputs", f"must be a list drawn from {', '.join(OUTPUTS)}")
        outputs = []

    self_check = data.get("self_check", False)
    if not isinstance(self_check, bool):
        errs.add("self_check", "must be true or false")

    if errs.violations:
        raise ConfigValidationError(errs.violations)
    assert later_ok

    resolved = {
        "name": name,
        "mode": mode,
        "ensemble": _resolve_ensemble(ensemble),
        "settings": [[s.theta, s.phi] for s in settings],
        "later_basis": None if later is None else _matrix_json(later.matrix),
        "trials": trials,
        "seed": seed,
        "chsh_settings": None if chsh_settings is None else dict(zip(("a", "a_prime", "b", "b_prime"), chsh_settings)),
        "outputs": list(outputs),
        "self_check": self_check,
    }
    return ScenarioConfig(
        name=name,
        mode=mode,
        ensemble=ensemble,
        settings=tuple(settings),
        later_basis=later,
        trials=trials,
        seed=seed,
        chsh_settings=chsh_settings,
        outputs=tuple(outputs),
        self_check=self_check,
        resolved=resolved,
    )


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file.

    Raises:
        OSError: the file cannot be read.
        ConfigParseError: the text is not valid YAML/JSON.
        ConfigValidationError: every schema violation, with field paths.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    return build_config(data)
