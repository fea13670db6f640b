from __future__ import annotations

import json
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from django.conf import settings

from .errors import ProblemFileError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tolerances:
    feas: float = 1e-9
    opt: float = 1e-9
    face: float = 1e-7
    vert: float = 1e-8
    proj: float = 1e-9
    nnls: float = 1e-9
    cert: float = 1e-8
    dom: float = 0.0
    pos: float = 1e-6
    act: float = 1e-7
    lex: float = 1e-6

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


TOLERANCE_NAMES = tuple(f.name for f in fields(Tolerances))


def _coerce_tolerance(name: str, value: Any) -> float:
    if name not in TOLERANCE_NAMES:
        raise ProblemFileError(f"unknown tolerance '{name}'", key_path=f"tol.{name}")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ProblemFileError(f"tolerance '{name}' must be a number", key_path=f"tol.{name}")
    if out < 0:
        raise ProblemFileError(f"tolerance '{name}' must be nonnegative", key_path=f"tol.{name}")
    return out


def _settings_defaults() -> Dict[str, float]:
    defaults = Tolerances().as_dict()
    out: Dict[str, float] = {}
    for name, fallback in defaults.items():
        raw = getattr(settings, f"BILEVEL_TAU_{name.upper()}", None)
        if name == "lex":
            raw = getattr(settings, "BILEVEL_EPS_LEX", raw)
        try:
            out[name] = float(raw) if raw is not None else fallback
        except (TypeError, ValueError):
            out[name] = fallback
    return out


def _file_defaults() -> Dict[str, float]:
    path = getattr(settings, "BILEVEL_TOLERANCE_FILE", None)
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        logger.warning("Ignoring tolerance file %s: %s", path, exc)
        return {}
    if not isinstance(data, dict):
        logger.warning("Ignoring tolerance file %s: expected a JSON object", path)
        return {}
    return {name: _coerce_tolerance(name, value) for name, value in data.items()}


def get_tolerances(overrides: Optional[Mapping[str, Any]] = None) -> Tolerances:
    """Settings defaults < tolerance file < explicit overrides."""
    values = _settings_defaults()
    values.update(_file_defaults())
    for name, value in (overrides or {}).items():
        values[name] = _coerce_tolerance(name, value)
    return Tolerances(**values)


def resolve(tol: Optional[Tolerances]) -> Tolerances:
    return tol if tol is not None else get_tolerances()


def setting_int(name: str, default: int) -> int:
    try:
        value = int(getattr(settings, name, default))
    except (TypeError, ValueError):
        value = default
    return value


def setting_float(name: str, default: float) -> float:
    try:
        value = float(getattr(settings, name, default))
    except (TypeError, ValueError):
        value = default
    return value
