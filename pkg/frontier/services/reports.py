from __future__ import annotations

import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from django.core.serializers.json import DjangoJSONEncoder

from mobilevel import __version__

from .config import Tolerances

RESULT_KEYS = ("front", "efficient_set", "reports", "certificate", "certificates", "oracle", "diagnostics")


def _float(value: float):
    if math.isfinite(value):
        return value
    if math.isnan(value):
        return "nan"
    return "inf" if value > 0 else "-inf"


def jsonable(obj: Any) -> Any:
    """Plain JSON data; numpy values become lists and floats, non-finite floats strings."""
    if obj is None or isinstance(obj, (bool, str, int)):
        return obj
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return jsonable(obj.item())
    if isinstance(obj, dict):
        return {str(key): jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(value) for value in obj]
    if hasattr(obj, "as_dict"):
        return jsonable(obj.as_dict())
    return obj


class ReportEncoder(DjangoJSONEncoder):
    def default(self, o):
        if isinstance(o, np.ndarray):
            return jsonable(o)
        if isinstance(o, np.generic):
            return jsonable(o.item())
        if isinstance(o, Enum):
            return o.value
        if isinstance(o, Path):
            return str(o)
        if hasattr(o, "as_dict"):
            return jsonable(o.as_dict())
        return super().default(o)


def build_report(
    command: str,
    *,
    problem: Optional[str] = None,
    sha256: Optional[str] = None,
    x=None,
    y=None,
    kind: Optional[str] = None,
    flags: Optional[Dict[str, Any]] = None,
    tolerances: Optional[Tolerances] = None,
    seed: Optional[int] = None,
    status: str = "ok",
    exit_code: int = 0,
    results: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Every key is always present; inapplicable entries are null."""
    body = {key: None for key in RESULT_KEYS}
    body.update(results or {})
    return {
        "command": command,
        "version": __version__,
        "inputs": {
            "problem": problem,
            "sha256": sha256,
            "x": x,
            "y": y,
            "kind": kind,
            "flags": dict(sorted((flags or {}).items())),
        },
        "tolerances": tolerances.as_dict() if tolerances else None,
        "seed": seed,
        "status": status,
        "exit_code": exit_code,
        "results": body,
    }


def dumps_report(report: Dict[str, Any]) -> str:
    return json.dumps(jsonable(report), cls=ReportEncoder, indent=2, sort_keys=True)


def fmt_vector(values) -> str:
    if values is None:
        return "-"
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    return "(" + ", ".join(f"{v:.6g}" for v in arr) + ")"
