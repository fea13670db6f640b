"""Problem documents: JSON in, BilevelProblem out, and back."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..forms import ProblemFileForm
from .cq import SampledRegion
from .errors import BilevelError, ProblemFileError
from .model import AffineSystem, BilevelProblem, LinearLowerLevel, QuadraticComponent, UpperObjective


@dataclass(frozen=True)
class ProblemDocument:
    problem: BilevelProblem
    region: Optional[SampledRegion] = None
    candidates: Tuple[Tuple[np.ndarray, np.ndarray], ...] = ()
    name: str = ""
    sha256: Optional[str] = field(default=None, compare=False)
    path: Optional[str] = field(default=None, compare=False)


def parse(data: Any) -> ProblemDocument:
    if not isinstance(data, dict):
        raise ProblemFileError("top level must be a JSON object", key_path="<root>")
    payload = {key: value for key, value in data.items() if not key.startswith("_")}
    form = ProblemFileForm(data=payload)
    if not form.is_valid():
        message = form.first_error()
        key_path, _, text = message.partition(": ")
        raise ProblemFileError(text or message, key_path=key_path if text else None)
    arrays = form.cleaned_data["arrays"]
    try:
        problem = BilevelProblem(
            upper_objective=UpperObjective(tuple(QuadraticComponent(**comp) for comp in arrays["F"])),
            upper_set=AffineSystem(arrays["G"], arrays["h"]),
            lower=LinearLowerLevel(
                C=arrays["C"], A=arrays["A"], B=arrays["B"], d=arrays["d"], D=arrays["D"], e=arrays["e"]
            ),
            name=form.cleaned_data.get("name") or "",
        )
    except BilevelError as exc:
        raise ProblemFileError(exc.message)
    region = None
    if "x_box" in arrays:
        region = SampledRegion(
            x_lower=arrays["x_box"][0],
            x_upper=arrays["x_box"][1],
            y_lower=arrays["y_box"][0],
            y_upper=arrays["y_box"][1],
            step=arrays["step"],
        )
    return ProblemDocument(problem, region, tuple(arrays["candidates"]), problem.name)


def load(path: Union[str, Path]) -> ProblemDocument:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc.strerror or exc}")
    try:
        data = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError:
        raise ProblemFileError("file is not UTF-8 text", key_path="<root>")
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", key_path="<root>")
    doc = parse(data)
    return ProblemDocument(
        doc.problem, doc.region, doc.candidates, doc.name,
        sha256=hashlib.sha256(raw).hexdigest(), path=str(path),
    )


def _rows(arr: np.ndarray) -> List[List[float]]:
    return np.asarray(arr, dtype=float).tolist()


def dump(doc: Union[ProblemDocument, BilevelProblem]) -> Dict[str, Any]:
    if isinstance(doc, BilevelProblem):
        doc = ProblemDocument(doc, name=doc.name)
    problem = doc.problem
    ll = problem.lower
    out: Dict[str, Any] = {
        "dims": {"n": problem.n, "m": problem.m, "p": problem.p, "q": problem.q},
        "upper": {
            "F": [
                {"Q": _rows(comp.Q), "c": _rows(comp.c), "b": comp.b}
                for comp in problem.upper_objective.components
            ]
        },
        "X": {"G": _rows(problem.upper_set.G), "h": _rows(problem.upper_set.h)},
        "lower": {
            "C": _rows(ll.C), "D": _rows(ll.D), "e": _rows(ll.e),
            "A": _rows(ll.A), "B": _rows(ll.B), "d": _rows(ll.d),
        },
    }
    if doc.name:
        out["name"] = doc.name
    if doc.region is not None:
        out["sampling"] = doc.region.as_dict()
    if doc.candidates:
        out["candidates"] = [{"x": _rows(x), "y": _rows(y)} for x, y in doc.candidates]
    return out


def dumps(doc: Union[ProblemDocument, BilevelProblem]) -> str:
    return json.dumps(dump(doc), indent=2, sort_keys=True) + "\n"


def parse_vector(text: str, size: Optional[int] = None, name: str = "vector") -> np.ndarray:
    """Comma-separated decimals without spaces, as given on the command line."""
    try:
        values = np.array([float(part) for part in str(text).split(",")], dtype=float)
    except ValueError:
        raise ProblemFileError(f"'{text}' is not a comma-separated list of numbers", key_path=f"--{name}")
    if size is not None and values.size != size:
        raise ProblemFileError(f"has length {values.size}, expected {size}", key_path=f"--{name}")
    return values
