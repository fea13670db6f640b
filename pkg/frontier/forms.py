from __future__ import annotations

from typing import Any, List, Optional

import numpy as np
from django import forms


def _matrix(value: Any, path: str, rows: Optional[int] = None, cols: Optional[int] = None) -> np.ndarray:
    if value is None:
        raise forms.ValidationError(f"{path}: is required")
    if isinstance(value, list) and len(value) == 0:
        return np.zeros((0, cols or 0))
    if not isinstance(value, list) or not all(isinstance(row, list) for row in value):
        raise forms.ValidationError(f"{path}: must be an array of arrays")
    widths = {len(row) for row in value}
    if len(widths) != 1:
        raise forms.ValidationError(f"{path}: rows have different lengths")
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise forms.ValidationError(f"{path}: entries must be numbers")
    if not np.all(np.isfinite(arr)):
        raise forms.ValidationError(f"{path}: entries must be finite")
    if rows is not None and arr.shape[0] != rows:
        raise forms.ValidationError(f"{path}: has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise forms.ValidationError(f"{path}: has {arr.shape[1]} columns, expected {cols}")
    return arr


def _vector(value: Any, path: str, size: Optional[int] = None, finite: bool = True) -> np.ndarray:
    if value is None:
        raise forms.ValidationError(f"{path}: is required")
    if not isinstance(value, list) or any(isinstance(v, (list, dict, bool)) for v in value):
        raise forms.ValidationError(f"{path}: must be an array of numbers")
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise forms.ValidationError(f"{path}: entries must be numbers")
    if finite and not np.all(np.isfinite(arr)):
        raise forms.ValidationError(f"{path}: entries must be finite")
    if size is not None and arr.size != size:
        raise forms.ValidationError(f"{path}: has length {arr.size}, expected {size}")
    return arr


def _section(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise forms.ValidationError(f"{path}: must be an object")
    return value


class ProblemFileForm(forms.Form):
    """Validates a decoded problem document; messages start with the key path."""

    name = forms.CharField(required=False)
    dims = forms.JSONField()
    upper = forms.JSONField()
    X = forms.JSONField()
    lower = forms.JSONField()
    sampling = forms.JSONField(required=False)
    candidates = forms.JSONField(required=False)

    def clean_dims(self):
        dims = _section(self.cleaned_data["dims"], "dims")
        out = {}
        for key in ("n", "m", "p", "q"):
            value = dims.get(key)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise forms.ValidationError(f"dims.{key}: must be a positive integer")
            out[key] = value
        return out

    def clean_upper(self):
        upper = _section(self.cleaned_data["upper"], "upper")
        components = upper.get("F")
        if not isinstance(components, list) or not components:
            raise forms.ValidationError("upper.F: must be a nonempty list of components")
        for i, comp in enumerate(components):
            comp = _section(comp, f"upper.F[{i}]")
            if "c" not in comp:
                raise forms.ValidationError(f"upper.F[{i}].c: is required")
        return upper

    def clean_X(self):
        section = _section(self.cleaned_data["X"], "X")
        for key in ("G", "h"):
            if key not in section:
                raise forms.ValidationError(f"X.{key}: is required")
        return section

    def clean_lower(self):
        lower = _section(self.cleaned_data["lower"], "lower")
        for key in ("C", "A", "B", "d"):
            if key not in lower:
                raise forms.ValidationError(f"lower.{key}: is required")
        return lower

    def clean_sampling(self):
        sampling = self.cleaned_data.get("sampling")
        if sampling in (None, ""):
            return None
        sampling = _section(sampling, "sampling")
        for key in ("x_box", "y_box", "h"):
            if key not in sampling:
                raise forms.ValidationError(f"sampling.{key}: is required")
        return sampling

    def clean_candidates(self):
        candidates = self.cleaned_data.get("candidates")
        if candidates in (None, ""):
            return []
        if not isinstance(candidates, list):
            raise forms.ValidationError("candidates: must be a list")
        for i, item in enumerate(candidates):
            item = _section(item, f"candidates[{i}]")
            if "x" not in item or "y" not in item:
                raise forms.ValidationError(f"candidates[{i}]: needs x and y")
        return candidates

    def clean(self):
        cleaned = super().clean()
        if self.errors:
            return cleaned
        dims = cleaned["dims"]
        n, m, p, q = dims["n"], dims["m"], dims["p"], dims["q"]
        try:
            cleaned["arrays"] = self._arrays(cleaned, n, m, p, q)
        except forms.ValidationError as exc:
            self.add_error(None, exc)
        return cleaned

    def _arrays(self, cleaned, n: int, m: int, p: int, q: int) -> dict:
        upper, X, lower = cleaned["upper"], cleaned["X"], cleaned["lower"]
        components = upper["F"]
        if len(components) != p:
            raise forms.ValidationError(f"upper.F: has {len(components)} components, expected p={p}")
        F: List[dict] = []
        for i, comp in enumerate(components):
            c = _vector(comp.get("c"), f"upper.F[{i}].c", n + m)
            Q = comp.get("Q")
            Q = np.zeros((n + m, n + m)) if Q is None else _matrix(Q, f"upper.F[{i}].Q", n + m, n + m)
            if not np.allclose(Q, Q.T, atol=1e-12):
                raise forms.ValidationError(f"upper.F[{i}].Q: must be symmetric")
            b = comp.get("b", 0.0)
            if isinstance(b, bool) or not isinstance(b, (int, float)):
                raise forms.ValidationError(f"upper.F[{i}].b: must be a number")
            F.append({"Q": Q, "c": c, "b": float(b)})

        h = _vector(X["h"], "X.h")
        G = _matrix(X["G"], "X.G", h.size, n)

        d = _vector(lower["d"], "lower.d")
        k = d.size
        arrays = {
            "F": F,
            "G": G,
            "h": h,
            "C": _matrix(lower["C"], "lower.C", q, m),
            "A": _matrix(lower["A"], "lower.A", k, n),
            "B": _matrix(lower["B"], "lower.B", k, m),
            "d": d,
            "D": _matrix(lower["D"], "lower.D", q, n) if lower.get("D") is not None else None,
            "e": _vector(lower["e"], "lower.e", q) if lower.get("e") is not None else None,
        }

        sampling = cleaned.get("sampling")
        if sampling:
            arrays["x_box"] = self._box(sampling["x_box"], "sampling.x_box", n)
            arrays["y_box"] = self._box(sampling["y_box"], "sampling.y_box", m)
            step = sampling["h"]
            if isinstance(step, bool) or not isinstance(step, (int, float)) or step <= 0:
                raise forms.ValidationError("sampling.h: must be a positive number")
            arrays["step"] = float(step)
        arrays["candidates"] = [
            (_vector(item["x"], f"candidates[{i}].x", n), _vector(item["y"], f"candidates[{i}].y", m))
            for i, item in enumerate(cleaned.get("candidates") or [])
        ]
        return arrays

    @staticmethod
    def _box(value: Any, path: str, size: int) -> np.ndarray:
        box = _matrix(value, path, 2, size)
        if np.any(box[1] < box[0]):
            raise forms.ValidationError(f"{path}: upper corner below lower corner")
        return box

    def first_error(self) -> str:
        for field_name in list(self.fields) + ["__all__"]:
            for message in self.errors.get(field_name, []):
                if field_name in self.fields and not message.startswith(field_name):
                    return f"{field_name}: {message}"
                return message
        return "invalid problem file"
