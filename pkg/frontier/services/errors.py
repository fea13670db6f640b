from __future__ import annotations

from typing import Any, List, Optional, Sequence


class BilevelError(Exception):
    code = "ERROR"

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        self.message = message
        if code:
            self.code = code


class DimensionError(BilevelError):
    code = "DIMENSION"


class InfeasibleError(BilevelError):
    code = "INFEASIBLE"

    def __init__(self, message: str, farkas: Any = None):
        super().__init__(message)
        self.farkas = farkas


class UnboundedError(BilevelError):
    code = "UNBOUNDED"

    def __init__(self, message: str, ray: Any = None):
        super().__init__(message)
        self.ray = ray


class IterationLimitError(BilevelError):
    code = "ITERATION_LIMIT"


class SizeGuardError(BilevelError):
    code = "SIZE_GUARD"


class UnsupportedError(BilevelError):
    code = "UNSUPPORTED"


class VacuousSampleError(BilevelError):
    code = "VACUOUS_SAMPLE"


class VacuousCriterionError(BilevelError):
    code = "VACUOUS_CRITERION"


class InfeasibleCandidateError(BilevelError):
    code = "INFEASIBLE_CANDIDATE"

    def __init__(self, message: str, violated_G: Sequence[int] = (), violated_g: Sequence[int] = ()):
        super().__init__(message)
        self.violated_G: List[int] = list(violated_G)
        self.violated_g: List[int] = list(violated_g)


class ProblemFileError(BilevelError):
    code = "PROBLEM_FILE"

    def __init__(self, message: str, key_path: Optional[str] = None):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path
