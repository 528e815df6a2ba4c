"""Solve reports: the residual/diagnostic record every solver returns."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class SolveReport:
    """Residuals and counters for a completed solve.

    norm_ratio is the discrete C^{1,gamma} norm of the displacement over
    the C^{0,gamma} norm of f-1, an empirical stand-in for the operator
    norm of the solve (0 when f is identically 1).
    """

    method: str
    det_residual_inf: float
    support_violation_inf: float
    mass_error: float
    iterations: int
    collar_thickness: float
    norm_ratio: float
    warnings: list = field(default_factory=list)

    FIELDS = (
        "method",
        "det_residual_inf",
        "support_violation_inf",
        "mass_error",
        "iterations",
        "collar_thickness",
        "norm_ratio",
    )

    def to_dict(self):
        out = {name: getattr(self, name) for name in self.FIELDS}
        out["warnings"] = list(self.warnings)
        return out

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        kwargs = {name: data[name] for name in cls.FIELDS}
        return cls(warnings=list(data.get("warnings", [])), **kwargs)

    def within(self, tol_det=None, tol_support=None, tol_mass=None):
        """True when every provided tolerance is met."""
        ok = True
        if tol_det is not None:
            ok &= self.det_residual_inf <= tol_det
        if tol_support is not None:
            ok &= self.support_violation_inf <= tol_support
        if tol_mass is not None:
            ok &= self.mass_error <= tol_mass
        return bool(ok)


def combine_reports(method, stages, collar_thickness, det_residual_inf,
                    support_violation_inf, mass_error, norm_ratio):
    """Merge stage reports of a composite solve into one record."""
    return SolveReport(
        method=method,
        det_residual_inf=float(det_residual_inf),
        support_violation_inf=float(support_violation_inf),
        mass_error=float(mass_error),
        iterations=int(sum(r.iterations for r in stages)),
        collar_thickness=float(collar_thickness),
        norm_ratio=float(norm_ratio),
        warnings=[w for r in stages for w in r.warnings],
    )
