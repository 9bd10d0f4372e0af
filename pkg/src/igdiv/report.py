import json
from dataclasses import asdict, dataclass, field

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


@dataclass
class CheckReport:
    """Outcome of one numerical verification.

    ``passed`` is derived: a report passes iff ``max_error <= tolerance`` and
    no sample failed.  ``details`` holds one record per sample.
    """

    name: str
    max_error: float
    tolerance: float
    samples: int
    details: list = field(default_factory=list)
    failures: int = 0
    required_samples: int = 0

    @property
    def passed(self):
        if self.failures or self.samples < self.required_samples:
            return False
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: max_error={self.max_error:.3e} "
                f"tol={self.tolerance:.1e} samples={self.samples}")

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return _plain({k: d[k] for k in ("name", "passed", "max_error", "tolerance",
                                          "samples", "failures", "details")})

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def merge(name, reports, tolerance=None):
    """Combine sub-reports into one.

    Without ``tolerance`` the sub-report with the largest error / tolerance
    ratio decides and lends its raw error and tolerance, so the merged
    report passes iff every finite sub-report is within its own tolerance.
    """
    reports = list(reports)
    details = [{"check": r.name, "max_error": r.max_error, "tolerance": r.tolerance,
                "passed": r.passed, "samples": r.samples} for r in reports]
    if tolerance is None:
        ratios = [r.max_error / r.tolerance if r.tolerance > 0 else np.inf for r in reports]
        ratios = [x if np.isfinite(x) else -np.inf for x in ratios]
        worst = reports[int(np.argmax(ratios))]
        max_err, tol = worst.max_error, worst.tolerance
    else:
        max_err, tol = max(r.max_error for r in reports), tolerance
    failures = sum(r.failures for r in reports) + sum(
        1 for r in reports if r.samples < r.required_samples)
    failures += sum(1 for r in reports if not np.isfinite(r.max_error))
    return CheckReport(name, float(max_err), tol, min(r.samples for r in reports),
                       details, failures)
