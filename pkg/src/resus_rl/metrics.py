"""Clinical controller performance metrics (MDPE, MDAPE, RMSE) and RL/PID comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ComparisonError, MetricsError


@dataclass(frozen=True)
class MetricsReport:
    mdpe: float  # percent
    mdape: float  # percent
    rmse: float  # liters
    pe_series: tuple[float, ...] = field(repr=False)
    n: int
    scenario: str = ""

    def as_dict(self, include_series: bool = True) -> dict:
        d = {"scenario": self.scenario, "mdpe": self.mdpe, "mdape": self.mdape, "rmse": self.rmse, "n": self.n}
        if include_series:
            d["pe_series"] = list(self.pe_series)
        return d


def performance_error(bv, target: float):
    """Signed percentage error; accepts a scalar or an array of volumes (mL)."""
    if isinstance(bv, (int, float)):
        return (bv - target) / target * 100.0
    return (np.asarray(bv, dtype=float) - target) / target * 100.0


def _nonempty(series, what: str) -> np.ndarray:
    arr = np.asarray(series, dtype=float)
    if arr.size == 0:
        raise MetricsError(f"{what} of an empty series is undefined")
    return arr


def mdpe(pe_series) -> float:
    return float(np.median(_nonempty(pe_series, "MDPE")))


def mdape(pe_series) -> float:
    return float(np.median(np.abs(_nonempty(pe_series, "MDAPE"))))


def rmse(bv_series, target: float) -> float:
    """Root mean square deviation from target, returned in liters (inputs in mL)."""
    arr = _nonempty(bv_series, "RMSE")
    return float(np.sqrt(np.mean((arr - target) ** 2))) / 1000.0


def compute_metrics(bv_series, target: float, scenario: str = "") -> MetricsReport:
    pe = performance_error(_nonempty(bv_series, "metrics"), target)
    return MetricsReport(
        mdpe=mdpe(pe),
        mdape=mdape(pe),
        rmse=rmse(bv_series, target),
        pe_series=tuple(float(x) for x in pe),
        n=len(pe),
        scenario=scenario,
    )


def dose_agreement(doses_a, doses_b) -> float:
    """Fraction of control steps on which two dose traces are equal."""
    a = np.asarray(doses_a, dtype=float)
    b = np.asarray(doses_b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ComparisonError("dose traces must be non-empty and of equal length")
    return float(np.mean(a == b))


ROWS = (("MDPE (%)", "mdpe"), ("MDAPE (%)", "mdape"), ("RMSE (L)", "rmse"))


@dataclass
class Comparison:
    scenario: str
    rows: dict  # label -> {"RL": x, "PID": y, "delta": x - y}
    dose_agreement: float | None = None

    def as_dict(self) -> dict:
        d = {"scenario": self.scenario, "metrics": self.rows}
        if self.dose_agreement is not None:
            d["rl_dose_agreement_noisy_vs_clean"] = self.dose_agreement
        return d

    def format_table(self) -> str:
        lines = [f"{'Performance metrics':<22}{'RL':>10}{'PID':>10}"]
        for label, _ in ROWS:
            row = self.rows[label]
            lines.append(f"{label:<22}{row['RL']:>10.2f}{row['PID']:>10.2f}")
        if self.dose_agreement is not None:
            lines.append(f"RL dose agreement (noisy vs clean): {100 * self.dose_agreement:.1f}%")
        return "\n".join(lines)


def compare(rl_report: MetricsReport, pid_report: MetricsReport, dose_traces=None) -> Comparison:
    """Side-by-side table. ``dose_traces`` is an optional ``(noisy, clean)`` pair of RL dose traces."""
    if rl_report.scenario != pid_report.scenario:
        raise ComparisonError(
            f"reports come from different scenarios: {rl_report.scenario!r} vs {pid_report.scenario!r}"
        )
    rows = {}
    for label, attr in ROWS:
        x, y = getattr(rl_report, attr), getattr(pid_report, attr)
        rows[label] = {"RL": x, "PID": y, "delta": x - y}
    agreement = None if dose_traces is None else dose_agreement(*dose_traces)
    return Comparison(rl_report.scenario, rows, agreement)
