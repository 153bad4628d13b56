"""Per-iteration metrics, trace I/O, log-log rate fits and cost comparisons."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

CSV_FIELDS = (
    "k",
    "mse",
    "disagreement",
    "comm_expected",
    "comm_realized",
    "szo_count",
    "sfo_count",
    "test_error",
)
_INT_FIELDS = {"k", "szo_count", "sfo_count"}


class FitError(ValueError):
    """Rate fit cannot be performed on the requested window."""


class TargetNotReached(ValueError):
    """A trace never reaches the requested error level."""


@dataclass(frozen=True)
class TraceRow:
    """Metrics snapshot at iteration k (costs are cumulative)."""

    k: int
    mse: float
    disagreement: float
    comm_expected: float
    comm_realized: float
    szo_count: int
    sfo_count: int
    test_error: float | None = None


@dataclass(frozen=True)
class Trace:
    rows: tuple[TraceRow, ...]

    def column(self, name: str) -> np.ndarray:
        vals = [getattr(r, name) for r in self.rows]
        if name in _INT_FIELDS:
            return np.array(vals, dtype=np.int64)
        return np.array([math.nan if v is None else v for v in vals], dtype=float)

    @property
    def has_test_error(self) -> bool:
        return any(r.test_error is not None for r in self.rows)

    def to_csv(self) -> str:
        fields = CSV_FIELDS if self.has_test_error else CSV_FIELDS[:-1]
        buf = io.StringIO()
        buf.write(",".join(fields) + "\n")
        for r in self.rows:
            cells = []
            for f in fields:
                v = getattr(r, f)
                cells.append(str(v) if f in _INT_FIELDS else repr(float(v)))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "Trace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].split(",")
        rows = []
        for ln in lines[1:]:
            cells = ln.split(",")
            kwargs = {}
            for name, cell in zip(header, cells):
                kwargs[name] = int(cell) if name in _INT_FIELDS else float(cell)
            rows.append(TraceRow(**kwargs))
        return Trace(rows=tuple(rows))


def save_trace(trace: Trace, path) -> None:
    with open(path, "w") as fh:
        fh.write(trace.to_csv())


def load_trace(path) -> Trace:
    with open(path) as fh:
        return Trace.from_csv(fh.read())


def compute_row(
    state,
    problem,
    test_features: np.ndarray | None = None,
    test_targets: np.ndarray | None = None,
) -> TraceRow:
    """Exact metrics of a network state against the problem's optimum.

    mse is the node-average squared distance to the optimum; disagreement is
    the total squared deviation from the network average. Test error, when a
    held-out set is supplied, is the mean squared prediction error of the
    network-average iterate.
    """
    x = state.x
    diff = x - problem.minimizer
    mse = float(np.mean(np.sum(diff * diff, axis=1)))
    xbar = x.mean(axis=0)
    dev = x - xbar
    disagreement = float(np.sum(dev * dev))
    test_error = None
    if test_features is not None and len(test_features):
        resid = test_features @ xbar - test_targets
        test_error = float(np.mean(resid * resid))
    return TraceRow(
        k=state.k,
        mse=mse,
        disagreement=disagreement,
        comm_expected=state.comm_expected,
        comm_realized=state.comm_realized,
        szo_count=state.counters.szo,
        sfo_count=state.counters.sfo,
        test_error=test_error,
    )


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit log(field) ~ slope * log(abscissa) + b."""

    slope: float
    intercept: float
    k_lo: int
    k_hi: int
    residual_rms: float
    abscissa: str
    field: str
    n_rows: int


MIN_FIT_ROWS = 10


def fit_rate(trace: Trace, field: str = "mse", abscissa: str = "k",
             window: tuple[int, int] | None = None) -> RateFit:
    """OLS slope of log field vs log abscissa over rows with k inside window.

    Rows with non-positive field or abscissa values are an error, not silently
    dropped; fits on fewer than MIN_FIT_ROWS rows are refused.
    """
    ks = trace.column("k")
    if window is None:
        window = (max(1, int(ks[-1]) // 100), int(ks[-1]))
    k_lo, k_hi = window
    mask = (ks >= k_lo) & (ks <= k_hi)
    ys = trace.column(field)[mask]
    xs = trace.column(abscissa)[mask]
    if len(xs) < MIN_FIT_ROWS:
        raise FitError(f"only {len(xs)} rows in window [{k_lo}, {k_hi}], need {MIN_FIT_ROWS}")
    if np.any(~np.isfinite(ys)) or np.any(ys <= 0):
        bad = ks[mask][(~np.isfinite(ys)) | (ys <= 0)]
        raise FitError(f"{field} non-positive at k in {bad[:5].tolist()}; cannot fit a power law")
    if np.any(xs <= 0):
        raise FitError(f"{abscissa} non-positive inside the window; cannot fit a power law")
    lx, ly = np.log10(xs), np.log10(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        k_lo=int(k_lo),
        k_hi=int(k_hi),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        abscissa=abscissa,
        field=field,
        n_rows=int(len(xs)),
    )


def _cost_at_target(trace: Trace, target: float, field: str, cost_field: str, label: str) -> float:
    errs = trace.column(field)
    costs = trace.column(cost_field)
    below = np.flatnonzero(errs <= target)
    if len(below) == 0:
        raise TargetNotReached(f"{label} trace never reaches {field} <= {target:g} "
                               f"(best {np.nanmin(errs):g})")
    r = int(below[0])
    if r == 0:
        raise TargetNotReached(
            f"{label} trace already meets {field} <= {target:g} at the initial state; "
            "nothing to compare (tighten the target)"
        )
    if costs[r - 1] <= 0:
        return float(costs[r])
    # interpolate log-cost linearly between the bracketing rows
    e_prev, e_here = errs[r - 1], errs[r]
    if e_prev <= target or e_here <= 0:
        return float(costs[r])
    t = (np.log(e_prev) - np.log(target)) / (np.log(e_prev) - np.log(e_here))
    log_cost = np.log(costs[r - 1]) + t * (np.log(costs[r]) - np.log(costs[r - 1]))
    return float(np.exp(log_cost))


def compare_baseline(
    trace_sparse: Trace,
    trace_baseline: Trace,
    target_error: float,
    field: str = "mse",
    cost_field: str = "comm_realized",
) -> float:
    """Cost ratio baseline/sparse at the first crossing of the target error.

    Both traces must reach the target; the crossing cost is interpolated in
    log-cost between the bracketing rows, so the ratio is invariant to any
    uniform reindexing of the iteration axis.
    """
    sparse_cost = _cost_at_target(trace_sparse, target_error, field, cost_field, "sparse")
    base_cost = _cost_at_target(trace_baseline, target_error, field, cost_field, "baseline")
    return base_cost / sparse_cost


@dataclass(frozen=True)
class EnsembleSummary:
    """Row-aligned mean/standard-error summary of an ensemble of traces."""

    k: np.ndarray
    mse_mean: np.ndarray
    mse_se: np.ndarray
    disagreement_mean: np.ndarray
    disagreement_se: np.ndarray
    comm_expected: np.ndarray
    comm_realized_mean: np.ndarray
    szo_count: np.ndarray
    sfo_count: np.ndarray
    n_seeds: int
    test_error_mean: np.ndarray | None = None
    test_error_se: np.ndarray | None = None

    def as_trace(self) -> Trace:
        """Mean trace, suitable for rate fitting."""
        rows = []
        for i in range(len(self.k)):
            rows.append(TraceRow(
                k=int(self.k[i]),
                mse=float(self.mse_mean[i]),
                disagreement=float(self.disagreement_mean[i]),
                comm_expected=float(self.comm_expected[i]),
                comm_realized=float(self.comm_realized_mean[i]),
                szo_count=int(self.szo_count[i]),
                sfo_count=int(self.sfo_count[i]),
                test_error=None if self.test_error_mean is None else float(self.test_error_mean[i]),
            ))
        return Trace(rows=tuple(rows))

    def to_csv(self) -> str:
        cols = [
            ("k", self.k), ("mse", self.mse_mean), ("mse_se", self.mse_se),
            ("disagreement", self.disagreement_mean), ("disagreement_se", self.disagreement_se),
            ("comm_expected", self.comm_expected),
            ("comm_realized", self.comm_realized_mean),
            ("szo_count", self.szo_count), ("sfo_count", self.sfo_count),
        ]
        if self.test_error_mean is not None:
            cols += [("test_error", self.test_error_mean), ("test_error_se", self.test_error_se)]
        buf = io.StringIO()
        buf.write(",".join(name for name, _ in cols) + "\n")
        for i in range(len(self.k)):
            cells = []
            for name, arr in cols:
                cells.append(str(int(arr[i])) if name in _INT_FIELDS else repr(float(arr[i])))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def _mean_se(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = stack.mean(axis=0)
    if stack.shape[0] < 2:
        return mean, np.zeros_like(mean)
    se = stack.std(axis=0, ddof=1) / math.sqrt(stack.shape[0])
    return mean, se


def summarize_ensemble(traces: list[Trace]) -> EnsembleSummary:
    """Aggregate traces that share the same logging grid and schedules."""
    ks = traces[0].column("k")
    for t in traces[1:]:
        if not np.array_equal(t.column("k"), ks):
            raise ValueError("ensemble traces do not share a logging grid")
    mse_mean, mse_se = _mean_se(np.stack([t.column("mse") for t in traces]))
    dis_mean, dis_se = _mean_se(np.stack([t.column("disagreement") for t in traces]))
    realized = np.stack([t.column("comm_realized") for t in traces]).mean(axis=0)
    test_mean = test_se = None
    if all(t.has_test_error for t in traces):
        test_mean, test_se = _mean_se(np.stack([t.column("test_error") for t in traces]))
    return EnsembleSummary(
        k=ks,
        mse_mean=mse_mean,
        mse_se=mse_se,
        disagreement_mean=dis_mean,
        disagreement_se=dis_se,
        comm_expected=traces[0].column("comm_expected"),
        comm_realized_mean=realized,
        szo_count=traces[0].column("szo_count"),
        sfo_count=traces[0].column("sfo_count"),
        n_seeds=len(traces),
        test_error_mean=test_mean,
        test_error_se=test_se,
    )
