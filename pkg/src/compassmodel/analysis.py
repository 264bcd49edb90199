"""Metrics, convergence classification, limit extraction, and statistics.

This module never runs dynamics. It consumes opinion profiles, gap values,
and run records, and produces numbers: per-probe metric rows, consensus
classes, limit values with their conserved-quantity checks, and the
statistical tests used by the calibration suite.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from statistics import fmean, mean

import numpy as np
from scipy import stats as _scipy_stats

from .opinion_space import mod_s
from .topology import Graph

__all__ = [
    "MetricSample",
    "RunRecord",
    "LimitReport",
    "MonotoneReport",
    "UniformityReport",
    "compute_metrics",
    "circle_opinion_range",
    "consensus_classify",
    "extract_limits",
    "spatial_average",
    "monotone_mean_delta_check",
    "marginal_uniformity_test",
    "ks_uniform_pvalue",
    "sign_product_rate",
    "write_samples_csv",
    "read_samples_csv",
    "CSV_SCHEMA",
    "CSV_COLUMNS",
]

CSV_SCHEMA = "compassmodel-metrics-v1"
CSV_COLUMNS = ("time", "W", "max_neighbor_dist", "mean_abs_delta",
               "opinion_range", "sign_flip_fraction")


@dataclass(frozen=True)
class MetricSample:
    """One probe row: the state of a run at a single time."""

    time: float
    W: float
    max_neighbor_dist: float
    mean_abs_delta: float
    opinion_range: float
    sign_flip_fraction: float


@dataclass
class RunRecord:
    """Everything a finished run reports.

    The samples list holds one MetricSample per probe time, in order, and
    terminal holds the classification of the final state plus limit values
    when the run actually converged. wall_seconds is the only
    non-reproducible field and is serialized under a separate metadata key
    so byte comparisons of the deterministic payload stay meaningful.
    """

    space: str
    graph_kind: str
    vertex_count: int
    edge_count: int
    mu: float
    theta: float
    seed: int | None
    stop_reason: str
    events_applied: int
    final_time: float
    samples: list[MetricSample]
    terminal: dict
    wall_seconds: float
    final_opinions: list[float] | None = field(default=None, repr=False)

    def to_json(self, include_opinions: bool = False, indent=None) -> str:
        payload = {
            "schema": "compassmodel-run-v1",
            "space": self.space,
            "graph": {"kind": self.graph_kind,
                      "vertex_count": self.vertex_count,
                      "edge_count": self.edge_count},
            "params": {"mu": self.mu,
                       "theta": None if math.isinf(self.theta) else self.theta},
            "seed": self.seed,
            "stop_reason": self.stop_reason,
            "events_applied": self.events_applied,
            "final_time": self.final_time,
            "samples": [vars(s).copy() for s in self.samples],
            "terminal": self.terminal,
            "metadata": {"wall_seconds": self.wall_seconds},
        }
        if include_opinions:
            payload["final_opinions"] = self.final_opinions
        return json.dumps(payload, indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        raw = json.loads(text)
        if raw.get("schema") != "compassmodel-run-v1":
            raise ValueError(f"unrecognized record schema {raw.get('schema')!r}")
        theta = raw["params"]["theta"]
        return cls(
            space=raw["space"],
            graph_kind=raw["graph"]["kind"],
            vertex_count=raw["graph"]["vertex_count"],
            edge_count=raw["graph"]["edge_count"],
            mu=raw["params"]["mu"],
            theta=math.inf if theta is None else theta,
            seed=raw["seed"],
            stop_reason=raw["stop_reason"],
            events_applied=raw["events_applied"],
            final_time=raw["final_time"],
            samples=[MetricSample(**s) for s in raw["samples"]],
            terminal=raw["terminal"],
            wall_seconds=raw["metadata"]["wall_seconds"],
            final_opinions=raw.get("final_opinions"),
        )


def circle_opinion_range(opinions) -> float:
    """Length of the smallest closed arc containing all the opinions.

    Two minus the largest gap between circularly consecutive values; zero
    for a single opinion or a fully concentrated profile.
    """
    vals = sorted(mod_s(v) for v in opinions)
    n = len(vals)
    if n <= 1:
        return 0.0
    # grouping the subtraction first keeps a fully concentrated profile at
    # exactly zero range (0.3 + 2.0 already rounds)
    largest = (vals[0] - vals[-1]) + 2.0
    for i in range(n - 1):
        gap = vals[i + 1] - vals[i]
        if gap > largest:
            largest = gap
    return 2.0 - largest


def compute_metrics(g: Graph, opinions, space: str = "circle",
                    at_time: float = 0.0, delta_values=None) -> MetricSample:
    """Evaluate all per-probe metrics for one opinion profile.

    Gap values are recomputed from the opinions unless a tracked list is
    passed in (then that list is used verbatim, drift and all).
    """
    if len(opinions) != g.vertex_count:
        raise ValueError(f"expected {g.vertex_count} opinions, got {len(opinions)}")
    if delta_values is None:
        if space == "circle":
            delta_values = [mod_s(opinions[b] - opinions[a]) for a, b in g.edges]
        else:
            delta_values = [opinions[b] - opinions[a] for a, b in g.edges]
    elif len(delta_values) != g.edge_count:
        raise ValueError(f"expected {g.edge_count} gap values, got {len(delta_values)}")
    absd = [abs(v) for v in delta_values]
    w = math.fsum(absd)
    max_nd = max(absd) if absd else 0.0
    mean_ad = w / len(absd) if absd else 0.0
    if space == "circle":
        rng = circle_opinion_range(opinions)
    else:
        rng = max(opinions) - min(opinions) if opinions else 0.0
    pairs = g.adjacent_edge_pairs
    if pairs:
        flips = sum(1 for i, j in pairs if delta_values[i] * delta_values[j] < 0.0)
        flip_frac = flips / len(pairs)
    else:
        flip_frac = 0.0
    return MetricSample(time=at_time, W=w, max_neighbor_dist=max_nd,
                        mean_abs_delta=mean_ad, opinion_range=rng,
                        sign_flip_fraction=flip_frac)


def consensus_classify(record_or_sample, tol: float = 1e-6) -> str:
    """Classify a final state: 'strong-like', 'weak-only-like', or 'none'.

    Strong means globally concentrated (opinion range under tol). Weak-only
    means every edge is locally tight but the profile stays spread out, the
    signature of a wound state on a ring. Anything else is 'none'.
    """
    x = record_or_sample
    if isinstance(x, RunRecord):
        rng = x.terminal["opinion_range"]
        max_nd = x.terminal["max_neighbor_dist"]
    else:
        rng = x.opinion_range
        max_nd = x.max_neighbor_dist
    if rng < tol:
        return "strong-like"
    if max_nd < tol:
        return "weak-only-like"
    return "none"


@dataclass(frozen=True)
class LimitReport:
    """The consensus value and its conserved-quantity diagnostics.

    On the interval, conservation_gap is the distance between the limit and
    the initial mean (zero up to rounding; the mean is conserved). On the
    circle the limit satisfies n * L = sum of initial opinions + 2K for an
    integer K, so K_gap, the distance from the inferred K to the nearest
    integer, measures how well the run honored the conservation law. K is
    reported for one particular lift of L; shifting the lift by 2 shifts K
    by the vertex count.
    """

    L: float
    conservation_gap: float | None = None
    K: int | None = None
    K_gap: float | None = None


def extract_limits(record: RunRecord, initial_opinions,
                   tol: float = 1e-6) -> LimitReport:
    """Read off the consensus value of a converged run.

    Raises if the record did not reach a strong-like state or carries no
    final opinions.
    """
    if record.final_opinions is None:
        raise ValueError("record carries no final opinions")
    if consensus_classify(record, tol) != "strong-like":
        raise ValueError(
            "limits are defined only for strong-like runs, terminal range "
            f"was {record.terminal['opinion_range']:.3g}")
    if len(initial_opinions) != record.vertex_count:
        raise ValueError(f"expected {record.vertex_count} initial opinions")
    if record.space == "interval":
        lim = fmean(record.final_opinions)
        return LimitReport(L=lim, conservation_gap=abs(lim - fmean(initial_opinions)))
    return _circle_limits(record.final_opinions, initial_opinions)


def _circle_limits(final_opinions, initial_opinions) -> LimitReport:
    ref = mod_s(final_opinions[0])
    lift = ref + fmean([mod_s(v - ref) for v in final_opinions])
    n = len(final_opinions)
    k_real = (n * lift - math.fsum(initial_opinions)) / 2.0
    k = round(k_real)
    return LimitReport(L=mod_s(lift), K=k, K_gap=abs(k_real - k))


def spatial_average(values) -> float:
    """Exact mean over a window of per-edge values.

    statistics.mean goes through rationals, so a window of equal values
    averages to exactly that value.
    """
    vals = list(values)
    if not vals:
        raise ValueError("cannot average an empty window")
    return float(mean(vals))


def circle_mean(opinions) -> float:
    """Mean of a concentrated circle profile, unwrapped around its first value.

    Meaningful when the profile fits inside an open half circle; once a run
    is that concentrated no further event can cross the cut, so this value
    is frozen and equals the eventual consensus limit.
    """
    if not opinions:
        raise ValueError("no opinions")
    ref = mod_s(opinions[0])
    return mod_s(ref + fmean([mod_s(v - ref) for v in opinions]))


@dataclass(frozen=True)
class MonotoneReport:
    times: tuple[float, ...]
    means: tuple[float, ...]
    standard_errors: tuple[float, ...]
    violations: tuple[int, ...]
    passed: bool


def monotone_mean_delta_check(times, estimates) -> MonotoneReport:
    """Check that a mean-gap curve never increases beyond noise.

    estimates is a replicates-by-times array of per-run values. Index i is
    flagged when the mean at times[i+1] exceeds the mean at times[i] by more
    than twice the standard error of their difference.
    """
    arr = np.asarray(estimates, dtype=float)
    times = tuple(float(t) for t in times)
    if len(times) < 2:
        raise ValueError("need at least 2 probe times")
    if arr.ndim != 2 or arr.shape[1] != len(times):
        raise ValueError(f"estimates must be replicates x {len(times)} times")
    if arr.shape[0] < 50:
        raise ValueError(f"need at least 50 replicates, got {arr.shape[0]}")
    means = arr.mean(axis=0)
    ses = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])
    bad = []
    for i in range(len(times) - 1):
        allowance = 2.0 * math.hypot(ses[i], ses[i + 1])
        if means[i + 1] > means[i] + allowance:
            bad.append(i)
    return MonotoneReport(times=times, means=tuple(means.tolist()),
                          standard_errors=tuple(ses.tolist()),
                          violations=tuple(bad), passed=not bad)


@dataclass(frozen=True)
class UniformityReport:
    statistic: float
    pvalue: float
    n_samples: int
    method: str


def ks_uniform_pvalue(samples, low: float = -1.0, high: float = 1.0) -> UniformityReport:
    """Kolmogorov-Smirnov test against Uniform(low, high).

    Uses the exact null distribution up to 100 samples and the asymptotic
    form beyond that.
    """
    arr = np.asarray(list(samples), dtype=float)
    method = "exact" if arr.size <= 100 else "asymp"
    res = _scipy_stats.kstest(arr, "uniform", args=(low, high - low), method=method)
    return UniformityReport(statistic=float(res.statistic), pvalue=float(res.pvalue),
                            n_samples=int(arr.size), method=method)


def marginal_uniformity_test(samples) -> UniformityReport:
    """Test a batch of circle opinions against the uniform marginal.

    Needs at least 500 samples to have any power worth reporting, and
    refuses degenerate (constant) batches, where the verdict is trivially
    a rejection and almost surely a caller bug.
    """
    vals = list(samples)
    if len(vals) < 500:
        raise ValueError(f"need at least 500 samples, got {len(vals)}")
    if max(vals) == min(vals):
        raise ValueError("samples are constant; uniformity test is meaningless")
    return ks_uniform_pvalue(vals, -1.0, 1.0)


def sign_product_rate(g: Graph, delta_values) -> float:
    """Fraction of adjacent edge pairs whose gap values disagree in sign."""
    if g.edge_count < 2:
        raise ValueError("need at least 2 edges to form adjacent pairs")
    if len(delta_values) != g.edge_count:
        raise ValueError(f"expected {g.edge_count} gap values, got {len(delta_values)}")
    pairs = g.adjacent_edge_pairs
    if not pairs:
        raise ValueError("graph has no adjacent edge pairs")
    return sum(1 for i, j in pairs if delta_values[i] * delta_values[j] < 0.0) / len(pairs)


def write_samples_csv(samples, dest) -> None:
    """Write probe rows as CSV with a schema comment line on top.

    Floats are written with repr, the shortest round-tripping form, so a
    byte comparison of two files is a float-exact comparison of the runs.
    """
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        fh.write(f"# {CSV_SCHEMA}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for s in samples:
            row = (s.time, s.W, s.max_neighbor_dist, s.mean_abs_delta,
                   s.opinion_range, s.sign_flip_fraction)
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    finally:
        if own:
            fh.close()


def read_samples_csv(src) -> list[MetricSample]:
    own = isinstance(src, (str, bytes)) or hasattr(src, "__fspath__")
    fh = open(src, "r", newline="", encoding="utf-8") if own else src
    try:
        first = fh.readline().strip()
        if first != f"# {CSV_SCHEMA}":
            raise ValueError(f"unrecognized CSV schema line {first!r}")
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames!r}")
        return [MetricSample(**{k: float(v) for k, v in row.items()}) for row in reader]
    finally:
        if own:
            fh.close()
