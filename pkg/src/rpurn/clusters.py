"""Clustered-sample workflow: per-cluster statistics, the inflation-factor
estimator, confidence intervals, and the three null-probability modes.

Clusters are independent; within a cluster the draws are correlated with a
common inflation factor lambda (the per-cluster reinforcement parameters may
differ).  Each cluster contributes a chi-squared distance statistic Q_l, all
asymptotically ``Gamma((k-1)/2, 1/(2*lambda))``, so

    lambda_hat = sum_l Q_l / (L * (k - 1))

is the asymptotic maximum-likelihood estimator; it is unbiased, and
``lambda_hat / lambda ~ Gamma(L(k-1)/2, L(k-1)/2)`` pivots the confidence
interval.

Null probabilities per cluster can be uniform (1/k), taken from a first-period
sample of the same clusters, or copied from a designated benchmark cluster
(which is then excluded from testing).  Any zero probability violates the
strict-positivity requirement of the test and is reported with the offending
cluster and category.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Union

import numpy as np

from . import gof
from .specfun import GammaDist, gamma_quantile

__all__ = [
    "ClusteredSample",
    "LambdaEstimate",
    "q_statistic",
    "estimate_lambda",
    "lambda_confidence_interval",
    "build_null_probs",
    "cluster_test",
    "read_clustered_csv",
]

# Below this cluster size the large-N_l asymptotics behind the gamma law are
# a stretch; reports carry a warning (heuristic threshold).
SMALL_CLUSTER_SIZE = 200


@dataclass(frozen=True)
class ClusteredSample:
    """Per-cluster categorical counts: ``counts[l]`` is the length-k count
    vector of cluster ``ids[l]``."""

    k: int
    ids: tuple
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        ids = tuple(str(i) for i in self.ids)
        if self.k < 2:
            raise ValueError(f"need at least 2 categories, got k = {self.k}")
        if counts.ndim != 2 or counts.shape[1] != self.k:
            raise ValueError(f"counts must be (L, {self.k}), got {counts.shape}")
        if counts.shape[0] != len(ids):
            raise ValueError("one id per count row required")
        if len(set(ids)) != len(ids):
            raise ValueError("cluster ids must be unique")
        if counts.shape[0] < 1:
            raise ValueError("need at least one cluster")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if np.any(counts.sum(axis=1) < 1):
            empty = ids[int(np.argmin(counts.sum(axis=1)))]
            raise ValueError(f"cluster {empty!r} has no observations")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "ids", ids)

    @property
    def n_clusters(self) -> int:
        return len(self.ids)

    @property
    def sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def counts_for(self, cluster_id: str) -> np.ndarray:
        try:
            return self.counts[self.ids.index(str(cluster_id))]
        except ValueError:
            raise ValueError(f"unknown cluster id {cluster_id!r}") from None


NullProbs = Mapping[str, np.ndarray]


def q_statistic(counts, p_star) -> float:
    """Per-cluster chi-squared distance; delegates to the test statistic."""
    return gof.chi_squared_stat(counts, p_star)


def _resolve_probs(sample: ClusteredSample, p_star: Union[NullProbs, np.ndarray]) -> dict:
    """Normalize p_star to an ordered {cluster_id: vector} over tested clusters."""
    if isinstance(p_star, Mapping):
        resolved = {}
        for cid in sample.ids:
            if cid in p_star:
                resolved[cid] = np.asarray(p_star[cid], dtype=float)
        if not resolved:
            raise ValueError("p_star names no cluster present in the sample")
        unknown = set(p_star) - set(sample.ids)
        if unknown:
            raise ValueError(f"p_star names unknown clusters: {sorted(unknown)}")
        return resolved
    vec = np.asarray(p_star, dtype=float)
    return {cid: vec for cid in sample.ids}


@dataclass(frozen=True)
class LambdaEstimate:
    """Pooled inflation-factor estimate with its per-cluster statistics."""

    lambda_hat: float
    L: int
    k: int
    q_values: np.ndarray
    cluster_ids: tuple
    warnings: tuple = field(default_factory=tuple)

    def __post_init__(self):
        q = np.asarray(self.q_values, dtype=float)
        q.setflags(write=False)
        object.__setattr__(self, "q_values", q)

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "L": self.L,
            "k": self.k,
            "q_values": self.q_values.tolist(),
            "cluster_ids": list(self.cluster_ids),
            "warnings": list(self.warnings),
        }


def estimate_lambda(sample: ClusteredSample, p_star: Union[NullProbs, np.ndarray]) -> LambdaEstimate:
    """``lambda_hat = sum Q_l / (L (k-1))`` over the clusters named by p_star."""
    probs = _resolve_probs(sample, p_star)
    q_values = np.array(
        [q_statistic(sample.counts_for(cid), vec) for cid, vec in probs.items()]
    )
    L = len(probs)
    lambda_hat = float(q_values.sum() / (L * (sample.k - 1)))
    warnings = []
    if lambda_hat == 0.0:
        warnings.append("all clusters fit the null exactly; lambda_hat = 0 is degenerate")
    elif lambda_hat < 1.0:
        warnings.append(
            f"lambda_hat = {lambda_hat!r} < 1 is inconsistent with the generating model"
        )
    small = [cid for cid in probs if sample.counts_for(cid).sum() < SMALL_CLUSTER_SIZE]
    if small:
        warnings.append(
            f"cluster sizes below {SMALL_CLUSTER_SIZE} in {small}; the gamma asymptotics may be poor"
        )
    return LambdaEstimate(
        lambda_hat=lambda_hat,
        L=L,
        k=sample.k,
        q_values=q_values,
        cluster_ids=tuple(probs),
        warnings=tuple(warnings),
    )


def lambda_confidence_interval(est: LambdaEstimate, level: float) -> tuple[float, float]:
    """Equal-tailed interval from the pivot ``lambda_hat / lambda ~
    Gamma(L(k-1)/2, L(k-1)/2)``: ``[lambda_hat / q_hi, lambda_hat / q_lo]``."""
    level = float(level)
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie strictly in (0,1), got {level}")
    if est.lambda_hat <= 0:
        raise ValueError("lambda_hat must be positive to form a confidence interval")
    a = est.L * (est.k - 1) / 2.0
    pivot = GammaDist(shape=a, rate=a)
    theta = 1.0 - level
    q_lo = gamma_quantile(pivot, theta / 2.0)
    q_hi = gamma_quantile(pivot, 1.0 - theta / 2.0)
    return est.lambda_hat / q_hi, est.lambda_hat / q_lo


def _frequencies(counts: np.ndarray, cid: str, role: str) -> np.ndarray:
    total = counts.sum()
    freq = counts / total
    zero = np.nonzero(freq == 0)[0]
    if zero.size:
        cats = ", ".join(str(i + 1) for i in zero)
        raise ValueError(
            f"{role} cluster {cid!r} has zero frequency in categories {cats}; "
            "null probabilities must be strictly positive"
        )
    return freq


def build_null_probs(
    mode: str,
    sample: ClusteredSample,
    first_period: Optional[ClusteredSample] = None,
    benchmark_id: Optional[str] = None,
) -> dict:
    """Construct per-cluster null probabilities.

    ``uniform``       1/k everywhere.
    ``first_period``  each cluster's relative frequencies in the first-period
                      sample (tests the second sample for a change).
    ``benchmark``     the benchmark cluster's frequencies, assigned to every
                      other cluster; the benchmark itself is excluded.
    """
    if mode == "uniform":
        vec = np.full(sample.k, 1.0 / sample.k)
        return {cid: vec for cid in sample.ids}
    if mode == "first_period":
        if first_period is None:
            raise ValueError("first_period mode requires the first-period sample")
        if first_period.k != sample.k:
            raise ValueError("first-period sample must have the same number of categories")
        missing = [cid for cid in sample.ids if cid not in first_period.ids]
        if missing:
            raise ValueError(f"first-period sample is missing clusters {missing}")
        return {
            cid: _frequencies(first_period.counts_for(cid), cid, "first-period")
            for cid in sample.ids
        }
    if mode == "benchmark":
        if benchmark_id is None:
            raise ValueError("benchmark mode requires a benchmark cluster id")
        benchmark_id = str(benchmark_id)
        freq = _frequencies(sample.counts_for(benchmark_id), benchmark_id, "benchmark")
        probs = {cid: freq for cid in sample.ids if cid != benchmark_id}
        if not probs:
            raise ValueError("benchmark mode needs at least one non-benchmark cluster")
        return probs
    raise ValueError(f"unknown null mode {mode!r}; expected uniform, first_period or benchmark")


def cluster_test(
    sample: ClusteredSample,
    p_star: Union[NullProbs, np.ndarray],
    lam: Union[float, LambdaEstimate],
    theta: float,
) -> dict:
    """One inflated test per cluster named by ``p_star``, at a common lambda.

    ``lam`` may be a number or a :class:`LambdaEstimate`; in the latter case
    the per-cluster reference law uses the plug-in estimate and the reports
    say so (no uncertainty propagation for the plug-in).
    """
    probs = _resolve_probs(sample, p_star)
    if isinstance(lam, LambdaEstimate):
        lam_value = lam.lambda_hat
        source = "estimated (plug-in)"
    else:
        lam_value = float(lam)
        source = "supplied"
    reports = {}
    for cid, vec in probs.items():
        counts = sample.counts_for(cid)
        report = gof.gof_test(counts, vec, lam_value, theta, lambda_source=source)
        if counts.sum() < SMALL_CLUSTER_SIZE:
            note = f"cluster size {int(counts.sum())} below {SMALL_CLUSTER_SIZE}; asymptotics may be poor"
            report = replace(report, warnings=report.warnings + (note,))
        reports[cid] = report
    return reports


def read_clustered_csv(path) -> ClusteredSample:
    """Load a clustered sample from CSV, auto-detecting the layout.

    Long format: header ``cluster_id,category`` and one observation per row
    (categories are integers 1..k; k is the largest category seen).
    Wide format: header ``cluster_id,count_1,...,count_k`` and one row per
    cluster.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:1] != ["cluster_id"]:
            raise ValueError(f"{path}: first column must be cluster_id, got {header[:1]}")
        if header[1:] == ["category"]:
            return _read_long(reader, path)
        if header[1:] and all(h == f"count_{i + 1}" for i, h in enumerate(header[1:])):
            return _read_wide(reader, path, k=len(header) - 1)
        raise ValueError(
            f"{path}: header must be cluster_id,category (long) or cluster_id,count_1..count_k (wide)"
        )


def _read_long(reader, path) -> ClusteredSample:
    observations: dict[str, list[int]] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ValueError(f"{path}:{line_no}: expected cluster_id,category")
        cid, raw = row[0].strip(), row[1].strip()
        try:
            cat = int(raw)
        except ValueError:
            raise ValueError(f"{path}:{line_no}: category {raw!r} is not an integer") from None
        if cat < 1:
            raise ValueError(f"{path}:{line_no}: categories are numbered from 1, got {cat}")
        observations.setdefault(cid, []).append(cat)
    if not observations:
        raise ValueError(f"{path}: no observations")
    k = max(max(cats) for cats in observations.values())
    if k < 2:
        raise ValueError(f"{path}: need at least 2 categories, saw only category 1")
    ids = list(observations)
    counts = np.zeros((len(ids), k), dtype=np.int64)
    for row_idx, cid in enumerate(ids):
        counts[row_idx] = np.bincount(np.array(observations[cid]) - 1, minlength=k)
    return ClusteredSample(k=k, ids=tuple(ids), counts=counts)


def _read_wide(reader, path, k: int) -> ClusteredSample:
    ids = []
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != k + 1:
            raise ValueError(f"{path}:{line_no}: expected {k + 1} columns, got {len(row)}")
        ids.append(row[0].strip())
        try:
            rows.append([int(v) for v in row[1:]])
        except ValueError:
            raise ValueError(f"{path}:{line_no}: counts must be integers") from None
    if not rows:
        raise ValueError(f"{path}: no clusters")
    return ClusteredSample(k=k, ids=tuple(ids), counts=np.array(rows, dtype=np.int64))
