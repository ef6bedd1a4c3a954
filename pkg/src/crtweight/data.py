"""Data model for the recruited sample: cluster records, CSV ingestion, summaries.

The observed unit is an individual recruited into a cluster randomized
experiment after cluster-level treatment assignment.  A dataset holds the
recruited individuals grouped by cluster together with the *design* treatment
probability, which is a known constant of the randomization and is never
estimated from the sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import ConsistencyError, DesignError, ParseError


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ClusterRecord:
    """One cluster's recruited individuals.

    Treatment is constant within a cluster by construction: a record carries a
    single arm indicator for all of its rows.
    """

    cluster_id: str
    treatment: int
    covariates: np.ndarray  # shape (n_i, d)
    outcomes: np.ndarray  # shape (n_i,)

    def __post_init__(self) -> None:
        if self.treatment not in (0, 1):
            raise DesignError(
                f"cluster {self.cluster_id!r}: treatment must be 0 or 1, got {self.treatment!r}"
            )
        cov = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        out = np.asarray(self.outcomes, dtype=float).ravel()
        if cov.shape[0] != out.shape[0]:
            raise DesignError(
                f"cluster {self.cluster_id!r}: {cov.shape[0]} covariate rows vs "
                f"{out.shape[0]} outcomes"
            )
        if out.shape[0] == 0:
            raise DesignError(f"cluster {self.cluster_id!r} has no recruited individuals")
        if not np.isfinite(cov).all() or not np.isfinite(out).all():
            raise ParseError(f"cluster {self.cluster_id!r}: non-finite covariate or outcome")
        object.__setattr__(self, "covariates", _readonly(cov))
        object.__setattr__(self, "outcomes", _readonly(out))
        object.__setattr__(self, "treatment", int(self.treatment))

    @property
    def size(self) -> int:
        return self.outcomes.shape[0]


@dataclass(frozen=True)
class RecruitedDataset:
    """The recruited sample of a two-arm cluster randomized experiment.

    Immutable after construction and safe to share across concurrent readers.
    ``design_treatment_prob`` is the known cluster randomization probability
    pi_t, strictly inside (0, 1).
    """

    clusters: tuple[ClusterRecord, ...]
    covariate_dim: int
    design_treatment_prob: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if not self.clusters:
            raise DesignError("dataset has no clusters")
        d = int(self.covariate_dim)
        if d < 1:
            raise DesignError(f"covariate_dim must be >= 1, got {d}")
        for c in self.clusters:
            if c.covariates.shape[1] != d:
                raise DesignError(
                    f"cluster {c.cluster_id!r} has covariate dimension "
                    f"{c.covariates.shape[1]}, expected {d}"
                )
        arms = {c.treatment for c in self.clusters}
        if arms != {0, 1}:
            raise DesignError(
                "both treatment arms must contain at least one cluster "
                f"(observed arms: {sorted(arms)})"
            )
        p = float(self.design_treatment_prob)
        if not (0.0 < p < 1.0):
            raise DesignError(f"design treatment probability must be in (0, 1), got {p}")
        object.__setattr__(self, "covariate_dim", d)
        object.__setattr__(self, "design_treatment_prob", p)

    # -- flattened views (cluster blocks are contiguous, in cluster order) --

    @cached_property
    def cluster_sizes(self) -> np.ndarray:
        a = np.array([c.size for c in self.clusters], dtype=np.int64)
        a.flags.writeable = False
        return a

    @cached_property
    def cluster_starts(self) -> np.ndarray:
        """Row offset of each cluster's block in the flattened arrays."""
        a = np.concatenate([[0], np.cumsum(self.cluster_sizes)[:-1]])
        a.flags.writeable = False
        return a

    @cached_property
    def covariates(self) -> np.ndarray:
        return _readonly(np.vstack([c.covariates for c in self.clusters]))

    @cached_property
    def outcomes(self) -> np.ndarray:
        return _readonly(np.concatenate([c.outcomes for c in self.clusters]))

    @cached_property
    def treatments(self) -> np.ndarray:
        """Per-individual arm indicator (constant within each cluster block)."""
        return _readonly(
            np.repeat([c.treatment for c in self.clusters], self.cluster_sizes)
        )

    @property
    def n(self) -> int:
        return int(self.cluster_sizes.sum())

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_treated_clusters(self) -> int:
        return sum(c.treatment for c in self.clusters)

    def arm_clusters(self, treatment: int) -> tuple[ClusterRecord, ...]:
        return tuple(c for c in self.clusters if c.treatment == treatment)


def design_ratio(dataset: RecruitedDataset) -> float:
    """Design odds of treatment, pi_t / (1 - pi_t)."""
    p = dataset.design_treatment_prob
    return p / (1.0 - p)


@dataclass(frozen=True)
class ColumnSchema:
    """Column-name mapping for CSV input."""

    cluster: str = "cluster"
    treatment: str = "z"
    outcome: str = "y"
    covariates: Sequence[str] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.covariates:
            raise ParseError("schema must name at least one covariate column")
        names = [self.cluster, self.treatment, self.outcome, *self.covariates]
        if len(set(names)) != len(names):
            raise ParseError(f"schema column names must be distinct: {names}")


def _numeric_column(df: pd.DataFrame, col: str) -> np.ndarray:
    raw = df[col].astype(str).str.strip().to_numpy(dtype="U")
    try:
        # numpy's parser is correctly rounded, so written files re-load bit-exactly
        vals = raw.astype(np.float64)
    except ValueError:
        vals = np.empty(raw.shape[0], dtype=float)
        for i, cell in enumerate(raw):
            try:
                vals[i] = float(cell)
            except ValueError:
                # +2: 1-based indexing plus the header line
                raise ParseError(
                    f"column {col!r}: missing or non-numeric value at file row {i + 2}"
                ) from None
    bad = ~np.isfinite(vals)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(
            f"column {col!r}: missing or non-finite value at file row {row + 2}"
        )
    return vals


def load_csv(
    path,
    schema: ColumnSchema,
    design_treatment_prob: float,
) -> RecruitedDataset:
    """Read a recruited sample from CSV, grouping rows by cluster id.

    The treatment probability is a caller-supplied design constant, never
    inferred from the file.  Rows are grouped by first appearance of each
    cluster id; treatment must be constant within a cluster and both arms must
    be present.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise ParseError(f"input file not found: {path}") from None
    except pd.errors.ParserError as exc:
        raise ParseError(f"malformed CSV {path}: {exc}") from None
    missing = [
        c
        for c in (schema.cluster, schema.treatment, schema.outcome, *schema.covariates)
        if c not in df.columns
    ]
    if missing:
        raise ParseError(f"missing required columns: {missing}")
    if len(df) == 0:
        raise ParseError("input file has no data rows")

    z = _numeric_column(df, schema.treatment)
    nonbinary = ~np.isin(z, (0.0, 1.0))
    if nonbinary.any():
        row = int(np.flatnonzero(nonbinary)[0])
        raise ParseError(
            f"column {schema.treatment!r}: treatment must be 0 or 1 "
            f"at file row {row + 2} (got {z[row]!r})"
        )
    y = _numeric_column(df, schema.outcome)
    X = np.column_stack([_numeric_column(df, c) for c in schema.covariates])

    ids = df[schema.cluster].astype(str).to_numpy()
    clusters: list[ClusterRecord] = []
    # stable grouping by first appearance
    order: dict[str, list[int]] = {}
    for i, cid in enumerate(ids):
        order.setdefault(cid, []).append(i)
    for cid, rows in order.items():
        zc = z[rows]
        if not (zc == zc[0]).all():
            raise ConsistencyError(
                f"cluster {cid!r}: treatment varies across its rows"
            )
        clusters.append(
            ClusterRecord(
                cluster_id=cid,
                treatment=int(zc[0]),
                covariates=X[rows],
                outcomes=y[rows],
            )
        )
    return RecruitedDataset(
        clusters=tuple(clusters),
        covariate_dim=X.shape[1],
        design_treatment_prob=design_treatment_prob,
    )


def write_csv(dataset: RecruitedDataset, path, schema: ColumnSchema) -> None:
    """Write a dataset back to CSV, round-tripping all numerics bit-exactly."""
    if len(schema.covariates) != dataset.covariate_dim:
        raise ParseError(
            f"schema names {len(schema.covariates)} covariates, "
            f"dataset has {dataset.covariate_dim}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = [schema.cluster, schema.treatment, schema.outcome, *schema.covariates]
        fh.write(",".join(header) + "\n")
        for c in dataset.clusters:
            for i in range(c.size):
                cells = [c.cluster_id, str(c.treatment), repr(float(c.outcomes[i]))]
                cells += [repr(float(v)) for v in c.covariates[i]]
                fh.write(",".join(cells) + "\n")


@dataclass(frozen=True)
class ArmSummary:
    clusters: int
    recruited: int
    outcome_mean: float
    covariate_means: np.ndarray
    covariate_sds: np.ndarray


@dataclass(frozen=True)
class DatasetSummary:
    """Per-arm diagnostics plus two-sample covariate mean differences."""

    n: int
    n_clusters: int
    design_treatment_prob: float
    treated: ArmSummary
    control: ArmSummary
    covariate_mean_differences: np.ndarray  # treated minus control

    def to_dict(self) -> dict:
        def arm(a: ArmSummary) -> dict:
            return {
                "clusters": a.clusters,
                "recruited": a.recruited,
                "outcome_mean": a.outcome_mean,
                "covariate_means": [float(v) for v in a.covariate_means],
                "covariate_sds": [float(v) for v in a.covariate_sds],
            }

        return {
            "n": self.n,
            "n_clusters": self.n_clusters,
            "design_treatment_prob": self.design_treatment_prob,
            "treated": arm(self.treated),
            "control": arm(self.control),
            "covariate_mean_differences": [
                float(v) for v in self.covariate_mean_differences
            ],
        }


def summarize(dataset: RecruitedDataset) -> DatasetSummary:
    """Pure sample summary: arm sizes, outcome means, covariate balance."""
    z = dataset.treatments
    y = dataset.outcomes
    X = dataset.covariates

    def arm(indicator: np.ndarray, n_clusters: int) -> ArmSummary:
        Xa = X[indicator]
        return ArmSummary(
            clusters=n_clusters,
            recruited=int(indicator.sum()),
            outcome_mean=float(y[indicator].mean()),
            covariate_means=Xa.mean(axis=0),
            covariate_sds=Xa.std(axis=0, ddof=1) if Xa.shape[0] > 1 else np.zeros(X.shape[1]),
        )

    treated = arm(z == 1, dataset.n_treated_clusters)
    control = arm(z == 0, dataset.n_clusters - dataset.n_treated_clusters)
    return DatasetSummary(
        n=dataset.n,
        n_clusters=dataset.n_clusters,
        design_treatment_prob=dataset.design_treatment_prob,
        treated=treated,
        control=control,
        covariate_mean_differences=treated.covariate_means - control.covariate_means,
    )


def from_arrays(
    cluster_ids: Iterable,
    treatments: Iterable[int],
    covariates: np.ndarray,
    outcomes: np.ndarray,
    design_treatment_prob: float,
) -> RecruitedDataset:
    """Build a dataset from flat per-individual arrays (grouped by id order)."""
    ids = [str(c) for c in cluster_ids]
    z = np.asarray(list(treatments), dtype=int)
    X = np.atleast_2d(np.asarray(covariates, dtype=float))
    y = np.asarray(outcomes, dtype=float).ravel()
    order: dict[str, list[int]] = {}
    for i, cid in enumerate(ids):
        order.setdefault(cid, []).append(i)
    clusters = []
    for cid, rows in order.items():
        zc = z[rows]
        if not (zc == zc[0]).all():
            raise ConsistencyError(f"cluster {cid!r}: treatment varies across its rows")
        clusters.append(ClusterRecord(cid, int(zc[0]), X[rows], y[rows]))
    return RecruitedDataset(tuple(clusters), X.shape[1], design_treatment_prob)
