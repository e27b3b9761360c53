"""Multi-stage observational panels: schema, CSV I/O, histories, folds.

A panel holds ``n`` units observed over ``T`` treatment stages.  Stage ``t``
records an integer action code ``a_t`` in ``[0, d_t)``, a real state vector
``s_t`` of fixed per-stage dimension, and a real outcome ``y_t``.  Stages
without a recorded outcome carry zeros and are flagged in the schema, so the
total-outcome sum needs no special-casing downstream.

The stage-``t`` history of a unit is the concatenation of all earlier
actions and all states observed so far::

    h_t = (a_1, ..., a_{t-1}, s_1, ..., s_t)

with actions cast to reals; ``h_1`` is the ``s_1`` block alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .rng import shuffled_indices


class DatasetError(ValueError):
    """Raised for schema violations and malformed input files."""


@dataclass(frozen=True)
class StageSchema:
    """Shape of one panel: stage count, arms per stage, state dims, outcomes."""

    num_stages: int
    actions_per_stage: tuple[int, ...]
    state_dims: tuple[int, ...]
    outcome_present: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions_per_stage", tuple(int(d) for d in self.actions_per_stage))
        object.__setattr__(self, "state_dims", tuple(int(d) for d in self.state_dims))
        object.__setattr__(self, "outcome_present", tuple(bool(b) for b in self.outcome_present))
        T = self.num_stages
        if T < 1:
            raise DatasetError(f"num_stages must be >= 1, got {T}")
        for name, seq in (
            ("actions_per_stage", self.actions_per_stage),
            ("state_dims", self.state_dims),
            ("outcome_present", self.outcome_present),
        ):
            if len(seq) != T:
                raise DatasetError(f"{name} must have length {T}, got {len(seq)}")
        if any(d < 2 for d in self.actions_per_stage):
            raise DatasetError("every stage needs at least 2 treatment arms")
        if any(d < 0 for d in self.state_dims):
            raise DatasetError("state dimensions must be nonnegative")

    def history_dim(self, t: int) -> int:
        """Column count of the stage-``t`` history matrix."""
        self._check_stage(t)
        return (t - 1) + sum(self.state_dims[:t])

    def _check_stage(self, t: int) -> None:
        if not 1 <= t <= self.num_stages:
            raise DatasetError(f"stage index {t} outside 1..{self.num_stages}")

    def csv_columns(self) -> list[str]:
        cols = ["unit_id"]
        cols += [f"a{t}" for t in range(1, self.num_stages + 1)]
        for t in range(1, self.num_stages + 1):
            cols += [f"s{t}_{j}" for j in range(1, self.state_dims[t - 1] + 1)]
        cols += [f"y{t}" for t in range(1, self.num_stages + 1)]
        return cols


class PanelDataset:
    """Immutable n-unit panel conforming to a :class:`StageSchema`.

    Parameters
    ----------
    schema : StageSchema
    actions : (n, T) integer array of action codes
    states : list of T arrays, each (n, state_dims[t])
    outcomes : (n, T) float array, zeros where the schema has no outcome
    """

    def __init__(self, schema: StageSchema, actions, states, outcomes):
        self.schema = schema
        self.actions = np.ascontiguousarray(np.asarray(actions, dtype=np.int64))
        self.states = [np.ascontiguousarray(np.asarray(s, dtype=np.float64)) for s in states]
        self.outcomes = np.ascontiguousarray(np.asarray(outcomes, dtype=np.float64))
        self._validate()
        self.actions.flags.writeable = False
        self.outcomes.flags.writeable = False
        for s in self.states:
            s.flags.writeable = False

    def _validate(self) -> None:
        T = self.schema.num_stages
        if self.actions.ndim != 2 or self.actions.shape[1] != T:
            raise DatasetError(f"actions must be (n, {T}), got {self.actions.shape}")
        n = self.actions.shape[0]
        if n < 1:
            raise DatasetError("dataset needs at least one unit")
        if len(self.states) != T:
            raise DatasetError(f"expected {T} state blocks, got {len(self.states)}")
        for t in range(T):
            d = self.schema.actions_per_stage[t]
            bad = (self.actions[:, t] < 0) | (self.actions[:, t] >= d)
            if bad.any():
                row = int(np.nonzero(bad)[0][0])
                raise DatasetError(
                    f"action code {self.actions[row, t]} out of range [0, {d}) "
                    f"at unit {row}, stage {t + 1}"
                )
            want = (n, self.schema.state_dims[t])
            got = self.states[t].shape
            if got != want:
                raise DatasetError(f"stage {t + 1} states must be {want}, got {got}")
            if not np.isfinite(self.states[t]).all():
                raise DatasetError(f"non-finite state value at stage {t + 1}")
        if self.outcomes.shape != (n, T):
            raise DatasetError(f"outcomes must be (n, {T}), got {self.outcomes.shape}")
        if not np.isfinite(self.outcomes).all():
            raise DatasetError("non-finite outcome value")

    @property
    def n_units(self) -> int:
        return self.actions.shape[0]

    @property
    def num_stages(self) -> int:
        return self.schema.num_stages

    def total_outcomes(self) -> np.ndarray:
        """Per-unit sum of stage outcomes (absent stages are stored zeros)."""
        return self.outcomes.sum(axis=1)


def history_features(data: PanelDataset, t: int) -> np.ndarray:
    """Stage-``t`` history matrix ``[a_1..a_{t-1}, s_1.., ..., s_t..]``.

    Column order is fixed: the ``t-1`` past-action columns first (cast to
    float), then the state blocks of stages ``1..t`` in stage order, each in
    its declared column order.
    """
    data.schema._check_stage(t)
    blocks = [data.actions[:, : t - 1].astype(np.float64)]
    blocks += [data.states[s] for s in range(t)]
    return np.ascontiguousarray(np.hstack(blocks))


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of units into K evenly-sized cross-fitting folds."""

    fold_of_unit: np.ndarray
    num_folds: int
    seed: int = field(default=0)

    def __post_init__(self):
        fold = np.asarray(self.fold_of_unit, dtype=np.int64)
        fold.flags.writeable = False
        object.__setattr__(self, "fold_of_unit", fold)
        sizes = np.bincount(fold, minlength=self.num_folds)
        if fold.min(initial=0) < 0 or fold.max(initial=0) >= self.num_folds:
            raise DatasetError("fold labels outside [0, K)")
        if sizes.max() - sizes.min() > 1:
            raise DatasetError(f"folds not evenly sized: {sizes.tolist()}")

    @property
    def n_units(self) -> int:
        return self.fold_of_unit.shape[0]

    def members(self, k: int) -> np.ndarray:
        return np.nonzero(self.fold_of_unit == k)[0]

    def train_mask(self, k: int) -> np.ndarray:
        return self.fold_of_unit != k


def make_folds(n: int, num_folds: int, seed: int) -> FoldAssignment:
    """Randomly assign ``n`` units to ``num_folds`` evenly-sized folds.

    Unit indices are shuffled with the splitmix64-driven Fisher-Yates
    permutation (see :mod:`dtrlearn.rng`) and sliced contiguously, so the
    partition is reproducible across platforms for a fixed seed.
    """
    if num_folds < 2:
        raise DatasetError(f"need at least 2 folds, got {num_folds}")
    if num_folds > n:
        raise DatasetError(f"cannot split {n} units into {num_folds} folds")
    perm = shuffled_indices(n, seed)
    fold = np.empty(n, dtype=np.int64)
    base = n // num_folds
    extra = n % num_folds
    start = 0
    for k in range(num_folds):
        size = base + (1 if k < extra else 0)
        fold[perm[start : start + size]] = k
        start += size
    return FoldAssignment(fold_of_unit=fold, num_folds=num_folds, seed=seed)


# ---------------------------------------------------------------------------
# CSV I/O.  Layout (header required):
#   unit_id, a1..aT, s1_1..s1_p1, ..., sT_1..sT_pT, y1..yT
# UTF-8, comma separators, '.' decimal point.
# ---------------------------------------------------------------------------


def load_csv(path, schema: StageSchema) -> PanelDataset:
    """Parse a panel CSV; row order becomes unit order.

    Raises :class:`DatasetError` naming the row and column for missing
    columns, non-numeric cells, and out-of-range action codes.
    """
    expected = schema.csv_columns()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header != expected:
            missing = [c for c in expected if c not in header]
            if missing:
                raise DatasetError(f"{path}: missing column(s) {missing}")
            raise DatasetError(
                f"{path}: column order must be {expected}, got {header}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(expected)} fields, got {len(row)}"
                )
            parsed = []
            for col, cell in zip(expected, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {col}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DatasetError(f"{path}: no data rows")

    T = schema.num_stages
    mat = np.asarray(rows, dtype=np.float64)
    pos = 1
    actions_f = mat[:, pos : pos + T]
    pos += T
    states = []
    for t in range(T):
        p = schema.state_dims[t]
        states.append(mat[:, pos : pos + p])
        pos += p
    outcomes = mat[:, pos : pos + T]

    actions = actions_f.astype(np.int64)
    if not np.array_equal(actions_f, actions):
        bad = np.nonzero(actions_f != actions)
        raise DatasetError(
            f"{path}: non-integer action code at unit {int(bad[0][0])}, "
            f"column a{int(bad[1][0]) + 1}"
        )
    try:
        return PanelDataset(schema, actions, states, outcomes)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def write_csv(path, data: PanelDataset) -> None:
    """Write a panel in the canonical CSV layout (floats via ``repr``)."""
    cols = data.schema.csv_columns()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        T = data.schema.num_stages
        for i in range(data.n_units):
            row = [str(i)]
            row += [str(int(a)) for a in data.actions[i]]
            for t in range(T):
                row += [repr(float(v)) for v in data.states[t][i]]
            row += [repr(float(v)) for v in data.outcomes[i]]
            writer.writerow(row)
