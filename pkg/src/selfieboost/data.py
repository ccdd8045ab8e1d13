"""Synthetic realizable datasets and CSV I/O.

Datasets are labeled by a randomly initialized teacher network after
rejection-sampling away points the teacher scores inside a dead zone, then
rescaling the teacher's output layer so every example has margin at least 1
under it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DatasetParseError, DegenerateTeacherError, EmptyDatasetError
from .nnet import FeedForwardNet, NetworkArchitecture, forward, forward_batch, init_network
from .sampling import SplitMix64, derive_seed


@dataclass(frozen=True)
class DatasetProvenance:
    teacher_path: Optional[str]
    margin_floor: float
    seed: int
    rejected: int = 0


@dataclass(frozen=True)
class TeacherSpec:
    """How a labeling teacher was produced: architecture, seed, the rejection
    dead zone, and the output rescale that lifts all margins to >= 1."""

    architecture: NetworkArchitecture
    seed: int
    rejection_tau: float
    output_rescale: float


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    provenance: Optional[DatasetProvenance] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise EmptyDatasetError("need a (m, d) feature matrix with m >= 1")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must match the number of rows")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.provenance)


def gen_realizable(
    m: int,
    d: int,
    teacher_arch: NetworkArchitecture,
    tau: float,
    seed: int,
) -> tuple[Dataset, FeedForwardNet]:
    """Generate ``m`` standard-normal points labeled by a seeded teacher.

    Points with raw teacher score inside ``(-tau, tau)`` are rejected and
    redrawn (total attempt cap ``100 * m``); the teacher's output layer is
    then rescaled by ``1/tau`` so every margin is at least 1.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if teacher_arch.input_dim != d:
        raise ValueError(f"teacher input_dim {teacher_arch.input_dim} != d {d}")
    return realize(m, TeacherSpec(teacher_arch, seed, tau, output_rescale=1.0 / tau))


def realize(m: int, spec: TeacherSpec) -> tuple[Dataset, FeedForwardNet]:
    """Sample a dataset the teacher described by ``spec`` labels with margin >= 1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    tau = spec.rejection_tau
    if tau <= 0:
        raise ValueError("rejection_tau must be > 0")
    d = spec.architecture.input_dim
    seed = spec.seed
    teacher = init_network(spec.architecture, derive_seed(seed, 0), 1.0)
    rng = SplitMix64(derive_seed(seed, 1))

    features = np.empty((m, d))
    labels = np.empty(m)
    attempts = 0
    cap = 100 * m
    for i in range(m):
        while True:
            attempts += 1
            if attempts > cap:
                raise DegenerateTeacherError(
                    f"rejection sampling exceeded {cap} attempts; "
                    f"teacher (seed {seed}) scores almost everything inside +-{tau}"
                )
            x = rng.normal_block(d)
            raw = forward(teacher, x)
            if abs(raw) >= tau:
                break
        features[i] = x
        labels[i] = 1.0 if raw > 0 else -1.0

    # lift every margin to >= 1 by scaling the output layer
    teacher.weights[-1] *= spec.output_rescale
    teacher.biases[-1] *= spec.output_rescale
    floor = float(np.min(labels * forward_batch(teacher, features)))
    dataset = Dataset(
        features,
        labels,
        provenance=DatasetProvenance(
            teacher_path=None, margin_floor=floor, seed=seed, rejected=attempts - m
        ),
    )
    return dataset, teacher


def save_csv(dataset: Dataset, path) -> None:
    """Header ``f0,...,f{d-1},label``; one row per example; LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join([f"f{j}" for j in range(dataset.d)] + ["label"]) + "\n")
        for i in range(dataset.m):
            row = [repr(float(v)) for v in dataset.features[i]]
            row.append(str(int(dataset.labels[i])))
            fh.write(",".join(row) + "\n")


def load_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n").rstrip("\r") for line in fh]
    lines = [line for line in lines if line]
    if not lines:
        raise EmptyDatasetError(f"{path}: empty dataset file")
    header = lines[0].split(",")
    if header[-1] != "label" or len(header) < 2:
        raise DatasetParseError(f"{path}: bad header {lines[0]!r}")
    d = len(header) - 1
    if header[:-1] != [f"f{j}" for j in range(d)]:
        raise DatasetParseError(f"{path}: bad header {lines[0]!r}")
    if len(lines) == 1:
        raise EmptyDatasetError(f"{path}: no data rows")
    features = np.empty((len(lines) - 1, d))
    labels = np.empty(len(lines) - 1)
    for r, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != d + 1:
            raise DatasetParseError(f"{path}: row {r} has {len(parts)} fields, expected {d + 1}")
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise DatasetParseError(f"{path}: row {r}: {exc}") from exc
        if values[-1] not in (-1.0, 1.0):
            raise DatasetParseError(f"{path}: row {r}: label must be -1 or 1, got {parts[-1]!r}")
        features[r - 2] = values[:-1]
        labels[r - 2] = values[-1]
    return Dataset(features, labels)
