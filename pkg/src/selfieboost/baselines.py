"""Ensemble and plain-SGD baselines for the single-network comparison.

The AdaBoost variant resamples (rather than reweights) so it shares the
alias sampling machinery: each round draws a working set from the current
example distribution, trains a weak net on it by hinge SGD, and keeps the
net only if its weighted error beats chance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .data import Dataset
from .errors import ModelFormatError, ModelVersionError, NoWeakLearnerError, ShapeError
from .nnet import (
    FeedForwardNet,
    GradientBuffer,
    NetworkArchitecture,
    backprop_batch,
    forward,
    forward_batch,
    init_network,
    net_from_dict,
    net_to_dict,
    sgd_step,
)
from .sampling import SplitMix64, build_alias, chunked_sum, derive_seed, sample_indices

ENSEMBLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EnsembleModel:
    members: tuple[FeedForwardNet, ...]
    alphas: tuple[float, ...]

    def __post_init__(self):
        if len(self.members) != len(self.alphas):
            raise ValueError("members and alphas must have equal length")


@dataclass(frozen=True)
class CostReport:
    network_evals_per_prediction: int
    total_params_evaluated: int


@dataclass(frozen=True)
class AdaBoostRound:
    eps: float
    alpha: float
    ensemble_err: float


@dataclass(frozen=True)
class AdaBoostResult:
    model: EnsembleModel
    rounds: tuple[AdaBoostRound, ...]


@dataclass(frozen=True)
class WeakLearnerConfig:
    """Budget of one weak learner: architecture, SGD schedule, resample size."""

    hidden: tuple[int, ...] = (32,)
    activation: str = "tanh"
    steps: int = 500
    lr: float = 0.05
    batch: int = 32
    init_scale: float = 1.0
    n: Optional[int] = None  # None -> min(m, 256)


def _vote(scores: np.ndarray) -> np.ndarray:
    """Hard votes; a score of exactly 0 votes -1 (mistake convention)."""
    return np.where(np.asarray(scores) > 0.0, 1.0, -1.0)


def _hinge_sgd(
    data: Dataset,
    arch: NetworkArchitecture,
    steps: int,
    lr: float,
    batch: int,
    init_scale: float,
    seed: int,
) -> FeedForwardNet:
    """SGD on the linear hinge: gradient -y on examples with margin below 1."""
    net = init_network(arch, derive_seed(seed, 0), init_scale)
    rng = SplitMix64(derive_seed(seed, 1))
    buf = GradientBuffer(net)
    m = data.m
    for _ in range(steps):
        pick = np.minimum((rng.uniform_block(batch) * m).astype(np.int64), m - 1)
        xb = data.features[pick]
        yb = data.labels[pick]
        scores = forward_batch(net, xb)
        upstream = np.where(yb * scores < 1.0, -yb, 0.0) / batch
        backprop_batch(net, xb, upstream, buf)
        if lr > 0:
            sgd_step(net, buf, lr)
        else:
            buf.zero()
    return net


def run_adaboost(
    data: Dataset,
    weak_config: WeakLearnerConfig,
    T: int,
    seed: int,
    weak_trainer: Callable[[Dataset, int], FeedForwardNet] | None = None,
) -> AdaBoostResult:
    """Classic exponential-reweighting boosting over resampled weak learners.

    Per round: draw ``n`` indices from the current distribution, train a weak
    net on them (``weak_trainer(subset, round_seed)``, by default hinge SGD
    with the configured budget), measure its weighted error on the full set,
    and stop early on a chance-or-worse learner (discarded) or on a perfect
    one.  A perfect learner receives a vote larger than all previous votes
    combined so the ensemble inherits its zero error.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    arch = NetworkArchitecture(data.d, weak_config.hidden, weak_config.activation)
    if weak_trainer is None:
        def weak_trainer(subset: Dataset, round_seed: int) -> FeedForwardNet:
            return _hinge_sgd(
                subset,
                arch,
                weak_config.steps,
                weak_config.lr,
                weak_config.batch,
                weak_config.init_scale,
                round_seed,
            )

    n = weak_config.n if weak_config.n is not None else min(data.m, 256)
    rng = SplitMix64(derive_seed(seed, 5))
    dist = np.full(data.m, 1.0 / data.m)
    members: list[FeedForwardNet] = []
    alphas: list[float] = []
    rounds: list[AdaBoostRound] = []
    ensemble_votes = np.zeros(data.m)

    for t in range(T):
        table = build_alias(dist)
        picked = sample_indices(table, n, rng)
        weak = weak_trainer(data.subset(picked), derive_seed(seed, 100 + t))
        votes = _vote(forward_batch(weak, data.features))
        eps = chunked_sum(np.where(votes != data.labels, dist, 0.0))
        if eps >= 0.5:
            break  # chance or worse: discard and stop
        if eps == 0.0:
            alpha = 1.0 + sum(abs(a) for a in alphas)
        else:
            alpha = 0.5 * math.log((1.0 - eps) / eps)
        members.append(weak)
        alphas.append(alpha)
        ensemble_votes = ensemble_votes + alpha * votes
        ens_err = float(np.count_nonzero(_vote_sum_sign(ensemble_votes) != data.labels)) / data.m
        rounds.append(AdaBoostRound(eps=eps, alpha=alpha, ensemble_err=ens_err))
        if eps == 0.0:
            break
        dist = dist * np.exp(-alpha * data.labels * votes)
        dist = dist / chunked_sum(dist)

    if not members:
        raise NoWeakLearnerError("every weak learner was at or below chance; ensemble is empty")
    return AdaBoostResult(
        model=EnsembleModel(members=tuple(members), alphas=tuple(alphas)),
        rounds=tuple(rounds),
    )


def _vote_sum_sign(total: np.ndarray) -> np.ndarray:
    # ties resolve to +1
    return np.where(np.asarray(total) >= 0.0, 1.0, -1.0)


def ensemble_predict(model: EnsembleModel, x: np.ndarray) -> int:
    """Weighted-majority vote over the member networks; ties go to +1."""
    if not model.members:
        raise ValueError("empty ensemble")
    total = sum(
        alpha * float(_vote(np.array([forward(member, x)]))[0])
        for member, alpha in zip(model.members, model.alphas)
    )
    return 1 if total >= 0.0 else -1


def ensemble_predict_batch(model: EnsembleModel, features: np.ndarray) -> np.ndarray:
    if not model.members:
        raise ValueError("empty ensemble")
    total = np.zeros(features.shape[0])
    for member, alpha in zip(model.members, model.alphas):
        total = total + alpha * _vote(forward_batch(member, features))
    return _vote_sum_sign(total)


def ensemble_err(model: EnsembleModel, data: Dataset) -> float:
    preds = ensemble_predict_batch(model, data.features)
    return float(np.count_nonzero(preds != data.labels)) / data.m


def cost(model: EnsembleModel) -> CostReport:
    """Every member must be evaluated for each prediction."""
    return CostReport(
        network_evals_per_prediction=len(model.members),
        total_params_evaluated=sum(member.param_count for member in model.members),
    )


@dataclass(frozen=True)
class PlainSgdResult:
    net: FeedForwardNet
    trajectory: tuple[tuple[int, float], ...]  # (step, train_err) checkpoints


def run_plain_sgd(
    data: Dataset,
    arch: NetworkArchitecture,
    steps: int,
    lr: float,
    seed: int,
    batch: int = 1,
    init_scale: float = 1.0,
    checkpoints: int = 100,
) -> PlainSgdResult:
    """Uniform-sampling hinge SGD control: one network, no boosting.

    ``lr=0`` leaves the parameters untouched.  The training-error trajectory
    is recorded at roughly ``checkpoints`` evenly spaced steps.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    net = init_network(arch, derive_seed(seed, 0), init_scale)
    rng = SplitMix64(derive_seed(seed, 1))
    buf = GradientBuffer(net)
    every = max(1, steps // max(1, checkpoints))
    trajectory: list[tuple[int, float]] = []

    def train_err() -> float:
        scores = forward_batch(net, data.features)
        return float(np.count_nonzero(data.labels * scores <= 0.0)) / data.m

    trajectory.append((0, train_err()))
    m = data.m
    for step in range(1, steps + 1):
        pick = np.minimum((rng.uniform_block(batch) * m).astype(np.int64), m - 1)
        xb = data.features[pick]
        yb = data.labels[pick]
        scores = forward_batch(net, xb)
        upstream = np.where(yb * scores < 1.0, -yb, 0.0) / batch
        backprop_batch(net, xb, upstream, buf)
        if lr > 0:
            sgd_step(net, buf, lr)
        else:
            buf.zero()
        if step % every == 0 or step == steps:
            trajectory.append((step, train_err()))
    return PlainSgdResult(net=net, trajectory=tuple(trajectory))


def save_ensemble(model: EnsembleModel, path) -> None:
    obj = {
        "format_version": ENSEMBLE_FORMAT_VERSION,
        "alphas": list(model.alphas),
        "members": [net_to_dict(member) for member in model.members],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_ensemble(path) -> EnsembleModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(
                f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(obj, dict):
        raise ModelFormatError("ensemble file must hold a JSON object")
    if obj.get("format_version") != ENSEMBLE_FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported format_version {obj.get('format_version')!r}, "
            f"expected {ENSEMBLE_FORMAT_VERSION}"
        )
    alphas = obj.get("alphas")
    members = obj.get("members")
    if not isinstance(alphas, list) or not isinstance(members, list) or len(alphas) != len(members):
        raise ModelFormatError("fields 'alphas' and 'members' must be lists of equal length")
    nets = tuple(net_from_dict(member) for member in members)
    if len({net.architecture.input_dim for net in nets}) > 1:
        raise ShapeError("ensemble members disagree on input dimension")
    return EnsembleModel(members=nets, alphas=tuple(float(a) for a in alphas))
