"""Incremental-annotation simulation with the classifiers c, c' and c''.

Given an ordered pool of ground-truth training sessions, the first n are
treated as manually labeled (subset L) and the rest as unlabeled (subset U):

* c   trains on L's true labels,
* c'  predicts U with c and retrains on L + predicted labels,
* c'' additionally substitutes the true label wherever the prediction's
      confidence falls below the threshold t (a simulated human correction)
      before retraining.

The Inspection Rate is the fraction of U frames below the threshold, the
Correction Rate the fraction of U frames whose label actually changed.
All three classifiers are evaluated frame-wise on a held-out test set.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .engine import SessionBundle, truth_frames
from .errors import InvalidRange, SingleClass
from .learner import (
    DEFAULT_SEED,
    LabeledFrameSet,
    LearnerConfig,
    LinearModel,
    predict_proba,
    train_linear,
)
from .metrics import confusion_and_recall, roc_auc_ovr


@dataclass(frozen=True)
class SimulationConfig:
    labeled_count: int
    threshold: float
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidRange(f"threshold {self.threshold} outside [0, 1]")


@dataclass(frozen=True)
class SimulationCell:
    """Results of one (n, t) grid point; rates are None when U is empty."""

    n: int
    t: float
    ua_c: float
    ua_c_prime: float
    ua_c_dprime: float
    inspection_rate: float | None
    correction_rate: float | None
    recalls: dict
    aucs: dict

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimulationReport:
    cells: tuple[SimulationCell, ...]
    n_values: tuple[int, ...]
    t_values: tuple[float, ...]
    seed: int

    def cell(self, n: int, t: float) -> SimulationCell:
        for c in self.cells:
            if c.n == n and c.t == t:
                return c
        raise KeyError((n, t))

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "n_values": list(self.n_values),
            "t_values": list(self.t_values),
            "cells": [c.to_json() for c in self.cells],
        }

    def format_table(self) -> str:
        """Aligned text table, one row per n, classifier groups as columns."""
        def pct(x):
            return f"{100 * x:5.1f}" if x is not None else "    -"

        head = "  n   c:UA%  c':UA%"
        for t in self.t_values:
            head += f"  | c''(t={t:.2f}):UA%   IR%   CR%"
        lines = [head, "-" * len(head)]
        for n in self.n_values:
            base = self.cell(n, self.t_values[0])
            row = f"{n:3d}   {pct(base.ua_c)}  {pct(base.ua_c_prime)}"
            for t in self.t_values:
                c = self.cell(n, t)
                row += (f"  |          {pct(c.ua_c_dprime)}"
                        f"  {pct(c.inspection_rate)} {pct(c.correction_rate)}")
            lines.append(row)
        return "\n".join(lines)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


class _Pool:
    """Pre-extracted rows and truth ids, shared across grid cells."""

    def __init__(self, train_bundles, test_bundles):
        if not train_bundles or not test_bundles:
            raise InvalidRange("need non-empty train and test session lists")
        self.scheme = train_bundles[0].annotation.scheme
        self.train_rows = [b.stream.frames for b in train_bundles]
        self.train_truth = [truth_frames(b).class_ids for b in train_bundles]
        self.test_rows = np.vstack([b.stream.frames for b in test_bundles])
        self.test_truth = np.concatenate([truth_frames(b).class_ids for b in test_bundles])

    def frame_set(self, rows_list, labels_list) -> LabeledFrameSet:
        return LabeledFrameSet.from_arrays(
            np.vstack(rows_list), np.concatenate(labels_list), scheme=self.scheme)

    def evaluate(self, model: LinearModel):
        probs = predict_proba(model, self.test_rows)
        pred = np.asarray(model.class_ids, dtype=np.int64)[probs.argmax(axis=1)]
        class_ids = tuple(self.scheme.class_ids) + (self.scheme.rest_class_id,)
        _, recalls, ua = confusion_and_recall(self.test_truth, pred, class_ids=class_ids)
        try:
            per_class_auc, _ = roc_auc_ovr(self.test_truth, probs, model.class_ids)
        except SingleClass:
            per_class_auc = {cid: None for cid in model.class_ids}
        return ua, recalls, per_class_auc


def _run_n(pool: _Pool, n: int, t_values, learner: LearnerConfig) -> list[SimulationCell]:
    """All cells for one n; c and c' are shared across thresholds."""
    labeled_rows = pool.train_rows[:n]
    labeled_truth = pool.train_truth[:n]
    open_rows = pool.train_rows[n:]
    open_truth = pool.train_truth[n:]

    c = train_linear(pool.frame_set(labeled_rows, labeled_truth), learner)
    ua_c, recalls_c, aucs_c = pool.evaluate(c)

    if not open_rows:
        cells = []
        for t in t_values:
            cells.append(SimulationCell(
                n=n, t=t, ua_c=ua_c, ua_c_prime=ua_c, ua_c_dprime=ua_c,
                inspection_rate=None, correction_rate=None,
                recalls={"c": recalls_c, "c_prime": recalls_c, "c_dprime": recalls_c},
                aucs={"c": aucs_c, "c_prime": aucs_c, "c_dprime": aucs_c},
            ))
        return cells

    stacked_open = np.vstack(open_rows)
    probs = predict_proba(c, stacked_open)
    predicted = np.asarray(c.class_ids, dtype=np.int64)[probs.argmax(axis=1)]
    max_prob = probs.max(axis=1)
    truth_open = np.concatenate(open_truth)

    c_prime = train_linear(
        pool.frame_set(labeled_rows + open_rows, labeled_truth + [predicted]), learner)
    ua_cp, recalls_cp, aucs_cp = pool.evaluate(c_prime)

    cells = []
    for t in t_values:
        inspected = max_prob < t
        corrected = np.where(inspected, truth_open, predicted)
        inspection_rate = float(inspected.mean())
        correction_rate = float((inspected & (predicted != truth_open)).mean())
        if np.array_equal(corrected, predicted):
            c_dprime = c_prime  # nothing changed, retraining would be identical
        else:
            c_dprime = train_linear(
                pool.frame_set(labeled_rows + open_rows, labeled_truth + [corrected]), learner)
        ua_cpp, recalls_cpp, aucs_cpp = pool.evaluate(c_dprime)
        cells.append(SimulationCell(
            n=n, t=t, ua_c=ua_c, ua_c_prime=ua_cp, ua_c_dprime=ua_cpp,
            inspection_rate=inspection_rate, correction_rate=correction_rate,
            recalls={"c": recalls_c, "c_prime": recalls_cp, "c_dprime": recalls_cpp},
            aucs={"c": aucs_c, "c_prime": aucs_cp, "c_dprime": aucs_cpp},
        ))
    return cells


def run_simulation(train_bundles: list[SessionBundle], test_bundles: list[SessionBundle],
                   config: SimulationConfig) -> SimulationCell:
    """One (n, t) grid point. See the module docstring for the protocol."""
    if not 1 <= config.labeled_count <= len(train_bundles):
        raise InvalidRange(
            f"labeled_count {config.labeled_count} outside 1..{len(train_bundles)}")
    pool = _Pool(train_bundles, test_bundles)
    learner = replace(config.learner, seed=config.seed)
    return _run_n(pool, config.labeled_count, [config.threshold], learner)[0]


def run_grid(
    train_bundles: list[SessionBundle],
    test_bundles: list[SessionBundle],
    n_values,
    t_values,
    learner: LearnerConfig = LearnerConfig(),
    seed: int = DEFAULT_SEED,
    jobs: int = 1,
) -> SimulationReport:
    """Evaluate the full (n, t) grid; cells for different n may run in parallel."""
    n_values = list(n_values)
    t_values = list(t_values)
    for n in n_values:
        if not 1 <= n <= len(train_bundles):
            raise InvalidRange(f"n={n} outside 1..{len(train_bundles)}")
    for t in t_values:
        if not 0.0 <= t <= 1.0:
            raise InvalidRange(f"t={t} outside [0, 1]")
    pool = _Pool(train_bundles, test_bundles)
    cfg = replace(learner, seed=seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            per_n = list(pool_exec.map(lambda n: _run_n(pool, n, t_values, cfg), n_values))
    else:
        per_n = [_run_n(pool, n, t_values, cfg) for n in n_values]

    cells = tuple(cell for group in per_n for cell in group)
    return SimulationReport(cells=cells, n_values=tuple(n_values),
                            t_values=tuple(t_values), seed=seed)
