"""Scoring of effect estimates against empirical paired effects.

The empirical effect of an edit pair is the difference of the two
black-box outputs in whatever space the dataset was loaded in; estimates
carry a space tag and mixing spaces is refused. Errors are grouped by
(attribute, from, to), averaged within groups, then macro-averaged
across groups.

Distance conventions (vectors a, b):
    l2      ||a - b||
    cosine  1 - a.b / (||a|| ||b||); 0 if both are zero, 1 if exactly one is
    norm    | ||a|| - ||b|| |
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .data import ConceptSchema, Dataset, EditPair
from .errors import ValidationError
from .linalg import as_matrix


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValidationError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def _check_pair_of_vectors(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    if a.size != b.size:
        raise ValidationError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def dist_l2(a, b) -> float:
    a, b = _check_pair_of_vectors(a, b)
    return float(np.linalg.norm(a - b))


def dist_cosine(a, b) -> float:
    a, b = _check_pair_of_vectors(a, b)
    if np.array_equal(a, b):
        return 0.0
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 0.0
    if na == 0.0 or nb == 0.0:
        return 1.0
    return float(1.0 - float(np.dot(a, b)) / (na * nb))


def dist_norm(a, b) -> float:
    a, b = _check_pair_of_vectors(a, b)
    return float(abs(np.linalg.norm(a) - np.linalg.norm(b)))


DISTANCES = {"l2": dist_l2, "cosine": dist_cosine, "norm": dist_norm}
METRICS = tuple(DISTANCES)


def get_distance(metric: str):
    try:
        return DISTANCES[metric]
    except KeyError:
        raise ValidationError(f"unknown metric {metric!r}, expected one of {METRICS}") from None


def icace(pair: EditPair, dataset: Dataset) -> np.ndarray:
    """Empirical paired effect: edited output minus original output."""
    edited = dataset.by_id(pair.edited_id)
    original = dataset.by_id(pair.original_id)
    return edited.blackbox_output - original.blackbox_output


@dataclass(frozen=True)
class EvalGroup:
    attribute: str
    from_level: str
    to_level: str
    metric: str
    mean: float
    std: float
    count: int


@dataclass(eq=False)
class EvalReport:
    """Per-group rows plus the macro average across groups.

    `macro_std` is the population std of the group means. CSV columns, in
    order: attribute, from, to, metric, mean, std, count.
    """

    groups: tuple[EvalGroup, ...]
    macro_mean: float
    macro_std: float
    metadata: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "metadata": self.metadata,
            "groups": [
                {
                    "attribute": g.attribute,
                    "from": g.from_level,
                    "to": g.to_level,
                    "metric": g.metric,
                    "mean": g.mean,
                    "std": g.std,
                    "count": g.count,
                }
                for g in self.groups
            ],
            "macro_mean": self.macro_mean,
            "macro_std": self.macro_std,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["attribute", "from", "to", "metric", "mean", "std", "count"])
        for g in self.groups:
            writer.writerow(
                [g.attribute, g.from_level, g.to_level, g.metric, repr(g.mean), repr(g.std), g.count]
            )
        return buf.getvalue()


def icace_error(effects, pairs, dataset: Dataset, metric: str, metadata=None) -> EvalReport:
    """Grouped distance between empirical paired effects and estimates.

    Every pair must have an estimate with the same (sample, attribute,
    from, to) key and the dataset's space; duplicate-keyed pairs may share
    one estimate.
    """
    dist = get_distance(metric)
    lookup = {}
    for est in effects:
        if est.space != dataset.space:
            raise ValidationError(
                f"mixed-space comparison refused: estimate for {est.sample_id!r} is in "
                f"{est.space!r} space, dataset is in {dataset.space!r} space"
            )
        key = (est.sample_id, est.attribute, est.from_level, est.to_level)
        if key in lookup:
            raise ValidationError(f"duplicate effect estimate for {key!r}")
        lookup[key] = est

    grouped: dict[tuple[str, str, str], list[float]] = {}
    for pair in pairs:
        key = (pair.original_id, pair.attribute, pair.from_level, pair.to_level)
        est = lookup.get(key)
        if est is None:
            raise ValidationError(f"no effect estimate for pair {key!r}")
        value = dist(icace(pair, dataset), est.effect)
        grouped.setdefault((pair.attribute, pair.from_level, pair.to_level), []).append(value)

    rows = []
    for gkey in sorted(grouped):
        values = np.asarray(grouped[gkey], dtype=np.float64)
        rows.append(
            EvalGroup(
                attribute=gkey[0],
                from_level=gkey[1],
                to_level=gkey[2],
                metric=metric,
                mean=float(values.mean()),
                std=float(values.std()),
                count=int(values.size),
            )
        )
    if rows:
        means = np.asarray([g.mean for g in rows])
        macro_mean, macro_std = float(means.mean()), float(means.std())
    else:
        macro_mean = macro_std = 0.0

    meta = dict(metadata or {})
    meta.setdefault("space", dataset.space)
    meta["metric"] = metric
    meta["pairs_evaluated"] = int(sum(g.count for g in rows))
    return EvalReport(groups=tuple(rows), macro_mean=macro_mean, macro_std=macro_std, metadata=meta)


def coefficient_error(
    estimated,
    reference,
    schema: ConceptSchema,
    hidden=frozenset(),
    metric: str = "l2",
) -> float:
    """Total distance between estimated and reference effect contrasts.

    Compares within-attribute-block coefficient differences (level minus
    level, a class-sized vector per ordered level pair) rather than raw
    coefficients, since raw one-hot coefficients are only identified up to
    a per-block constant. Both matrices use the visible layout.
    """
    dist = get_distance(metric)
    hidden = schema.check_hidden(hidden)
    est = as_matrix(estimated, "estimated")
    ref = as_matrix(reference, "reference")
    width = schema.visible_width(hidden)
    if est.shape != ref.shape:
        raise ValidationError(f"shape mismatch: {est.shape} vs {ref.shape}")
    if est.shape[0] != width:
        raise ValidationError(
            f"coefficient matrices must have {width} rows for this schema/mask, "
            f"got {est.shape[0]}"
        )
    total = 0.0
    for name, block in schema.visible_blocks(hidden).items():
        n_levels = block.stop - block.start
        for i in range(n_levels):
            for k in range(n_levels):
                if i == k:
                    continue
                total += dist(
                    ref[block.start + k] - ref[block.start + i],
                    est[block.start + k] - est[block.start + i],
                )
    return float(total)


def macro_f1(predicted, gold, n_classes: int) -> float:
    """Macro-averaged F1 over all `n_classes` classes.

    A class with no predicted and no actual positives contributes F1 = 0.
    """
    pred = np.asarray(predicted, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if pred.ndim != 1 or gold.ndim != 1 or pred.size != gold.size:
        raise ValidationError("predicted and gold must be 1-D arrays of equal length")
    if pred.size == 0:
        raise ValidationError("cannot score an empty label array")
    if not isinstance(n_classes, (int, np.integer)) or n_classes < 1:
        raise ValidationError(f"n_classes must be a positive integer, got {n_classes!r}")
    for name, arr in (("predicted", pred), ("gold", gold)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValidationError(f"{name} labels out of range [0, {n_classes})")
    scores = []
    for c in range(int(n_classes)):
        tp = int(np.sum((pred == c) & (gold == c)))
        fp = int(np.sum((pred == c) & (gold != c)))
        fn = int(np.sum((pred != c) & (gold == c)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return float(np.mean(scores))
