"""Localized distillation of additive teacher models into curve models.

Each teacher sub-function is approximated on its own, from (x, y, weight)
samples of that sub-function: numerical features become PWLCurves, categorical
features become EnumCurves mapping each category to its mean output.
"""

import concurrent.futures
import dataclasses
import hashlib
import json
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from curvedistill.condense import PointSet
from curvedistill.curves import (CurveModel, EnumCurve, PWLCurve, eval_pwl,
                                 normalize_key)
from curvedistill.errors import (CurveError, DistillationError,
                                 InsufficientDataError, MissingFeatureError)
from curvedistill.fitter import FitConfig, fit_pwl

NUMERICAL = 'numerical'
CATEGORICAL = 'categorical'
TEACHER_PREFIX = 'teacher:'


@dataclasses.dataclass(frozen=True)
class FeatureSamples:
    """Samples (x, y, weight) of one teacher sub-function.

    For categorical features x holds category keys of any hashable type.
    """

    name: str
    kind: str
    x: Tuple[Any, ...]
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if self.kind not in (NUMERICAL, CATEGORICAL):
            raise CurveError(f'feature {self.name!r}: unknown kind {self.kind!r}')
        y = np.asarray(self.y, dtype=float)
        w = np.ones_like(y) if self.w is None else np.asarray(self.w, dtype=float)
        x = tuple(self.x)
        if not (len(x) == len(y) == len(w)):
            raise CurveError(f'feature {self.name!r}: x, y and weight lengths differ')
        if not (np.isfinite(y).all() and np.isfinite(w).all()) or (len(w) and w.min() <= 0):
            raise CurveError(f'feature {self.name!r}: outputs must be finite and weights positive')
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'w', w)

    def points(self) -> PointSet:
        try:
            x = np.asarray(self.x, dtype=float)
        except (TypeError, ValueError):
            raise CurveError(f'feature {self.name!r}: numerical samples need numeric x') from None
        return PointSet(x, self.y, self.w)


@dataclasses.dataclass(frozen=True)
class TeacherSampleTable:
    features: Tuple[FeatureSamples, ...] = ()

    def __post_init__(self):
        features = tuple(self.features)
        names = [f.name for f in features]
        if len(set(names)) != len(names):
            raise CurveError('feature names must be unique')
        object.__setattr__(self, 'features', features)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'TeacherSampleTable':
        features = []
        for entry in data.get('features', ()):
            name = entry['name']
            rows = entry.get('samples', [])
            for row in rows:
                if len(row) not in (2, 3):
                    raise CurveError(f'feature {name!r}: samples must be [x, y] or [x, y, weight]')
            x = [row[0] for row in rows]
            y = [row[1] for row in rows]
            w = [row[2] if len(row) == 3 else 1.0 for row in rows]
            features.append(FeatureSamples(name, entry.get('kind', NUMERICAL), x, y, w))
        return cls(tuple(features))

    def to_dict(self) -> dict:
        return {'features': [
            {'name': f.name, 'kind': f.kind,
             'samples': [[x, float(y), float(w)] for x, y, w in zip(f.x, f.y, f.w)]}
            for f in self.features]}

    @classmethod
    def loads(cls, text: str) -> 'TeacherSampleTable':
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise CurveError(f'teacher table is not valid JSON: {e}') from None
        except (KeyError, TypeError) as e:
            raise CurveError(f'teacher table is malformed: {e}') from None


def feature_seed(seed: int, name: str) -> int:
    """Deterministic per-feature seed, independent of feature order."""
    digest = hashlib.sha256(f'{seed}:{name}'.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


def distill_numeric_feature(samples: PointSet, config: FitConfig = FitConfig(),
                            name: str = '') -> PWLCurve:
    """Approximates one numerical sub-function with a PWLCurve."""
    return fit_pwl(samples, config, name)


def distill_categorical_feature(keys: Sequence[Any], y: Sequence[float],
                                w: Optional[Sequence[float]] = None,
                                name: str = '') -> EnumCurve:
    """Maps each category to the weighted mean output over its samples.

    Unseen categories fall back to the overall weighted mean.
    """
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if len(y) == 0:
        raise InsufficientDataError(f'no samples for categorical feature {name!r}')
    sums: Dict[Any, float] = {}
    weights: Dict[Any, float] = {}
    for key, yi, wi in zip(keys, y.tolist(), w.tolist()):
        key = normalize_key(key)
        sums[key] = sums.get(key, 0.0) + wi * yi
        weights[key] = weights.get(key, 0.0) + wi
    mapping = {k: sums[k] / weights[k] for k in sums}
    default = float(np.dot(w, y) / w.sum())
    return EnumCurve(name, mapping, default)


def _distill_one(feature: FeatureSamples, config: FitConfig):
    if feature.kind == CATEGORICAL:
        return distill_categorical_feature(feature.x, feature.y, feature.w, feature.name)
    config = dataclasses.replace(config, seed=feature_seed(config.seed, feature.name))
    return distill_numeric_feature(feature.points(), config, feature.name)


def distill_model(teacher: TeacherSampleTable, config: FitConfig = FitConfig(),
                  max_workers: Optional[int] = None) -> CurveModel:
    """Distills every feature of a flat additive teacher independently.

    Features may be fitted in parallel (max_workers > 1); the result does not
    depend on it. Components keep the table's feature order and the bias is 0.

    Raises:
      DistillationError: one or more features failed; lists each failure.
    """
    results: List[Any] = [None] * len(teacher.features)
    failures: Dict[str, Exception] = {}

    def run(i):
        try:
            results[i] = _distill_one(teacher.features[i], config)
        except CurveError as e:
            failures[teacher.features[i].name] = e

    if max_workers and max_workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers) as pool:
            list(pool.map(run, range(len(teacher.features))))
    else:
        for i in range(len(teacher.features)):
            run(i)
    if failures:
        ordered = {n: failures[n] for n in teacher.names if n in failures}
        raise DistillationError(ordered)
    return CurveModel(tuple(results), 0.0)


@dataclasses.dataclass(frozen=True)
class EvalSet:
    """Evaluation examples: feature values and per-feature teacher outputs."""

    values: Mapping[str, Sequence[Any]]
    teacher_outputs: Mapping[str, np.ndarray]

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[Any]]) -> 'EvalSet':
        """Splits columns into values ('name') and outputs ('teacher:name')."""
        values, outputs = {}, {}
        for key, column in columns.items():
            if key.startswith(TEACHER_PREFIX):
                outputs[key[len(TEACHER_PREFIX):]] = np.asarray(column, dtype=float)
            else:
                values[key] = list(column)
        return cls(values, outputs)

    @classmethod
    def from_teacher(cls, teacher: TeacherSampleTable) -> 'EvalSet':
        """Uses each feature's own samples as its evaluation data."""
        return cls({f.name: list(f.x) for f in teacher.features},
                   {f.name: f.y for f in teacher.features})


@dataclasses.dataclass(frozen=True)
class AttributionReport:
    """Per-feature metric deltas, worst first."""

    rows: Tuple[Tuple[str, float], ...]

    def to_csv(self) -> str:
        lines = ['feature,delta']
        lines += [f'{name},{delta!r}' for name, delta in self.rows]
        return '\n'.join(lines) + '\n'


def _curve_values(curve, values) -> np.ndarray:
    if isinstance(curve, PWLCurve):
        return eval_pwl(curve, np.asarray(values, dtype=float))
    return curve(list(values))


def attribute_failures(teacher: TeacherSampleTable, eval_set: Optional[EvalSet] = None,
                       config: FitConfig = FitConfig(),
                       model: Optional[CurveModel] = None) -> AttributionReport:
    """Ranks features by the damage done by distilling only that feature.

    For feature i the hybrid model is the teacher with sub-function i replaced
    by its curve, so the hybrid minus teacher output is curve_i(x) - f_i(x). The
    delta is the mean of its square over the evaluation examples.

    Args:
      teacher: per-feature teacher samples, used for distillation.
      eval_set: evaluation data; defaults to the teacher samples themselves.
      config: fitting options, used when model is None.
      model: an already distilled model to attribute.

    Raises:
      MissingFeatureError: eval_set lacks a feature's values or outputs.
    """
    if eval_set is None:
        eval_set = EvalSet.from_teacher(teacher)
    missing = [f.name for f in teacher.features
               if f.name not in eval_set.values or f.name not in eval_set.teacher_outputs]
    if missing:
        raise MissingFeatureError(missing)
    if model is None:
        model = distill_model(teacher, config)
    rows = []
    for feature in teacher.features:
        outputs = eval_set.teacher_outputs[feature.name]
        if len(outputs) == 0:
            rows.append((feature.name, 0.0))
            continue
        diff = _curve_values(model[feature.name], eval_set.values[feature.name]) - outputs
        rows.append((feature.name, float(np.mean(diff * diff))))
    rows.sort(key=lambda row: -row[1])
    return AttributionReport(tuple(rows))


def hybrid_scores(teacher_total: np.ndarray, eval_set: EvalSet, model: CurveModel,
                  feature: str) -> np.ndarray:
    """Teacher scores with only one sub-function swapped for its curve."""
    curve_out = _curve_values(model[feature], eval_set.values[feature])
    return np.asarray(teacher_total, dtype=float) - eval_set.teacher_outputs[feature] + curve_out


def teacher_totals(eval_set: EvalSet, names: Sequence[str]) -> np.ndarray:
    return np.sum([eval_set.teacher_outputs[n] for n in names], axis=0)


def mse(a, b) -> float:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.mean(d * d)) if len(d) else 0.0

