"""Curve types, x-transforms, additive curve models and their JSON form."""

import dataclasses
import enum
import json
import math
import types
from typing import Any, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np

from curvedistill.errors import (InvalidCurveError, MissingFeatureError,
                                 TransformDomainError)


class Transform(str, enum.Enum):
    """Strictly increasing x-transforms applied before interpolation."""

    IDENTITY = 'identity'
    LOG = 'log'
    LOG1P = 'log1p'
    SYMLOG1P = 'symlog1p'

    def __call__(self, x):
        return apply_transform(self, x)

    def admits(self, x) -> bool:
        """Returns True if every value of x lies in this transform's domain."""
        x = np.asarray(x, dtype=float)
        if self is Transform.LOG:
            return bool(np.all(x > 0))
        if self is Transform.LOG1P:
            return bool(np.all(x > -1))
        return True

    @classmethod
    def parse(cls, value: Union[str, 'Transform']) -> 'Transform':
        try:
            return cls(value)
        except ValueError:
            raise InvalidCurveError(f'unknown transform {value!r}') from None


def apply_transform(fx: Transform, x):
    """Applies fx to a scalar or array.

    Raises:
      TransformDomainError: some x is outside the domain of fx.
    """
    fx = Transform(fx)
    scalar = np.ndim(x) == 0
    arr = np.asarray(x, dtype=float)
    if not fx.admits(arr):
        raise TransformDomainError(f'{fx.value} is undefined for some of the given x-values')
    if fx is Transform.IDENTITY:
        out = arr
    elif fx is Transform.LOG:
        out = np.log(arr)
    elif fx is Transform.LOG1P:
        out = np.log1p(arr)
    else:
        out = np.sign(arr) * np.log1p(np.abs(arr))
    return float(out) if scalar else out


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True)
class PWLCurve:
    """Piecewise-linear curve through ordered control points.

    Outside [x_1, x_K] the curve is flat. Interpolation between control points
    happens in fx-transformed x-space.
    """

    points: Tuple[Tuple[float, float], ...]
    fx: Transform = Transform.IDENTITY
    name: str = ''

    def __post_init__(self):
        points = tuple((float(x), float(y)) for x, y in self.points)
        if len(points) < 2:
            raise InvalidCurveError('a PWLCurve needs at least 2 control points')
        xs = _readonly([p[0] for p in points])
        ys = _readonly([p[1] for p in points])
        if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
            raise InvalidCurveError('control points must be finite')
        if np.any(np.diff(xs) <= 0):
            raise InvalidCurveError('control point x-values must be strictly increasing')
        fx = Transform.parse(self.fx)
        if not fx.admits(xs):
            raise InvalidCurveError(f'control point x-values lie outside the domain of {fx.value}')
        txs = _readonly(apply_transform(fx, xs))
        if np.any(np.diff(txs) <= 0):
            raise InvalidCurveError('control points collapse under the x-transform')
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'fx', fx)
        object.__setattr__(self, '_xs', xs)
        object.__setattr__(self, '_ys', ys)
        object.__setattr__(self, '_txs', txs)

    @classmethod
    def from_knots(cls, xs: Sequence[float], ys: Sequence[float],
                   fx: Transform = Transform.IDENTITY, name: str = '') -> 'PWLCurve':
        return cls(tuple(zip(xs, ys)), fx, name)

    @property
    def xs(self) -> np.ndarray:
        return self._xs

    @property
    def ys(self) -> np.ndarray:
        return self._ys

    @property
    def num_segments(self) -> int:
        return len(self.points) - 1

    def __call__(self, x):
        return eval_pwl(self, x)


def eval_pwl(curve: PWLCurve, x):
    """Evaluates curve at a scalar or array of x-values.

    x is clamped to the knot range before transforming, so values outside the
    transform's domain are fine as long as they are beyond the knots.
    """
    scalar = np.ndim(x) == 0
    arr = np.asarray(x, dtype=float)
    if not np.isfinite(arr).all():
        raise ValueError('x must be finite')
    clamped = np.clip(arr, curve._xs[0], curve._xs[-1])
    out = np.interp(apply_transform(curve.fx, clamped), curve._txs, curve._ys)
    return float(out) if scalar else out


def normalize_key(key: Any) -> Any:
    """Canonical form of a category key: integral numbers become ints."""
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key)
    if isinstance(key, (float, np.floating)):
        key = float(key)
        if math.isfinite(key) and key.is_integer():
            return int(key)
        return key
    return key


def _key_order(key):
    return (isinstance(key, str), key)


@dataclasses.dataclass(frozen=True)
class EnumCurve:
    """Discrete key to value mapping for a categorical feature."""

    name: str
    mapping: Mapping[Any, float]
    default: float = 0.0

    def __post_init__(self):
        items = {}
        for key, value in dict(self.mapping).items():
            key = normalize_key(key)
            if key in items:
                raise InvalidCurveError(f'duplicate key {key!r} in EnumCurve {self.name!r}')
            value = float(value)
            if not math.isfinite(value):
                raise InvalidCurveError(f'non-finite value for key {key!r}')
            items[key] = value
        default = float(self.default)
        if not math.isfinite(default):
            raise InvalidCurveError('EnumCurve default must be finite')
        ordered = dict(sorted(items.items(), key=lambda kv: _key_order(kv[0])))
        object.__setattr__(self, 'mapping', types.MappingProxyType(ordered))
        object.__setattr__(self, 'default', default)

    def __call__(self, key):
        if np.ndim(key) == 0:
            return eval_enum(self, key)
        return np.array([eval_enum(self, k) for k in key], dtype=float)


def eval_enum(curve: EnumCurve, key) -> float:
    """Looks up key, falling back to the curve default for unseen keys."""
    try:
        return curve.mapping.get(normalize_key(key), curve.default)
    except TypeError:  # unhashable key
        return curve.default


Curve = Union[PWLCurve, EnumCurve]


@dataclasses.dataclass(frozen=True)
class CurveModel:
    """Additive model: bias plus one curve per named feature."""

    components: Tuple[Curve, ...] = ()
    bias: float = 0.0

    def __post_init__(self):
        components = tuple(self.components)
        seen = set()
        for curve in components:
            if not isinstance(curve, (PWLCurve, EnumCurve)):
                raise InvalidCurveError(f'unsupported component {curve!r}')
            if curve.name in seen:
                raise InvalidCurveError(f'duplicate feature name {curve.name!r}')
            seen.add(curve.name)
        object.__setattr__(self, 'components', components)
        object.__setattr__(self, 'bias', float(self.bias))

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self.components)

    def __getitem__(self, name: str) -> Curve:
        for curve in self.components:
            if curve.name == name:
                return curve
        raise KeyError(name)

    def __call__(self, features: Mapping[str, Any]) -> float:
        return eval_model(self, features)

    def evaluate_columns(self, columns: Mapping[str, Sequence[Any]]) -> np.ndarray:
        """Scores many examples at once from per-feature columns."""
        _check_features(self, columns)
        sizes = {len(columns[c.name]) for c in self.components}
        if len(sizes) > 1:
            raise ValueError('feature columns differ in length')
        n = sizes.pop() if sizes else 0
        total = np.full(n, self.bias)
        for curve in self.components:
            values = columns[curve.name]
            if isinstance(curve, PWLCurve):
                total = total + eval_pwl(curve, np.asarray(values, dtype=float))
            else:
                total = total + curve(list(values))
        return total


def _check_features(model: CurveModel, features: Mapping[str, Any]) -> None:
    missing = [c.name for c in model.components if c.name not in features]
    if missing:
        raise MissingFeatureError(missing)


def eval_model(model: CurveModel, features: Mapping[str, Any]) -> float:
    """Returns bias + sum of component evaluations for one example."""
    _check_features(model, features)
    total = model.bias
    for curve in model.components:
        value = features[curve.name]
        if isinstance(curve, PWLCurve):
            total += eval_pwl(curve, float(value))
        else:
            total += eval_enum(curve, value)
    return total


# JSON persistence.

def curve_to_dict(curve: Curve) -> dict:
    if isinstance(curve, PWLCurve):
        return {
            'name': curve.name,
            'type': 'pwl',
            'points': [[x, y] for x, y in curve.points],
            'fx': curve.fx.value,
        }
    return {
        'name': curve.name,
        'type': 'enum',
        'mapping': [[k, v] for k, v in curve.mapping.items()],
        'default': curve.default,
    }


def curve_from_dict(data: Mapping[str, Any]) -> Curve:
    kind = data.get('type')
    if kind == 'pwl':
        return PWLCurve(tuple(tuple(p) for p in data['points']),
                        Transform.parse(data.get('fx', 'identity')),
                        data['name'])
    if kind == 'enum':
        mapping = data['mapping']
        if isinstance(mapping, Mapping):
            pairs = list(mapping.items())
        else:
            pairs = [tuple(p) for p in mapping]
        keys = [normalize_key(k) for k, _ in pairs]
        if len(set(keys)) != len(keys):
            raise InvalidCurveError(f'duplicate keys in EnumCurve {data["name"]!r}')
        return EnumCurve(data['name'], dict(zip(keys, (v for _, v in pairs))),
                         data.get('default', 0.0))
    raise InvalidCurveError(f'unknown component type {kind!r}')


def model_to_dict(model: CurveModel) -> dict:
    return {'bias': model.bias,
            'components': [curve_to_dict(c) for c in model.components]}


def model_from_dict(data: Mapping[str, Any]) -> CurveModel:
    return CurveModel(tuple(curve_from_dict(c) for c in data.get('components', ())),
                      data.get('bias', 0.0))


def dumps_model(model: CurveModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + '\n'


def loads_model(text: str) -> CurveModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidCurveError(f'model JSON is malformed: {e}') from None
    try:
        return model_from_dict(data)
    except (KeyError, TypeError) as e:
        raise InvalidCurveError(f'model JSON is missing or has bad field: {e}') from None


def concat_models(models: Iterable[CurveModel]) -> CurveModel:
    """Joins feature-disjoint models. The bias is shared, taken from the first."""
    models = list(models)
    return CurveModel(tuple(c for m in models for c in m.components),
                      models[0].bias if models else 0.0)


def constant_curve(value: float, xs: Sequence[float], fx: Transform = Transform.IDENTITY,
                   name: str = '') -> PWLCurve:
    """A flat two-knot curve spanning xs[0]..xs[-1]."""
    return PWLCurve(((xs[0], value), (xs[-1], value)), fx, name)
