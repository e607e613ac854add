"""Human-readable curve literals and model code.

Curves render as

    PWLCurve("age", [(18, 3.13), (21, 0.5914), (46, -0.7206)], fx="log")
    EnumCurve("c_charge_degree", {1: 0.0198, 2: -0.0384})

and a model as a `score = sum([...])` block of such literals, with a trailing
number for a non-zero bias.
"""

import ast
import decimal
import json
import math
from typing import Any, List, Union

from curvedistill.curves import (Curve, CurveModel, EnumCurve, PWLCurve,
                                 Transform)
from curvedistill.errors import CurveSyntaxError, InvalidCurveError

DEFAULT_SIG_DIGITS = 4
MAX_SIG_DIGITS = 17


def round_sig(value: float, sig_digits: int = DEFAULT_SIG_DIGITS) -> decimal.Decimal:
    """Rounds value to sig_digits significant digits, ties to even."""
    if sig_digits < 1:
        raise ValueError('sig_digits must be positive')
    d = decimal.Decimal(float(value))
    if d.is_zero():
        return d
    quantum = decimal.Decimal(1).scaleb(d.adjusted() - sig_digits + 1)
    with decimal.localcontext() as ctx:
        ctx.prec = max(sig_digits + 2, 40)
        return d.quantize(quantum, rounding=decimal.ROUND_HALF_EVEN)


def format_number(value: float, sig_digits: int = DEFAULT_SIG_DIGITS) -> str:
    """Shortest plain rendering of value at sig_digits significant digits.

    Integers have no decimal point; very large or small magnitudes use
    exponent notation.
    """
    if not math.isfinite(value):
        raise ValueError(f'cannot render non-finite value {value!r}')
    d = round_sig(value, sig_digits).normalize()
    if d.is_zero():
        return '-0' if d.is_signed() else '0'
    exponent = d.adjusted()
    if -7 <= exponent < 21:
        return format(d, 'f')
    return format(d, 'e').replace('E', 'e')


def _quote(text: str) -> str:
    # Non-ASCII stays literal; escaped astral characters would not survive
    # a round trip through Python's parser as surrogate pairs.
    return json.dumps(text, ensure_ascii=False)


def _format_key(key: Any) -> str:
    if isinstance(key, str):
        return _quote(key)
    if isinstance(key, int):
        return str(key)
    return repr(float(key))


def _distinct_xs(xs, sig_digits: int) -> List[str]:
    """Renders knot x-values, adding digits until they stay strictly increasing."""
    for digits in range(sig_digits, MAX_SIG_DIGITS + 1):
        rendered = [format_number(x, digits) for x in xs]
        values = [float(r) for r in rendered]
        if all(a < b for a, b in zip(values, values[1:])):
            return rendered
    return [format_number(x, MAX_SIG_DIGITS) for x in xs]


def emit_curve_literal(curve: Curve, sig_digits: int = DEFAULT_SIG_DIGITS) -> str:
    """Renders a curve as a one-line literal.

    Knot coordinates and enum values are rounded to sig_digits significant
    digits. Knot x-values get extra digits only when rounding would make two
    knots collide. Enum keys are written exactly, in sorted order.
    """
    name = _quote(curve.name)
    if isinstance(curve, PWLCurve):
        xs = _distinct_xs(curve.xs, sig_digits)
        ys = [format_number(y, sig_digits) for y in curve.ys]
        pairs = ', '.join(f'({x}, {y})' for x, y in zip(xs, ys))
        fx = '' if curve.fx is Transform.IDENTITY else f', fx="{curve.fx.value}"'
        return f'PWLCurve({name}, [{pairs}]{fx})'
    items = ', '.join(f'{_format_key(k)}: {format_number(v, sig_digits)}'
                      for k, v in curve.mapping.items())
    default = '' if curve.default == 0 else f', default={format_number(curve.default, sig_digits)}'
    return f'EnumCurve({name}, {{{items}}}{default})'


def emit_model_code(model: CurveModel, sig_digits: int = DEFAULT_SIG_DIGITS) -> str:
    lines = ['score = sum([']
    lines += [f'  {emit_curve_literal(c, sig_digits)},' for c in model.components]
    if model.bias != 0:
        lines.append(f'  {format_number(model.bias, sig_digits)},')
    lines.append('])')
    return '\n'.join(lines) + '\n'


def _fail(message: str, node: ast.AST):
    raise CurveSyntaxError(message, getattr(node, 'lineno', 1),
                           getattr(node, 'col_offset', 0) + 1)


def _literal(node: ast.AST, what: str) -> Any:
    try:
        return ast.literal_eval(node)
    except (ValueError, TypeError, SyntaxError):
        _fail(f'expected {what}', node)


def _number(value: Any, node: ast.AST) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail('expected a number', node)
    return float(value)


def _pwl_from_call(call: ast.Call) -> PWLCurve:
    if len(call.args) != 2:
        _fail('PWLCurve takes a name and a list of points', call)
    name = _literal(call.args[0], 'a string name')
    if not isinstance(name, str):
        _fail('expected a string name', call.args[0])
    points_node = call.args[1]
    if not isinstance(points_node, (ast.List, ast.Tuple)):
        _fail('expected a list of (x, y) points', points_node)
    points = []
    for elt in points_node.elts:
        if not isinstance(elt, ast.Tuple) or len(elt.elts) != 2:
            _fail('expected an (x, y) pair', elt)
        x, y = _literal(elt, 'an (x, y) pair of numbers')
        points.append((_number(x, elt), _number(y, elt)))
    fx = Transform.IDENTITY
    for kw in call.keywords:
        if kw.arg != 'fx':
            _fail(f'unexpected argument {kw.arg!r}', kw.value)
        value = _literal(kw.value, 'a transform name')
        try:
            fx = Transform(value)
        except ValueError:
            raise InvalidCurveError(f'unknown fx {value!r}') from None
    xs = [p[0] for p in points]
    if len(set(xs)) != len(xs):
        raise InvalidCurveError(f'duplicate x-knots in PWLCurve {name!r}')
    return PWLCurve(tuple(points), fx, name)


def _enum_from_call(call: ast.Call) -> EnumCurve:
    if len(call.args) != 2:
        _fail('EnumCurve takes a name and a mapping', call)
    name = _literal(call.args[0], 'a string name')
    if not isinstance(name, str):
        _fail('expected a string name', call.args[0])
    mapping_node = call.args[1]
    if not isinstance(mapping_node, ast.Dict):
        _fail('expected a {key: value} mapping', mapping_node)
    mapping = _literal(mapping_node, 'a {key: value} mapping of literals')
    if len(mapping) != len(mapping_node.keys):
        raise InvalidCurveError(f'duplicate keys in EnumCurve {name!r}')
    for value_node, value in zip(mapping_node.values, mapping.values()):
        _number(value, value_node)
    default = 0.0
    for kw in call.keywords:
        if kw.arg != 'default':
            _fail(f'unexpected argument {kw.arg!r}', kw.value)
        default = _number(_literal(kw.value, 'a number'), kw.value)
    return EnumCurve(name, mapping, default)


def _curve_from_node(node: ast.AST) -> Curve:
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        _fail('expected PWLCurve(...) or EnumCurve(...)', node)
    if node.func.id == 'PWLCurve':
        return _pwl_from_call(node)
    if node.func.id == 'EnumCurve':
        return _enum_from_call(node)
    _fail(f'unknown curve type {node.func.id!r}', node.func)


def _parse(text: str, mode: str) -> ast.AST:
    try:
        return ast.parse(text.strip(), mode=mode)
    except SyntaxError as e:
        raise CurveSyntaxError(e.msg, e.lineno or 1, e.offset or 1) from None


def parse_curve_literal(text: str) -> Curve:
    """Parses a single PWLCurve(...) or EnumCurve(...) literal.

    Raises:
      CurveSyntaxError: text is not a well-formed literal.
      InvalidCurveError: duplicate knots or keys, or an unknown fx.
    """
    return _curve_from_node(_parse(text, 'eval').body)


def parse_model_code(text: str) -> CurveModel:
    """Parses model code as written by emit_model_code.

    Accepts `score = sum([...])`, `sum([...])` or a bare list; numeric entries
    add to the bias. Comments are ignored.
    """
    tree = _parse(text, 'exec')
    if len(tree.body) != 1:
        _fail('expected a single model expression', tree.body[1] if tree.body else tree)
    stmt = tree.body[0]
    node: Union[ast.AST, None] = getattr(stmt, 'value', None)
    if node is None:
        _fail('expected a model expression', stmt)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == 'sum':
        if len(node.args) != 1:
            _fail('sum takes one list', node)
        node = node.args[0]
    if not isinstance(node, (ast.List, ast.Tuple)):
        _fail('expected a list of curves', node)
    curves, bias = [], 0.0
    for elt in node.elts:
        if isinstance(elt, ast.Call):
            curves.append(_curve_from_node(elt))
        else:
            bias += _number(_literal(elt, 'a curve or number'), elt)
    return CurveModel(tuple(curves), bias)
