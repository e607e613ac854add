"""Command-line interface: fit, distill, eval and attribute.

Exit codes: 0 on success, 2 for usage errors, 3 for data errors. Diagnostics
go to standard error.
"""

import argparse
import csv
import io
import json
import logging
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from curvedistill import codegen
from curvedistill.condense import PointSet
from curvedistill.curves import curve_to_dict, dumps_model, loads_model
from curvedistill.distill import (AttributionReport, EvalSet, TeacherSampleTable,
                                  attribute_failures, distill_model)
from curvedistill.errors import CurveError, InvalidConfigError
from curvedistill.fitter import FitConfig, fit_pwl

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

MONO_CHOICES = {'auto': 'auto', 'none': 'none', 'up': 'increasing', 'down': 'decreasing',
                'increasing': 'increasing', 'decreasing': 'decreasing'}
FX_CHOICES = ('auto', 'identity', 'log', 'log1p', 'symlog1p')


class DataError(Exception):
    pass


def _add_fit_options(parser: argparse.ArgumentParser, mono_default: str) -> None:
    parser.add_argument('--segments', type=int, default=5, help='number of segments (default 5)')
    parser.add_argument('--mono', choices=sorted(MONO_CHOICES), default=mono_default,
                        help=f'monotonicity (default {mono_default})')
    parser.add_argument('--samples', type=int, default=100,
                        help='number of candidate knots (default 100)')
    parser.add_argument('--seed', type=int, default=0, help='random seed (default 0)')
    parser.add_argument('--fx', choices=FX_CHOICES, default='auto', help='x-transform (default auto)')
    parser.add_argument('--min-slope', type=float, default=None)
    parser.add_argument('--max-slope', type=float, default=None)


def _config(args) -> FitConfig:
    return FitConfig(num_segments=args.segments, mono=MONO_CHOICES[args.mono],
                     num_samples=args.samples, fx=args.fx, seed=args.seed,
                     min_slope=args.min_slope, max_slope=args.max_slope)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='curvedistill', description='Fit and distill piecewise-linear curve models.')
    sub = parser.add_subparsers(dest='command', required=True)

    fit = sub.add_parser('fit', help='fit one curve to x,y[,weight] CSV data')
    fit.add_argument('--input', required=True, help='CSV with header x,y[,weight]')
    fit.add_argument('--name', default='x', help='feature name for the curve')
    fit.add_argument('--emit', choices=('literal', 'json'), default='literal')
    fit.add_argument('--sig-digits', type=int, default=codegen.DEFAULT_SIG_DIGITS)
    fit.add_argument('--out', default=None, help='output file (default stdout)')
    _add_fit_options(fit, 'none')

    distill = sub.add_parser('distill', help='distill a teacher sample table into a model')
    distill.add_argument('--teacher', required=True, help='teacher table JSON')
    distill.add_argument('--out', default=None, help='model JSON output (default stdout)')
    distill.add_argument('--emit-code', default=None, help='also write curve literals here')
    distill.add_argument('--sig-digits', type=int, default=codegen.DEFAULT_SIG_DIGITS)
    distill.add_argument('--workers', type=int, default=1, help='parallel feature fits')
    _add_fit_options(distill, 'none')

    evaluate = sub.add_parser('eval', help='score a feature CSV with a model')
    evaluate.add_argument('--model', required=True, help='model JSON')
    evaluate.add_argument('--input', required=True, help='feature CSV with a header row')
    evaluate.add_argument('--out', default=None, help='scores CSV (default stdout)')

    attribute = sub.add_parser('attribute', help='rank features by distillation loss')
    attribute.add_argument('--teacher', required=True, help='teacher table JSON')
    attribute.add_argument('--eval', default=None,
                           help="CSV with feature columns and 'teacher:<feature>' output "
                                'columns (default: the teacher samples)')
    attribute.add_argument('--model', default=None, help='use this model instead of distilling')
    attribute.add_argument('--out', default=None, help='report CSV (default stdout)')
    _add_fit_options(attribute, 'none')
    return parser


def _read_text(path: str) -> str:
    try:
        with open(path, encoding='utf-8') as f:
            return f.read()
    except OSError as e:
        raise DataError(f'cannot read {path}: {e.strerror}') from None


def _write_text(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
    except OSError as e:
        raise DataError(f'cannot write {path}: {e.strerror}') from None


def _read_csv(path: str):
    rows = list(csv.reader(io.StringIO(_read_text(path), newline='')))
    if not rows:
        raise DataError(f'{path} is empty')
    header, body = rows[0], [r for r in rows[1:] if r]
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f'{path}:{i}: expected {len(header)} fields, got {len(row)}')
    return header, body


def _float_column(path, header, body, name) -> np.ndarray:
    col = header.index(name)
    try:
        return np.array([float(row[col]) for row in body])
    except ValueError as e:
        raise DataError(f'{path}: column {name!r}: {e}') from None


def _cell(text: str):
    """Numeric cells become floats; anything else stays a string key."""
    try:
        return float(text)
    except ValueError:
        return text


def _cmd_fit(args) -> None:
    config = _config(args)
    header, body = _read_csv(args.input)
    for required in ('x', 'y'):
        if required not in header:
            raise DataError(f'{args.input}: missing column {required!r}')
    x = _float_column(args.input, header, body, 'x')
    y = _float_column(args.input, header, body, 'y')
    w = _float_column(args.input, header, body, 'weight') if 'weight' in header else None
    try:
        pts = PointSet.from_arrays(x, y, w)
    except ValueError as e:
        raise DataError(f'{args.input}: {e}') from None
    curve = fit_pwl(pts, config, args.name)
    if args.emit == 'json':
        text = json.dumps(curve_to_dict(curve), indent=2) + '\n'
    else:
        text = codegen.emit_curve_literal(curve, args.sig_digits) + '\n'
    _write_text(args.out, text)


def _cmd_distill(args) -> None:
    config = _config(args)
    table = TeacherSampleTable.loads(_read_text(args.teacher))
    model = distill_model(table, config, max_workers=args.workers)
    _write_text(args.out, dumps_model(model))
    if args.emit_code:
        _write_text(args.emit_code, codegen.emit_model_code(model, args.sig_digits))


def _cmd_eval(args) -> None:
    model = loads_model(_read_text(args.model))
    header, body = _read_csv(args.input)
    columns: Dict[str, List] = {}
    for name in model.feature_names:
        if name in header:
            col = header.index(name)
            columns[name] = [_cell(row[col]) for row in body]
    try:
        scores = model.evaluate_columns(columns)
    except ValueError as e:
        raise DataError(f'{args.input}: {e}') from None
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(header + ['score'])
    for row, score in zip(body, scores):
        writer.writerow(row + [repr(float(score))])
    _write_text(args.out, out.getvalue())


def _cmd_attribute(args) -> None:
    config = _config(args)
    table = TeacherSampleTable.loads(_read_text(args.teacher))
    eval_set = None
    if args.eval:
        header, body = _read_csv(args.eval)
        columns = {name: [_cell(row[i]) for row in body] for i, name in enumerate(header)}
        try:
            eval_set = EvalSet.from_columns(columns)
        except ValueError as e:
            raise DataError(f'{args.eval}: {e}') from None
    model = loads_model(_read_text(args.model)) if args.model else None
    report: AttributionReport = attribute_failures(table, eval_set, config, model)
    _write_text(args.out, report.to_csv())


COMMANDS = {'fit': _cmd_fit, 'distill': _cmd_distill, 'eval': _cmd_eval,
            'attribute': _cmd_attribute}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs the CLI and returns its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format='%(levelname)s: %(message)s')
    try:
        COMMANDS[args.command](args)
    except InvalidConfigError as e:
        print(f'curvedistill {args.command}: usage error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CurveError) as e:
        print(f'curvedistill {args.command}: error: {e}', file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())
