"""Piecewise-linear curve fitting and distillation of additive models into curve code."""

from curvedistill.codegen import (emit_curve_literal, emit_model_code,
                                  parse_curve_literal, parse_model_code)
from curvedistill.condense import (CondensedSet, Line, PointSet, best_fit_line,
                                   condense_around_knots, linear_condense,
                                   squared_error)
from curvedistill.curves import (CurveModel, EnumCurve, PWLCurve, Transform,
                                 apply_transform, eval_enum, eval_model,
                                 eval_pwl)
from curvedistill.distill import (AttributionReport, EvalSet, FeatureSamples,
                                  TeacherSampleTable, attribute_failures,
                                  distill_categorical_feature, distill_model,
                                  distill_numeric_feature)
from curvedistill.errors import *  # noqa: F401,F403
from curvedistill.fitter import (CandidateKnots, FitConfig, Mono, downsample,
                                 fit_pwl, fit_pwl_detailed, greedy_fit,
                                 sample_candidate_knots, select_transform)
from curvedistill.solver import (Direction, SlopeBounds, infer_mono_direction,
                                 isotonic_fit, isotonic_regression,
                                 solve_y_knots, solve_y_knots_bounded,
                                 weighted_pearson)

__version__ = '0.1.0'
