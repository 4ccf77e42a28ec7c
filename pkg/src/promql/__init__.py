from src.promql.ast import Expr, pretty, with_range_window
from src.promql.diagnostics import Diagnostic, Severity
from src.promql.evaluator import InstantVector, Matrix, Scalar, eval_instant, eval_range
from src.promql.parser import parse, parse_with_diagnostics
from src.promql.validate import Validation, validate
