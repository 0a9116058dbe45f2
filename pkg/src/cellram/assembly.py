"""Combine per-cell estimates into the system-level misclassification
probability per input, its variance, and a one-sided upper bound."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ArgumentError, DataIntegrityError

WORST_CASE = "worst_case"
EMPIRICAL_MEAN = "empirical_mean"
REMAINDER_POLICIES = (WORST_CASE, EMPIRICAL_MEAN)

# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF: rational approximation plus Newton steps."""
    if not 0.0 < p < 1.0:
        raise ArgumentError(f"p must be in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        z = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= 1 - _P_LOW:
        q = p - 0.5
        r = q * q
        z = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        z = -((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    for _ in range(2):
        pdf = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        if pdf == 0.0:
            break
        z -= (normal_cdf(z) - p) / pdf
    return z


@dataclass(frozen=True)
class ReliabilityEstimate:
    mean: float
    variance: float
    upper_bound: float
    alpha: float
    acu: float
    cells_assessed: int
    op_mass_covered: float
    remainder_mass: float
    remainder_policy: str
    remainder_variance_ignored: bool

    def to_dict(self):
        return asdict(self)


def _check_cell(cell):
    lam, op = cell.unastuteness, cell.op
    for name, v in (("lambda variance", lam.variance), ("op variance", op.variance)):
        if not v >= 0:
            raise DataIntegrityError(f"cell {cell.index}: negative or invalid {name} {v}")
    if not (lam.mean >= 0 and op.mean >= 0):
        raise DataIntegrityError(f"cell {cell.index}: negative mean")
    return lam, op


def assemble(cells, alpha=0.025, remainder_mass=0.0, policy=WORST_CASE) -> ReliabilityEstimate:
    """Weighted sum of cell unastuteness by pooled OP.

    Variance follows from independence of all cell factors:
    ``sum(E[l]^2 Var[op] + E[op]^2 Var[l] + Var[l] Var[op])``. Unassessed mass
    is charged at 1 (worst case) or at the ACU of the assessed cells, with no
    variance.
    """
    if not 0.0 < alpha < 0.5:
        raise ArgumentError(f"alpha must be in (0, 0.5), got {alpha}")
    if policy not in REMAINDER_POLICIES:
        raise ArgumentError(f"unknown remainder policy {policy!r}")
    if not remainder_mass >= 0:
        raise ArgumentError(f"remainder mass must be >= 0, got {remainder_mass}")
    cells = list(cells)
    if not cells:
        raise ArgumentError("no cells to assemble")
    terms, var_terms, lams, ops = [], [], [], []
    for cell in cells:
        lam, op = _check_cell(cell)
        terms.append(lam.mean * op.mean)
        var_terms.append(lam.mean ** 2 * op.variance + op.mean ** 2 * lam.variance
                         + lam.variance * op.variance)
        lams.append(lam.mean)
        ops.append(op.mean)
    acu = math.fsum(lams) / len(lams)
    charge = 1.0 if policy == WORST_CASE else acu
    mean = math.fsum(terms + [remainder_mass * charge])
    variance = math.fsum(var_terms)
    z = normal_quantile(1.0 - alpha)
    return ReliabilityEstimate(
        mean=mean,
        variance=variance,
        upper_bound=mean + z * math.sqrt(variance),
        alpha=alpha,
        acu=acu,
        cells_assessed=len(cells),
        op_mass_covered=math.fsum(ops),
        remainder_mass=remainder_mass,
        remainder_policy=policy,
        remainder_variance_ignored=remainder_mass > 0,
    )


@dataclass(frozen=True)
class ComparisonRow:
    test_error: float
    acu: float
    mean: float
    variance: float
    upper_bound: float
    acu_below_test_error: bool
    mean_above_acu: bool
    mean_below_test_error: bool
    mean_between_acu_and_test_error: bool

    def to_dict(self):
        return asdict(self)


def compare_metrics(test_error: float, estimate: ReliabilityEstimate) -> ComparisonRow:
    """Test error, ACU and the assembled estimate side by side, with strict
    orderings between them."""
    values = (test_error, estimate.acu, estimate.mean, estimate.variance, estimate.upper_bound)
    if not all(math.isfinite(v) for v in values):
        raise ArgumentError("comparison inputs must be finite")
    lo, hi = min(test_error, estimate.acu), max(test_error, estimate.acu)
    return ComparisonRow(
        test_error=test_error,
        acu=estimate.acu,
        mean=estimate.mean,
        variance=estimate.variance,
        upper_bound=estimate.upper_bound,
        acu_below_test_error=estimate.acu < test_error,
        mean_above_acu=estimate.mean > estimate.acu,
        mean_below_test_error=estimate.mean < test_error,
        mean_between_acu_and_test_error=lo < estimate.mean < hi,
    )
