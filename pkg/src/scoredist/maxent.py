"""Maximum-entropy bucket distributions with prescribed mean and std.

Rating sources that publish only a mean opinion score and its standard
deviation still need a full per-bucket distribution before distribution-
level training or evaluation can run. Among all bucket distributions
matching the two moments, the one of maximum entropy is the least
committal choice, and it has exponential-family form

    p_i  proportional to  exp(lambda1 * s_i + lambda2 * s_i**2).

`fit_maxent` solves for the two multipliers by damped Newton iteration on
the strictly convex dual

    f(lambda) = log Z(lambda) - lambda1 * m1 - lambda2 * m2,

where m1 and m2 are the target first and second moments. The gradient of f
is the moment mismatch and its Hessian is the covariance matrix of
(s, s**2) under the current iterate, so each step is a 2x2 solve.

Attainability on a fixed bucket grid is narrower than the usual textbook
bound: besides sigma**2 <= (mu - s_1)(s_N - mu) (equality only for mass on
the two endpoints), any distribution whose mean mu falls strictly between
adjacent buckets s_j < mu < s_{j+1} has variance at least
(mu - s_j)(s_{j+1} - mu), attained by splitting mass across just those two
buckets. `feasible` checks both bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import BucketScale, ScoreDistribution
from .errors import InfeasibleMomentsError, NonConvergenceError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200
# Targets closer than this (in variance units) to an attainability boundary
# are nudged into the interior before solving; the dual diverges on the
# boundary itself.
BOUNDARY_NUDGE = 1e-9


@dataclass(frozen=True)
class MomentTarget:
    """A (mean, std) pair to be realized on a bucket scale."""

    mu: float
    sigma: float
    scale: BucketScale

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ValueError("target moments must be finite")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class MaxEntSolution:
    """Fit result: the distribution, its multipliers, and solver telemetry.

    `residual` is the Euclidean norm of (mean - mu, std - sigma) against
    the original target. For degenerate sigma=0 targets whose mean falls
    between buckets the residual carries the unavoidable std mismatch and
    the multipliers are reported as zero (the limit has no
    exponential-family representative).
    """

    dist: ScoreDistribution
    lambda1: float
    lambda2: float
    iterations: int
    residual: float


def variance_bounds(mu: float, scale: BucketScale) -> tuple[float, float]:
    """Smallest and largest variance attainable at mean `mu` on `scale`."""
    s = scale.values
    if not (s[0] <= mu <= s[-1]):
        raise ValueError(f"mean {mu} outside scale range [{s[0]}, {s[-1]}]")
    hi = (mu - s[0]) * (s[-1] - mu)
    j = int(np.searchsorted(np.asarray(s), mu, side="right")) - 1
    if 0 <= j < len(s) and mu == s[j]:
        return 0.0, hi
    j = min(max(j, 0), len(s) - 2)
    lo = max((mu - s[j]) * (s[j + 1] - mu), 0.0)
    return lo, hi


def feasible(target: MomentTarget) -> bool:
    """Whether some distribution on the scale attains the target moments.

    sigma=0 targets count as feasible regardless of where the mean falls;
    `fit_maxent` handles them with a dedicated branch (point mass, or the
    closest-mean two-bucket split). Exact boundary targets (two-point
    extremes) are feasible as well.
    """
    s = target.scale.values
    if not (s[0] <= target.mu <= s[-1]):
        return False
    if target.sigma == 0.0:
        return True
    lo, hi = variance_bounds(target.mu, target.scale)
    var = target.sigma**2
    slack = 1e-12 * max(1.0, hi)
    return (lo - slack) <= var <= (hi + slack)


def fit_maxent(
    target: MomentTarget,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MaxEntSolution:
    """Fit the maximum-entropy distribution matching a moment target.

    Deterministic: identical targets produce bit-identical solutions.
    Raises `InfeasibleMomentsError` when no distribution on the scale can
    attain the moments and `NonConvergenceError` when the Newton iteration
    exhausts `max_iter` (the error reports the final residual).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not feasible(target):
        s = target.scale.values
        raise InfeasibleMomentsError(
            f"no distribution on scale [{s[0]}..{s[-1]}] has mean {target.mu} "
            f"and std {target.sigma}"
        )
    scale = target.scale
    if target.sigma == 0.0:
        return _degenerate_fit(target)

    lo, hi = variance_bounds(target.mu, scale)
    var = target.sigma**2
    if hi - var < BOUNDARY_NUDGE:
        var = hi - BOUNDARY_NUDGE
    if lo > 0.0 and var - lo < BOUNDARY_NUDGE:
        var = lo + BOUNDARY_NUDGE
    if var <= 0.0:
        # Mean this close to an endpoint leaves no room for spread.
        return _degenerate_fit(MomentTarget(target.mu, 0.0, scale))

    s = scale.as_array()
    s2 = s**2
    m1 = target.mu
    m2 = var + target.mu**2
    lam = np.zeros(2)

    def dual_state(lam):
        e = lam[0] * s + lam[1] * s2
        shift = e.max()
        w = np.exp(e - shift)
        z = w.sum()
        p = w / z
        value = shift + math.log(z) - lam[0] * m1 - lam[1] * m2
        return value, p

    def moment_residual(p):
        e1 = float(np.dot(p, s))
        e2 = float(np.dot(p, s2))
        cur_var = max(e2 - e1 * e1, 0.0)
        return math.hypot(e1 - m1, math.sqrt(cur_var) - math.sqrt(var))

    value, p = dual_state(lam)
    iterations = 0
    for iterations in range(max_iter + 1):
        e1 = float(np.dot(p, s))
        e2 = float(np.dot(p, s2))
        cur_var = max(e2 - e1 * e1, 0.0)
        step_resid = math.hypot(e1 - m1, math.sqrt(cur_var) - math.sqrt(var))
        if step_resid <= tol:
            dist = ScoreDistribution(scale, tuple(p))
            return MaxEntSolution(
                dist=dist,
                lambda1=float(lam[0]),
                lambda2=float(lam[1]),
                iterations=iterations,
                residual=_target_residual(dist, target),
            )
        if iterations == max_iter:
            break
        grad = np.array([e1 - m1, e2 - m2])
        e3 = float(np.dot(p, s2 * s))
        e4 = float(np.dot(p, s2 * s2))
        hess = np.array([[e2 - e1 * e1, e3 - e1 * e2], [e3 - e1 * e2, e4 - e2 * e2]])
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(hess, -grad, rcond=None)
        # Halve the step while the dual fails to decrease. Once the dual
        # flattens at float precision, a shrinking moment residual still
        # counts as progress; Newton keeps contracting it quadratically.
        t = 1.0
        for _ in range(60):
            cand = lam + t * step
            new_value, new_p = dual_state(cand)
            if new_value <= value or moment_residual(new_p) < step_resid:
                break
            t *= 0.5
        else:
            raise NonConvergenceError(
                f"dual objective stopped decreasing at residual {step_resid:.3e}",
                residual=step_resid,
            )
        lam = cand
        value, p = new_value, new_p

    raise NonConvergenceError(
        f"moment residual {step_resid:.3e} above tol {tol:.1e} after {max_iter} iterations",
        residual=step_resid,
    )


def _degenerate_fit(target: MomentTarget) -> MaxEntSolution:
    """sigma=0 branch: point mass, or two-bucket split matching the mean."""
    s = target.scale.values
    for i, v in enumerate(s):
        if target.mu == v:
            dist = ScoreDistribution.point_mass(target.scale, i)
            return MaxEntSolution(dist, 0.0, 0.0, 0, _target_residual(dist, target))
    arr = np.asarray(s)
    j = int(np.searchsorted(arr, target.mu, side="right")) - 1
    j = min(max(j, 0), len(s) - 2)
    upper = (target.mu - s[j]) / (s[j + 1] - s[j])
    mass = [0.0] * len(s)
    mass[j] = 1.0 - upper
    mass[j + 1] = upper
    dist = ScoreDistribution(target.scale, tuple(mass))
    return MaxEntSolution(dist, 0.0, 0.0, 0, _target_residual(dist, target))


def _target_residual(dist: ScoreDistribution, target: MomentTarget) -> float:
    return math.hypot(dist.mean() - target.mu, dist.std_dev() - target.sigma)
