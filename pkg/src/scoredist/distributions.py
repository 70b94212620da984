"""Ordered score distributions and CDF-based distances between them.

Opinion scores live on a small ordered scale (e.g. the 1..10 points of an
aesthetic rating histogram). A `ScoreDistribution` is a probability mass
function over those buckets; its mean and standard deviation are the usual
summary statistics reported alongside quality ratings.

Because the buckets are ordered, distances between distributions should
charge mass moved across many buckets more than mass moved to a neighbour.
On a 1-D ordered support that optimal-transport distance has a closed form
in terms of cumulative distributions:

    dist_r(p, q) = ( (1/N) * sum_k |CDF_p(k) - CDF_q(k)|**r )**(1/r)

`emd` implements this family. Training uses the r=2 member with the outer
root dropped (`squared_emd_loss`), which has a clean analytic gradient
through a softmax head (`squared_emd_grad`). A soft-target cross-entropy
loss is provided for head-to-head comparisons against the distance-aware
loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ScaleMismatchError

# Constructing a ScoreDistribution renormalizes exactly, but only when the
# input total is already this close to one; larger deviations are errors.
MASS_TOLERANCE = 1e-6


@dataclass(frozen=True)
class BucketScale:
    """Ordered bucket values s_1 < ... < s_N of an opinion-score scale."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 2:
            raise ValueError("a bucket scale needs at least 2 buckets")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("bucket values must be finite")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("bucket values must be strictly increasing")

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def ava_scale() -> BucketScale:
    """10-bucket scale at 1..10, the layout of AVA-style rating histograms."""
    return BucketScale(tuple(float(v) for v in range(1, 11)))


def tid_scale() -> BucketScale:
    """10-bucket scale at 0..9, the layout of TID-style opinion scores."""
    return BucketScale(tuple(float(v) for v in range(0, 10)))


@dataclass(frozen=True)
class ScoreDistribution:
    """Probability mass over the buckets of a `BucketScale`.

    Mass must be nonnegative and total 1 within `MASS_TOLERANCE`; it is
    renormalized exactly on construction. Instances are immutable and safe
    to share across threads.
    """

    scale: BucketScale
    mass: tuple[float, ...]

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=np.float64)
        if m.ndim != 1 or m.shape[0] != len(self.scale):
            raise ValueError(
                f"mass length {m.shape} does not match scale with {len(self.scale)} buckets"
            )
        if not np.all(np.isfinite(m)):
            raise ValueError("mass values must be finite")
        if np.any(m < 0.0):
            raise ValueError("mass values must be nonnegative")
        total = float(m.sum())
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"mass totals {total!r}, too far from 1 to renormalize")
        object.__setattr__(self, "mass", tuple(float(v) for v in m / total))

    @classmethod
    def from_counts(cls, scale: BucketScale, counts: Sequence[float]) -> "ScoreDistribution":
        """Normalize a vector of per-bucket rating counts."""
        c = np.asarray(counts, dtype=np.float64)
        if c.ndim != 1 or c.shape[0] != len(scale):
            raise ValueError("counts length does not match scale")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        total = float(c.sum())
        if total <= 0:
            raise ValueError("counts sum to zero")
        return cls(scale, tuple(c / total))

    @classmethod
    def point_mass(cls, scale: BucketScale, bucket_index: int) -> "ScoreDistribution":
        m = [0.0] * len(scale)
        m[bucket_index] = 1.0
        return cls(scale, tuple(m))

    @classmethod
    def uniform(cls, scale: BucketScale) -> "ScoreDistribution":
        n = len(scale)
        return cls(scale, tuple([1.0 / n] * n))

    def mass_array(self) -> np.ndarray:
        return np.asarray(self.mass, dtype=np.float64)

    def mean(self) -> float:
        """Expected score, sum_i s_i * p_i. Lies in [s_1, s_N]."""
        return float(np.dot(self.scale.as_array(), self.mass_array()))

    def std_dev(self) -> float:
        """Standard deviation of the score; zero exactly for a point mass."""
        s = self.scale.as_array()
        mu = self.mean()
        var = float(np.dot((s - mu) ** 2, self.mass_array()))
        return math.sqrt(max(var, 0.0))

    def cdf(self) -> np.ndarray:
        """Cumulative mass CDF(k) = sum_{i<=k} p_i; nondecreasing, ends at 1."""
        return np.cumsum(self.mass_array())

    def entropy(self) -> float:
        """Shannon entropy in nats, with 0*log(0) taken as 0."""
        m = self.mass_array()
        nz = m[m > 0]
        return float(-np.sum(nz * np.log(nz)))


def _check_logits(logits, n: int | None = None) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("logits must be a 1-D sequence")
    if n is not None and z.shape[0] != n:
        raise ValueError(f"expected {n} logits, got {z.shape[0]}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    return z


def softmax_probs(logits) -> np.ndarray:
    """Stabilized softmax of a logit vector, as a plain probability array."""
    z = _check_logits(logits)
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax(logits, scale: BucketScale) -> ScoreDistribution:
    """Softmax of a logit vector as a distribution over `scale`.

    Max-subtraction makes the computation overflow-safe, and the map is
    order preserving: z_i > z_j implies p_i > p_j.
    """
    z = _check_logits(logits, len(scale))
    return ScoreDistribution(scale, tuple(softmax_probs(z)))


def emd(p: ScoreDistribution, q: ScoreDistribution, r: float) -> float:
    """Normalized r-norm distance between the CDFs of two distributions.

    Equals ((1/N) * sum_k |CDF_p(k) - CDF_q(k)|**r)**(1/r). For r=1 this
    is N times smaller than the minimum cost of moving p's mass onto q
    with unit cost per bucket step. Symmetric, zero iff p == q, and a
    metric on distributions sharing a scale for r >= 1.
    """
    if p.scale != q.scale:
        raise ScaleMismatchError(
            f"cannot compare distributions on scales {p.scale.values} and {q.scale.values}"
        )
    if r <= 0:
        raise ValueError("r must be positive")
    gaps = np.abs(p.cdf() - q.cdf())
    n = len(p.scale)
    return float((np.sum(gaps**r) / n) ** (1.0 / r))


def squared_emd_loss(p: ScoreDistribution, logits) -> float:
    """Training loss: the r=2 CDF distance to softmax(logits), squared.

    Equals (1/N) * sum_k (CDF_p(k) - CDF_q(k))**2 with q = softmax(logits).
    Dropping the square root keeps the loss smooth at zero and gives the
    gradient in `squared_emd_grad` its simple closed form.
    """
    z = _check_logits(logits, len(p.scale))
    q = softmax_probs(z)
    gaps = p.cdf() - np.cumsum(q)
    return float(np.mean(gaps**2))


def squared_emd_grad(p: ScoreDistribution, logits) -> np.ndarray:
    """Gradient of `squared_emd_loss` with respect to the logits.

    d(loss)/dq_i = (2/N) * sum_{k>=i} (CDF_q(k) - CDF_p(k)), pulled back
    through the softmax Jacobian. The components always sum to zero since
    softmax is invariant to constant logit shifts.
    """
    z = _check_logits(logits, len(p.scale))
    q = softmax_probs(z)
    gaps = np.cumsum(q) - p.cdf()
    n = gaps.shape[0]
    dq = (2.0 / n) * np.cumsum(gaps[::-1])[::-1]
    return q * (dq - float(np.dot(dq, q)))


def cross_entropy_loss(p: ScoreDistribution, logits) -> float:
    """Soft-target cross entropy -sum_i p_i * log softmax(logits)_i.

    The ordering-blind baseline loss; minimized, like the squared CDF
    distance, exactly when softmax(logits) == p.
    """
    z = _check_logits(logits, len(p.scale))
    log_q = z - (z.max() + math.log(np.sum(np.exp(z - z.max()))))
    return float(-np.dot(p.mass_array(), log_q))


def cross_entropy_grad(p: ScoreDistribution, logits) -> np.ndarray:
    """Gradient of `cross_entropy_loss` w.r.t. logits: softmax(z) - p."""
    z = _check_logits(logits, len(p.scale))
    return softmax_probs(z) - p.mass_array()
