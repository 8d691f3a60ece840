"""Statistical soundness bound for all-pass sampling audits.

If every one of kappa uniformly sampled points passes the per-point test,
then at least alpha% of the dataset is good except with probability
(alpha/100)^kappa. Our sampling is without replacement, which only lowers
the true all-pass probability for a bad dataset, so the with-replacement
bound stays valid.
"""

from __future__ import annotations

import math

from ..core import DomainError


def confidence_bound(alpha: float, kappa: int) -> float:
    """(alpha/100)^kappa: failure probability of an all-pass audit."""
    if not (0 < alpha <= 100):
        raise DomainError("alpha must be in (0, 100]")
    if kappa < 1:
        raise DomainError("kappa must be >= 1")
    return (alpha / 100.0) ** kappa


def required_kappa(alpha: float, delta: float) -> int:
    """Smallest kappa with (alpha/100)^kappa <= delta."""
    if not (0 < alpha < 100):
        raise DomainError("alpha must be in (0, 100) for a finite kappa")
    if not (0 < delta < 1):
        raise DomainError("delta must be in (0, 1)")
    p = alpha / 100.0
    k = max(1, math.ceil(math.log(delta) / math.log(p)))
    # guard against float edge cases around the boundary
    while p**k > delta:
        k += 1
    while k > 1 and p ** (k - 1) <= delta:
        k -= 1
    return k
