"""
Thinning certificates for Markov-chain input.

If the chain mixes uniformly at rate eps_t, keeping every M-th draw gives N
scores whose joint law is within (N - 1) * eps_M of the iid law in total
variation.
"""
import math
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple

from backend.app.errors import BudgetInfeasible, InvalidConfig, OutOfRange


@dataclass(frozen=True)
class MixingModel:
    """eps_t = C * rho**t (geometric) or eps_t = eps[t - 1] (tabulated)."""

    kind: str
    C: Optional[float] = None
    rho: Optional[float] = None
    eps: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind == "geometric":
            if self.C is None or not self.C > 0:
                raise InvalidConfig("geometric mixing needs C > 0")
            if self.rho is None or not 0 < self.rho < 1:
                raise InvalidConfig("geometric mixing needs 0 < rho < 1")
        elif self.kind == "tabulated":
            if not self.eps:
                raise InvalidConfig("tabulated mixing needs a non-empty eps sequence")
            eps = tuple(float(e) for e in self.eps)
            if any(e <= 0 for e in eps):
                raise InvalidConfig("tabulated eps must be positive")
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise InvalidConfig("tabulated eps must be strictly decreasing")
            object.__setattr__(self, "eps", eps)
        else:
            raise InvalidConfig(f"unknown mixing model {self.kind!r}")

    @classmethod
    def geometric(cls, C: float, rho: float) -> "MixingModel":
        return cls("geometric", C=C, rho=rho)

    @classmethod
    def tabulated(cls, eps: Sequence[float]) -> "MixingModel":
        return cls("tabulated", eps=tuple(eps))

    def rate(self, M: int) -> float:
        if M < 1:
            raise OutOfRange(f"spacing M must be >= 1, got {M}")
        if self.kind == "geometric":
            return self.C * self.rho ** M
        if M > len(self.eps):
            raise OutOfRange(f"spacing M={M} beyond the tabulated range 1..{len(self.eps)}")
        return self.eps[M - 1]


def tv_bound(model: MixingModel, N: int, M: int) -> float:
    """(N - 1) * eps_M."""
    if N < 1:
        raise InvalidConfig(f"N must be >= 1, got {N}")
    if N == 1:
        return 0.0
    return (N - 1) * model.rate(M)


def min_thinning(model: MixingModel, N: int, budget: float) -> int:
    """Smallest spacing M with (N - 1) * eps_M <= budget."""
    if not budget > 0:
        raise InvalidConfig(f"budget must be positive, got {budget}")
    if N < 1:
        raise InvalidConfig(f"N must be >= 1, got {N}")
    if N == 1:
        return 1

    if model.kind == "tabulated":
        for M in range(1, len(model.eps) + 1):
            if tv_bound(model, N, M) <= budget:
                return M
        raise BudgetInfeasible(
            f"(N-1)*min(eps) = {(N - 1) * model.eps[-1]:.6g} exceeds budget {budget:.6g}"
        )

    M = math.ceil(math.log(budget / ((N - 1) * model.C)) / math.log(model.rho))
    M = max(M, 1)
    # the closed form can be off by one in floating point; settle it directly
    while tv_bound(model, N, M) > budget:
        M += 1
    while M > 1 and tv_bound(model, N, M - 1) <= budget:
        M -= 1
    return M


def thin_samples(items: Sequence[Any], spacing: int, burn_in: int = 0) -> List[Any]:
    """Drop ``burn_in`` leading draws, then keep every ``spacing``-th one."""
    if spacing < 1:
        raise InvalidConfig(f"thinning spacing must be >= 1, got {spacing}")
    if burn_in < 0:
        raise InvalidConfig(f"burn-in must be >= 0, got {burn_in}")
    return list(items[burn_in::spacing])
