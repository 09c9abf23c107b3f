from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepSchedule:
    """``alpha_n = alpha0 / (n+1)**a`` (fast) and ``beta_n = beta0 / (n+1)`` (slow).

    ``exponent_a = 1`` is the noiseless-slow regime. Gains above one are
    allowed: the 1/n regime needs ``beta0`` large (e.g. 8 for Polyak averaging).
    """

    alpha0: float
    beta0: float
    exponent_a: float = 2.0 / 3.0

    def __post_init__(self):
        if not self.alpha0 > 0 or not self.beta0 > 0:
            raise ValueError("alpha0 and beta0 must be positive")
        if not 0.5 < self.exponent_a <= 1.0:
            raise ValueError(f"exponent_a must lie in (0.5, 1], got {self.exponent_a}")

    def alpha(self, n):
        return self.alpha0 / (np.asarray(n, dtype=float) + 1.0) ** self.exponent_a

    def beta(self, n):
        return self.beta0 / (np.asarray(n, dtype=float) + 1.0)

    def ratio(self, n):
        """``gamma_n = beta_n / alpha_n``."""
        return self.beta(n) / self.alpha(n)

    @property
    def c1(self) -> float:
        return 2.0

    @property
    def c2(self) -> float:
        return 2.0 / min(self.alpha0, self.beta0)

    def check_bounds(self, n_max: int = 10**6) -> dict[str, float]:
        """Worst slack of the step-size inequalities for ``n`` in ``[0, n_max]``.

        Non-negative values mean the inequality holds everywhere.
        """
        n = np.arange(n_max + 1, dtype=float)
        a, a1 = self.alpha(n), self.alpha(n + 1)
        b, b1 = self.beta(n), self.beta(n + 1)
        g, g1 = self.ratio(n), self.ratio(n + 1)
        return {
            "alpha_nonincreasing": float(np.min(a - a1)),
            "beta_nonincreasing": float(np.min(b - b1)),
            "alpha_c1": float(np.min(self.c1 * a1 - a)),
            "beta_c1": float(np.min(self.c1 * b1 - b)),
            "alpha_c2": float(np.min(self.c2 * a1**2 - (a - a1))),
            "beta_c2": float(np.min(self.c2 * b1**2 - (b - b1))),
            "ratio_nonincreasing": float(np.min(g - g1)),
        }
