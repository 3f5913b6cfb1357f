from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class SolveOptions:
    """Solver settings. ``tol`` is the IV residual infinity norm in per unit."""

    tol: float = 1e-10
    max_iter: int = 50
    damping: float = 1.0
    flat_start: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")


@dataclass
class SolveTrace:
    """Residual infinity norm of every iterate, starting with the initial
    point, and why the solver stopped."""

    method: str
    residuals: list[float] = field(default_factory=list)
    reason: str = ""
    # iterations at which a voltage divisor had to be clamped
    clamped: list[int] = field(default_factory=list)
    step_scales: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def converged(self) -> bool:
        return self.reason == "converged"

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")
