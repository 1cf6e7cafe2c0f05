"""Dense Levenberg-Marquardt solver over block-structured variables.

Per-object problems here are tiny (tens of poses, at most a few hundred
points), so the damped normal equations are solved with a dense Cholesky
factorization. No robust loss is applied to residuals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import NumericalFailure

DENSE_VARIABLE_LIMIT = 4096
DAMPING_MIN = 1e-12
DAMPING_MAX = 1e12


def _additive_retract(value, delta):
    return np.asarray(value, float) + delta


@dataclass
class VariableBlock:
    """One optimization variable.

    `value` may be any object; `retract(value, delta)` applies a local
    increment of dimension `local_dim` and returns a new value. Plain
    vectors use additive updates. Fixed blocks keep their value and
    contribute no columns to the normal equations.
    """

    value: Any
    local_dim: int
    retract: Callable[[Any, np.ndarray], Any] = _additive_retract
    fixed: bool = False

    @classmethod
    def vector(cls, value, fixed: bool = False) -> "VariableBlock":
        v = np.asarray(value, dtype=float)
        return cls(value=v, local_dim=v.size, fixed=fixed)


@dataclass
class ResidualBlock:
    """A residual coupling one or more variable blocks.

    `evaluator(values) -> (residual, jacobians)` receives the referenced
    block values in order and returns the residual vector plus one
    Jacobian of shape (residual_dim, block.local_dim) per referenced block.
    """

    variable_indices: Sequence[int]
    residual_dim: int
    evaluator: Callable[[Sequence[Any]], tuple]


@dataclass
class SolverConfig:
    max_iterations: int = 200
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    gradient_tolerance: float = 1e-8
    relative_cost_tolerance: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.initial_damping <= 0 or self.gradient_tolerance <= 0:
            raise ValueError("damping and tolerances must be positive")
        if self.damping_up <= 1.0 or not (0.0 < self.damping_down < 1.0):
            raise ValueError("damping_up must exceed 1 and damping_down lie in (0,1)")
        if self.relative_cost_tolerance <= 0:
            raise ValueError("relative_cost_tolerance must be positive")


class Termination(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolveReport:
    final_cost: float
    initial_cost: float
    iterations_used: int
    termination: Termination


def marginal_cost(blocks: Sequence[ResidualBlock], variables: Sequence[VariableBlock]) -> float:
    """Evaluate 0.5 * sum of squared residual norms at the current variables."""
    total = 0.0
    for block in blocks:
        r, _ = block.evaluator([variables[i].value for i in block.variable_indices])
        total += 0.5 * float(np.dot(r, r))
    return total


def _evaluate(blocks, variables, col_offset, n_cols):
    """Stack residuals and the dense Jacobian over free variable columns."""
    n_rows = sum(b.residual_dim for b in blocks)
    residual = np.empty(n_rows)
    jac = np.zeros((n_rows, n_cols))
    row = 0
    for block in blocks:
        values = [variables[i].value for i in block.variable_indices]
        r, jacs = block.evaluator(values)
        r = np.asarray(r, float)
        residual[row : row + block.residual_dim] = r
        for idx, j in zip(block.variable_indices, jacs):
            if variables[idx].fixed:
                continue
            c = col_offset[idx]
            jac[row : row + block.residual_dim, c : c + variables[idx].local_dim] = j
        row += block.residual_dim
    return residual, jac


def solve(
    blocks: Sequence[ResidualBlock],
    variables: Sequence[VariableBlock],
    config: Optional[SolverConfig] = None,
) -> SolveReport:
    """Minimize 0.5 * sum ||r||^2 in place over the free variable blocks.

    Raises NumericalFailure (after restoring the best-seen state) when the
    damped normal equations stay unsolvable or no step can reduce the cost
    at maximum damping.
    """
    if config is None:
        config = SolverConfig()
    col_offset = {}
    n_cols = 0
    for i, v in enumerate(variables):
        if not v.fixed:
            col_offset[i] = n_cols
            n_cols += v.local_dim
    if n_cols > DENSE_VARIABLE_LIMIT:
        raise ValueError(
            f"total free variable dimension {n_cols} exceeds dense limit "
            f"{DENSE_VARIABLE_LIMIT}"
        )

    residual, jac = _evaluate(blocks, variables, col_offset, n_cols)
    cost = 0.5 * float(residual @ residual)
    initial_cost = cost
    best_values = [v.value for v in variables]
    best_cost = cost
    damping = config.initial_damping
    iterations = 0

    if n_cols == 0:
        return SolveReport(cost, initial_cost, 0, Termination.CONVERGED)

    for iterations in range(1, config.max_iterations + 1):
        gradient = jac.T @ residual
        if np.max(np.abs(gradient)) < config.gradient_tolerance:
            return SolveReport(cost, initial_cost, iterations - 1, Termination.CONVERGED)
        hessian = jac.T @ jac

        accepted = False
        any_solvable = False
        while not accepted:
            try:
                factor = scipy.linalg.cho_factor(
                    hessian + damping * np.eye(n_cols), lower=True
                )
                step = scipy.linalg.cho_solve(factor, -gradient)
                step_ok = np.all(np.isfinite(step))
            except (scipy.linalg.LinAlgError, ValueError):
                # LinAlgError: not positive definite; ValueError: scipy
                # rejects non-finite entries (NaN/inf jacobians)
                step_ok = False

            if step_ok:
                any_solvable = True
                trial = [
                    v.retract(v.value, step[col_offset[i] : col_offset[i] + v.local_dim])
                    if not v.fixed
                    else v.value
                    for i, v in enumerate(variables)
                ]
                saved = [v.value for v in variables]
                for v, t in zip(variables, trial):
                    v.value = t
                try:
                    new_residual, new_jac = _evaluate(blocks, variables, col_offset, n_cols)
                    new_cost = 0.5 * float(new_residual @ new_residual)
                    trial_ok = np.isfinite(new_cost)
                except ArithmeticError:
                    # e.g. a trial step pushed a point behind the camera
                    trial_ok = False
                if not trial_ok:
                    for v, s in zip(variables, saved):
                        v.value = s
                elif new_cost <= cost:
                    accepted = True
                    rel_decrease = (cost - new_cost) / max(cost, 1e-300)
                    residual, jac, cost = new_residual, new_jac, new_cost
                    damping = max(damping * config.damping_down, DAMPING_MIN)
                    if cost < best_cost:
                        best_cost = cost
                        best_values = [v.value for v in variables]
                    if rel_decrease < config.relative_cost_tolerance:
                        return SolveReport(
                            cost, initial_cost, iterations, Termination.CONVERGED
                        )
                else:
                    for v, s in zip(variables, saved):
                        v.value = s

            if not accepted:
                damping *= config.damping_up
                if damping > DAMPING_MAX:
                    for v, b in zip(variables, best_values):
                        v.value = b
                    if any_solvable:
                        # Steps solve but cannot reduce the cost any further:
                        # the iterate is at a numerical minimum.
                        return SolveReport(
                            best_cost, initial_cost, iterations, Termination.CONVERGED
                        )
                    raise NumericalFailure(
                        "damped normal equations unsolvable at maximum damping"
                    )

    return SolveReport(cost, initial_cost, iterations, Termination.MAX_ITERATIONS)
