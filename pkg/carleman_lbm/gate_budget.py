"""
T-gate budget of the block-encoded final-state system.

All logarithms are base 2. ``epsilon`` is the synthesis precision of each
single-qubit rotation; the accumulated error of the whole circuit is
reported as ``epsilon_total``.
"""

import logging
import math
from typing import Dict, Tuple

from pydantic import BaseModel

from carleman_lbm.errors import InvalidParameterError, OutOfScopeError

logger = logging.getLogger("carleman_lbm")

_SQRT2 = math.sqrt(2.0)
_PHI = (1.0 + math.sqrt(5.0)) / 2.0


class CollisionCosts(BaseModel):
    """Per-dimension T-counts of the collision blocks, as (constant, log coefficient) pairs."""

    linear: Tuple[float, float]
    quadratic: Tuple[float, float]
    linear_error: float
    quadratic_error: float
    components: Dict[str, Tuple[float, float]]


# (constant, coefficient of log2(1/eps)); errors are multiples of eps
COLLISION_COSTS: Dict[int, CollisionCosts] = {
    1: CollisionCosts(
        linear=(280.0, 480.0),
        quadratic=(154.0, 240.0),
        linear_error=4 * _SQRT2 + 2,
        quadratic_error=1 + 2 * _SQRT2,
        components={
            "L1": (140.0, 192.0),
            "Sigma1": (0.0, 96.0),
            "R1": (140.0, 192.0),
            "L2": (140.0, 192.0),
            "Sigma2": (14.0, 48.0),
        },
    ),
    2: CollisionCosts(
        linear=(6412.0, 60291.0),
        quadratic=(4500.0, 5280.0),
        linear_error=28 * _SQRT2 + 5,
        quadratic_error=59 * _SQRT2,
        components={
            "L1": (3316.0, 30048.0),
            "Sigma1": (140.0, 195.0),
            "R1": (3316.0, 30048.0),
            "L2": (180.0, 1824.0),
            "R2xR2": (360.0, 2688.0),
            "Sigma2": (3960.0, 768.0),
        },
    ),
}


def collision_costs(D: int) -> CollisionCosts:
    if D not in COLLISION_COSTS:
        raise OutOfScopeError(f"collision-circuit factorization for D={D} is out of scope")
    return COLLISION_COSTS[D]


def _cost(pair: Tuple[float, float], log_inv_eps: float) -> float:
    return pair[0] + pair[1] * log_inv_eps


def register_sizes(N_C: int) -> Tuple[int, int]:
    """(n_B, n_C) = (ceil(log2 floor(N_C/2)), ceil(log2 N_C)); n_B is 0 when floor(N_C/2) <= 1."""
    half = N_C // 2
    n_B = math.ceil(math.log2(half)) if half > 1 else 0
    return n_B, math.ceil(math.log2(N_C))


def h_sum(N_C: int) -> float:
    """sum_l sum_{k = max(l, 1)}^{N_C - l} C(k, l) log2 C(k, l)."""
    total = 0.0
    for l in range(N_C // 2 + 1):
        for k in range(max(l, 1), N_C - l + 1):
            count = math.comb(k, l)
            total += count * math.log2(count)
    return total


def fibonacci_controls(N_C: int) -> float:
    """Closed form (2 + 4/sqrt 5) phi^N_C - 4 of the permutation-control count."""
    return (2.0 + 4.0 / math.sqrt(5.0)) * _PHI ** N_C - 4.0


def epsilon_total(D: int, N_C: int, epsilon: float) -> float:
    """4 eps + N_C [6 (12 + N_C) eps + (N_C + 2)((2 N_C + 5) eps_F1 + (N_C + 1) eps_F2)] / 24."""
    costs = collision_costs(D)
    eps_F1 = costs.linear_error * epsilon
    eps_F2 = costs.quadratic_error * epsilon
    inner = 6 * (12 + N_C) * epsilon + (N_C + 2) * ((2 * N_C + 5) * eps_F1 + (N_C + 1) * eps_F2)
    return 4 * epsilon + N_C * inner / 24.0


def error_constant(D: int, N_C: int) -> float:
    """K_D(N_C), ratio of total to per-rotation error assumed by the simplified form."""
    s = _SQRT2
    if D == 1:
        poly = 96 + (94 + 44 * s) * N_C + (27 + 42 * s) * N_C ** 2 + (5 + 10 * s) * N_C ** 3
    elif D == 2:
        poly = 96 + (122 + 398 * s) * N_C + (51 + 429 * s) * N_C ** 2 + (10 + 115 * s) * N_C ** 3
    else:
        raise OutOfScopeError(f"no simplified gate formula for D={D}")
    return poly / 24.0


def simplified_t_count(D: int, N_C: int, epsilon_target: float) -> float:
    """Bulk-term estimate N_C (N_C + 2)[(a N_C + b) log2(K/eps) + c] for a total error target."""
    log_term = math.log2(error_constant(D, N_C) / epsilon_target)
    scale = N_C * (N_C + 2)
    if D == 1:
        return scale * ((800 * N_C + 1760) * log_term + 476 * N_C + 1036)
    if D == 2:
        return scale * ((83908 * N_C + 204490) * log_term + 8.0 / 3.0 * (4331 * N_C + 9140))
    raise OutOfScopeError(f"no simplified gate formula for D={D}")


class GateBudget(BaseModel):
    """Full-ledger and simplified T-counts of one block-encoding query."""

    D: int
    N_C: int
    epsilon: float
    W: int
    Re: float
    total: float
    simplified: float
    epsilon_total: float
    K: float
    terms: Dict[str, float]
    components: Dict[str, float]

    @property
    def bulk_share(self) -> float:
        return self.terms["collision_blocks"] / self.total

    @property
    def relative_gap(self) -> float:
        return abs(self.simplified - self.total) / self.total


def gate_budget(D: int, N_C: int, epsilon: float, W: int, Re: float) -> GateBudget:
    """
    Evaluate every term of the T-count ledger for one query to the block-encoded A.

    Args:
        D: Dimension (1 or 2)
        N_C: Truncation order
        epsilon: Rotation synthesis precision (0 < eps < 1)
        W: Waiting-register qubits
        Re: Reynolds number (> 0)

    Returns:
        GateBudget; ``simplified`` is the closed form evaluated at total error K eps
    """
    costs = collision_costs(D)
    if not 0 < epsilon < 1:
        raise InvalidParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if N_C < 1 or W < 0 or Re <= 0:
        raise InvalidParameterError(f"invalid ledger inputs N_C={N_C}, W={W}, Re={Re}")

    L = math.log2(1.0 / epsilon)
    n_B, n_C = register_sizes(N_C)
    G1 = _cost(costs.linear, L)
    G2 = _cost(costs.quadratic, L)

    terms = {
        "wrapper": 78 * W + 28 * D * N_C + 64 + 102 * L + 24 * (D * (1 + 4 * N_C) + 2) * math.log2(Re),
        "streaming_shifts": 6 * N_C * (n_B + 1 + L),
        "block_adders": (N_C + 2) / 2.0 * (14 + 14 * n_B + 64 * n_C),
        "rotations": (N_C ** 2 + 4 * N_C) / 4.0 * (28 + 28 * (n_B + n_C) + 48 * L),
        "permutation_controls": fibonacci_controls(N_C) * (14 + 14 * (n_B + n_C)),
        "permutation_synthesis": 2 * h_sum(N_C),
        "collision_blocks": 2 * N_C * (N_C + 2) / 3.0 * ((2 * N_C + 5) * G1 + (N_C + 1) * G2),
    }
    total = sum(terms.values())
    K = error_constant(D, N_C)
    components = {name: _cost(pair, L) for name, pair in costs.components.items()}
    components["U_I+F1"] = G1
    components["U_F2"] = G2

    budget = GateBudget(
        D=D, N_C=N_C, epsilon=epsilon, W=W, Re=Re,
        total=total,
        simplified=simplified_t_count(D, N_C, K * epsilon),
        epsilon_total=epsilon_total(D, N_C, epsilon),
        K=K,
        terms=terms,
        components=components,
    )
    logger.debug(
        f"T-count D={D} N_C={N_C} eps={epsilon:g}: total={total:.4e}, bulk share {budget.bulk_share:.5f}"
    )
    return budget
