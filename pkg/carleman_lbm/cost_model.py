"""Block-encoding prefactors, qubit counts, query bounds, success probabilities and classical comparison."""

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

from pydantic import BaseModel

from carleman_lbm.errors import InvalidParameterError
from carleman_lbm.lattice_model import check_relaxation, velocity_model
from carleman_lbm.stats import FitResult, fit_exponential

logger = logging.getLogger("carleman_lbm")

# Fitted kappa ~ c Re^chi at beta = 3/4, keyed by (D, N_C): (chi, c)
CONDITION_FIT: Dict[Tuple[int, int], Tuple[float, float]] = {
    (1, 1): (1.167, 1.635),
    (1, 2): (1.691, 0.905),
    (1, 3): (2.283, 0.459),
    (1, 4): (2.792, 0.486),
    (2, 1): (1.588, 2.254),
    (2, 2): (1.936, 5.460),
}

# Query-complexity constants of the solver bound and its weakened single-term form
QUERY_LINEAR = 56.0
QUERY_LOG = 1.05
QUERY_LOG_CUBE = 2.78
QUERY_CONST = 3.17
QUERY_SIMPLIFIED = 85.0


def lookup_condition_fit(D: int, N_C: int) -> Optional[Tuple[float, float]]:
    """(chi, c) for a fitted (D, N_C) pair, or None if no fit exists."""
    return CONDITION_FIT.get((D, N_C))


def _check_dimension(D: int) -> None:
    if D not in (1, 2, 3):
        raise InvalidParameterError(f"Unsupported dimension D={D}")


def alpha_IF1(tau_bar_star: float, D: int) -> float:
    """Largest singular value of I + F1~ in closed form; tau = 1/2 allowed."""
    check_relaxation(tau_bar_star, allow_marginal=True)
    _check_dimension(D)
    x = tau_bar_star ** 2 - tau_bar_star
    inner = math.sqrt(9 ** D + 4 * 6 ** D * x)
    return math.sqrt(3 ** D + 2 ** (D + 1) * x + inner) / (math.sqrt(2 ** (D + 1)) * tau_bar_star)


def alpha_F2bar(tau_bar_star: float, D: int) -> float:
    """Largest singular value of F2~: (2 / (3 tau)) (3 / sqrt 2)^D sqrt(D + 2)."""
    check_relaxation(tau_bar_star, allow_marginal=True)
    _check_dimension(D)
    return 2.0 / (3.0 * tau_bar_star) * (3.0 / math.sqrt(2.0)) ** D * math.sqrt(D + 2)


def alpha_C(a_linear: float, a_quadratic: float, N_C: int) -> float:
    """sum_l C(N_C - l, l) a_linear^(N_C - 2l) a_quadratic^l."""
    if N_C < 1:
        raise InvalidParameterError(f"truncation order must be >= 1, got {N_C}")
    return sum(
        math.comb(N_C - l, l) * a_linear ** (N_C - 2 * l) * a_quadratic ** l
        for l in range(N_C // 2 + 1)
    )


def ancilla_qubits(N_C: int, D: int) -> int:
    """n_A = N_C + 1 + ceil(log2(floor(N_C/2) + 1)) + max_l [ceil(log2 C(N_C-l, l)) + l(4D - 1)]."""
    if N_C < 1:
        raise InvalidParameterError(f"truncation order must be >= 1, got {N_C}")
    permutations = max(
        math.ceil(math.log2(math.comb(N_C - l, l))) + l * (4 * D - 1)
        for l in range(N_C // 2 + 1)
    )
    return N_C + 1 + math.ceil(math.log2(N_C // 2 + 1)) + permutations


class PrefactorSet(BaseModel):
    tau_bar_star: float
    D: int
    N_C: int
    alpha_IF1: float
    alpha_F2bar: float
    alpha_C: float
    alpha_A: float
    n_A: int
    n_D: Optional[int] = None


def prefactors(
    tau_bar_star: float,
    D: int,
    N_C: int,
    Re: Optional[float] = None,
    beta: Optional[float] = None,
    W: int = 0,
) -> PrefactorSet:
    """Block-encoding prefactors of I+F1, F2, C and A, with ancilla (and optionally data) qubit counts."""
    a1 = alpha_IF1(tau_bar_star, D)
    a2 = alpha_F2bar(tau_bar_star, D)
    aC = alpha_C(a1, a2, N_C)
    n_D = None
    if Re is not None and beta is not None:
        n_D = qubit_counts(Re, beta, D, N_C, W).n_D
    return PrefactorSet(
        tau_bar_star=tau_bar_star, D=D, N_C=N_C, alpha_IF1=a1, alpha_F2bar=a2,
        alpha_C=aC, alpha_A=1.0 + aC, n_A=ancilla_qubits(N_C, D), n_D=n_D,
    )


class QubitCounts(BaseModel):
    n_D: int
    n_D_raw: float
    n_A: int
    n_D_registers: Optional[int] = None


def qubit_counts(
    Re: float,
    beta: float,
    D: int,
    N_C: int,
    W: int,
    N_x: Optional[int] = None,
    T_star: Optional[int] = None,
) -> QubitCounts:
    """
    Data and ancilla qubit counts.

    The data count n_D = beta [D (N_C + 1/2) + 1] log2 Re + 2 D N_C + log2 N_C + W
    is evaluated in real arithmetic and ceiled once at the end. When the integer
    lattice size and step count are given, the register-by-register count
    ceil(log2(T*+1)) + W + ceil(log2 N_C) + N_C (D ceil(log2 N_x) + 2D) is added.
    """
    if N_C < 1 or W < 0:
        raise InvalidParameterError(f"need N_C >= 1 and W >= 0, got N_C={N_C}, W={W}")
    if Re < 1:
        raise InvalidParameterError(f"Reynolds number must be >= 1, got {Re}")
    raw = beta * (D * (N_C + 0.5) + 1) * math.log2(Re) + 2 * D * N_C + math.log2(N_C) + W
    registers = None
    if N_x is not None and T_star is not None:
        registers = (
            math.ceil(math.log2(T_star + 1)) + W + math.ceil(math.log2(N_C))
            + N_C * (D * math.ceil(math.log2(N_x)) + 2 * D)
        )
    return QubitCounts(
        n_D=math.ceil(raw - 1e-9), n_D_raw=raw, n_A=ancilla_qubits(N_C, D), n_D_registers=registers
    )


def be_ratio_bound(tau_bar_star: float, N_C: int, D: int, norm_C: float) -> float:
    """BE ratio upper bound (1 + alpha_C) / sqrt(1 + ||C||^2)."""
    aC = alpha_C(alpha_IF1(tau_bar_star, D), alpha_F2bar(tau_bar_star, D), N_C)
    return (1.0 + aC) / math.sqrt(1.0 + norm_C ** 2)


def be_ratio_approx(N_C: int) -> float:
    """Simplified growth exp(N_C / 4) of the BE ratio."""
    return math.exp(N_C / 4.0)


def fit_be_ratio(N_C_values: Sequence[int], ratios: Sequence[float]) -> FitResult:
    """BE ~ b exp(a N_C) by OLS on ln BE; a is the fitted slope."""
    return fit_exponential(N_C_values, ratios)


class QueryBounds(BaseModel):
    rigorous: float
    simplified: float
    lower_proxy: Optional[float] = None


def query_bounds(
    kappa: float,
    alpha_A: float,
    norm_A: float,
    epsilon_Q: float,
    Re: Optional[float] = None,
    beta: Optional[float] = None,
    D: Optional[int] = None,
) -> QueryBounds:
    """
    Solver query counts for a block-encoded A.

    Args:
        kappa: Condition number (>= 1)
        alpha_A: Block-encoding prefactor of A
        norm_A: ||A|| (or its lower bound sqrt(1 + ||C||^2))
        epsilon_Q: Solver error in [1e-10, 1)
        Re, beta, D: When given, also the lower proxy Re^(beta (D/2 + 1))

    Returns:
        QueryBounds with the rigorous and single-term forms
    """
    if kappa < 1:
        raise InvalidParameterError(f"condition number must be >= 1, got {kappa}")
    if not 1e-10 <= epsilon_Q < 1:
        raise InvalidParameterError(f"solver error must lie in [1e-10, 1), got {epsilon_Q}")
    ratio = alpha_A / norm_A
    log_term = math.log(math.sqrt(1.0 - epsilon_Q ** 2) / epsilon_Q)
    rigorous = ratio * (
        QUERY_LINEAR * kappa + QUERY_LOG * kappa * log_term
        + QUERY_LOG_CUBE * math.log(kappa) ** 3 + QUERY_CONST
    )
    lower = None
    if Re is not None and beta is not None and D is not None:
        lower = Re ** (beta * (D / 2 + 1))
    return QueryBounds(rigorous=rigorous, simplified=QUERY_SIMPLIFIED * ratio * kappa, lower_proxy=lower)


def query_bound_re(Re: float, N_C: int, c: float, chi: float) -> float:
    """85 c exp(N_C / 4) Re^chi."""
    return QUERY_SIMPLIFIED * c * be_ratio_approx(N_C) * Re ** chi


def query_bound_error(
    Re: float, E: float, Gamma: float, epsilon_C: float, c: float, chi: float
) -> float:
    """85 c (E / eps_C)^(1 / (4 |Gamma|)) Re^chi, with N_C chosen from the error model."""
    if Gamma == 0:
        raise InvalidParameterError("error model with Gamma = 0 gives no truncation order")
    return QUERY_SIMPLIFIED * c * (E / epsilon_C) ** (1.0 / (4.0 * abs(Gamma))) * Re ** chi


def measurement_overhead(Re: float, beta: float) -> float:
    """Amplitude-estimation overhead q_M = Re^(beta / 2)."""
    return Re ** (beta / 2.0)


def p_final(norm_H: float, norm_F: float, W: int) -> float:
    """Probability of landing in the idle rows: 1 / (1 + N_H / ((2^W - 1) N_F))."""
    if W < 1:
        raise InvalidParameterError(f"final-state probability needs W >= 1, got {W}")
    return 1.0 / (1.0 + norm_H / ((2 ** W - 1) * norm_F))


def p_first_block(g_norm: float, N_C: int) -> float:
    """Probability of the first Carleman block: (1 - |g|^2) / (1 - |g|^(2 N_C)), limit 1/N_C at |g| = 1."""
    if N_C < 1:
        raise InvalidParameterError(f"truncation order must be >= 1, got {N_C}")
    x = g_norm ** 2
    if math.isclose(x, 1.0, rel_tol=1e-12):
        return 1.0 / N_C
    return (1.0 - x) / (1.0 - x ** N_C)


class Probabilities(BaseModel):
    q_M: float
    p_final: Optional[float] = None
    p_block1: Optional[float] = None


def measurement_and_probabilities(
    Re: float,
    beta: float,
    N_C: int,
    W: int,
    norm_H: Optional[float] = None,
    norm_F: Optional[float] = None,
    g_norm: Optional[float] = None,
) -> Probabilities:
    """Measurement overhead plus whichever success probabilities the supplied norms allow."""
    return Probabilities(
        q_M=measurement_overhead(Re, beta),
        p_final=p_final(norm_H, norm_F, W) if norm_H is not None and norm_F is not None else None,
        p_block1=p_first_block(g_norm, N_C) if g_norm is not None else None,
    )


class ClassicalComparison(BaseModel):
    q_c: float
    lam: float
    lam_with_measurement: float
    speedup_best: float
    speedup_best_with_measurement: float
    classical_bits: Optional[int] = None
    quantum_qubits: Optional[int] = None

    @property
    def advantage(self) -> bool:
        return self.lam > 0


def classical_comparison(
    Re: float,
    beta: float,
    D: int,
    chi: float,
    N_x: Optional[int] = None,
    quantum_qubits: Optional[int] = None,
) -> ClassicalComparison:
    """
    Classical update count Re^(beta (D+1)) against the fitted quantum exponent.

    lambda = beta (D + 1) - chi; measurement costs a further beta / 2.
    With N_x given, classical memory is N Q 64 bits.
    """
    _check_dimension(D)
    bits = None
    if N_x is not None:
        bits = N_x ** D * velocity_model(D).Q * 64
    lam = beta * (D + 1) - chi
    return ClassicalComparison(
        q_c=Re ** (beta * (D + 1)),
        lam=lam,
        lam_with_measurement=lam - beta / 2.0,
        speedup_best=Re ** (beta * D / 2.0),
        speedup_best_with_measurement=Re ** (beta * (D - 1) / 2.0),
        classical_bits=bits,
        quantum_qubits=quantum_qubits,
    )


class CostReport(BaseModel):
    """Everything the cost study reports for one (Re, N_C) point."""

    Re: float
    beta: float
    D: int
    N_C: int
    W: int
    prefactors: PrefactorSet
    qubits: QubitCounts
    kappa: float
    be_ratio: float
    queries: QueryBounds
    probabilities: Probabilities
    classical: ClassicalComparison


def build_cost_report(
    Re: float,
    beta: float,
    D: int,
    N_C: int,
    W: int,
    tau_bar_star: float,
    norm_C: float,
    chi: float,
    c: float,
    epsilon_Q: float = 1e-3,
    N_x: Optional[int] = None,
    T_star: Optional[int] = None,
) -> CostReport:
    """Assemble a CostReport with kappa taken from the fitted power law c Re^chi."""
    pre = prefactors(tau_bar_star, D, N_C, Re=Re, beta=beta, W=W)
    qubits = qubit_counts(Re, beta, D, N_C, W, N_x=N_x, T_star=T_star)
    kappa = max(1.0, c * Re ** chi)
    norm_A = math.sqrt(1.0 + norm_C ** 2)
    report = CostReport(
        Re=Re, beta=beta, D=D, N_C=N_C, W=W,
        prefactors=pre,
        qubits=qubits,
        kappa=kappa,
        be_ratio=be_ratio_bound(tau_bar_star, N_C, D, norm_C),
        queries=query_bounds(kappa, pre.alpha_A, norm_A, epsilon_Q, Re=Re, beta=beta, D=D),
        probabilities=measurement_and_probabilities(Re, beta, N_C, W),
        classical=classical_comparison(
            Re, beta, D, chi, N_x=N_x, quantum_qubits=qubits.n_D + qubits.n_A
        ),
    )
    logger.debug(f"cost report Re={Re} N_C={N_C}: q_Q ~ {report.queries.simplified:.3e}")
    return report
