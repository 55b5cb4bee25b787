"""Distributions of additive functions over digit expansions.

q-ary, Cantor (mixed radix) and Zeckendorf numeration; exact finite-N
laws, limit laws, characteristic functions and itemised effective
bounds on the Kolmogorov distance to the limit.
"""

from .additive import (
    AdditiveFunction,
    CoquetVerdict,
    TailSum,
    Verdict,
    builtin,
    coquet_check,
    from_table,
    geometric,
    load_table,
    power_law,
    sum_of_digits,
    two_series,
    van_der_corput,
    zeck_indicator,
)
from .bounds import (
    BoundBreakdown,
    ExponentReport,
    berry_esseen_rhs,
    cantor_exponents,
    measure_distance,
    th2a_bound,
    th2b_bound,
    th2c_bound,
    th3_bound,
    thz2_bound,
    thz2_integral_bound,
)
from .charfun import (
    CharFunction,
    phi_bruteforce,
    phi_empirical,
    phi_product,
    phi_upper_bound,
    phi_zeckendorf,
    s_of_t,
    sj_integral,
)
from .config import ExperimentConfig
from .distribution import (
    DiscreteDistribution,
    LimitApprox,
    concentration,
    dist_block,
    dist_bruteforce,
    dist_exact_N,
    kolmogorov,
    limit_approx,
)
from .exceptions import (
    CapacityError,
    CriterionError,
    DigitewError,
    DigitValidationError,
    DomainError,
    HypothesisError,
    InsufficientBaseError,
    ParameterError,
    ResolutionError,
)
from .numeration import NumerationSystem, expand, fibonacci, length, validate, value

__version__ = "0.1.0"
