import cmath
import math
import warnings

import numpy as np
import pytest

from digitew.additive import AdditiveFunction, geometric, power_law, sum_of_digits, van_der_corput
from digitew.charfun import (
    CharFunction,
    TruncationWarning,
    ZeckendorfMode,
    delange_difference_bound,
    epsilon_sequence,
    fit_decay,
    phi_bruteforce,
    phi_empirical,
    phi_product,
    phi_upper_bound,
    phi_zeckendorf,
    s_of_t,
    sj_integral,
    zeckendorf_matrix,
)
from digitew.exceptions import DegenerateInputError, DomainError, ParameterError, ResolutionError
from digitew.numeration import GOLDEN, NumerationSystem
from oracles import fib_list, zeckendorf_indices

Q2 = NumerationSystem.qary(2)
Z = NumerationSystem.zeckendorf()


def test_empirical_matches_naive_sum():
    f = power_law(NumerationSystem.qary(3), 1.5)
    N = 777
    ts = np.linspace(-5, 5, 11)
    ref = [sum(cmath.exp(1j * t * f(n)) for n in range(N)) / N for t in ts]
    assert np.max(np.abs(phi_empirical(f, N, ts) - ref)) <= 1e-12


def test_zeckendorf_empirical_matches_naive():
    f = power_law(Z, 1.2)
    N = 1000
    vals = [math.fsum(j**-1.2 for j in zeckendorf_indices(n)) for n in range(N)]
    for t in (0.3, 2.0, -7.0):
        ref = sum(cmath.exp(1j * t * v) for v in vals) / N
        assert abs(phi_empirical(f, N, t) - ref) <= 1e-12


def test_product_is_block_law():
    f = geometric(NumerationSystem.parse("cantor:2,3|period:2"), 0.7)
    ts = np.linspace(-10, 10, 21)
    v, _ = phi_product(f, ts, 8)
    assert np.max(np.abs(v - phi_empirical(f, f.system.base(8), ts))) <= 1e-12


def test_product_log_accumulation_agrees():
    f = power_law(Q2, 2.0)
    t = np.array([0.5, 3.0])
    J = 12000
    direct = np.ones(2, complex)
    for j in range(J):
        direct *= np.exp(1j * np.multiply.outer(t, f.level(j))).mean(axis=1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        logged, _ = phi_product(f, t, J)
    assert np.max(np.abs(direct - logged)) <= 1e-10


def test_truncation_warning_without_descriptor():
    f = AdditiveFunction(Q2, lambda j, d: 2.0**-j)
    with pytest.warns(TruncationWarning):
        _, b = phi_product(f, 1.0, 10)
    assert b == 2.0


def test_vdc_uniform_closed_form():
    f = van_der_corput(Q2)
    for t in (0.5, 3.0, 40.0):
        v, b = phi_product(f, t, 30)
        exact = cmath.exp(0.5j * t) * math.sin(t / 2) / (t / 2)
        assert abs(v - exact) <= b + 1e-12


def test_zeckendorf_recurrence_and_matrix():
    f = power_law(Z, 1.5)
    fib = fib_list(20)
    for t in (0.7, 4.0):
        v, st = phi_zeckendorf(f, t, 18)
        brute = phi_bruteforce(f, fib[18], t)
        assert abs(v - brute) <= 1e-12
        assert st.mode is ZeckendorfMode.RECURRENCE_PRODUCT
        # (H_k, H_{k-1}) = A_{k-1} ... A_2 (H_2, H_1)
        vec = np.ones(2, complex)
        for k in range(2, 18):
            vec = zeckendorf_matrix(f, t, k) @ vec
        assert abs(vec[0] - v * fib[18]) <= 1e-9 * fib[18]
        assert abs(st.H_pair[0] - vec[0]) <= 1e-9 * fib[18]


def test_zeckendorf_matrix_shape():
    f = power_law(Z, 1.5)
    A = zeckendorf_matrix(f, 1.0, 5)
    assert A.shape == (2, 2)
    assert A[1, 1] == 0 and A[0, 0] == 1
    assert abs(abs(np.linalg.det(A)) - 1) <= 1e-14


def test_epsilon_recurrence_matches_ratios():
    f = power_law(Z, 1.5)
    _, st = phi_zeckendorf(f, 2.0, 30)
    # r_{j+1} = 1 + e_j / r_j, eps_j = r_j - gamma
    eps = epsilon_sequence(st.eta[1:], st.eps[1])
    assert np.max(np.abs(np.array(eps) - np.array(st.eps[1:]))) <= 1e-12


def test_epsilon_degenerate():
    with pytest.raises(DegenerateInputError):
        epsilon_sequence([0.0], -GOLDEN)


def test_s_of_t_geometric():
    f = geometric(Q2, 0.5)
    st = s_of_t(f, 10.0)
    # cells 2**-j <= pi / 10 start at j = 2
    assert st.j_min == 2 and st.complete
    assert st.total == pytest.approx(sum(4.0**-j for j in range(2, 200)))
    with pytest.raises(DegenerateInputError):
        s_of_t(f, 0.0)


def test_upper_bound_dominates_limit_phi():
    for f in (geometric(Q2, 0.5), power_law(NumerationSystem.qary(3), 1.5)):
        for t in (0.5, 2.0, 9.0, 30.0):
            v, b = phi_product(f, t, 400)
            assert abs(v) <= phi_upper_bound(f, t).bound + b + 1e-12


def test_zeckendorf_upper_bound_dominates():
    f = power_law(Z, 1.5)
    for t in (1.0, 5.0, 20.0):
        v, _ = phi_zeckendorf(f, t, 60)
        assert abs(v) <= phi_upper_bound(f, t).bound * (1 + 1e-9) + 1e-9


def test_delange_difference_holds_small():
    f = sum_of_digits(Q2)
    for N in (37, 100, 1000):
        for t in (0.1, 1.0, 2.5):
            L = int(math.log2(N))
            lhs = abs(phi_empirical(f, N, t) - phi_empirical(f, 2 ** (L + 1), t))
            assert lhs <= delange_difference_bound(f, N, t, 2) + 1e-12
    with pytest.raises(DomainError):
        delange_difference_bound(power_law(Z, 2.0), 10, 1.0, 1)
    with pytest.raises(ParameterError):
        delange_difference_bound(f, 3, 1.0, 4)


def test_charfunction_objects():
    u = CharFunction.uniform(0, 2)
    v, _ = u(1.0)
    assert v == pytest.approx(cmath.exp(1j) * math.sin(1.0))
    vals, _ = CharFunction.product(geometric(Q2, 0.5), 40).evaluate([0.0, 1.0])
    assert vals[0] == 1.0
    assert abs(vals[1] - v) <= 1e-11


def test_sj_small_J_in_unit_interval():
    r = sj_integral(2.0, 0)
    assert 0 < r.value <= 1.0 and r.resolved


def test_sj_monotone_in_J():
    vals = [sj_integral(2.0, J).value for J in range(0, 10)]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_sj_resolution_error():
    with pytest.raises(ResolutionError) as info:
        sj_integral(2.0, 30, max_points=2**14, fallback=None)
    assert 0 < info.value.partial_bound <= 1


def test_fit_decay_exact_exponential():
    fit = fit_decay(range(5), [math.exp(-0.3 * j + 1) for j in range(5)])
    assert fit.slope == pytest.approx(-0.3) and fit.r2 == pytest.approx(1.0)
