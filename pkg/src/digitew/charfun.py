"""Characteristic functions of additive functions and their decay bounds."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .additive import AdditiveFunction, TailSum
from .distribution import DiscreteDistribution
from .exceptions import DegenerateInputError, DomainError, ParameterError, ResolutionError
from .numeration import GOLDEN, ZECKENDORF, _fib_unchecked, expand, length

ZERO_THRESHOLD = 1e-6
LOG_ACCUMULATE_AFTER = 10_000
AGREEMENT_TOL = 1e-9


class TruncationWarning(UserWarning):
    """A truncation bound could not be certified and was set to its trivial value."""


def _as_t(t):
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0


def _cell_factor(f: AdditiveFunction, j: int, t: np.ndarray) -> np.ndarray:
    """(1/a_j) sum_d exp(i t f(d q_j)) for every t."""
    lvl = f.level(j)
    return np.exp(1j * np.multiply.outer(t, lvl)).mean(axis=-1)


# empirical -----------------------------------------------------------------

def phi_empirical(f: AdditiveFunction, N: int, t):
    """(1/N) sum_{n<N} exp(i t f(n)) via the digit-block decomposition of [0, N)."""
    if N < 1:
        raise ParameterError("N must be at least 1")
    t, scalar = _as_t(t)
    ds = expand(N, f.system)
    nz = list(ds.positions())
    total = np.zeros(t.shape, dtype=complex)
    prefix = 0.0
    if f.system.kind == ZECKENDORF:
        top = nz[-1][0] if nz else 2
        h = {1: np.ones(t.shape, complex), 2: np.ones(t.shape, complex)}
        for k in range(3, top + 1):
            Fk, Fk1, Fk2 = _fib_unchecked(k), _fib_unchecked(k - 1), _fib_unchecked(k - 2)
            e = np.exp(1j * t * f.value_at(k - 1))
            h[k] = (Fk1 * h[k - 1] + Fk2 * e * h[k - 2]) / Fk
        for j, _ in reversed(nz):
            total += np.exp(1j * t * prefix) * (_fib_unchecked(j) / N) * h[j]
            prefix += f.value_at(j)
    else:
        top = nz[-1][0] if nz else 0
        blocks = [np.ones(t.shape, complex)]
        for j in range(top):
            blocks.append(blocks[-1] * _cell_factor(f, j, t))
        for j, d in reversed(nz):
            lvl = f.level(j)
            w = f.system.base(j) / N
            for e in range(d):
                total += np.exp(1j * t * (prefix + lvl[e])) * w * blocks[j]
            prefix += lvl[d]
    return complex(total) if scalar else total


def phi_bruteforce(f: AdditiveFunction, N: int, t):
    t, scalar = _as_t(t)
    vals = f.eval_many(np.arange(N, dtype=np.int64))
    out = np.array([np.exp(1j * tt * vals).mean() for tt in np.atleast_1d(t)])
    return complex(out[0]) if scalar else out.reshape(t.shape)


# infinite product ----------------------------------------------------------

def product_tail(f: AdditiveFunction, J: int) -> float:
    """Normalised absolute tail sum_{j>=J} (1/a_j) sum_d |f(d q_j)| (inf if unknown)."""
    tail = f.tail_sum(J, "absolute", 1)
    return math.inf if tail is None else tail.bound


def truncation_bound(t, tail: float):
    """min(2, |t| * tail), doubled once |t| * tail exceeds 1/2."""
    x = np.abs(np.asarray(t, dtype=float)) * tail if math.isfinite(tail) else np.full(np.shape(t), np.inf)
    x = np.where(np.asarray(t) == 0, 0.0, x)
    x = np.where(x > 0.5, 2.0 * x, x)
    return np.minimum(2.0, x)


def phi_product(f: AdditiveFunction, t, J: int):
    """prod_{j<J} (1/a_j) sum_d exp(i t f(d q_j)) and its truncation bound."""
    if f.system.kind == ZECKENDORF:
        raise DomainError("the product formula applies to q-ary and Cantor systems")
    if J < 1:
        raise ParameterError("J must be at least 1")
    t, scalar = _as_t(t)
    if J <= LOG_ACCUMULATE_AFTER:
        val = np.ones(t.shape, complex)
        for j in range(J):
            val = val * _cell_factor(f, j, t)
    else:
        logmag = np.zeros(t.shape)
        phase = np.ones(t.shape, complex)
        dead = np.zeros(t.shape, bool)
        for j in range(J):
            c = _cell_factor(f, j, t)
            a = np.abs(c)
            dead |= a == 0
            logmag += np.log(np.where(a == 0, 1.0, a))
            phase *= np.where(a == 0, 1.0, c / np.where(a == 0, 1.0, a))
        val = np.where(dead, 0.0, np.exp(logmag) * phase)
    tail = product_tail(f, J)
    if not math.isfinite(tail):
        warnings.warn(f"{f.name}: no finite tail descriptor, truncation bound set to 2",
                      TruncationWarning, stacklevel=2)
    bound = truncation_bound(t, tail)
    if scalar:
        return complex(val), float(bound)
    return val, bound


def product_levels_for(f: AdditiveFunction, t_max: float, target: float = 1e-12,
                       cap: int = 100_000) -> int:
    """Smallest J with |t_max| * tail(J) <= target (or the cap)."""
    J = 1
    while J < cap:
        tail = product_tail(f, J)
        if abs(t_max) * tail <= target:
            return J
        if not math.isfinite(tail):
            return cap
        J *= 2
    return cap


# Zeckendorf ----------------------------------------------------------------

class ZeckendorfMode(str, enum.Enum):
    RECURRENCE_PRODUCT = "RecurrenceProduct"
    MATRIX_FALLBACK = "MatrixFallback"


@dataclass(frozen=True)
class ZeckendorfState:
    """Diagnostics of one evaluation of H_k(t)/F_k.

    ``r`` holds r_2..r_k, ``eps`` the values r_j - gamma, ``eta`` the
    values exp(i t f(F_j)) - 1 for j = 2..k-1.
    """

    r: tuple[complex, ...] = field(repr=False)
    eps: tuple[complex, ...] = field(repr=False)
    eta: tuple[complex, ...] = field(repr=False)
    H_pair: tuple[complex, complex]
    mode: ZeckendorfMode
    agreement: float


def _zeck_pair(f: AdditiveFunction, t: float, k: int):
    """Normalised pair recurrence: (H_k/F_k, H_{k-1}/F_{k-1})."""
    h_prev, h = 1.0 + 0j, 1.0 + 0j  # H_1/F_1, H_2/F_2
    rho = 1.0
    for m in range(3, k + 1):
        rho = 0.5 if m == 3 else 1.0 / (1.0 + rho)
        e = complex(math.cos(t * f.value_at(m - 1)), math.sin(t * f.value_at(m - 1)))
        h_prev, h = h, rho * h + (1.0 - rho) * e * h_prev
    return h, h_prev


def _log_fib(k: int) -> float:
    if k <= 1400:
        return math.log(_fib_unchecked(k))
    return k * math.log(GOLDEN) - 0.5 * math.log(5.0)


def phi_zeckendorf(f: AdditiveFunction, t: float, k: int):
    """H_k(t)/F_k with H_k = sum_{n<F_k} exp(i t f(n)), plus diagnostics."""
    if f.system.kind != ZECKENDORF:
        raise DomainError("phi_zeckendorf needs a Zeckendorf-additive function")
    if k < 2:
        raise ParameterError("k must be at least 2")
    t = float(t)
    h, h_prev = _zeck_pair(f, t, k)
    rs = [1.0 + 0j]
    etas = []
    mode = ZeckendorfMode.RECURRENCE_PRODUCT
    for j in range(2, k):
        e = complex(math.cos(t * f.value_at(j)), math.sin(t * f.value_at(j)))
        etas.append(e - 1.0)
        rs.append(1.0 + e / rs[-1])
        if abs(rs[-1]) < ZERO_THRESHOLD:
            mode = ZeckendorfMode.MATRIX_FALLBACK
            break
    agreement = 0.0
    if mode is ZeckendorfMode.RECURRENCE_PRODUCT:
        logs = math.fsum(math.log(abs(r)) for r in rs) - _log_fib(k)
        ang = math.fsum(math.atan2(r.imag, r.real) for r in rs)
        prod = math.exp(logs) * complex(math.cos(ang), math.sin(ang))
        agreement = abs(prod - h) / max(abs(h), 1e-300)
        if agreement > AGREEMENT_TOL and abs(h) > 1e-200:
            mode = ZeckendorfMode.MATRIX_FALLBACK
        else:
            h = prod if abs(h) > 1e-200 else h
    if k <= 1400:
        pair = (h * _fib_unchecked(k), h_prev * _fib_unchecked(k - 1))
    else:
        pair = (complex("nan"), complex("nan"))
    state = ZeckendorfState(tuple(rs), tuple(r - GOLDEN for r in rs), tuple(etas), pair,
                            mode, agreement)
    return h, state


def epsilon_sequence(etas, eps0: complex, threshold: float = 1e-12):
    """Iterate eps_{k+1} = (eta_k - (gamma - 1) eps_k) / (gamma + eps_k)."""
    out = [complex(eps0)]
    for eta in etas:
        e = out[-1]
        den = GOLDEN + e
        if abs(den) <= threshold:
            raise DegenerateInputError("gamma + eps vanished")
        out.append((eta - (GOLDEN - 1.0) * e) / den)
    return out


def zeckendorf_matrix(f: AdditiveFunction, t: float, k: int) -> np.ndarray:
    """A_k(t) = [[1, exp(i t f(F_k))], [1, 0]]."""
    return np.array([[1.0, np.exp(1j * t * f.value_at(k))], [1.0, 0.0]])


def _pair_gain(c):
    """Spectral norm of A_{j+1} A_j divided by gamma**2; c = cos(t f(F_{j+1}))."""
    tr = 5.0 + 2.0 * np.asarray(c)
    lam = 0.5 * (tr + np.sqrt(np.maximum(tr * tr - 4.0, 0.0)))
    return np.sqrt(lam) / GOLDEN**2


def _pair_decay_constant() -> float:
    """Largest c0 with pair gain <= exp(-c0 (1 - cos)) on the whole range."""
    x = np.linspace(1e-6, 2.0, 200_001)
    return float(np.min(-np.log(_pair_gain(1.0 - x)) / x)) * (1.0 - 1e-9)


PAIR_DECAY = _pair_decay_constant()
ZECKENDORF_PREFACTOR = math.sqrt(10.0) / GOLDEN**2
ZECKENDORF_C = 8.0 * PAIR_DECAY


# decay bounds -----------------------------------------------------------------

def _dist_to_int(x):
    return np.abs(x - np.rint(x))


@dataclass(frozen=True)
class SofT:
    """Cells (d, j) with |f(d q_j)| <= pi/|t| and their quadratic sum.

    All cells at levels >= ``j_min`` belong to S(t); cells below it were
    enumerated. ``complete`` is False when the enumeration hit its cap
    without a tail descriptor, in which case ``total`` is a lower bound.
    """

    j_min: int | None
    explicit_sum: float
    tail: TailSum | None
    total: float
    complete: bool
    cells: tuple[tuple[int, int], ...] = field(repr=False, default=())


def s_of_t(f: AdditiveFunction, t: float, weight_power: int = 0, stop: int | None = None,
           cap: int = 10_000) -> SofT:
    """S(t) and sum over S(t) of a_j**(-weight_power) f(d q_j)**2.

    ``stop`` restricts to levels j < stop.
    """
    if t == 0:
        raise DegenerateInputError("S(t) needs t != 0")
    thr = math.pi / abs(t)
    start = f.system.start_index
    j = start
    parts, cells = [], []
    limit = stop if stop is not None else start + cap
    while j < limit:
        if stop is None:
            sup = f.sup_tail(j)
            if sup is not None and sup <= thr:
                tail = f.tail_sum(j, "quadratic", weight_power)
                expl = math.fsum(parts)
                return SofT(j, expl, tail, expl + tail.value, True, tuple(cells))
        vals = f.cells(j)
        keep = np.abs(vals) <= thr
        if weight_power and f.system.kind != ZECKENDORF:
            w = float(f.system.quotient(j)) ** (-weight_power)
        else:
            w = 1.0
        parts.append(w * math.fsum(vals[keep] ** 2))
        cells.extend((int(d) + 1, j) for d in np.flatnonzero(keep))
        j += 1
    expl = math.fsum(parts)
    return SofT(None, expl, None, expl, stop is not None, tuple(cells))


@dataclass(frozen=True)
class UpperBound:
    s_bound: float
    norm_bound: float
    bound: float
    flags: tuple[str, ...] = ()


def _levels_for_bound(f: AdditiveFunction, t: float, cap: int = 2000) -> int:
    j = f.system.start_index
    while j < cap:
        sup = f.sup_tail(j)
        if sup is None or sup * abs(t) > 1e-9:
            j += 1
            continue
        return j
    return cap


def phi_upper_bound(f: AdditiveFunction, t: float, J: int | None = None,
                    zeckendorf_c: float | None = None) -> UpperBound:
    """Upper bounds on |phi(t)| for the limit law.

    q-ary/Cantor: the S(t) form exp(-(2/pi^2) t^2 sum_{S(t)} f^2/a_j^2)
    and the sharper exp(-sum_j (8/a_j^2) sum_d ||t f/(2 pi)||^2).
    Zeckendorf: spectral norms of consecutive matrix pairs; the exponent
    form uses ``zeckendorf_c`` (default: the constant implied by the pair
    norms, which keeps the bound rigorous).
    """
    t = float(t)
    if t == 0:
        return UpperBound(1.0, 1.0, 1.0)
    flags = []
    if J is None:
        J = _levels_for_bound(f, t)
    start = f.system.start_index
    if f.system.kind == ZECKENDORF:
        vals = np.array([f.value_at(j) for j in range(start, max(J, start + 1))])
        idx = np.arange(start, start + vals.size)
        gains = _pair_gain(np.cos(t * vals))
        odd = float(np.prod(gains[(idx % 2 == 1) & (idx >= 3)]))
        even = float(np.prod(gains[(idx % 2 == 0) & (idx >= 4)]))
        s_bound = min(1.0, ZECKENDORF_PREFACTOR * min(odd, even))
        d2 = _dist_to_int(t * vals / (2 * math.pi)) ** 2
        c = ZECKENDORF_C if zeckendorf_c is None else zeckendorf_c
        if zeckendorf_c is not None:
            flags.append("zeckendorf constant uncalibrated")
        e_odd = math.fsum(d2[(idx % 2 == 1) & (idx >= 3)])
        e_even = math.fsum(d2[(idx % 2 == 0) & (idx >= 4)])
        norm_bound = min(1.0, ZECKENDORF_PREFACTOR * math.exp(-c * max(e_odd, e_even)))
        return UpperBound(s_bound, norm_bound, min(s_bound, norm_bound), tuple(flags))
    st = s_of_t(f, t, weight_power=2)
    if not st.complete:
        flags.append("S(t) remainder dropped")
    s_bound = math.exp(-(2.0 / math.pi**2) * t * t * st.total)
    expo = []
    for j in range(start, J):
        a = f.system.quotient(j)
        expo.append(8.0 / a**2 * math.fsum(_dist_to_int(t * f.cells(j) / (2 * math.pi)) ** 2))
    norm_bound = math.exp(-math.fsum(expo))
    return UpperBound(s_bound, norm_bound, min(s_bound, norm_bound), tuple(flags))


def delange_difference_bound(f: AdditiveFunction, N: int, t: float, h: int) -> float:
    """Right-hand side bounding |phi_N(t) - phi_{q_{L+1}}(t)| (q-ary/Cantor)."""
    if f.system.kind == ZECKENDORF:
        raise DomainError("difference bound is stated for q-ary and Cantor systems")
    if h < 1 or N < f.system.base(h):
        raise ParameterError("need h >= 1 and N >= q_h")
    L = length(N, f.system)
    if f.system.kind == "qary":
        head = 2.0 / f.system.q ** (h - 1)
    else:
        head = 2.0 / math.prod(f.system.quotient(j) for j in range(L - h + 1, L))
    s = []
    for j in range(L - h + 1, L + 1):
        c = f.cells(j)
        s.append(float(np.max(np.sqrt(np.maximum(0.0, 1.0 - np.cos(t * c))), initial=0.0)))
    return head + 2.0 * math.sqrt(2.0) * math.fsum(s)


# characteristic-function objects -------------------------------------------------

class CharFunction:
    """t -> (value, trunc_bound)."""

    def __init__(self, kind: str, evaluate: Callable, label: str = ""):
        self.kind = kind
        self._evaluate = evaluate
        self.label = label or kind

    def __repr__(self):
        return f"CharFunction({self.label})"

    def __call__(self, t: float):
        v, b = self.evaluate(np.array([float(t)]))
        return complex(v[0]), float(b[0])

    def evaluate(self, ts):
        ts = np.asarray(ts, dtype=float)
        v, b = self._evaluate(ts)
        v = np.where(ts == 0, 1.0 + 0j, v)
        b = np.where(ts == 0, 0.0, b)
        return v, b

    @classmethod
    def empirical(cls, f: AdditiveFunction, N: int) -> CharFunction:
        return cls("Empirical", lambda ts: (phi_empirical(f, N, ts), np.zeros(ts.shape)),
                   f"empirical({f.name}, N={N})")

    @classmethod
    def product(cls, f: AdditiveFunction, J: int) -> CharFunction:
        def ev(ts):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                return phi_product(f, ts, J)
        return cls("ProductLimit", ev, f"product({f.name}, J={J})")

    @classmethod
    def zeckendorf(cls, f: AdditiveFunction, k: int) -> CharFunction:
        def ev(ts):
            return (np.array([phi_zeckendorf(f, t, k)[0] for t in ts]), np.zeros(ts.shape))
        return cls("ZeckendorfRecurrence", ev, f"zeckendorf({f.name}, k={k})")

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> CharFunction:
        """Uniform law on [a, b]."""
        def ev(ts):
            half = 0.5 * ts * (b - a)
            return np.exp(0.5j * ts * (a + b)) * np.sinc(half / math.pi), np.zeros(ts.shape)
        return cls("ClosedFormUniform", ev, f"uniform[{a:g},{b:g}]")

    @classmethod
    def from_distribution(cls, d: DiscreteDistribution) -> CharFunction:
        def ev(ts):
            out = np.empty(ts.shape, complex)
            for i, t in enumerate(ts):
                out[i] = np.dot(d.masses, np.exp(1j * t * d.values))
            return out, np.zeros(ts.shape)
        return cls("Atomic", ev, f"atomic({len(d)} atoms)")


# S_J integral -----------------------------------------------------------------

@dataclass(frozen=True)
class SJResult:
    value: float
    error: float
    method: str
    points: int
    resolved: bool


def _sj_integrand(tau: np.ndarray, B: float, J: int) -> np.ndarray:
    s = np.zeros_like(tau)
    x = tau / math.pi
    for _ in range(J + 1):
        s += _dist_to_int(x) ** 2
        x = x * B
    return np.exp(-0.5 * s)


def _trapezoid(B, J, n, chunk=1 << 20):
    h = (B - 1.0) / n
    acc = []
    for lo in range(0, n + 1, chunk):
        idx = np.arange(lo, min(n + 1, lo + chunk), dtype=float)
        y = _sj_integrand(1.0 + idx * h, B, J)
        w = np.ones_like(y)
        if lo == 0:
            w[0] = 0.5
        if lo + chunk >= n + 1:
            w[-1] = 0.5
        acc.append(float(np.dot(w, y)))
    return math.fsum(acc) * h


def _shifted_lattice(B, J, n, reps, seed, chunk=1 << 20):
    rng = np.random.default_rng(seed)
    est = []
    for _ in range(reps):
        u = rng.random()
        parts = []
        for lo in range(0, n, chunk):
            idx = np.arange(lo, min(n, lo + chunk), dtype=float)
            parts.append(float(_sj_integrand(1.0 + (B - 1.0) * ((idx + u) / n), B, J).sum()))
        est.append(math.fsum(parts) * (B - 1.0) / n)
    est = np.array(est)
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(reps))


def sj_points_needed(B: float, J: int, points_per_period: int = 16) -> int:
    period = math.pi / B**J
    return max(1024, math.ceil(points_per_period * (B - 1.0) / period))


def sj_integral(B: float, J: int, *, points_per_period: int = 16, max_points: int = 2**23,
                fallback: str | None = "lattice", reps: int = 8, seed: int = 0) -> SJResult:
    """Integral over [1, B] of exp(-(1/2) sum_{j<=J} ||tau B^j / pi||^2).

    The trapezoid rule is used when ``points_per_period`` points per
    period pi/B^J fit in ``max_points``; the error estimate compares
    against the half-resolution rule. Beyond that budget a randomly
    shifted equispaced rule (``fallback='lattice'``) gives an unbiased
    estimate with a standard error, flagged as unresolved; with
    ``fallback=None`` a ResolutionError carries the bound obtained at
    the largest resolvable J (the integral is nonincreasing in J).
    """
    if not B > 1:
        raise ParameterError("B must exceed 1")
    if J < 0:
        raise ParameterError("J must be nonnegative")
    n = sj_points_needed(B, J, points_per_period)
    n += n % 2
    if n <= max_points:
        fine = _trapezoid(B, J, n)
        coarse = _trapezoid(B, J, n // 2)
        return SJResult(fine, abs(fine - coarse) / 3.0, "trapezoid", n + 1, True)
    if fallback is None:
        Jr = J
        while Jr > 0 and sj_points_needed(B, Jr, points_per_period) > max_points:
            Jr -= 1
        part = sj_integral(B, Jr, points_per_period=points_per_period, max_points=max_points)
        raise ResolutionError(
            f"J={J} needs {n} points (budget {max_points}); bound from J={Jr}",
            partial_bound=part.value + part.error,
        )
    if fallback != "lattice":
        raise ParameterError(f"unknown fallback {fallback!r}")
    per = max(1024, max_points // reps)
    value, err = _shifted_lattice(B, J, per, reps, seed)
    return SJResult(value, err, "shifted-lattice", per * reps, False)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r2: float


def fit_decay(Js, values) -> DecayFit:
    """Least-squares fit of log(values) against J."""
    from scipy.stats import linregress

    res = linregress(np.asarray(Js, float), np.log(np.asarray(values, float)))
    return DecayFit(float(res.slope), float(res.intercept), float(res.rvalue**2))
