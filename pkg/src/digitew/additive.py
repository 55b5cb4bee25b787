"""Additive functions, built-in families, tail sums and series criteria."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import zeta

from .exceptions import DomainError, ParameterError
from .numeration import (
    CANTOR,
    GOLDEN,
    QARY,
    ZECKENDORF,
    NumerationSystem,
    _fib_unchecked,
    expand,
)

MOMENTS = ("linear", "absolute", "quadratic")


class TailSum(NamedTuple):
    """A remainder sum from some level on.

    ``value`` is the sum itself (signed for the linear moment), ``bound``
    an upper bound on its absolute value and ``exact`` whether ``value``
    is a closed-form evaluation rather than an estimate.
    """

    value: float
    bound: float
    exact: bool = True

    @property
    def finite(self) -> bool:
        return math.isfinite(self.bound)


DIVERGENT = TailSum(math.inf, math.inf, True)
ZERO_TAIL = TailSum(0.0, 0.0, True)


def _digit_power_sum(a: int, m: int) -> int:
    """Sum of d**m over d = 1..a-1."""
    if m == 1:
        return a * (a - 1) // 2
    return (a - 1) * a * (2 * a - 1) // 6


def _moment_power(moment: str) -> int:
    if moment not in MOMENTS:
        raise ParameterError(f"unknown moment {moment!r}")
    return 2 if moment == "quadratic" else 1


# tail models ---------------------------------------------------------------

class TailModel:
    """Closed-form remainder sums of one family.

    ``sum(f, start, moment, weight_power)`` returns the remainder
    sum over j >= start of a_j**(-weight_power) * sum_d g(f(d q_j)),
    with g the identity, abs or square. ``sup(f, start)`` bounds
    |f(d q_j)| over all cells with j >= start.
    """

    def sum(self, f, start, moment, weight_power):  # pragma: no cover - interface
        raise NotImplementedError

    def sup(self, f, start):  # pragma: no cover - interface
        raise NotImplementedError


def _periodic_sum(system: NumerationSystem, start: int, term: Callable[[int], float],
                  ratio: float) -> float:
    """Sum of term(j) over j >= start, where term(j + p) = ratio * term(j)
    once j is past the nonperiodic prefix (p is the quotient period)."""
    if system.kind == ZECKENDORF:
        regular, p = 2, 1
    elif system.kind == QARY:
        regular, p = 0, 1
    else:
        if not system.period:
            raise DomainError("finite Cantor description has no tail")
        regular, p = system.prefix_length, system.period
    head = [term(j) for j in range(start, max(start, regular))]
    s = max(start, regular)
    block = math.fsum(term(j) for j in range(s, s + p))
    if block == 0.0:
        return math.fsum(head)
    if ratio >= 1.0:
        return math.inf
    return math.fsum(head) + block / (1.0 - ratio)


def _weight(system: NumerationSystem, j: int, p: int) -> float:
    return float(system.quotient(j)) ** (-p) if p else 1.0


class FiniteSupportTail(TailModel):
    """All values vanish from level ``support`` on."""

    def __init__(self, support: int):
        self.support = support

    def sum(self, f, start, moment, weight_power):
        if start >= self.support:
            return ZERO_TAIL
        s = f.partial_sum(start, self.support, moment, weight_power)
        return TailSum(s, abs(s), True)

    def sup(self, f, start):
        vals = [np.max(np.abs(f.cells(j)), initial=0.0) for j in range(start, self.support)]
        return float(max(vals, default=0.0))


class DivergentTail(TailModel):
    """Every level carries nonzero mass of one sign (e.g. sum of digits)."""

    def __init__(self, sup_value: float | None = None):
        self.sup_value = sup_value

    def sum(self, f, start, moment, weight_power):
        return DIVERGENT

    def sup(self, f, start):
        if self.sup_value is not None:
            return self.sup_value
        return float(f.system.max_quotient - 1)


class GeometricTail(TailModel):
    """f(d q_j) = d * beta**(j - offset)."""

    def __init__(self, beta: float, offset: int = 0):
        self.beta = beta
        self.offset = offset

    def sum(self, f, start, moment, weight_power):
        m = _moment_power(moment)
        sys = f.system
        if sys.kind == ZECKENDORF:
            def term(j):
                return self.beta ** (m * (j - self.offset))
        else:
            def term(j):
                a = sys.quotient(j)
                return _weight(sys, j, weight_power) * _digit_power_sum(a, m) * self.beta ** (m * j)
        period = sys.period if sys.kind == CANTOR else 1
        v = _periodic_sum(sys, max(start, sys.start_index), term, self.beta ** (m * period))
        return TailSum(v, v, True)

    def sup(self, f, start):
        start = max(start, f.system.start_index)
        return (f.system.max_quotient - 1) * self.beta ** (start - self.offset)


class VdcTail(TailModel):
    """f(d q_j) = d / q_{j+1}."""

    def sum(self, f, start, moment, weight_power):
        m = _moment_power(moment)
        sys = f.system

        def term(j):
            a = sys.quotient(j)
            num = _digit_power_sum(a, m)
            den = sys.base(j + 1) ** m
            return _weight(sys, j, weight_power) * (num / den)

        cyc = math.prod(sys.cycle)
        v = _periodic_sum(sys, start, term, float(cyc) ** (-m))
        return TailSum(v, v, True)

    def sup(self, f, start):
        # d / q_{j+1} < a_j / q_{j+1} = 1 / q_j
        return 1.0 / f.system.base(start)


class PowerLawTail(TailModel):
    """f(d q_j) = d * c * phi(j)**(-alpha) with phi(j) = max(j, 1) or j + shift.

    Remainders use the Hurwitz zeta function, split into residue
    classes modulo the quotient period.
    """

    def __init__(self, alpha: float, c: float, shift: float | None):
        self.alpha = alpha
        self.c = c
        self.shift = shift

    def _phi(self, j):
        return j + self.shift if self.shift is not None else max(j, 1)

    def sum(self, f, start, moment, weight_power):
        m = _moment_power(moment)
        x = m * self.alpha
        sys = f.system
        start = max(start, sys.start_index)
        cm = abs(self.c) ** m
        if x <= 1.0:
            return DIVERGENT if self.c != 0 else ZERO_TAIL
        if sys.kind == ZECKENDORF:
            p, regular = 1, start
        elif sys.kind == QARY:
            p, regular = 1, 0
        else:
            if not sys.period:
                raise DomainError("finite Cantor description has no tail")
            p, regular = sys.period, sys.prefix_length
        shift = 0.0 if self.shift is None else float(self.shift)
        # levels handled explicitly: the nonperiodic prefix and j = 0 when phi(0) is pinned
        explicit_stop = max(start, regular, 1 if self.shift is None else 0)

        def coef(j):
            if sys.kind == ZECKENDORF:
                return 1.0
            return _weight(sys, j, weight_power) * _digit_power_sum(sys.quotient(j), m)

        head = [coef(j) * self._phi(j) ** (-x) for j in range(start, explicit_stop)]
        rest = []
        for i in range(p):
            j0 = explicit_stop + i
            rest.append(coef(j0) * p ** (-x) * float(zeta(x, (j0 + shift) / p)))
        v = cm * math.fsum(head + rest)
        if moment == "linear":
            v = math.copysign(v, self.c)
        return TailSum(v, abs(v), True)

    def sup(self, f, start):
        start = max(start, f.system.start_index)
        return (f.system.max_quotient - 1) * abs(self.c) * self._phi(start) ** (-self.alpha)


# additive functions ----------------------------------------------------------

class AdditiveFunction:
    """A real additive function given by its values on digit cells.

    ``table(j, d)`` returns f(d * q_j) for 1 <= d < a_j (Zeckendorf:
    f(F_j), called with d = 1).
    """

    def __init__(self, system: NumerationSystem, table: Callable[[int, int], float], *,
                 tail: TailModel | None = None, name: str = "custom",
                 family: str | None = None, params: dict | None = None):
        self.system = system
        self.table = table
        self.tail = tail
        self.name = name
        self.family = family or name
        self.params = dict(params or {})
        self._cells: dict[int, np.ndarray] = {}

    def __repr__(self):
        return f"AdditiveFunction({self.name!r}, system={self.system})"

    def cells(self, j: int) -> np.ndarray:
        """f(d q_j) for d = 1..a_j - 1 (Zeckendorf: the single value f(F_j))."""
        c = self._cells.get(j)
        if c is None:
            if j < self.system.start_index:
                c = np.zeros(0)
            elif self.system.kind == ZECKENDORF:
                c = np.array([float(self.table(j, 1))])
            else:
                a = self.system.quotient(j)
                c = np.array([float(self.table(j, d)) for d in range(1, a)])
            self._cells[j] = c
        return c

    def level(self, j: int) -> np.ndarray:
        """Values f(d q_j) for every digit d including d = 0."""
        return np.concatenate(([0.0], self.cells(j)))

    def value_at(self, j: int, d: int = 1) -> float:
        if d == 0:
            return 0.0
        return float(self.cells(j)[d - 1])

    def __call__(self, n: int) -> float:
        ds = expand(int(n), self.system)
        total = 0.0
        for j, d in ds.positions():
            total += self.value_at(j, d)
        return total

    def eval_many(self, ns) -> np.ndarray:
        """Vectorised evaluation; the summation order matches ``__call__``."""
        ns = np.asarray(ns, dtype=np.int64)
        out = np.zeros(ns.shape, dtype=float)
        if ns.size == 0:
            return out
        if np.any(ns < 0):
            raise ParameterError("only nonnegative integers have expansions")
        if self.system.kind == ZECKENDORF:
            top = int(ns.max())
            fibs = []
            k = 2
            while _fib_unchecked(k) <= top:
                fibs.append((k, _fib_unchecked(k)))
                k += 1
            rest = ns.copy()
            masks = []
            for k, F in reversed(fibs):
                m = rest >= F
                rest[m] -= F
                masks.append((k, m))
            for k, m in reversed(masks):
                out[m] += self.value_at(k)
            return out
        rest = ns.copy()
        j = 0
        while np.any(rest):
            a = self.system.quotient(j)
            d = rest % a
            rest //= a
            lvl = self.level(j)
            nz = d != 0
            out[nz] += lvl[d[nz]]
            j += 1
        return out

    def level_moment(self, j: int, moment: str, weight_power: int = 0) -> float:
        c = self.cells(j)
        if moment == "linear":
            s = math.fsum(c)
        elif moment == "absolute":
            s = math.fsum(np.abs(c))
        elif moment == "quadratic":
            s = math.fsum(c * c)
        else:
            raise ParameterError(f"unknown moment {moment!r}")
        if weight_power and self.system.kind != ZECKENDORF:
            s *= float(self.system.quotient(j)) ** (-weight_power)
        return s

    def partial_sum(self, start: int, stop: int, moment: str, weight_power: int = 0) -> float:
        start = max(start, self.system.start_index)
        return math.fsum(self.level_moment(j, moment, weight_power) for j in range(start, stop))

    def tail_sum(self, start: int, moment: str, weight_power: int = 0) -> TailSum | None:
        """Remainder from level ``start`` on, or None when no closed form is known."""
        if self.tail is None or self._tail_unavailable():
            return None
        return self.tail.sum(self, max(start, self.system.start_index), moment, weight_power)

    def sup_tail(self, start: int) -> float | None:
        """Upper bound on |f(d q_j)| over all cells with j >= start."""
        if self.tail is None or self._tail_unavailable():
            return None
        return self.tail.sup(self, max(start, self.system.start_index))

    def _tail_unavailable(self) -> bool:
        # a finite Cantor description says nothing about positions past its end
        return self.system.is_finite and not isinstance(self.tail, FiniteSupportTail)

    @property
    def natural_weight(self) -> int:
        """Weight power of the convergence series: 1/a_j for Cantor, none otherwise."""
        return 1 if self.system.kind == CANTOR else 0


# families --------------------------------------------------------------------

def _check_beta(beta):
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")


def sum_of_digits(system: NumerationSystem) -> AdditiveFunction:
    return AdditiveFunction(system, lambda j, d: float(d), tail=DivergentTail(),
                            name="sum_of_digits")


def zeck_indicator() -> AdditiveFunction:
    """Number of Zeckendorf digits: f(F_j) = 1."""
    return AdditiveFunction(NumerationSystem.zeckendorf(), lambda j, d: 1.0,
                            tail=DivergentTail(1.0), name="zeck_indicator")


def constant(system: NumerationSystem, c: float) -> AdditiveFunction:
    """f(d q_j) = c for every nonzero digit."""
    c = float(c)
    tail = FiniteSupportTail(0) if c == 0.0 else DivergentTail(abs(c))
    return AdditiveFunction(system, lambda j, d: c, tail=tail, name=f"constant:{c:g}",
                            family="constant", params={"c": c})


def zero(system: NumerationSystem) -> AdditiveFunction:
    return constant(system, 0.0)


def van_der_corput(system: NumerationSystem) -> AdditiveFunction:
    if system.kind == ZECKENDORF:
        raise DomainError("van der Corput function needs a q-ary or Cantor system")
    return AdditiveFunction(system, lambda j, d: d / system.base(j + 1), tail=VdcTail(),
                            name="vdc")


def geometric(system: NumerationSystem, beta: float) -> AdditiveFunction:
    """f(d q_j) = d * beta**j; on Zeckendorf f(F_j) = beta**(j - 2)."""
    beta = float(beta)
    _check_beta(beta)
    offset = 2 if system.kind == ZECKENDORF else 0
    return AdditiveFunction(system, lambda j, d: d * beta ** (j - offset),
                            tail=GeometricTail(beta, offset), name=f"geometric:{beta:g}",
                            family="geometric", params={"beta": beta})


def power_law(system: NumerationSystem, alpha: float, c: float = 1.0,
              shift: float | None = None) -> AdditiveFunction:
    """f(d q_j) = d * c * max(j, 1)**(-alpha), or (j + shift)**(-alpha) if given."""
    alpha, c = float(alpha), float(c)
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if shift is not None and shift + system.start_index <= 0:
        raise ParameterError("shift must keep j + shift positive")
    tail = PowerLawTail(alpha, c, shift)
    name = f"power_law:{alpha:g}" + (f",{c:g}" if c != 1.0 else "")
    return AdditiveFunction(system, lambda j, d: d * c * tail._phi(j) ** (-alpha), tail=tail,
                            name=name, family="power_law",
                            params={"alpha": alpha, "c": c, "shift": shift})


def from_table(system: NumerationSystem, table: dict, name: str = "table") -> AdditiveFunction:
    """Finitely supported function; keys are (j, d) or, for Zeckendorf, j."""
    norm = {}
    for key, v in table.items():
        if system.kind == ZECKENDORF:
            j = key[0] if isinstance(key, tuple) else key
            d = 1
        else:
            j, d = key
        if j < system.start_index or d < 1 or d >= system.quotient(j):
            raise ParameterError(f"table entry {key!r} is not a valid digit cell")
        norm[(int(j), int(d))] = float(v)
    support = max((j for j, _ in norm), default=-1) + 1
    return AdditiveFunction(system, lambda j, d: norm.get((j, d), 0.0),
                            tail=FiniteSupportTail(support), name=name, family="table")


def load_table(path: str | Path, system: NumerationSystem) -> AdditiveFunction:
    """Read ``j d value`` lines (Zeckendorf: ``j value``); '#' starts a comment."""
    table = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if system.kind == ZECKENDORF:
                if len(parts) != 2:
                    raise ValueError
                table[int(parts[0])] = float(parts[1])
            else:
                if len(parts) != 3:
                    raise ValueError
                table[(int(parts[0]), int(parts[1]))] = float(parts[2])
        except ValueError as exc:
            raise ParameterError(f"{path}:{lineno}: malformed table line {line!r}") from exc
    return from_table(system, table, name=f"custom:{Path(path).name}")


def builtin(descriptor: str, system: NumerationSystem) -> AdditiveFunction:
    """Build a family from ``name[:args]``, e.g. ``power_law:1.5`` or ``geometric:0.5``."""
    name, _, argstr = descriptor.strip().partition(":")
    name = name.strip().lower()
    if name == "custom":
        return load_table(argstr, system)
    args, kwargs = [], {}
    for tok in filter(None, (t.strip() for t in argstr.split(","))):
        if "=" in tok:
            k, v = tok.split("=", 1)
            kwargs[k.strip()] = float(v)
        else:
            args.append(float(tok))
    try:
        if name in ("sum_of_digits", "s"):
            return sum_of_digits(system)
        if name == "zeck_indicator":
            if system.kind != ZECKENDORF:
                raise DomainError("zeck_indicator is defined on the Zeckendorf system")
            return zeck_indicator()
        if name == "vdc":
            return van_der_corput(system)
        if name == "geometric":
            return geometric(system, *args, **kwargs)
        if name == "power_law":
            return power_law(system, *args, **kwargs)
        if name == "constant":
            return constant(system, *args, **kwargs)
        if name == "zero":
            return zero(system)
    except TypeError as exc:
        raise ParameterError(f"bad arguments in {descriptor!r}") from exc
    raise ParameterError(f"unknown function family {descriptor!r}")


# series criteria -------------------------------------------------------------

class Verdict(str, enum.Enum):
    CONVERGES = "Converges"
    DIVERGES = "Diverges"
    INCONCLUSIVE = "Inconclusive"


class CoquetVerdict(str, enum.Enum):
    HOLDS = "SufficientConditionHolds"
    FAILS = "Fails"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SeriesReport:
    partial_linear: float
    partial_quadratic: float
    tail_linear_bound: float | None
    tail_quadratic_bound: float | None
    verdict: Verdict
    J: int
    m: tuple[float, ...] = field(repr=False)
    m2: tuple[float, ...] = field(repr=False)
    normalization: str = "none"


def _verdict(tails, eps):
    if any(t is None for t in tails):
        return Verdict.INCONCLUSIVE
    if any(not math.isfinite(t) for t in tails):
        return Verdict.DIVERGES
    if all(t < eps for t in tails):
        return Verdict.CONVERGES
    return Verdict.INCONCLUSIVE


def two_series(f: AdditiveFunction, J: int, eps: float = math.inf) -> SeriesReport:
    """Partial sums of the two convergence series over the first J positions."""
    if J < 1:
        raise ParameterError("J must be at least 1")
    sys = f.system
    s = sys.start_index
    w = f.natural_weight
    levels = range(s, s + J)
    lin = f.partial_sum(s, s + J, "linear", w)
    quad = f.partial_sum(s, s + J, "quadratic", w)
    if sys.kind == ZECKENDORF:
        m = tuple(f.level_moment(j, "linear") for j in levels)
        m2 = tuple(f.level_moment(j, "quadratic") for j in levels)
    else:
        m = tuple(f.level_moment(j, "linear", 1) for j in levels)
        m2 = tuple(f.level_moment(j, "quadratic", 1) for j in levels)
    tl = f.tail_sum(s + J, "linear", w)
    tq = f.tail_sum(s + J, "quadratic", w)
    tlb = None if tl is None else tl.bound
    tqb = None if tq is None else tq.bound
    return SeriesReport(lin, quad, tlb, tqb, _verdict((tlb, tqb), eps), J, m, m2,
                        normalization="1/a_j" if w else "none")


def is_convergent(f: AdditiveFunction, J: int = 1) -> bool:
    return two_series(f, J).verdict is Verdict.CONVERGES


@dataclass(frozen=True)
class CoquetReport:
    beta: tuple[float, ...] = field(repr=False)
    partial_linear: float = 0.0
    partial_quadratic: float = 0.0
    tail_linear_bound: float | None = None
    tail_quadratic_bound: float | None = None
    verdict: CoquetVerdict = CoquetVerdict.INCONCLUSIVE
    J: int = 0


def clamp_star(values: np.ndarray) -> np.ndarray:
    """f*: values with |f| > 1 are replaced by 1."""
    return np.where(np.abs(values) <= 1.0, values, 1.0)


def coquet_check(f: AdditiveFunction, J: int, eps: float = 1e-3) -> CoquetReport:
    if f.system.kind != CANTOR:
        raise DomainError("the Coquet condition is stated for Cantor systems")
    if J < 1:
        raise ParameterError("J must be at least 1")
    sys = f.system
    betas, lin, quad = [], [], []
    for j in range(J):
        a = sys.quotient(j)
        star = clamp_star(f.cells(j))
        run = np.cumsum(star) / np.arange(2, a + 1)
        betas.append(float(np.max(run * run)))
        lin.append(math.fsum(star) / a)
        quad.append(math.fsum(star * star) / a)
    # past level J the clamp is the identity when every value is at most 1
    sup = f.sup_tail(J)
    tl = tq = None
    if sup is not None and sup <= 1.0:
        tls = f.tail_sum(J, "linear", 1)
        tqs = f.tail_sum(J, "quadratic", 1)
        tl, tq = tls.bound, tqs.bound
    window = betas[(3 * J) // 4:] or betas[-1:]
    beta_ok = all(b <= eps for b in window)
    if not beta_ok or (tl is not None and not math.isfinite(tl)) or (
            tq is not None and not math.isfinite(tq)):
        verdict = CoquetVerdict.FAILS
    elif tl is not None and tq is not None and tl < eps and tq < eps:
        verdict = CoquetVerdict.HOLDS
    else:
        verdict = CoquetVerdict.INCONCLUSIVE
    return CoquetReport(tuple(betas), math.fsum(lin), math.fsum(quad), tl, tq, verdict, J)


# limiting digit frequencies in the Zeckendorf system ---------------------------

def zeckendorf_digit_frequency(j: int) -> float:
    """Asymptotic density of n with delta_j(n) = 1, i.e. F_{j-1} / gamma**j."""
    return (1.0 / GOLDEN + (-1) ** j * GOLDEN ** (1 - 2 * j)) / math.sqrt(5.0)
