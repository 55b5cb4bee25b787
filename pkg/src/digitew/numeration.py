"""Numeration systems: q-ary, Cantor (mixed radix) and Zeckendorf."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .exceptions import (
    DigitValidationError,
    DomainError,
    InsufficientBaseError,
    ParameterError,
)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
SQRT5 = math.sqrt(5.0)
INT_LIMIT = 2**63 - 1

QARY = "qary"
CANTOR = "cantor"
ZECKENDORF = "zeckendorf"


@dataclass(frozen=True)
class NumerationSystem:
    """A digit system.

    For Cantor systems ``quotients`` lists a_0, a_1, ... and the last
    ``period`` entries repeat forever; ``period == 0`` means the
    description is finite and positions past it are unavailable.
    """

    kind: str
    q: int = 0
    quotients: tuple[int, ...] = ()
    period: int = 0

    def __post_init__(self):
        if self.kind == QARY:
            if not isinstance(self.q, int) or self.q < 2:
                raise ParameterError(f"q-ary base must be an integer >= 2, got {self.q!r}")
        elif self.kind == CANTOR:
            if not self.quotients:
                raise ParameterError("Cantor system needs at least one quotient")
            if any((not isinstance(a, int)) or a < 2 for a in self.quotients):
                raise ParameterError(f"Cantor quotients must be integers >= 2, got {self.quotients}")
            if not 0 <= self.period <= len(self.quotients):
                raise ParameterError("period must be between 0 and the number of quotients")
        elif self.kind != ZECKENDORF:
            raise ParameterError(f"unknown numeration kind {self.kind!r}")

    # constructors

    @classmethod
    def qary(cls, q: int) -> NumerationSystem:
        return cls(QARY, q=q)

    @classmethod
    def cantor(cls, quotients: Sequence[int], period: int = 0) -> NumerationSystem:
        return cls(CANTOR, quotients=tuple(int(a) for a in quotients), period=int(period))

    @classmethod
    def zeckendorf(cls) -> NumerationSystem:
        return cls(ZECKENDORF)

    @classmethod
    def parse(cls, text: str) -> NumerationSystem:
        """Parse ``qary:3``, ``cantor:2,3,4|period:3`` or ``zeckendorf``."""
        s = text.strip().lower()
        if s == ZECKENDORF:
            return cls.zeckendorf()
        head, _, rest = s.partition(":")
        try:
            if head == QARY:
                return cls.qary(int(rest))
            if head == CANTOR:
                body, _, per = rest.partition("|")
                quotients = [int(tok) for tok in body.split(",") if tok.strip()]
                period = 0
                if per:
                    key, _, val = per.partition(":")
                    if key.strip() != "period":
                        raise ParameterError(f"unexpected Cantor modifier {per!r}")
                    period = int(val)
                return cls.cantor(quotients, period)
        except ValueError as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"cannot parse numeration system {text!r}") from exc
        raise ParameterError(f"cannot parse numeration system {text!r}")

    def __str__(self) -> str:
        if self.kind == QARY:
            return f"qary:{self.q}"
        if self.kind == CANTOR:
            body = "cantor:" + ",".join(str(a) for a in self.quotients)
            return body + (f"|period:{self.period}" if self.period else "")
        return ZECKENDORF

    # structure

    @property
    def start_index(self) -> int:
        return 2 if self.kind == ZECKENDORF else 0

    @property
    def is_finite(self) -> bool:
        """True when the quotient description stops (finite Cantor)."""
        return self.kind == CANTOR and self.period == 0

    @property
    def prefix_length(self) -> int:
        """Index from which the quotient sequence is purely periodic."""
        if self.kind == CANTOR:
            return len(self.quotients) - self.period if self.period else len(self.quotients)
        return 0

    @property
    def cycle(self) -> tuple[int, ...]:
        if self.kind == QARY:
            return (self.q,)
        if self.kind == CANTOR and self.period:
            return self.quotients[-self.period:]
        return ()

    @property
    def min_quotient(self) -> int:
        if self.kind == QARY:
            return self.q
        if self.kind == CANTOR:
            return min(self.cycle) if self.period else min(self.quotients)
        raise DomainError("Zeckendorf has no quotient sequence")

    @property
    def max_quotient(self) -> int:
        if self.kind == QARY:
            return self.q
        if self.kind == CANTOR:
            return max(self.quotients)
        return 2

    def quotient(self, j: int) -> int:
        """a_j, the number of admissible digits at position j."""
        if self.kind == QARY:
            return self.q
        if self.kind == ZECKENDORF:
            return 2
        if j < 0:
            raise ParameterError("negative position")
        if j < len(self.quotients):
            return self.quotients[j]
        if not self.period:
            raise InsufficientBaseError(
                f"Cantor description has {len(self.quotients)} quotients, position {j} requested"
            )
        start = len(self.quotients) - self.period
        return self.quotients[start + (j - start) % self.period]

    def base(self, j: int) -> int:
        """q_j for q-ary/Cantor, F_j for Zeckendorf."""
        if self.kind == QARY:
            return self.q**j
        if self.kind == ZECKENDORF:
            return fibonacci(j)
        return _cantor_bases(self, j)[j]

    def bases_upto(self, n: int) -> list[int]:
        """All bases b_s, b_{s+1}, ... with b <= n (s = start_index)."""
        out = []
        j = self.start_index
        while True:
            try:
                b = self.base(j) if self.kind != ZECKENDORF else _fib_unchecked(j)
            except InsufficientBaseError:
                break
            if b > n:
                break
            out.append(b)
            j += 1
        return out


_cantor_cache: dict[NumerationSystem, list[int]] = {}
_cantor_lock = threading.Lock()


def _cantor_bases(system: NumerationSystem, j: int) -> list[int]:
    with _cantor_lock:
        bases = _cantor_cache.setdefault(system, [1])
        while len(bases) <= j:
            k = len(bases) - 1
            bases.append(bases[k] * system.quotient(k))
        return bases


class DigitString(NamedTuple):
    digits: tuple[int, ...]
    start_index: int = 0

    def positions(self):
        """Yield (position, digit) for nonzero digits."""
        for i, d in enumerate(self.digits):
            if d:
                yield i + self.start_index, d


class ZeckendorfLength(NamedTuple):
    largest_index: int
    analytic: int


def _fib_unchecked(k: int) -> int:
    a, b = 0, 1
    for _ in range(k):
        a, b = b, a + b
    return a


def fibonacci(k: int) -> int:
    """F_k with F_0 = 0, F_1 = 1; raises OverflowError past 2**63 - 1."""
    if k < 0:
        raise ParameterError("fibonacci index must be nonnegative")
    if k > 92:
        raise OverflowError(f"F_{k} exceeds the 64-bit exact integer range")
    return _fib_unchecked(k)


def fibonacci_closed_form(k: int) -> float:
    return (GOLDEN**k + (-1) ** (k - 1) * GOLDEN ** (-k)) / SQRT5


def expand(n: int, system: NumerationSystem) -> DigitString:
    if n < 0:
        raise ParameterError("only nonnegative integers have expansions")
    if system.kind == ZECKENDORF:
        if n == 0:
            return DigitString((), 2)
        fibs = [1, 2]
        while fibs[-1] + fibs[-2] <= n:
            fibs.append(fibs[-1] + fibs[-2])
        digits = [0] * len(fibs)
        for i in range(len(fibs) - 1, -1, -1):
            if fibs[i] <= n:
                digits[i] = 1
                n -= fibs[i]
        while digits and digits[-1] == 0:
            digits.pop()
        return DigitString(tuple(digits), 2)
    digits = []
    j = 0
    while n:
        a = system.quotient(j)
        n, d = divmod(n, a)
        digits.append(d)
        j += 1
    return DigitString(tuple(digits), 0)


def validate(ds: DigitString, system: NumerationSystem) -> None:
    if ds.start_index != system.start_index:
        raise DigitValidationError(
            f"digit string starts at {ds.start_index}, system expects {system.start_index}"
        )
    prev = 0
    for i, d in enumerate(ds.digits):
        j = i + ds.start_index
        if not isinstance(d, int) or d < 0 or d >= system.quotient(j):
            raise DigitValidationError(f"digit {d!r} out of range at position {j}")
        if system.kind == ZECKENDORF and d and prev:
            raise DigitValidationError(f"adjacent Zeckendorf digits at positions {j - 1},{j}")
        prev = d


def value(ds: DigitString, system: NumerationSystem) -> int:
    validate(ds, system)
    if system.kind == ZECKENDORF:
        return sum(_fib_unchecked(j) for j, _ in ds.positions())
    return sum(d * system.base(j) for j, d in ds.positions())


def length(N: int, system: NumerationSystem) -> int | ZeckendorfLength:
    """Length of N: the largest j with base(j) <= N.

    For Zeckendorf both the index of the largest F_k <= N and the
    analytic length ceil(log_gamma(sqrt(5) N)) are returned.
    """
    if N < 1:
        raise ParameterError("length needs N >= 1")
    if system.kind == ZECKENDORF:
        k = 2
        while _fib_unchecked(k + 1) <= N:
            k += 1
        analytic = math.ceil(math.log(SQRT5 * N) / math.log(GOLDEN))
        return ZeckendorfLength(k, analytic)
    j = 0
    while system.base(j + 1) <= N:
        j += 1
    return j


def analytic_length(N: int, system: NumerationSystem) -> int:
    """The length L entering the effective bounds."""
    ell = length(N, system)
    return ell.analytic if isinstance(ell, ZeckendorfLength) else ell
