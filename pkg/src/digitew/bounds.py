"""Itemised right-hand sides of the effective limit theorems.

Every ledger sets the implicit constants to 1; only the
constant-uniformity of measured/ledger ratios across N is meaningful.
"""

from __future__ import annotations

import json
import math
import weakref
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .additive import AdditiveFunction, Verdict, two_series
from .charfun import CharFunction, s_of_t
from .distribution import LimitApprox, limit_approx
from .exceptions import CriterionError, DomainError, HypothesisError, ParameterError
from .numeration import CANTOR, GOLDEN, QARY, ZECKENDORF, length

CONSTANT_FLAG = "implicit constants set to 1"


@dataclass(frozen=True)
class BoundBreakdown:
    theorem: str
    T: float
    h: int
    L: int
    terms: dict
    notes: tuple[str, ...] = field(default=(CONSTANT_FLAG,))

    @property
    def total(self) -> float:
        return math.fsum(self.terms.values())

    def as_dict(self) -> dict:
        out = {"theorem": self.theorem, "T": self.T, "h": self.h, "L": self.L}
        out.update(self.terms)
        out["total"] = self.total
        out["flags"] = list(self.notes)
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)


# Q_F sourcing ------------------------------------------------------------------

_limit_cache: "weakref.WeakKeyDictionary[AdditiveFunction, LimitApprox]" = weakref.WeakKeyDictionary()


def default_limit(f: AdditiveFunction, target: float = 1e-7, max_levels: int = 1000,
                  resolution: int = 2**18) -> LimitApprox:
    """A limit approximation fine enough for concentration estimates (cached per function).

    Keeps the first J positions, J the first level whose absolute tail is
    below ``target`` (at most ``max_levels``); exact when there are few
    digit strings, on a grid of ``resolution`` cells otherwise.
    """
    if f in _limit_cache:
        return _limit_cache[f]
    start = f.system.start_index
    J = start + max_levels
    for j in range(start + 1, start + max_levels):
        tail = f.tail_sum(j, "absolute")
        if tail is not None and tail.bound <= target:
            J = j
            break
    if f.system.kind == ZECKENDORF:
        exact = J <= 28
    else:
        exact = J <= 60 and f.system.base(J) <= 2**18
    if exact:
        lim = limit_approx(f, J)
    else:
        scale = f.partial_sum(start, J, "absolute") or 1.0
        lim = limit_approx(f, J, grid=scale / resolution)
    _limit_cache[f] = lim
    return lim


def closed_form_q(f: AdditiveFunction) -> Callable[[float], float]:
    """Known concentration functions of the limit law."""
    if f.name == "vdc":
        return lambda h: min(h, 1.0)
    if f.family == "geometric" and f.params.get("beta") == 0.5 and f.system.kind == QARY \
            and f.system.q == 2:
        return lambda h: min(h / 2.0, 1.0)
    raise ParameterError(f"no closed-form concentration function for {f.name}")


def q_evaluator(f: AdditiveFunction, source="measured",
                limit: LimitApprox | None = None) -> Callable[[float], float]:
    if callable(source):
        return source
    if source in ("closed-form", "closed_form", "closed"):
        return closed_form_q(f)
    if source in ("measured", "measured-at-level-J"):
        lim = limit if limit is not None else default_limit(f)
        return lim.concentration_bound
    raise ParameterError(f"unknown Q source {source!r}")


# helpers -------------------------------------------------------------------------

def _require_convergent(f: AdditiveFunction):
    rep = two_series(f, 1)
    if rep.verdict is not Verdict.CONVERGES:
        raise CriterionError(f"{f.name}: two-series verdict is {rep.verdict.value}")


def _window(T: float, base: float, extra: float = 1.0) -> int:
    """ceil(log_base(T * extra * log T)), at least 1."""
    x = T * extra * math.log(T) if T > 1 else 0.0
    if x <= 1.0:
        return 1
    return max(1, math.ceil(math.log(x) / math.log(base)))


def _tail(f, start, moment, wp=0):
    t = f.tail_sum(start, moment, wp)
    if t is None:
        raise CriterionError(f"{f.name}: no tail descriptor for the {moment} series")
    return t


def _check_T(T):
    if not T >= 1:
        raise ParameterError("T must be at least 1")


# q-ary ------------------------------------------------------------------------------

def th2a_bound(f: AdditiveFunction, N: int, T: float, q_source="measured",
               limit: LimitApprox | None = None) -> tuple[BoundBreakdown, BoundBreakdown]:
    """Standard and refined ledgers for q-ary functions with convergent two series."""
    if f.system.kind != QARY:
        raise DomainError("th2a_bound is for q-ary systems; use th2c_bound for Cantor")
    _check_T(T)
    _require_convergent(f)
    q = f.system.q
    L = length(N, f.system)
    h = _window(T, q)
    if h > L:
        raise HypothesisError(f"h = {h} exceeds L = {L}")
    Q = q_evaluator(f, q_source, limit)
    qt = Q(1.0 / T)
    lin = T * abs(_tail(f, L + 1, "linear").value)
    quad_std = T * math.sqrt(h) * math.sqrt(_tail(f, max(L - h, 0), "quadratic").bound)
    window = T * f.partial_sum(L - h + 1, L + 1, "absolute")
    quad_ref = T * T * _tail(f, L + 1, "quadratic").bound
    std = BoundBreakdown("Th2A", T, h, L, {"q_term": qt, "tail_linear_term": lin,
                                           "tail_quadratic_term": quad_std})
    ref = BoundBreakdown("Th2A_refined", T, h, L,
                         {"q_term": qt, "window_term": window, "tail_linear_term": lin,
                          "tail_quadratic_term": quad_ref})
    return std, ref


def th2c_bound(f: AdditiveFunction, N: int, T: float, q_source="measured",
               limit: LimitApprox | None = None) -> BoundBreakdown:
    """Cantor ledger with 1/a_j-normalised tails and h from the minimal quotient."""
    if f.system.kind not in (CANTOR, QARY):
        raise DomainError("th2c_bound needs a Cantor system")
    if f.system.is_finite:
        raise DomainError("a finite quotient description does not determine a constant-like system")
    _check_T(T)
    _require_convergent(f)
    a = f.system.min_quotient
    L = length(N, f.system)
    h = _window(T, a)
    if h > L:
        raise HypothesisError(f"h = {h} exceeds L = {L}")
    Q = q_evaluator(f, q_source, limit)
    terms = {
        "q_term": Q(1.0 / T),
        "tail_linear_term": T * abs(_tail(f, L + 1, "linear", 1).value),
        "tail_quadratic_term": T * math.sqrt(h) * math.sqrt(
            _tail(f, max(L - h, 0), "quadratic", 1).bound),
    }
    return BoundBreakdown("Th2C", T, h, L, terms)


def _gauss(cK: float, a: float, b: float) -> float:
    """Integral of exp(-cK t^2) over [a, b]."""
    if b <= a:
        return 0.0
    if cK <= 0:
        return b - a
    r = math.sqrt(cK)
    return math.sqrt(math.pi) / (2 * r) * (special.erf(r * b) - special.erf(r * a))


def _breakpoints(f: AdditiveFunction, T: float, stop: int | None, lo: float) -> list[float]:
    """Values of t in (lo, T) where S(t) changes: pi / |f(cell)|."""
    pts = set()
    j = f.system.start_index
    thr = math.pi / T
    limit = stop if stop is not None else j + 10_000
    while j < limit:
        if stop is None:
            sup = f.sup_tail(j)
            if sup is not None and sup < thr:
                break
        c = np.abs(f.cells(j))
        c = c[c > thr]
        pts.update((math.pi / c).tolist())
        j += 1
    return sorted(p for p in pts if lo < p < T)


def _s_integral(f, T, c, wp, lo=0.0, stop=None, cap=None) -> float:
    """Integral over [lo, T] of min(1/(1+t), cap) exp(-c t^2 K(t)), K(t) = sum_{S(t)} f^2.

    ``cap=None`` drops the min factor.
    """
    edges = [lo] + _breakpoints(f, T, stop, lo) + [T]
    total = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        K = s_of_t(f, 0.5 * (a + b), weight_power=wp, stop=stop).total
        cK = c * K
        if cap is None:
            total.append(_gauss(cK, a, b))
            continue
        cross = 1.0 / cap - 1.0 if cap > 0 else math.inf
        m = min(max(cross, a), b)
        total.append(cap * _gauss(cK, a, m))
        if m < b:
            val, _ = integrate.quad(lambda t: math.exp(-cK * t * t) / (1 + t), m, b,
                                    epsrel=1e-8, limit=200)
            total.append(val)
    return math.fsum(total)


def th2b_bound(f: AdditiveFunction, N: int, T: float) -> BoundBreakdown:
    """Integral-form ledger (q-ary, or its Cantor analogue)."""
    if f.system.kind not in (QARY, CANTOR):
        raise DomainError("th2b_bound needs a q-ary or Cantor system")
    _check_T(T)
    abs_tail = f.tail_sum(0, "absolute", 1)
    if abs_tail is None or not abs_tail.finite:
        raise CriterionError(f"{f.name}: absolute series is not certified convergent")
    L = length(N, f.system)
    cantor = f.system.kind == CANTOR
    h = _window(T, f.system.min_quotient)
    if h > L:
        raise HypothesisError(f"h = {h} exceeds L = {L}")
    c = 2.0 / math.pi**2  # with f^2 / a_j^2 this is 2 / (pi^2 q^2) in base q
    w = 1 if cantor else 0
    first = _s_integral(f, T, c, 2) / T
    window = T * f.partial_sum(L - h + 1, L + 1, "absolute", w)
    A = _tail(f, L + 1, "absolute", w).bound
    third = _s_integral(f, T, c, 2, lo=1.0 / T, stop=L + 1, cap=A)
    notes = [CONSTANT_FLAG]
    if f.sup_tail(0) == 0:
        notes.append("function vanishes identically: integrals degenerate")
    return BoundBreakdown("Th2B", T, h, L, {"integral_term": first, "window_term": window,
                                            "tail_integral_term": third}, tuple(notes))


# Zeckendorf ---------------------------------------------------------------------------

def _zeck_setup(f, N, T, h_variant):
    if f.system.kind != ZECKENDORF:
        raise DomainError("Zeckendorf ledgers need a Zeckendorf-additive function")
    _check_T(T)
    L = length(N, f.system).analytic
    if h_variant == "standard":
        h = _window(T, GOLDEN)
    elif h_variant == "remark":
        h = _window(T, GOLDEN, math.log(N))
    else:
        raise ParameterError(f"unknown h variant {h_variant!r}")
    if 2 * h > L:
        raise HypothesisError(f"h = {h} exceeds L/2 = {L / 2}")
    return L, h


def thz2_bound(f: AdditiveFunction, N: int, T: float, h_variant: str = "standard",
               q_source="measured", limit: LimitApprox | None = None) -> BoundBreakdown:
    L, h = _zeck_setup(f, N, T, h_variant)
    abs_tail = f.tail_sum(2, "absolute")
    if abs_tail is None or not abs_tail.finite:
        raise CriterionError(f"{f.name}: sum of |f(F_j)| is not certified convergent")
    Q = q_evaluator(f, q_source, limit)
    terms = {"q_term": Q(1.0 / T)}
    if h_variant == "standard":
        terms["logN_over_T"] = math.log(N) / T
    terms["tail_linear_term"] = T * _tail(f, L - 2 * h + 2, "absolute").bound
    notes = (CONSTANT_FLAG, f"h variant: {h_variant}")
    return BoundBreakdown("ThZ2", T, h, L, terms, notes)


def thz2_integral_bound(f: AdditiveFunction, N: int, T: float, h_variant: str = "standard",
                        c2: float | None = None) -> BoundBreakdown:
    L, h = _zeck_setup(f, N, T, h_variant)
    notes = [CONSTANT_FLAG, f"h variant: {h_variant}"]
    if c2 is None:
        c2 = 2.0 / (math.pi**2 * 4)
        notes.append("c2 uncalibrated: binary analogue 2/(pi^2 q^2) used")
    first = _s_integral(f, T, c2, 0) / T
    window = T * f.partial_sum(L - 2 * h + 1, L + 1, "absolute")
    tail = f.tail_sum(L - h, "absolute")
    if tail is None or not tail.finite:
        notes.append("absolute series divergent: valid in principle only")
        A = math.inf
    else:
        A = tail.bound
    third = _s_integral(f, T, c2, 0, lo=1.0 / T, stop=L - h, cap=A)
    terms = {"integral_term": first}
    if h_variant == "standard":
        terms["logN_over_T"] = math.log(N) / T
    terms["window_term"] = window
    terms["tail_integral_term"] = third
    return BoundBreakdown("ThZ2_integral", T, h, L, terms, tuple(notes))


# Bernoulli convolutions -----------------------------------------------------------------

@dataclass(frozen=True)
class ExponentReport:
    beta: float
    c0: float
    c_bar: float
    ac_exponent: float
    log_power: float
    T_exponent: float
    rate_description: str
    ac_rate_description: str
    c_eta: float | None = None
    c0_eta: float | None = None


def _check_unit(beta):
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")


def cantor_exponents(beta: float, eta: float | None = None) -> ExponentReport:
    """Explicit exponents for f(2^j) = beta^j.

    With ``eta`` (e.g. a fitted decay rate of the S_J integral) the
    exponent of the eta-based argument is reported as well; that value
    is empirical.
    """
    _check_unit(beta)
    lb = math.log(1.0 / beta)
    l2 = math.log(2.0)
    c0 = l2 / math.log(4.0 / beta)
    c_bar = lb * l2 / (math.log(4.0 / beta) * math.log(2.0 / beta) + l2 * l2)
    ac = lb / (l2 + math.log(2.0 / beta))
    power = lb / l2
    T_exp = power / (1.0 + power + c0)
    c_eta = c0_eta = None
    if eta is not None:
        c0_eta = lb * lb / (eta * l2 + lb * math.log(2.0 / beta))
        c_eta = eta * c0_eta / lb
    return ExponentReport(beta, c0, c_bar, ac, power, T_exp,
                          f"N^(-{c_bar:.6g}) (log N)^({power:.6g})",
                          f"N^(-{ac:.6g}) (log N)^({power:.6g})", c_eta, c0_eta)


def _bernoulli_beta(f):
    if f.family != "geometric" or f.system.kind != QARY or f.system.q != 2:
        raise DomainError("this ledger is for f(2^j) = beta^j in base 2")
    return f.params["beta"]


def th3_bound(f: AdditiveFunction, N: int, T: float | None = None,
              variant: str = "appendix_b", eta: float | None = None) -> BoundBreakdown:
    """Ledger for f(2^j) = beta^j.

    ``appendix_b``: T^(-c0) + T beta^(L-h) with h = floor(log2(T log T)).
    ``eta``: T^(-eta/log(1/beta)) + T beta^(L-h) with a supplied eta.
    """
    beta = _bernoulli_beta(f)
    L = length(N, f.system)
    rep = cantor_exponents(beta, eta)
    notes = [CONSTANT_FLAG]
    if variant == "appendix_b":
        if T is None:
            T = N**rep.T_exponent
        _check_T(T)
        x = T * math.log(T)
        h = max(1, math.floor(math.log2(x))) if x > 1 else 1
        q_term = T ** (-rep.c0)
        name = "Th3_appendixB"
    elif variant == "eta":
        if eta is None:
            raise ParameterError("the eta variant needs a decay rate eta")
        notes.append("eta empirical")
        if T is None:
            T = N**rep.c0_eta
        _check_T(T)
        h = _window(T, 2)
        q_term = T ** (-eta / math.log(1.0 / beta))
        name = "Th3"
    else:
        raise ParameterError(f"unknown variant {variant!r}")
    if h > L:
        raise HypothesisError(f"h = {h} exceeds L = {L}")
    return BoundBreakdown(name, T, h, L, {"q_term": q_term, "window_term": T * beta ** (L - h)},
                          tuple(notes))


# Berry-Esseen ------------------------------------------------------------------------------

@dataclass(frozen=True)
class BerryEsseenTerms:
    q_term: float
    integral: float
    small_t: float
    delta: float
    slope: float

    @property
    def total(self) -> float:
        return self.q_term + self.integral + self.small_t


def berry_esseen_terms(phi1: CharFunction, phi2: CharFunction, Q: Callable[[float], float],
                       T: float, delta: float | None = None, panels_per_decade: int = 4,
                       rtol: float = 1e-6) -> BerryEsseenTerms:
    """Q(1/T) + integral over delta <= |t| <= T of |phi1 - phi2| / |t| + small-|t| part.

    The small-|t| part is 2 K delta, with K the largest ratio
    |phi1 - phi2|(t) / t at the five grid points delta * 2^-i.
    """
    if not T > 0:
        raise ParameterError("T must be positive")
    if delta is None:
        delta = 1e-3 * min(1.0, 1.0 / T)
    delta = min(delta, T)

    def diff(t):
        return abs(phi1(t)[0] - phi2(t)[0])

    small = [delta * 2.0**-i for i in range(5)]
    K = max(diff(t) / t for t in small)
    u0, u1 = math.log(delta), math.log(T)
    n = max(1, math.ceil((u1 - u0) / math.log(10.0) * panels_per_decade))
    edges = np.linspace(u0, u1, n + 1)
    parts = []
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(lambda u: diff(math.exp(u)), a, b, epsrel=rtol, limit=200)
        parts.append(val)
    return BerryEsseenTerms(Q(1.0 / T), 2.0 * math.fsum(parts), 2.0 * K * delta, delta, K)


def berry_esseen_rhs(phi1: CharFunction, phi2: CharFunction, Q: Callable[[float], float],
                     T: float, **kw) -> float:
    return berry_esseen_terms(phi1, phi2, Q, T, **kw).total


# T policies ------------------------------------------------------------------------------------

def _power_law_T(f, N):
    alpha = f.params.get("alpha")
    if alpha is None:
        raise ParameterError("the power_law preset needs a power-law function")
    L = length(N, f.system)
    L = L.analytic if hasattr(L, "analytic") else L
    L = max(L, 3)
    if alpha < 2:
        return max(1.0, L ** (alpha - 1.0))
    return max(1.0, L ** (alpha / 2.0) / math.sqrt(math.log(L)))


def _bernoulli_T(f, N):
    return N ** cantor_exponents(_bernoulli_beta(f)).T_exponent


PRESETS: dict[str, Callable[[AdditiveFunction, int], float]] = {
    "power_law": _power_law_T,
    "vdc": lambda f, N: N ** (1.0 / 3.0),
    "bernoulli": _bernoulli_T,
    "unit": lambda f, N: 1.0,
}


def preset_T(name: str, f: AdditiveFunction, N: int) -> float:
    try:
        rule = PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown T preset {name!r}; known: {sorted(PRESETS)}") from None
    return float(rule(f, N))


def optimise_T(ledger: Callable[[float], BoundBreakdown], T_max: float, T_min: float = 1.0,
               xatol: float = 1e-3) -> BoundBreakdown:
    """Minimise ledger(T).total over log T (bounded Brent search)."""
    def obj(u):
        try:
            return ledger(math.exp(u)).total
        except HypothesisError:
            return math.inf

    lo, hi = math.log(T_min), math.log(max(T_max, T_min * 1.0001))
    grid = np.linspace(lo, hi, 17)
    vals = [obj(u) for u in grid]
    i = int(np.argmin(vals))
    if not math.isfinite(vals[i]):
        raise HypothesisError("no admissible T in the search range")
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(obj, bounds=(a, b), method="bounded",
                                   options={"xatol": xatol})
    u = res.x if res.fun <= vals[i] else grid[i]
    return ledger(math.exp(u))


# ledger selectors; "ThZ2_remark" is ThZ2 with the enlarged window
THEOREMS = ("Th2A", "Th2A_refined", "Th2B", "Th2C", "ThZ2", "ThZ2_remark", "ThZ2_integral",
            "Th3", "Th3_appendixB")


def ledger(theorem: str, f: AdditiveFunction, N: int, T: float | None, *, q_source="measured",
           limit: LimitApprox | None = None, eta: float | None = None) -> BoundBreakdown:
    """Dispatch by theorem identifier."""
    if theorem in ("Th2A", "Th2A_refined"):
        std, ref = th2a_bound(f, N, T, q_source, limit)
        return std if theorem == "Th2A" else ref
    if theorem == "Th2B":
        return th2b_bound(f, N, T)
    if theorem == "Th2C":
        return th2c_bound(f, N, T, q_source, limit)
    if theorem == "ThZ2":
        return thz2_bound(f, N, T, "standard", q_source, limit)
    if theorem == "ThZ2_remark":
        return thz2_bound(f, N, T, "remark", q_source, limit)
    if theorem == "ThZ2_integral":
        return thz2_integral_bound(f, N, T)
    if theorem == "Th3_appendixB":
        return th3_bound(f, N, T, "appendix_b")
    if theorem == "Th3":
        return th3_bound(f, N, T, "eta", eta)
    raise ParameterError(f"unknown theorem {theorem!r}; known: {THEOREMS}")


def rate_value(name: str, f: AdditiveFunction, N: int) -> float:
    """The asymptotic rate attached to a preset, evaluated at N."""
    lN = math.log(N)
    if name == "power_law":
        alpha = f.params["alpha"]
        if alpha < 2:
            return lN ** (1.0 - alpha)
        return math.sqrt(math.log(lN)) * lN ** (-alpha / 2.0)
    if name == "vdc":
        return lN / N
    if name == "bernoulli":
        rep = cantor_exponents(_bernoulli_beta(f))
        return N ** (-rep.c_bar) * lN**rep.log_power
    if name == "unit":
        return 1.0
    raise ParameterError(f"unknown rate preset {name!r}")


def resolve_T(policy: tuple[str, object], theorem: str, f: AdditiveFunction, N: int,
              **kw) -> BoundBreakdown:
    """Ledger at a T chosen by (kind, arg): fixed value, named preset or 'auto'."""
    kind, arg = policy
    if kind == "fixed":
        return ledger(theorem, f, N, float(arg), **kw)
    if kind == "preset":
        return ledger(theorem, f, N, preset_T(arg, f, N), **kw)
    if kind == "auto":
        return optimise_T(lambda T: ledger(theorem, f, N, T, **kw), T_max=float(N))
    raise ParameterError(f"unknown T policy {kind!r}")


# measured distances ------------------------------------------------------------------------

def closed_form_cdf(f: AdditiveFunction) -> Callable | None:
    """CDF of the limit law when it is a known uniform distribution."""
    if f.name == "vdc":
        return lambda x: np.clip(np.asarray(x, float), 0.0, 1.0)
    if f.family == "geometric" and f.params.get("beta") == 0.5 and f.system.kind == QARY \
            and f.system.q == 2:
        return lambda x: np.clip(np.asarray(x, float) / 2.0, 0.0, 1.0)
    return None


@dataclass(frozen=True)
class Measurement:
    N: int
    L: int
    distance: float
    limit_error_bound: float
    method: str


def measure_distance(f: AdditiveFunction, N: int, limit: LimitApprox | None = None,
                     chain=None) -> Measurement:
    """sup |F - F_N| with F the limit law (closed form, else its level-J approximation).

    ``limit_error_bound`` bounds the error of the approximation to F, so
    the true distance lies within distance +- limit_error_bound.
    """
    from .distribution import dist_exact_N, kolmogorov, kolmogorov_to_cdf

    dN = dist_exact_N(f, N, chain=chain) if chain is not None else dist_exact_N(f, N)
    L = length(N, f.system)
    L = L.analytic if hasattr(L, "analytic") else L
    cdf = closed_form_cdf(f)
    if cdf is not None and limit is None:
        return Measurement(N, L, kolmogorov_to_cdf(dN, cdf), 0.0, "closed-form")
    lim = limit if limit is not None else default_limit(f)
    return Measurement(N, L, kolmogorov(dN, lim.centered()),
                       lim.kolmogorov_error_bound(centered=True), lim.method)


def fitted_constant(measured, totals) -> tuple[float, float]:
    """(C, spread): C = max measured/total, spread = max/min of the ratios."""
    r = np.asarray(measured, float) / np.asarray(totals, float)
    return float(r.max()), float(r.max() / r.min()) if r.min() > 0 else math.inf
