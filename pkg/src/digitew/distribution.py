"""Finite-N distributions of additive functions and their limits.

Distributions of (f(n) : n < N) are built by convolving per-position
digit laws instead of enumerating n. Atoms whose values agree up to a
relative tolerance are merged, and the largest displacement caused by
merging is carried along as a Levy-distance ledger.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .additive import AdditiveFunction, Verdict, two_series
from .exceptions import CapacityError, CriterionError, DomainError, ParameterError
from .numeration import GOLDEN, SQRT5, ZECKENDORF, _fib_unchecked, expand

DEFAULT_REL_TOL = 1e-12
DEFAULT_MAX_ATOMS = 2**25
ORACLE_CAP = 10**7
_COUNT_LIMIT = 2**62


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite atomic probability measure with sorted, distinct atoms.

    ``counts``/``total`` hold exact integer multiplicities when the
    measure is a normalised counting measure; ``levy_error`` bounds the
    Levy distance to the measure before any merging or grid snapping.
    """

    values: np.ndarray
    masses: np.ndarray
    counts: np.ndarray | None = None
    total: int | None = None
    collapse_tolerance: float = 0.0
    levy_error: float = 0.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        m = np.ascontiguousarray(self.masses, dtype=float)
        if v.ndim != 1 or v.shape != m.shape or v.size == 0:
            raise ParameterError("values and masses must be nonempty 1-d arrays of equal length")
        if v.size > 1 and not np.all(np.diff(v) > 0):
            raise ParameterError("atom values must be strictly increasing")
        if np.any(m <= 0):
            raise ParameterError("atom masses must be positive")
        v.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "masses", m)
        if self.counts is not None:
            c = np.ascontiguousarray(self.counts, dtype=np.int64)
            c.flags.writeable = False
            object.__setattr__(self, "counts", c)

    @classmethod
    def from_weights(cls, values, weights, *, total=None, rel_tol=0.0, levy_error=0.0):
        """Sort, merge and normalise raw (value, weight) pairs."""
        v, w, disp, tol = _merge(np.asarray(values, dtype=float), np.asarray(weights), rel_tol)
        return _finish(v, w, total, tol, levy_error + disp)

    @classmethod
    def point_mass(cls, x: float = 0.0) -> DiscreteDistribution:
        return cls(np.array([float(x)]), np.array([1.0]), np.array([1]), 1)

    def __len__(self):
        return self.values.size

    @property
    def cumulative(self) -> np.ndarray:
        if self.counts is not None:
            return np.cumsum(self.counts) / self.total
        return np.cumsum(self.masses)

    def cdf(self, x):
        idx = np.searchsorted(self.values, np.asarray(x, dtype=float), side="right")
        cum = np.concatenate(([0.0], self.cumulative))
        return cum[idx]

    def mean(self) -> float:
        return math.fsum(self.values * self.masses)

    def mean_abs(self) -> float:
        return math.fsum(np.abs(self.values) * self.masses)

    def shift(self, s: float) -> DiscreteDistribution:
        return DiscreteDistribution(self.values + s, self.masses, self.counts, self.total,
                                    self.collapse_tolerance, self.levy_error)

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.values.tolist(), self.masses.tolist()))

    def to_csv(self, dest=None, comments: dict | None = None) -> str:
        """Write ``value,mass,cum_mass`` rows; returns the text."""
        buf = io.StringIO()
        meta = {"atoms": len(self), "levy_error": repr(self.levy_error),
                "collapse_tolerance": repr(self.collapse_tolerance)}
        if self.total is not None:
            meta["total"] = self.total
        meta.update(comments or {})
        for k, v in meta.items():
            buf.write(f"# {k}: {v}\n")
        buf.write("value,mass,cum_mass\n")
        for v, m, c in zip(self.values.tolist(), self.masses.tolist(), self.cumulative.tolist()):
            buf.write(f"{v!r},{m!r},{c!r}\n")
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text)
        return text


def _merge(values: np.ndarray, weights: np.ndarray, rel_tol: float):
    """Merge atoms closer than rel_tol * scale into their weighted mean.

    Returns merged values, summed weights, the largest displacement of
    any original atom and the absolute tolerance used.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    scale = float(max(abs(v[0]), abs(v[-1]), 1e-300))
    tol = rel_tol * scale
    gaps = np.diff(v)
    new = np.empty(v.size, dtype=bool)
    new[0] = True
    new[1:] = gaps > tol if tol > 0 else gaps > 0
    starts = np.flatnonzero(new)
    if starts.size == v.size:
        return v, w, 0.0, tol
    wsum = np.add.reduceat(w, starts)
    ends = np.append(starts[1:], v.size) - 1
    if tol > 0:
        wf = w.astype(float)
        centre = np.add.reduceat(v * wf, starts) / np.add.reduceat(wf, starts)
        centre = np.clip(centre, v[starts], v[ends])
        # keep strict ordering after averaging
        disp = float(np.max(np.maximum(v[ends] - centre, centre - v[starts])))
        if centre.size > 1 and not np.all(np.diff(centre) > 0):
            centre = v[starts]
            disp = float(np.max(v[ends] - v[starts]))
    else:
        centre = v[starts]
        disp = 0.0
    return centre, wsum, disp, tol


def _finish(values, weights, total, tol, levy) -> DiscreteDistribution:
    if weights.dtype.kind in "iu":
        total = int(weights.sum()) if total is None else int(total)
        return DiscreteDistribution(values, weights / total, weights, total, tol, levy)
    s = math.fsum(weights)
    return DiscreteDistribution(values, weights / s, None, None, tol, levy)


# exact block chains --------------------------------------------------------

class BlockChain:
    """Lazily built level distributions of one function.

    For q-ary/Cantor systems ``block(j)`` is the law of f(n) for n < q_j,
    stored as raw (values, weights); for Zeckendorf it is D_k, the law
    over n < F_k. Weights are exact integer counts while they fit.
    """

    def __init__(self, f: AdditiveFunction, rel_tol: float = DEFAULT_REL_TOL,
                 max_atoms: int = DEFAULT_MAX_ATOMS):
        self.f = f
        self.rel_tol = rel_tol
        self.max_atoms = max_atoms
        self.zeck = f.system.kind == ZECKENDORF
        one = (np.zeros(1), np.ones(1, dtype=np.int64), 0.0, 0.0)
        self._blocks = {1: one, 2: one} if self.zeck else {0: one}

    def _check(self, n):
        if n > self.max_atoms:
            raise CapacityError(
                f"{n} atoms exceed the budget of {self.max_atoms}; use a grid approximation"
            )

    def raw(self, j: int):
        """(values, weights, levy_error, tolerance) of block j."""
        if j in self._blocks:
            return self._blocks[j]
        top = max(self._blocks)
        if j < top and not self.zeck:
            raise ParameterError(f"block {j} was not retained")
        for k in range(top + 1, j + 1):
            self._blocks[k] = self._zeck_step(k) if self.zeck else self._qary_step(k)
        return self._blocks[j]

    def _weights_type(self, w, factor):
        if w.dtype.kind in "iu" and float(w.sum()) * factor >= _COUNT_LIMIT:
            return w.astype(float)
        return w

    def _qary_step(self, k):
        v, w, levy, _ = self._blocks[k - 1]
        lvl = self.f.level(k - 1)
        w = self._weights_type(w, lvl.size)
        self._check(v.size * lvl.size)
        nv = (v[:, None] + lvl[None, :]).ravel()
        nw = np.repeat(w, lvl.size)
        mv, mw, disp, tol = _merge(nv, nw, self.rel_tol)
        self._check(mv.size)
        return mv, mw, levy + disp, tol

    def _zeck_step(self, k):
        v1, w1, l1, _ = self._blocks[k - 1]
        v2, w2, l2, _ = self._blocks[k - 2]
        s = self.f.value_at(k - 1)
        if w1.dtype != w2.dtype or w1.dtype.kind not in "iu" or float(w1.sum() + w2.sum()) >= _COUNT_LIMIT:
            w1, w2 = w1.astype(float), w2.astype(float)
        self._check(v1.size + v2.size)
        nv = np.concatenate((v1, v2 + s))
        nw = np.concatenate((w1, w2))
        mv, mw, disp, tol = _merge(nv, nw, self.rel_tol)
        return mv, mw, max(l1, l2) + disp, tol

    def block(self, j: int) -> DiscreteDistribution:
        v, w, levy, tol = self.raw(j)
        return _finish(v, w, None, tol, levy)


def dist_block(f: AdditiveFunction, L: int, *, rel_tol: float = DEFAULT_REL_TOL,
               max_atoms: int = DEFAULT_MAX_ATOMS, grid: float | None = None) -> DiscreteDistribution:
    """Law of f(n) over n < q_L (Zeckendorf: over n < F_L)."""
    if L < 1:
        raise ParameterError("L must be at least 1")
    if grid is not None:
        return GridChain(f, grid).block(L)
    return BlockChain(f, rel_tol, max_atoms).block(L)


def dist_exact_N(f: AdditiveFunction, N: int, *, chain: BlockChain | None = None,
                 rel_tol: float = DEFAULT_REL_TOL,
                 max_atoms: int = DEFAULT_MAX_ATOMS) -> DiscreteDistribution:
    """Exact law of f(n) over n < N as a mixture of shifted blocks."""
    if N < 1:
        raise ParameterError("N must be at least 1")
    if chain is None:
        chain = BlockChain(f, rel_tol, max_atoms)
    ds = expand(N, f.system)
    nz = list(ds.positions())
    if len(nz) == 1 and nz[0][1] == 1:
        return chain.block(nz[0][0])
    parts_v, parts_w = [], []
    levy = 0.0
    prefix = 0.0
    use_float = N >= _COUNT_LIMIT
    for j, d in reversed(nz):
        v, w, lv, _ = chain.raw(j)
        levy = max(levy, lv)
        if use_float:
            w = w.astype(float)
        if f.system.kind == ZECKENDORF:
            parts_v.append(v + prefix)
            parts_w.append(w)
        else:
            lvl = f.level(j)
            for e in range(d):
                parts_v.append(v + (prefix + lvl[e]))
                parts_w.append(w)
            prefix += lvl[d]
            continue
        prefix += f.value_at(j)
    if not use_float:
        parts_w = [w.astype(np.int64) for w in parts_w]
    mv, mw, disp, tol = _merge(np.concatenate(parts_v), np.concatenate(parts_w), chain.rel_tol)
    if mv.size > chain.max_atoms:
        raise CapacityError(f"{mv.size} atoms exceed the budget of {chain.max_atoms}")
    return _finish(mv, mw, None if use_float else N, tol, levy + disp)


def dist_bruteforce(f: AdditiveFunction, N: int, cap: int = ORACLE_CAP) -> DiscreteDistribution:
    """Histogram of f(n) for n < N by direct evaluation."""
    if N < 1:
        raise ParameterError("N must be at least 1")
    if N > cap:
        raise CapacityError(f"N = {N} exceeds the brute-force cap {cap}")
    vals = f.eval_many(np.arange(N, dtype=np.int64))
    u, c = np.unique(vals, return_counts=True)
    return DiscreteDistribution(u, c / N, c.astype(np.int64), N, 0.0, 0.0)


def bruteforce_sum(f: AdditiveFunction, N: int, cap: int = ORACLE_CAP) -> float:
    if N > cap:
        raise CapacityError(f"N = {N} exceeds the brute-force cap {cap}")
    return math.fsum(f.eval_many(np.arange(N, dtype=np.int64)))


def zeckendorf_partial_sum(f: AdditiveFunction, k: int) -> float:
    """Sum of f(n) over n < F_k via sum_l F_{k-l} F_{l-1} f(F_l)."""
    if f.system.kind != ZECKENDORF:
        raise DomainError("identity holds for Zeckendorf-additive functions")
    return math.fsum(_fib_unchecked(k - l) * _fib_unchecked(l - 1) * f.value_at(l)
                     for l in range(2, k))


# grid approximations -----------------------------------------------------------

class _Grid:
    """Dense mass vector on the lattice {(offset + i) * delta}."""

    __slots__ = ("mass", "offset", "levy")

    def __init__(self, mass, offset, levy):
        self.mass = mass
        self.offset = offset
        self.levy = levy

    def mix_shifts(self, shifts, weights):
        """sum_i weights[i] * (self shifted by shifts[i] lattice steps)."""
        lo, hi = min(shifts), max(shifts)
        n = self.mass.size
        out = np.zeros(n + hi - lo)
        for s, w in zip(shifts, weights):
            out[s - lo:s - lo + n] += w * self.mass
        return _Grid(out, self.offset + lo, self.levy)


def _add_grids(a: _Grid, wa: float, b: _Grid, wb: float, shift: int) -> _Grid:
    lo = min(a.offset, b.offset + shift)
    hi = max(a.offset + a.mass.size, b.offset + shift + b.mass.size)
    out = np.zeros(hi - lo)
    out[a.offset - lo:a.offset - lo + a.mass.size] += wa * a.mass
    s = b.offset + shift - lo
    out[s:s + b.mass.size] += wb * b.mass
    return _Grid(out, lo, 0.0)


class GridChain:
    """Level laws with values snapped to a lattice of step ``delta``.

    The Levy ledger adds, per level, the largest rounding displacement
    of that level's values, which bounds the displacement of every path.
    """

    def __init__(self, f: AdditiveFunction, delta: float):
        if not delta > 0:
            raise ParameterError("grid step must be positive")
        self.f = f
        self.delta = float(delta)
        self.zeck = f.system.kind == ZECKENDORF
        one = _Grid(np.ones(1), 0, 0.0)
        self._blocks = {1: one, 2: one} if self.zeck else {0: one}
        self._top = max(self._blocks)
        self._ratio = 0.5  # F_{k-1}/F_k at k = 3

    def _snap(self, x):
        k = np.rint(np.asarray(x) / self.delta).astype(np.int64)
        return k, np.abs(np.asarray(x) - k * self.delta)

    def raw(self, j: int) -> _Grid:
        while self._top < j:
            k = self._top + 1
            if self.zeck:
                g = self._zeck_step(k)
                self._blocks.pop(k - 2, None)
            else:
                g = self._qary_step(k)
                self._blocks.pop(k - 1, None)
            self._blocks[k] = g
            self._top = k
        if j not in self._blocks:
            raise ParameterError(f"grid block {j} was discarded")
        return self._blocks[j]

    def _qary_step(self, k):
        prev = self._blocks[k - 1]
        lvl = self.f.level(k - 1)
        shifts, err = self._snap(lvl)
        a = lvl.size
        g = prev.mix_shifts(shifts.tolist(), [1.0 / a] * a)
        g.levy = prev.levy + float(err.max())
        return g

    def _zeck_step(self, k):
        a, b = self._blocks[k - 1], self._blocks[k - 2]
        if k == 3:
            rho = 0.5
        else:
            rho = 1.0 / (1.0 + self._ratio)
        self._ratio = rho
        (shift,), (err,) = self._snap([self.f.value_at(k - 1)])
        g = _add_grids(a, rho, b, 1.0 - rho, int(shift))
        g.levy = max(a.levy, b.levy + float(err))
        return g

    def to_distribution(self, g: _Grid) -> DiscreteDistribution:
        mask = g.mass > 0
        idx = np.flatnonzero(mask)
        values = (idx + g.offset) * self.delta
        m = g.mass[mask]
        return DiscreteDistribution(values, m / math.fsum(m), None, None, 0.0, g.levy)

    def block(self, j: int) -> DiscreteDistribution:
        return self.to_distribution(self.raw(j))


# limit approximation ---------------------------------------------------------

def _golden_weights(K: int) -> tuple[float, float]:
    """Limit frequencies F_{K-1} gamma**(2-K) and F_{K-2} gamma**(1-K)."""
    def scaled(m):  # F_m / gamma**m
        return (1.0 - (-1) ** m * GOLDEN ** (-2.0 * m)) / SQRT5
    return GOLDEN * scaled(K - 1), scaled(K - 2) / GOLDEN


@dataclass(frozen=True, eq=False)
class LimitApprox:
    """Level-J approximation to the limit law with its tail ledger.

    The limit is the law of X + R where X ~ ``dist`` carries the first J
    positions and R the remaining ones: |R| <= tail_shift_bound surely,
    E R = tail_mean and sd(R) <= tail_spread_bound.
    """

    dist: DiscreteDistribution
    J: int
    tail_shift_bound: float
    tail_spread_bound: float
    tail_mean: float = 0.0
    method: str = "exact"
    notes: tuple[str, ...] = field(default=())

    def centered(self) -> DiscreteDistribution:
        """``dist`` shifted by the expected tail."""
        return self.dist.shift(self.tail_mean) if self.tail_mean else self.dist

    def kolmogorov_error_bound(self, centered: bool = False) -> float:
        """Bound on sup |F - F_approx|.

        Uses min(Q(s + e), min_eps Q(eps + e) + var / eps**2), with s the
        sure tail displacement, e the Levy ledger and var the tail variance.
        """
        e = self.dist.levy_error
        s = self.tail_shift_bound + (abs(self.tail_mean) if centered else 0.0)
        if s == 0 and e == 0:
            return 0.0
        best = concentration(self.dist, s + e) if s + e > 0 else 0.0
        var = self.tail_spread_bound**2
        if centered and var > 0:
            for eps in self.tail_spread_bound * np.geomspace(1.0, 100.0, 25):
                best = min(best, concentration(self.dist, eps + e) + var / eps**2)
        return min(best, 1.0)

    def concentration_bound(self, h: float) -> float:
        """Upper bound on Q_F(h) for the true limit F.

        Q_F(h) <= Q(h + 2 (s + e)) surely, and for any eps
        Q_F(h) <= Q(h + 2 (eps + e)) + var / eps**2 around the tail mean.
        """
        e = self.dist.levy_error
        best = concentration(self.dist, h + 2.0 * (self.tail_shift_bound + e))
        var = self.tail_spread_bound**2
        if var > 0:
            for eps in self.tail_spread_bound * np.geomspace(1.0, 100.0, 25):
                best = min(best, concentration(self.dist, h + 2.0 * (eps + e)) + var / eps**2)
        return min(best, 1.0)


def limit_approx(f: AdditiveFunction, J: int, *, grid: float | None = None,
                 rel_tol: float = DEFAULT_REL_TOL,
                 max_atoms: int = DEFAULT_MAX_ATOMS) -> LimitApprox:
    """Approximate the limit law by keeping the first J positions exactly.

    For Zeckendorf, J is the index K: positions 2..K-1 are kept and the
    law of those digits is the golden-rotation mixture of D_{K-1} and a
    shifted D_{K-2}.
    """
    if J < 1:
        raise ParameterError("J must be at least 1")
    report = two_series(f, 1)
    if report.verdict is not Verdict.CONVERGES:
        raise CriterionError(f"{f.name}: convergence series verdict is {report.verdict.value}")
    sys = f.system
    chain = GridChain(f, grid) if grid is not None else BlockChain(f, rel_tol, max_atoms)
    method = "grid" if grid is not None else "exact"
    if sys.kind != ZECKENDORF:
        dist = chain.block(J)
        shift = f.tail_sum(J, "absolute").bound
        mean = f.tail_sum(J, "linear", 1).value
        spread = math.sqrt(f.tail_sum(J, "quadratic", 1).bound)
        return LimitApprox(dist, J, shift, spread, mean, method)
    K = max(J, 3)
    w1, w2 = _golden_weights(K)
    s = f.value_at(K - 1)
    if grid is not None:
        g1, g2 = chain.raw(K - 1), chain.raw(K - 2)
        (ks,), (err,) = chain._snap([s])
        g = _add_grids(g1, w1, g2, w2, int(ks))
        g.levy = max(g1.levy, g2.levy + float(err))
        dist = chain.to_distribution(g)
    else:
        v1, c1, l1, tol = chain.raw(K - 1)
        v2, c2, l2, _ = chain.raw(K - 2)
        nv = np.concatenate((v1, v2 + s))
        nw = np.concatenate((w1 * c1 / c1.sum(), w2 * c2 / c2.sum()))
        mv, mw, disp, tol = _merge(nv, nw, rel_tol)
        dist = _finish(mv, mw, None, tol, max(l1, l2) + disp)
    shift = f.tail_sum(K, "absolute").bound
    p = 1.0 / (GOLDEN * SQRT5)
    mean = p * f.tail_sum(K, "linear").value
    # digit covariances of the stationary golden-mean chain decay like gamma**(-2l)
    var = SQRT5 * p * (1 - p) * f.tail_sum(K, "quadratic").bound
    mean_err = GOLDEN ** (1 - 2 * K) / SQRT5 * shift
    return LimitApprox(dist, K, shift, math.sqrt(var) + mean_err, mean, method,
                       ("zeckendorf tail spread from stationary digit chain",))


# distances -------------------------------------------------------------------

def _cum(d: DiscreteDistribution):
    return d.cumulative


def kolmogorov(d1: DiscreteDistribution, d2: DiscreteDistribution, tol: float | None = None) -> float:
    """sup_x |F1(x) - F2(x)|, with breakpoints closer than ``tol`` identified."""
    if tol is None:
        tol = max(d1.collapse_tolerance, d2.collapse_tolerance)
    v = np.concatenate((d1.values, d2.values))
    order = np.argsort(v, kind="stable")
    vs = v[order]
    inc1 = np.concatenate((np.diff(np.concatenate(([0.0], _cum(d1)))), np.zeros(len(d2))))[order]
    inc2 = np.concatenate((np.zeros(len(d1)), np.diff(np.concatenate(([0.0], _cum(d2))))))[order]
    c1 = np.cumsum(inc1)
    c2 = np.cumsum(inc2)
    gaps = np.diff(vs)
    last = np.empty(vs.size, dtype=bool)
    last[-1] = True
    last[:-1] = gaps > tol if tol > 0 else gaps > 0
    return float(min(1.0, np.max(np.abs(c1[last] - c2[last]))))


def kolmogorov_to_cdf(d: DiscreteDistribution, cdf) -> float:
    """sup_x |F_d(x) - G(x)| for a continuous CDF G."""
    g = np.asarray(cdf(d.values), dtype=float)
    cum = d.cumulative
    before = np.concatenate(([0.0], cum[:-1]))
    return float(max(np.max(np.abs(cum - g)), np.max(np.abs(before - g))))


def concentration(d: DiscreteDistribution, h: float) -> float:
    """sup_z of the mass in the half-open window (z, z + h]."""
    if not h > 0:
        raise ParameterError("window length must be positive")
    cum = np.concatenate(([0.0], d.cumulative))
    left = np.searchsorted(d.values, d.values - h, side="right")
    right = np.arange(1, len(d) + 1)
    return float(min(1.0, np.max(cum[right] - cum[left])))
