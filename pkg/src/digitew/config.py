"""Experiment configuration: flat TOML files of key = value pairs.

Grammar (every key optional unless noted)::

    name       = "power_law_qary"       # label for outputs
    command    = "rates"                # default subcommand for --scenario
    system     = "qary:2"               # qary:q | cantor:a0,a1,...|period:p | zeckendorf
    function   = "power_law:1.5"        # builtin descriptor, or table = "path"
    table      = "values.txt"
    N          = "geometric:2:10:24"    # or [100, 1000], or "fibonacci:15:34"
    T          = "preset:power_law"     # number | "auto" | "preset:<name>"
    theorems   = ["Th2A", "Th2A_refined"]
    q_source   = "measured"             # measured | closed-form
    out        = "out"
    oracle     = false                  # cross-check against brute force where cheap
    t          = "linspace:-20:20:101"  # or a list
    h          = [0.1, 0.5, 1.0]
    beta       = [0.5, 0.618]
    lam        = 1.0
    k          = "range:0:30"
    B          = [1.5, 2.0, "golden2"]
    J          = "range:5:40"
    max_points = 2097152
    levels     = 60

Values are scalars or flat lists of scalars; no tables.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .exceptions import ParameterError
from .numeration import GOLDEN, NumerationSystem, fibonacci

COMMANDS = ("expand", "dist", "charfun", "bound", "rates", "pisot", "sjdecay")
SCENARIO_DIR = Path(__file__).with_name("scenarios")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    command: str = "rates"
    system: str = "qary:2"
    function: str = "sum_of_digits"
    table: str = ""
    N: str | tuple = ()
    T: str | float = "auto"
    theorems: tuple = ()
    q_source: str = "measured"
    out: str = "out"
    oracle: bool = False
    t: str | tuple = "linspace:-20:20:101"
    h: tuple = (0.1, 0.5, 1.0)
    beta: tuple = (0.5,)
    lam: float = 1.0
    k: str | tuple = "range:0:30"
    B: tuple = (1.5, 2.0, "golden2")
    J: str | tuple = "range:5:40"
    max_points: int = 2**21
    levels: int = 0
    extra: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command {self.command!r}")
        NumerationSystem.parse(self.system)
        self.N_schedule  # validates
        self.T_policy
        from .bounds import PRESETS, THEOREMS

        for th in self.theorems:
            if th not in THEOREMS:
                raise ParameterError(f"unknown theorem {th!r}")
        kind, _ = self.T_policy
        if kind == "preset" and self.T_policy[1] not in PRESETS:
            raise ParameterError(f"unknown T preset {self.T_policy[1]!r}")

    # derived views

    @property
    def numeration(self) -> NumerationSystem:
        return NumerationSystem.parse(self.system)

    @property
    def N_schedule(self) -> tuple[int, ...]:
        ns = _expand_ints(self.N)
        if any(n < 1 for n in ns):
            raise ParameterError("N values must be positive")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ParameterError("N schedule must be strictly increasing")
        return ns

    @property
    def T_policy(self) -> tuple[str, object]:
        T = self.T
        if isinstance(T, (int, float)) and not isinstance(T, bool):
            return "fixed", float(T)
        s = str(T)
        if s == "auto":
            return "auto", None
        if s.startswith("preset:"):
            return "preset", s.split(":", 1)[1]
        try:
            return "fixed", float(s)
        except ValueError:
            raise ParameterError(f"bad T policy {T!r}") from None

    @property
    def t_grid(self) -> np.ndarray:
        return _expand_reals(self.t)

    @property
    def k_range(self) -> tuple[int, ...]:
        return _expand_ints(self.k)

    @property
    def J_range(self) -> tuple[int, ...]:
        return _expand_ints(self.J)

    @property
    def B_values(self) -> tuple[float, ...]:
        return tuple(_named_real(b) for b in self.B)

    # serialization

    def to_dict(self) -> dict:
        out = {}
        for fl in fields(self):
            if fl.name == "extra":
                continue
            v = getattr(self, fl.name)
            out[fl.name] = list(v) if isinstance(v, tuple) else v
        out.update(self.extra)
        return out

    def to_toml(self) -> str:
        return "".join(f"{k} = {_toml_value(v)}\n" for k, v in self.to_dict().items())

    def digest(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()

    def replace(self, **kw) -> ExperimentConfig:
        d = {fl.name: getattr(self, fl.name) for fl in fields(self)}
        d.update(kw)
        return ExperimentConfig(**d)


def from_dict(d: dict) -> ExperimentConfig:
    known = {fl.name for fl in fields(ExperimentConfig)} - {"extra"}
    kw, extra = {}, {}
    for k, v in d.items():
        if isinstance(v, dict):
            raise ParameterError(f"config key {k!r}: nested tables are not allowed")
        if isinstance(v, list):
            if any(isinstance(x, (list, dict)) for x in v):
                raise ParameterError(f"config key {k!r}: lists must be flat")
            v = tuple(v)
        (kw if k in known else extra)[k] = v
    return ExperimentConfig(**kw, extra=extra)


def loads(text: str) -> ExperimentConfig:
    try:
        return from_dict(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        raise ParameterError(f"config parse error: {exc}") from exc


def load(path: str | Path) -> ExperimentConfig:
    return loads(Path(path).read_text())


def scenario_names() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.toml"))


def load_scenario(name: str) -> ExperimentConfig:
    path = SCENARIO_DIR / f"{name}.toml"
    if not path.exists():
        raise ParameterError(f"unknown scenario {name!r}; known: {scenario_names()}")
    return load(path)


# helpers -------------------------------------------------------------------------

def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ParameterError(f"cannot serialize {v!r}")


def _named_real(x) -> float:
    if isinstance(x, (int, float)):
        return float(x)
    names = {"golden": GOLDEN, "golden2": GOLDEN**2, "pi": math.pi, "e": math.e,
             "inv_golden": 1.0 / GOLDEN}
    if x in names:
        return names[x]
    try:
        return float(x)
    except ValueError:
        raise ParameterError(f"bad number {x!r}") from None


def _expand_ints(schedule) -> tuple[int, ...]:
    """[..], "geometric:b:k0:k1", "fibonacci:k0:k1", "range:a:b" (inclusive)."""
    if isinstance(schedule, (list, tuple)):
        return tuple(int(x) for x in schedule)
    if isinstance(schedule, int):
        return (schedule,)
    parts = str(schedule).split(":")
    try:
        if parts[0] == "geometric" and len(parts) == 4:
            b, k0, k1 = map(int, parts[1:])
            return tuple(b**k for k in range(k0, k1 + 1))
        if parts[0] == "fibonacci" and len(parts) == 3:
            k0, k1 = map(int, parts[1:])
            return tuple(fibonacci(k) for k in range(k0, k1 + 1))
        if parts[0] == "range" and len(parts) in (3, 4):
            a, b = int(parts[1]), int(parts[2])
            step = int(parts[3]) if len(parts) == 4 else 1
            return tuple(range(a, b + 1, step))
    except ValueError:
        pass
    raise ParameterError(f"bad integer schedule {schedule!r}")


def _expand_reals(schedule) -> np.ndarray:
    """[..] or "linspace:a:b:n" / "logspace:a:b:n" (powers of ten)."""
    if isinstance(schedule, (list, tuple)):
        return np.array([_named_real(x) for x in schedule], float)
    parts = str(schedule).split(":")
    if parts[0] in ("linspace", "logspace") and len(parts) == 4:
        try:
            a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError:
            raise ParameterError(f"bad grid {schedule!r}") from None
        return (np.linspace if parts[0] == "linspace" else np.logspace)(a, b, n)
    raise ParameterError(f"bad real grid {schedule!r}")
