"""Command-line runner: ``digitew <command> [--config FILE | --scenario NAME] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds as bd
from . import config as cfgmod
from .additive import builtin, load_table
from .charfun import (
    CharFunction,
    fit_decay,
    phi_product,
    phi_upper_bound,
    phi_zeckendorf,
    product_levels_for,
    sj_integral,
)
from .distribution import (
    BlockChain,
    concentration,
    dist_bruteforce,
    dist_exact_N,
    kolmogorov,
)
from .exceptions import DigitewError, ParameterError
from .numeration import QARY, ZECKENDORF, NumerationSystem, expand

log = logging.getLogger("digitew")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("DIGITEW_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items):
    """Map preserving input order; parallel when DIGITEW_THREADS > 1."""
    items = list(items)
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def build_function(cfg: cfgmod.ExperimentConfig, system=None):
    system = system or cfg.numeration
    if cfg.table:
        return load_table(cfg.table, system)
    return builtin(cfg.function, system)


# output ---------------------------------------------------------------------------------

class Sink:
    """CSV/JSON writer; prints to stdout when no output directory is given."""

    def __init__(self, out: str | None, cfg: cfgmod.ExperimentConfig, stream=None):
        self.dir = Path(out) if out else None
        self.cfg = cfg
        self.stream = stream or sys.stdout
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def provenance(self) -> str:
        return f"# provenance: config_sha256={self.cfg.digest()} name={self.cfg.name}\n"

    def csv(self, stem: str, header, rows, comments: dict | None = None) -> str:
        buf = io.StringIO()
        buf.write(self.provenance())
        for k, v in (comments or {}).items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        return self._emit(f"{stem}.csv", buf.getvalue())

    def text(self, name: str, body: str) -> str:
        return self._emit(name, body)

    def json(self, stem: str, obj) -> str:
        return self._emit(f"{stem}.json", json.dumps(obj, indent=2, default=_json_default) + "\n")

    def _emit(self, name, body):
        if self.dir is None:
            self.stream.write(body)
        else:
            (self.dir / name).write_text(body)
        return body


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _json_default(x):
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


# commands ---------------------------------------------------------------------------------

def cmd_expand(n: int, system: str) -> str:
    s = NumerationSystem.parse(system)
    ds = expand(n, s)
    if n == 0:
        return "0"
    if s.kind == ZECKENDORF:
        return "+".join(f"F_{j}" for j, _ in sorted(ds.positions(), reverse=True))
    digits = ds.digits[::-1]
    if s.kind == QARY and s.q <= 10:
        return "".join(str(d) for d in digits) + f" (base {s.q})"
    return ",".join(str(d) for d in digits) + f" ({s})"


def cmd_dist(cfg, sink: Sink):
    f = build_function(cfg)
    chain = BlockChain(f)
    summary = []
    for N in cfg.N_schedule:
        d = dist_exact_N(f, N, chain=chain)
        rec = {"N": N, "atoms": len(d), "mean": d.mean(),
               "Q": {repr(float(h)): concentration(d, float(h)) for h in cfg.h}}
        if cfg.oracle and N <= 10**6:
            rec["kolmogorov_vs_bruteforce"] = kolmogorov(d, dist_bruteforce(f, N))
        try:
            m = bd.measure_distance(f, N, chain=chain)
            rec["kolmogorov_vs_limit"] = m.distance
            rec["limit_error_bound"] = m.limit_error_bound
        except DigitewError as exc:
            rec["limit_unavailable"] = str(exc)
        text = d.to_csv(comments={"provenance": f"config_sha256={cfg.digest()}", "N": N,
                                  "function": f.name, "system": str(f.system)})
        sink.text(f"dist_N{N}.csv", text)
        summary.append(rec)
    sink.json("dist_summary", summary)
    return summary


def _charfun_levels(f, cfg):
    if cfg.levels:
        return cfg.levels
    return product_levels_for(f, float(np.max(np.abs(cfg.t_grid), initial=1.0)))


def cmd_charfun(cfg, sink: Sink):
    f = build_function(cfg)
    ts = cfg.t_grid
    J = _charfun_levels(f, cfg)
    if f.system.kind == ZECKENDORF:
        vals = np.array([phi_zeckendorf(f, t, J)[0] for t in ts])
        tb = np.zeros(ts.shape)
    else:
        vals, tb = CharFunction.product(f, J).evaluate(ts)

    def ub(t):
        return phi_upper_bound(f, t).bound if t != 0 else 1.0

    ubs = ordered_map(ub, ts.tolist())
    rows = [(float(t), float(v.real), float(v.imag), float(abs(v)), float(b), float(u))
            for t, v, b, u in zip(ts, vals, tb, ubs)]
    sink.csv("charfun", ["t", "re", "im", "abs", "trunc_bound", "upper_bound"], rows,
             {"function": f.name, "system": str(f.system), "levels": J})
    return rows


def _theorems_for(cfg, f):
    if cfg.theorems or f is None:
        return cfg.theorems
    if f.system.kind == ZECKENDORF:
        return ("ThZ2",)
    if f.system.kind == QARY:
        return ("Th2A",)
    return ("Th2C",)


def cmd_bound(cfg, sink: Sink):
    f = build_function(cfg)
    out = []
    for N in cfg.N_schedule:
        for th in _theorems_for(cfg, f):
            try:
                b = bd.resolve_T(cfg.T_policy, th, f, N, **_ledger_kw(cfg, th))
                out.append(b.as_dict())
            except DigitewError as exc:
                if len(cfg.N_schedule) == 1:
                    raise
                out.append({"theorem": th, "N": N, "error": str(exc),
                            "exit_code": exc.exit_code})
    sink.json("bound", out)
    return out


def _ledger_kw(cfg, th):
    kw = {}
    if th not in ("Th2B", "ThZ2_integral", "Th3", "Th3_appendixB"):
        kw["q_source"] = cfg.q_source
    if th == "Th3":
        kw["eta"] = float(cfg.extra.get("eta", 0.0)) or None
    return kw


def cmd_rates(cfg, sink: Sink):
    if cfg.extra.get("sweep") == "beta":
        rows = []
        for beta in cfg.beta:
            beta = cfgmod._named_real(beta)
            sub = cfg.replace(function=f"geometric:{beta!r}", extra={}, name=f"{cfg.name}_{beta:g}")
            for r in _rates_rows(sub)[1]:
                rows.append(dict(r, beta=beta))
        header = ["beta"] + _rates_header(_theorems_for(cfg, None))
        sink.csv("rates", header, ([r.get(k, "") for k in header] for r in rows),
                 {"system": cfg.system, "T_policy": cfg.T, "sweep": "beta"})
        return rows
    f, rows = _rates_rows(cfg)
    header = _rates_header(_theorems_for(cfg, f))
    sink.csv("rates", header, ([r.get(k, "") for k in header] for r in rows),
             {"function": f.name, "system": str(f.system), "T_policy": cfg.T})
    return rows


def _rates_header(theorems):
    header = ["N", "L", "measured_distance", "limit_error_bound"]
    for th in theorems:
        header += [f"total_{th}", f"T_{th}"]
    return header + ["preset_rate", "error"]


def _rates_rows(cfg):
    f = build_function(cfg)
    theorems = _theorems_for(cfg, f)
    preset = cfg.T_policy[1] if cfg.T_policy[0] == "preset" else cfg.extra.get("rate")
    if bd.closed_form_cdf(f) is None:
        bd.default_limit(f)  # build once before the workers share it
    chain = BlockChain(f)

    def row(N):
        r = {"N": N}
        try:
            m = bd.measure_distance(f, N, chain=chain)
            r.update(L=m.L, measured_distance=m.distance, limit_error_bound=m.limit_error_bound)
        except DigitewError as exc:
            r.update(L="", measured_distance="", limit_error_bound="", error=str(exc))
        for th in theorems:
            try:
                b = bd.resolve_T(cfg.T_policy, th, f, N, **_ledger_kw(cfg, th))
                r[f"total_{th}"] = b.total
                r[f"T_{th}"] = b.T
            except DigitewError as exc:
                r[f"total_{th}"] = ""
                r[f"T_{th}"] = ""
                r.setdefault("error", str(exc))
        r["preset_rate"] = bd.rate_value(preset, f, N) if preset else ""
        return r

    if threads() > 1 and cfg.N_schedule:
        # the block chain is not shared safely while it grows; build it first
        L = bd.length(cfg.N_schedule[-1], f.system)
        chain.raw(L.largest_index if hasattr(L, "largest_index") else L)
    rows = ordered_map(row, cfg.N_schedule)
    for r in rows:
        if r.get("error"):
            log.warning("N=%s: %s", r["N"], r["error"])
    return f, rows


def cmd_pisot(cfg, sink: Sink):
    """|phi| of the Bernoulli-convolution limit along t_k = lam * (1/beta)^k."""
    system = NumerationSystem.qary(2)
    rows = []
    for beta in cfg.beta:
        beta = cfgmod._named_real(beta)
        f = builtin(f"geometric:{beta!r}", system)
        ks = cfg.k_range
        ts = np.array([cfg.lam * beta ** (-k) for k in ks], float)
        if not len(ts):
            continue
        J = cfg.levels or product_levels_for(f, float(ts.max()))
        vals, tb = phi_product(f, ts, J)
        rows += [(beta, k, float(t), float(abs(v)), float(b))
                 for k, t, v, b in zip(ks, ts, vals, tb)]
    sink.csv("pisot", ["beta", "k", "t", "abs_phi", "trunc_bound"], rows,
             {"lam": cfg.lam, "note": "exploratory, no verdict"})
    return rows


def cmd_sjdecay(cfg, sink: Sink):
    rows, fits = [], []
    for B in cfg.B_values:
        res = ordered_map(lambda J: sj_integral(B, J, max_points=cfg.max_points), cfg.J_range)
        for J, r in zip(cfg.J_range, res):
            rows.append((B, J, r.value, math.log(r.value), r.error, r.method))
        if len(res) >= 2:
            fit = fit_decay(cfg.J_range, [r.value for r in res])
            fits.append({"B": B, "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                         "resolved_all": all(r.resolved for r in res)})
    sink.csv("sjdecay", ["B", "J", "integral", "log_integral", "error", "method"], rows)
    sink.json("sjdecay_fit", fits)
    return rows, fits


COMMAND_FUNCS = {"dist": cmd_dist, "charfun": cmd_charfun, "bound": cmd_bound,
                 "rates": cmd_rates, "pisot": cmd_pisot, "sjdecay": cmd_sjdecay}


# argument handling ---------------------------------------------------------------------------

def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="digitew",
                                description="Distribution of additive functions of digits.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("expand", help="print the expansion of an integer")
    e.add_argument("n", type=int)
    e.add_argument("--system", default="qary:10")
    for name in COMMAND_FUNCS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat TOML experiment file")
        s.add_argument("--scenario", help=f"bundled scenario: {', '.join(cfgmod.scenario_names())}")
        s.add_argument("--out", help="output directory (default: stdout)")
        s.add_argument("--system")
        s.add_argument("--function")
        s.add_argument("--N", help="N schedule, e.g. 1000 or geometric:2:10:20")
        s.add_argument("--T", help="number, auto or preset:<name>")
        s.add_argument("--theorem", action="append", dest="theorems")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (TOML value syntax)")
    return p


def resolve_config(args) -> cfgmod.ExperimentConfig:
    if args.config and args.scenario:
        raise ParameterError("give --config or --scenario, not both")
    if args.config:
        base = cfgmod.load(args.config).to_dict()
    elif args.scenario:
        base = cfgmod.load_scenario(args.scenario).to_dict()
    else:
        base = {}
    base["command"] = args.command
    for key in ("system", "function", "N", "T"):
        v = getattr(args, key)
        if v is not None:
            base[key] = _cli_value(v) if key in ("N", "T") else v
    if args.theorems:
        base["theorems"] = list(args.theorems)
    for item in args.set:
        k, sep, v = item.partition("=")
        if not sep:
            raise ParameterError(f"--set expects KEY=VALUE, got {item!r}")
        base[k.strip()] = cfgmod.tomllib.loads(f"v = {v}")["v"]
    return cfgmod.from_dict(base)


def _cli_value(v: str):
    """A TOML literal when it parses as one (1024, [8, 16], 3.5), else the raw string."""
    try:
        return cfgmod.tomllib.loads(f"v = {v}")["v"]
    except cfgmod.tomllib.TOMLDecodeError:
        return v


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "expand":
            print(cmd_expand(args.n, args.system))
            return 0
        cfg = resolve_config(args)
        COMMAND_FUNCS[args.command](cfg, Sink(args.out, cfg))
        return 0
    except DigitewError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
