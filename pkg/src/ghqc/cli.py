"""Command-line front end.

    ghqc price --contract FILE [--method ghqc|ghqc-m|fd|mc|closed] [overrides] [--out FILE]
    ghqc bench table1|table2|table3 [--method ghqc|ghqc-m|fd] [--out FILE]

Exit status: 0 success, 2 configuration error, 3 numerical failure.
Log verbosity comes from the GHQC_LOG_LEVEL environment variable.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from importlib import resources
from typing import Optional

import numpy as np

from . import contracts as c
from .pricers import Discretization, Market, PricingRequest, price
from .quadrature import QuadratureError

log = logging.getLogger("ghqc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CSV_FIELDS = ("id", "method", "M", "N", "q", "N_A", "price", "reference", "relError", "wallMillis")


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    contract_path: Optional[str] = None
    suite: Optional[str] = None
    method: str = "ghqc"
    m: Optional[int] = None
    n: Optional[int] = None
    q: Optional[int] = None
    n_aux: Optional[int] = None
    width: Optional[float] = None
    seed: int = 20240101
    paths: int = 1_000_000
    out: Optional[str] = None
    timing: bool = True
    jobs: int = 1


@dataclass(frozen=True)
class ErrorReport:
    ids: tuple
    rel_errors: tuple
    rrmse: float
    source: str


def rrmse(values, reference) -> float:
    v = np.asarray(values, dtype=float)
    ref = np.asarray(reference, dtype=float)
    return float(np.sqrt(np.mean(((v - ref) / ref) ** 2)))


# contract files ---------------------------------------------------------

def _number(text: str, where: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    try:
        return float(Fraction(t)) if "/" in t else float(t)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{where}: cannot read {text!r} as a number") from None


def _numbers(text: str, where: str):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    vals = [_number(p, where) for p in parts]
    return vals[0] if len(vals) == 1 else tuple(vals)


def _phi(text: str, where: str) -> int:
    t = text.strip().lower()
    table = {"call": 1, "+1": 1, "1": 1, "put": -1, "-1": -1}
    if t not in table:
        raise ConfigError(f"{where}: phi must be call or put, got {text!r}")
    return table[t]


class _Section:
    def __init__(self, parser: configparser.ConfigParser, name: str, path: str):
        if not parser.has_section(name):
            raise ConfigError(f"{path}: missing [{name}] section")
        self.sec = parser[name]
        self.name = f"{path} [{name}]"

    def where(self, key):
        return f"{self.name} {key}"

    def has(self, key):
        return key in self.sec

    def text(self, key, default=None):
        if key in self.sec:
            return self.sec[key].strip()
        if default is None:
            raise ConfigError(f"{self.name}: missing field '{key}'")
        return default

    def num(self, key, default=None):
        if key not in self.sec:
            if default is None:
                raise ConfigError(f"{self.name}: missing field '{key}'")
            return default
        return _number(self.sec[key], self.where(key))

    def nums(self, key, default=None):
        if key not in self.sec:
            if default is None:
                raise ConfigError(f"{self.name}: missing field '{key}'")
            return default
        return _numbers(self.sec[key], self.where(key))

    def integer(self, key, default=None):
        v = self.num(key, default)
        if v is None or float(v) != int(v):
            raise ConfigError(f"{self.where(key)}: expected an integer")
        return int(v)

    def dates(self, prefix="date"):
        """Either an explicit list or a count with constant spacing."""
        key = prefix + "s"
        if self.has(key):
            d = self.nums(key)
            return (d,) if isinstance(d, float) else d
        n = self.integer(prefix + "_count")
        dt = self.num(prefix + "_spacing")
        return tuple((k + 1) * dt for k in range(n))


def load_contract(path: str):
    """Read a contract file. Returns (contract, market, discretization fields)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    sec = _Section(parser, "contract", path)
    kind = sec.text("kind").lower()
    try:
        if kind == "vanilla":
            style = sec.text("style", "european").lower()
            phi = _phi(sec.text("phi"), sec.where("phi"))
            strike, mat = sec.num("strike"), sec.num("maturity")
            if style == "bermudan" and sec.has("exercise_per_year"):
                contract = c.VanillaSpec.bermudan(strike, phi, mat, sec.integer("exercise_per_year"))
            elif style == "bermudan":
                contract = c.VanillaSpec(strike, phi, mat, style, sec.dates("exercise_date"))
            else:
                contract = c.VanillaSpec(strike, phi, mat, style)
        elif kind == "barrier":
            contract = c.BarrierSpec(sec.num("strike"), _phi(sec.text("phi"), sec.where("phi")), sec.dates(),
                                     sec.nums("lower", -math.inf), sec.nums("upper", math.inf),
                                     sec.text("monitoring", "discrete").lower())
        elif kind == "asian":
            fixed = sec.num("fixed_strike") if sec.has("fixed_strike") else None
            contract = c.AsianSpec(_phi(sec.text("phi"), sec.where("phi")), sec.dates(), fixed)
        elif kind == "tarn":
            contract = c.TarnSpec(sec.num("strike"), _phi(sec.text("phi", "call"), sec.where("phi")),
                                  sec.num("target"), sec.text("knockout").lower(), sec.dates())
        elif kind == "gmwb":
            contract = c.GmwbSpec(sec.num("premium"), sec.dates(), sec.num("withdrawal"),
                                  sec.num("penalty", 0.0), sec.num("fee", 0.0), sec.text("mode", "static").lower())
        else:
            raise ConfigError(f"{sec.where('kind')}: unknown contract kind {kind!r}")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{sec.name}: {exc}") from None

    mkt = _Section(parser, "market", path)
    spot = mkt.num("spot", 0.0) if kind == "gmwb" else mkt.num("spot")
    market = Market(spot if spot else getattr(contract, "premium", 0.0), mkt.num("r"), mkt.num("sigma"),
                    mkt.num("mu") if mkt.has("mu") else None)
    if market.sigma <= 0.0:
        raise ConfigError(f"{mkt.where('sigma')}: volatility must be positive")

    disc = {}
    if parser.has_section("discretization"):
        d = _Section(parser, "discretization", path)
        for key, name, conv in (("m", "m", d.integer), ("n", "n_steps", d.integer), ("q", "q", d.integer),
                                ("na", "n_aux", d.integer), ("width", "width", d.num),
                                ("steps_per_date", "steps_per_date", d.integer)):
            if d.has(key):
                disc[name] = conv(key)
        if d.has("spline"):
            disc["spline"] = d.text("spline").lower()
    return contract, market, disc


# pricing ----------------------------------------------------------------

def _discretization(fields: dict, cfg: RunConfig) -> Discretization:
    f = dict(fields)
    for name, val in (("m", cfg.m), ("n_steps", cfg.n), ("q", cfg.q), ("n_aux", cfg.n_aux), ("width", cfg.width)):
        if val is not None:
            f[name] = val
    f["method"] = cfg.method if cfg.method in ("ghqc", "ghqc-m", "fd") else "ghqc"
    try:
        return Discretization(**f)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"discretization: {exc}") from None


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"{what} is not finite")
    return value


def run_price(cfg: RunConfig, stdout=None) -> tuple[int, Optional[dict]]:
    stdout = stdout or sys.stdout
    try:
        contract, market, fields = load_contract(cfg.contract_path)
        disc = _discretization(fields, cfg)
        t0 = time.perf_counter()
        se = None
        if cfg.method == "mc":
            from .oracles.mc import McConfig, mc_price
            try:
                mcfg = McConfig(paths=cfg.paths, seed=cfg.seed, substeps=disc.steps_per_date)
                value, se = mc_price(contract, market, market.spot, mcfg)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            diagnostics = {"standard_error": se}
        elif cfg.method == "closed":
            from .oracles.closed_form import closed_form_european
            if not (isinstance(contract, c.VanillaSpec) and contract.style is c.ExerciseStyle.EUROPEAN):
                raise ConfigError("the closed form covers European vanilla contracts only")
            mu = market.r if market.mu is None else market.mu
            try:
                value = closed_form_european(market.spot, contract.strike, contract.phi, float(mu),
                                             float(market.r), float(market.sigma), contract.maturity)
            except TypeError:
                raise ConfigError("the closed form needs constant market parameters") from None
            diagnostics = {}
        else:
            try:
                res = price(PricingRequest(contract, market, disc))
            except (QuadratureError, FloatingPointError) as exc:
                raise NumericalError(str(exc)) from None
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            value, diagnostics = res.price, res.diagnostics
        elapsed = time.perf_counter() - t0
        _finite(value, "price")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, None

    record = {
        "id": os.path.splitext(os.path.basename(cfg.contract_path))[0],
        "method": cfg.method, "M": disc.m, "N": disc.n_steps if disc.n_steps is not None else "",
        "q": disc.q, "N_A": disc.n_aux, "price": repr(float(value)), "reference": "", "relError": "",
        "wallMillis": f"{1000 * elapsed:.3f}" if cfg.timing else "",
    }
    print(f"price {value:.10f}", file=stdout)
    for k, v in diagnostics.items():
        print(f"{k} {v}", file=stdout)
    print(f"wall {1000 * elapsed:.1f} ms", file=stdout)
    if cfg.out:
        write_csv(cfg.out, [record])
    return EXIT_OK, record


def write_csv(path: str, rows) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


# benchmark suites -------------------------------------------------------

def reference_table(name: str) -> list[dict]:
    text = resources.files("ghqc.data").joinpath(f"{name}.csv").read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _suite_disc(suite: str, method: str) -> Discretization:
    meth = "ghqc" if method == "mc" else method
    if suite == "table1":
        if method == "fd":
            return Discretization(m=400, steps_per_date=30, method="fd")
        return Discretization(m=200, q=5, steps_per_date=5, method=meth)
    if suite == "table2":
        return Discretization(m=500, q=16, steps_per_date=9000, method=meth)
    if suite == "table3":
        return Discretization(m=500, q=6, steps_per_date=15, n_aux=50, method=meth)
    raise ConfigError(f"unknown suite {suite!r}; expected table1, table2 or table3")


def suite_requests(suite: str, method: str = "ghqc", disc: Optional[Discretization] = None):
    """(id, request, reference) for every case of a published suite."""
    disc = disc or _suite_disc(suite, method)
    out = []
    if suite == "table1":
        for row in reference_table("table1"):
            spec = c.VanillaSpec.bermudan(40.0, -1, float(row["maturity"]), 50)
            mkt = Market(float(row["spot"]), 0.06, float(row["sigma"]))
            out.append((row["id"], PricingRequest(spec, mkt, disc), float(row["exact"])))
    elif suite == "table2":
        spec = c.VanillaSpec(100.0, -1, 3.0, c.ExerciseStyle.AMERICAN)
        for row in reference_table("table2"):
            mkt = Market(float(row["spot"]), 0.07, 0.4, 0.04)
            out.append((row["id"], PricingRequest(spec, mkt, disc), float(row["exact"])))
    elif suite == "table3":
        dates = tuple((k + 1) * 30.0 / 365.0 for k in range(20))
        for row in reference_table("table3"):
            spec = c.TarnSpec(1.0, 1, float(row["target"]), row["knockout"], dates)
            out.append((row["id"], PricingRequest(spec, Market(1.05, 0.0, 0.2), disc), float(row["exact"])))
    else:
        raise ConfigError(f"unknown suite {suite!r}; expected table1, table2 or table3")
    return out


def _timed_price(req: PricingRequest) -> tuple[float, float]:
    t0 = time.perf_counter()
    p = price(req).price
    return p, time.perf_counter() - t0


def run_bench(cfg: RunConfig, stdout=None) -> tuple[int, Optional[ErrorReport], list]:
    stdout = stdout or sys.stdout
    try:
        if cfg.method not in ("ghqc", "ghqc-m", "fd"):
            raise ConfigError(f"bench supports ghqc, ghqc-m and fd, not {cfg.method!r}")
        base = _suite_disc(cfg.suite, cfg.method)
        over = {k: v for k, v in (("m", cfg.m), ("q", cfg.q), ("n_aux", cfg.n_aux), ("width", cfg.width))
                if v is not None}
        if cfg.n is not None:
            over["n_steps"] = cfg.n
        try:
            disc = replace(base, **over)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cases = suite_requests(cfg.suite, cfg.method, disc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None, []

    reqs = [r for _, r, _ in cases]
    try:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_timed_price, reqs))
        else:
            results = [_timed_price(r) for r in reqs]
        for p, _ in results:
            _finite(p, "price")
    except (QuadratureError, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, None, []
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None, []

    rows = []
    for (cid, req, ref), (p, wall) in sorted(zip(cases, results), key=lambda t: t[0][0]):
        n_steps = req.disc.n_steps
        if n_steps is None:
            # time steps actually used: steps per date times number of dates
            spec = req.contract
            count = len(getattr(spec, "exercise_dates", ()) or getattr(spec, "fixing_dates", ()) or (1,))
            n_steps = req.disc.steps_per_date * count
        rows.append({
            "id": cid, "method": cfg.method, "M": req.disc.m, "N": n_steps,
            "q": "" if cfg.method == "fd" else req.disc.q,
            "N_A": req.disc.n_aux if cfg.suite == "table3" else "",
            "price": repr(float(p)), "reference": repr(ref), "relError": repr((p - ref) / ref),
            "wallMillis": f"{1000 * wall:.3f}" if cfg.timing else "",
        })
    values = [float(r["price"]) for r in rows]
    refs = [float(r["reference"]) for r in rows]
    report = ErrorReport(tuple(r["id"] for r in rows), tuple((v - f) / f for v, f in zip(values, refs)),
                         rrmse(values, refs), f"{cfg.suite} exact column")
    for r in rows:
        print(f"{r['id']:6s} {float(r['price']):.6f} ref {float(r['reference']):.6f} rel {float(r['relError']):+.2e}",
              file=stdout)
    print(f"rRMSE {report.rrmse:.3e} vs {report.source}", file=stdout)
    if cfg.timing:
        print(f"total {sum(w for _, w in results):.3f} s", file=stdout)
    if cfg.out:
        write_csv(cfg.out, rows)
    return EXIT_OK, report, rows


# entry point ------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ghqc", description="Quadrature-on-spline option pricing")
    sub = ap.add_subparsers(dest="command", required=True)

    def overrides(p):
        p.add_argument("--M", dest="m", type=int)
        p.add_argument("--N", dest="n", type=int, help="total time steps")
        p.add_argument("--q", type=int)
        p.add_argument("--NA", dest="n_aux", type=int)
        p.add_argument("--width", type=float)
        p.add_argument("--out")
        p.add_argument("--no-timing", dest="timing", action="store_false",
                       help="leave wallMillis empty so repeated runs write identical files")

    p = sub.add_parser("price", help="price one contract file")
    p.add_argument("--contract", required=True)
    p.add_argument("--method", default="ghqc", choices=("ghqc", "ghqc-m", "fd", "mc", "closed"))
    p.add_argument("--oracle", choices=("mc", "fd", "closed"), help="price with a reference method instead")
    p.add_argument("--seed", type=int, default=20240101)
    p.add_argument("--paths", type=int, default=1_000_000)
    overrides(p)

    b = sub.add_parser("bench", help="run a published benchmark suite")
    b.add_argument("suite", choices=("table1", "table2", "table3"))
    b.add_argument("--method", default="ghqc", choices=("ghqc", "ghqc-m", "fd"))
    b.add_argument("--jobs", type=int, default=1)
    overrides(b)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("GHQC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    kw = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    if args.command == "price":
        kw["contract_path"] = args.contract
        if args.oracle:
            kw["method"] = args.oracle
        return run_price(RunConfig(**kw))[0]
    kw["suite"] = args.suite
    return run_bench(RunConfig(**kw))[0]


if __name__ == "__main__":
    sys.exit(main())
