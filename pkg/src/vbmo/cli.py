"""Command line front end: ``vbmo {decompose,seminorm,counterexample,verify}``.

Failures print ``error [module:stage]: message`` on stderr and exit with a
code per error family (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import errors
from .counterexample import ce_growth_demo, growth_fit, is_strictly_increasing
from .decompose import DecomposeConfig, helmholtz_decompose
from .fields import ScalarField, VectorField, bmo_seminorm, bnu_seminorm, load_field, save_field, vbmo_norm
from .freezing import SeriesConfig
from .geometry import Domain
from .neumann import normal_trace
from .reference import oracle_deviation
from .samples import named_field
from .verify import SUITES

log = logging.getLogger("vbmo")

EXIT_CODES = {
    errors.ConfigError: 2,
    errors.CompatibilityViolation: 4,
    errors.ConvergenceFailure: 5,
    errors.SolverDivergence: 6,
}
EXIT_IO = 3
EXIT_OTHER = 1
EXIT_VERIFY_FAILED = 7


@dataclass
class RunConfig:
    """Everything one pipeline run depends on; ``validate`` checks the invariants."""

    domain: str = "disk"  # JSON file or one of disk / ellipse / star
    field: str = "mixed"  # field file or a named field
    N: int | None = None  # None keeps the domain file's N (256 for named shapes)
    rho: float | None = None
    mu: float | None = None
    nu: float | None = None
    series_eps: float = 1e-12
    max_terms: int = 64
    ball_budget: int = 1024
    out: str = "out"
    seed: int = 0
    compat_tol: float = 1e-6
    force_trace: float | None = None
    oracle: bool = True

    def validate(self) -> "RunConfig":
        if self.N is not None and (self.N < 8 or self.N & (self.N - 1)):
            raise errors.ConfigError(f"N={self.N} must be a power of two", stage="config", module="cli")
        for name in ("rho", "mu", "nu", "series_eps", "compat_tol"):
            val = getattr(self, name)
            if val is not None and not (val > 0 and math.isfinite(val)):
                raise errors.ConfigError(f"{name} must be positive", stage="config", module="cli")
        if self.max_terms < 1 or self.ball_budget < 1:
            raise errors.ConfigError("max_terms and ball_budget must be >= 1", stage="config", module="cli")
        return self


def load_domain(spec: str, N: int | None = None, rho: float | None = None) -> Domain:
    """A JSON domain file, or a named shape with default parameters."""
    if spec in ("disk", "ellipse", "star"):
        dom = getattr(Domain, spec)(N=N or 256)
    else:
        dom = Domain.from_json(spec)
        if N is not None and N != dom.grid.N:
            dom = dom.with_(N=N)
    if rho is not None:
        dom = dom.with_(rho=rho)
    return dom


def load_vector(spec: str, domain: Domain, seed: int) -> VectorField:
    if Path(spec).suffix or Path(spec).exists():
        fld = load_field(spec)
        if not isinstance(fld, VectorField):
            raise errors.ConfigError(f"{spec} holds a scalar field", stage="load_field", module="cli")
        if not fld.grid.same_as(domain.grid):
            raise errors.GridMismatch("field grid differs from the domain grid", stage="load_field", module="cli")
        return fld
    return named_field(spec, domain.grid, seed)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------- commands
def cmd_decompose(cfg: RunConfig) -> int:
    cfg.validate()
    dom = load_domain(cfg.domain, cfg.N, cfg.rho)
    v = load_vector(cfg.field, dom, cfg.seed)
    dcfg = DecomposeConfig(series=SeriesConfig(cfg.series_eps, cfg.max_terms), mu=cfg.mu, nu=cfg.nu,
                           ball_budget=cfg.ball_budget, compat_tol=cfg.compat_tol)
    trace = None
    if cfg.force_trace is not None:
        nat = normal_trace(v, dom)
        trace = type(nat)(nat.values + cfg.force_trace, nat.length)
    res = helmholtz_decompose(v, dom, dcfg, trace=trace)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("v0", "grad_q", "q", "q1", "q2"):
        save_field(out / f"{name}.field", getattr(res, name))
    # timings vary between runs and stay out of the JSON
    diag = {k: v for k, v in res.diagnostics.items() if not k.startswith("seconds")}
    if cfg.oracle:
        diag["oracle_l2_dev"] = oracle_deviation(res.v0.values, v.values, dom.d, dom.grid.h)
    diag["charts"] = [{"j": c.j, "terms": list(c.terms), "max_ratio": c.max_ratio,
                       "series_residual": c.series_residual} for c in res.charts]
    payload = {"config": asdict(cfg), "domain": dom.to_dict(), "diagnostics": diag}
    (out / "diagnostics.json").write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True))
    log.info("decomposition took %.1fs", res.diagnostics["seconds_total"])
    print(json.dumps({k: _jsonable(diag[k]) for k in ("div_v0_rel", "trace_v0_sup", "grad_q_l2", "v0_l2")
                      if k in diag} | ({"oracle_l2_dev": diag["oracle_l2_dev"]} if cfg.oracle else {})))
    return 0


def cmd_seminorm(field: str, domain: str, mu: float, nu: float, ball_budget: int = 4096) -> int:
    dom = load_domain(domain)
    fld = load_field(field)
    if not fld.grid.same_as(dom.grid):
        raise errors.GridMismatch("field grid differs from the domain grid", stage="seminorm", module="cli")
    if isinstance(fld, VectorField):
        rep = vbmo_norm(fld, dom, mu, nu, ball_budget).to_dict()
    else:
        masked = ScalarField(fld.grid, fld.values, dom.inside)
        b = bmo_seminorm(masked, mu, ball_budget, mask=dom.inside)
        n = bnu_seminorm(fld, dom, nu, ball_budget)
        rep = {"bmo_value": b.value, "bmo_witness": b.witness and b.witness.to_dict(), "bnu_value": n.value,
               "bnu_witness": n.witness and n.witness.to_dict(), "vbmo_value": b.value + n.value, "mu": mu, "nu": nu}
    print(json.dumps(_jsonable(rep), sort_keys=True))
    return 0


def cmd_counterexample(ell_max: int, out: str | None, N: int = 1 << 15) -> int:
    rows = ce_growth_demo(ell_max, N=N)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["ell", "bnu_tangential", "bnu_normal", "sup_normal", "sup_tangential"])
        for r in rows:
            w.writerow([r.ell, f"{r.bnu_tangential:.10g}", f"{r.bnu_normal:.10g}", f"{r.sup_normal:.10g}",
                        f"{r.sup_tangential:.10g}"])
    finally:
        if out:
            fh.close()
    inc = is_strictly_increasing(r.bnu_tangential for r in rows)
    msg = f"strictly increasing: {'yes' if inc else 'no'}; last/first = {rows[-1].bnu_tangential / rows[0].bnu_tangential:.3f}"
    if len(rows) >= 2:
        msg += f"; slope = {growth_fit(rows)['slope']:.3f}"
    print(msg, file=sys.stderr if not out else sys.stdout)
    return 0


def cmd_verify(suite: str, delta: float | None = None) -> int:
    names = list(SUITES) if suite == "all" else [suite]
    checks = []
    for name in names:
        fn = SUITES[name]
        checks += fn(delta=delta) if name == "single-layer" else fn()
    print(json.dumps([_jsonable(c.to_dict()) for c in checks], indent=2))
    return 0 if all(c.passed for c in checks) else EXIT_VERIFY_FAILED


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vbmo", description="Helmholtz decomposition in vBMO on planar domains.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="run the decomposition pipeline and write a result bundle")
    d.add_argument("--domain", default="disk", help="domain JSON file or disk/ellipse/star")
    d.add_argument("--field", default="mixed", help="field file or gradient/rotation/mixed/random")
    d.add_argument("--N", type=int, default=None)
    d.add_argument("--rho", type=float)
    d.add_argument("--mu", type=float)
    d.add_argument("--nu", type=float)
    d.add_argument("--series-eps", type=float, default=1e-12)
    d.add_argument("--max-terms", type=int, default=64)
    d.add_argument("--ball-budget", type=int, default=1024)
    d.add_argument("--out", default="out")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--compat-tol", type=float, default=1e-6, help="tolerance of the flux balance of the Neumann data")
    d.add_argument("--force-trace", type=float, help="add a constant to the sampled normal trace (incompatible data)")
    d.add_argument("--no-oracle", action="store_true", help="skip the reference L2 projection")

    s = sub.add_parser("seminorm", help="print BMO / b^nu / vBMO seminorms of a field file")
    s.add_argument("field")
    s.add_argument("--domain", default="disk")
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--nu", type=float, required=True)
    s.add_argument("--ball-budget", type=int, default=4096)

    c = sub.add_parser("counterexample", help="growth table of b^nu for mollified jumps (CSV)")
    c.add_argument("--ell-max", type=int, default=8)
    c.add_argument("--out", help="CSV path (stdout if omitted)")
    c.add_argument("--torus-N", type=int, default=1 << 15)

    v = sub.add_parser("verify", help="run a self-check suite")
    v.add_argument("suite", choices=sorted(SUITES) + ["all"])
    v.add_argument("--delta", type=float, help="collar width for the single-layer suite")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "counterexample" and args.ell_max < 1:
        parser.error("--ell-max must be >= 1")
    try:
        if args.command == "decompose":
            cfg = RunConfig(args.domain, args.field, args.N, args.rho, args.mu, args.nu,
                            args.series_eps, args.max_terms, args.ball_budget, args.out, args.seed,
                            args.compat_tol, args.force_trace, not args.no_oracle)
            return cmd_decompose(cfg)
        if args.command == "seminorm":
            return cmd_seminorm(args.field, args.domain, args.mu, args.nu, args.ball_budget)
        if args.command == "counterexample":
            return cmd_counterexample(args.ell_max, args.out, args.torus_N)
        return cmd_verify(args.suite, args.delta)
    except errors.VbmoError as exc:
        print(f"error [{exc.where()}]: {exc}", file=sys.stderr)
        for cls, code in EXIT_CODES.items():
            if isinstance(exc, cls):
                return code
        return EXIT_OTHER
    except OSError as exc:
        print(f"error [cli:io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error [cli:{args.command}]: {exc}", file=sys.stderr)
        return EXIT_OTHER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
