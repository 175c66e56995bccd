"""Command line entry point: ``bsandpile {simulate,verify,greens,scale,render}``.

Every option can also come from a ``key=value`` config file passed with
``--config`` (keys are the long option names, dashes or underscores);
command-line flags override the file.  Exit codes: 0 all checks passed,
1 a check failed, 2 invalid configuration, 3 input/output error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

log = logging.getLogger("bsandpile")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
MODELS = ("bs", "asm", "asm-capped")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "bs"
    d: int = 2
    sources: list = field(default_factory=list)   # [(point tuple, mass)]
    capacity: str | float = "auto"
    method: str = "fast"
    eps: float = 1e-12
    seeds: int = 1
    schedule: str = "fifo"
    out: str = "runs/latest"

    @property
    def n(self) -> float:
        return float(sum(m for _, m in self.sources))

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.d < 2:
            raise ConfigError("dimension must be at least 2")
        if not self.sources:
            raise ConfigError("no mass sources given")
        for p, m in self.sources:
            if len(p) != self.d:
                raise ConfigError(f"source {p} is not {self.d}-dimensional")
            if m < 0:
                raise ConfigError("source masses must be nonnegative")
        if self.n <= 0:
            raise ConfigError("total mass must be positive")
        if self.model != "bs" and any(float(m) != int(m) for _, m in self.sources):
            raise ConfigError("chip counts must be integers")
        if self.capacity == "auto":
            if len(self.sources) != 1:
                raise ConfigError("capacity=auto needs a single point source")
        elif not isinstance(self.capacity, (int, float)) or self.capacity <= 0:
            raise ConfigError("capacity must be positive or 'auto'")
        if self.model == "asm-capped" and self.resolved_capacity() < 2 * self.d - 1:
            raise ConfigError("capped ASM needs capacity >= 2d-1")
        if self.method not in ("naive", "fast"):
            raise ConfigError("method must be naive or fast")
        if self.schedule not in ("fifo", "lifo", "random"):
            raise ConfigError("schedule must be fifo, lifo or random")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        return self

    def resolved_capacity(self) -> float:
        if self.capacity == "auto":
            return self.n ** (1.0 / self.d)
        return float(self.capacity)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def read_config(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment.  ``source`` may repeat."""
    out: dict = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            k = k.replace("-", "_")
            if k == "source":
                out.setdefault("source", []).append(v)
            else:
                out[k] = v
    return out


def parse_point(text: str) -> tuple[int, ...]:
    return tuple(int(c) for c in text.replace("(", "").replace(")", "").split(","))


def parse_source(text: str) -> tuple[tuple[int, ...], float]:
    """``x1,x2,...:mass``."""
    try:
        pt, m = text.split(":")
        return parse_point(pt), float(m)
    except ValueError as exc:
        raise ConfigError(f"bad source {text!r}, expected x1,x2:mass") from exc


def parse_range(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma list."""
    if ":" in text:
        a, b, s = (float(x) for x in text.split(":"))
        k = int(round((b - a) / s))
        return [a + i * s for i in range(k + 1)]
    return [float(x) for x in text.split(",") if x]


def merged(args: argparse.Namespace, defaults: dict) -> dict:
    """Flags override config-file values, which override defaults."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    out = dict(defaults)
    for k, v in conf.items():
        out[k] = v
    if getattr(args, "mass", None) is not None or getattr(args, "source", None):
        # sources given on the command line replace those of the file
        out.pop("source", None)
        out.pop("mass", None)
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "func", "command"):
            out[k] = v
    return out


def build_run_config(opts: dict) -> RunConfig:
    try:
        d = int(opts.get("d", 2))
        sources = [parse_source(s) if isinstance(s, str) else s for s in (opts.get("source") or [])]
        if opts.get("mass") not in (None, ""):
            sources.append(((0,) * d, float(opts["mass"])))
        cap = opts.get("capacity", "auto")
        cap = cap if cap == "auto" else float(cap)
        cfg = RunConfig(model=str(opts.get("model", "bs")), d=d, sources=sources, capacity=cap,
                        method=str(opts.get("method", "fast")), eps=float(opts.get("eps", 1e-12)),
                        seeds=int(opts.get("seeds", 1)), schedule=str(opts.get("schedule", "fifo")),
                        out=str(opts.get("out", "runs/latest")))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

class RunDir:
    """Output directory that records every artifact in ``manifest.txt``."""

    def __init__(self, path, command: str, params: dict):
        self.path = path
        os.makedirs(path, exist_ok=True)
        self.command = command
        self.params = params
        self.files: list[str] = []

    def file(self, name: str) -> str:
        if name not in self.files:
            self.files.append(name)
        return os.path.join(self.path, name)

    def write_text(self, name: str, text: str) -> None:
        with open(self.file(name), "w") as f:
            f.write(text)

    def write_reports(self, reports) -> None:
        from .report import reports_to_csv

        self.write_text("reports.jsonl", "".join(r.to_line() + "\n" for r in reports))
        self.write_text("reports.csv", reports_to_csv(reports))

    def finish(self, status: int) -> None:
        lines = [f"command={self.command}", f"status={status}",
                 "params=" + json.dumps(self.params, sort_keys=True, default=str)]
        for name in self.files:
            p = os.path.join(self.path, name)
            if os.path.exists(p):
                with open(p, "rb") as f:
                    digest = hashlib.sha256(f.read()).hexdigest()
                lines.append(f"file={name} bytes={os.path.getsize(p)} sha256={digest}")
        with open(os.path.join(self.path, "manifest.txt"), "w") as f:
            f.write("\n".join(lines) + "\n")


def _status(reports) -> int:
    return EXIT_FAIL if any(r.passed is False for r in reports) else EXIT_OK


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_model(cfg: RunConfig, progress=None):
    from .dynamics import Schedule, stabilize_asm, stabilize_asm_capped, stabilize_naive
    from .stabilize import stabilize_fast

    field_ = {p: m for p, m in cfg.sources}
    cap = cfg.resolved_capacity()
    sched = {"fifo": Schedule.fifo(), "lifo": Schedule.lifo(), "random": Schedule.random(0)}[cfg.schedule]
    if cfg.model == "bs":
        if cfg.method == "fast":
            return stabilize_fast(field_, cap, cfg.d, progress=progress)
        return stabilize_naive(field_, cap, cfg.eps, sched, cfg.d)
    chips = {p: int(m) for p, m in field_.items()}
    if cfg.model == "asm":
        return stabilize_asm(chips, None, cfg.d)
    return stabilize_asm_capped(chips, int(cap), None, cfg.d)


def stability_report(state, cfg: RunConfig):
    from .report import VerificationReport

    n = cfg.n
    if cfg.model == "bs":
        cap = cfg.resolved_capacity()
        V = state.visited
        m = state.mass.data
        over = float(max(0.0, (m[V.boundary_mask] - cap).max(initial=0.0)))
        inner = float(m[V.interior_mask].max(initial=0.0))
        resid = state.laplace_residual() if hasattr(state, "laplace_residual") else 0.0
        ok = over <= 1e-9 * n and inner <= max(cfg.eps * n, 1e-9 * n) and resid <= 1e-9 * n
        conserv = abs(float(m.sum()) - n)
        ok = ok and conserv <= 1e-12 * n * 10
        return VerificationReport("stability", {"n": n, "capacity": cap}, max(over, inner, resid), None,
                                  1e-9 * n, ok, int(m.size),
                                  {"boundary_excess": over, "interior_max": inner, "laplace_residual": resid,
                                   "conservation_error": conserv})
    s = state.chips.data
    nd = 2 * cfg.d
    if cfg.model == "asm":
        worst = int(s.max()) - (nd - 1)
    else:
        V = state.visited
        cap = int(cfg.resolved_capacity())
        worst = max(int(s[V.interior_mask].max(initial=0)) - (nd - 1),
                    int(s[V.boundary_mask].max(initial=0)) - cap)
    ok = worst <= 0 and int(s.sum()) == int(n)
    return VerificationReport("stability", {"n": n}, float(max(worst, 0)), None, 0.0, ok, int(s.size))


def cmd_simulate(args) -> int:
    from .io_render import render, save

    opts = merged(args, {})
    cfg = build_run_config(opts)
    rd = RunDir(cfg.out, "simulate", asdict(cfg))
    progress_lines = []

    def progress(rec):
        progress_lines.append(rec.to_line())
        log.info(rec.to_line())

    t0 = time.perf_counter()
    state = run_model(cfg, progress)
    elapsed = time.perf_counter() - t0
    rep = stability_report(state, cfg)
    save(state, rd.file("state.bsp"))
    render(state, rd.file("state.ppm"))
    if progress_lines:
        rd.write_text("progress.log", "\n".join(progress_lines) + "\n")
    summary = {"model": cfg.model, "n": cfg.n, "capacity": cfg.resolved_capacity(),
               "visited": len(state.visited), "seconds": round(elapsed, 3),
               "phases": getattr(state, "phases", None)}
    rd.write_text("summary.json", json.dumps(summary, sort_keys=True) + "\n")
    rd.write_reports([rep])
    status = _status([rep])
    rd.finish(status)
    print(json.dumps(summary, sort_keys=True))
    return status


SUITES = ("abelian", "oracle", "symmetry", "monotonicity", "growth", "lipschitz", "lower-bound",
          "asm", "balayage", "all")


def _point_runs(ns, d=2):
    from .stabilize import stabilize_fast

    return [stabilize_fast({(0,) * d: float(n)}, n ** (1.0 / d), d) for n in ns]


def run_suite(name: str, seeds: int, ns: list[int]) -> list:
    from . import suites

    return suites.SUITES[name](seeds=seeds, ns=ns)


def cmd_verify(args) -> int:
    opts = merged(args, {"suite": "all", "seeds": 20, "n": "1000,10000", "out": "runs/verify"})
    suite = str(opts["suite"])
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    try:
        seeds = int(opts["seeds"])
        ns = [int(float(x)) for x in str(opts["n"]).split(",") if x]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rd = RunDir(str(opts["out"]), "verify", {"suite": suite, "seeds": seeds, "n": ns})
    names = [s for s in SUITES if s != "all"] if suite == "all" else [suite]
    reports = []
    for nm in names:
        reports += run_suite(nm, seeds, ns)
    rd.write_reports(reports)
    status = _status(reports)
    rd.finish(status)
    for r in reports:
        print(f"{r.status:7s} {r.check} worst={r.worst:.3e}")
    return status


def cmd_greens(args) -> int:
    from .potential import bounds_table, write_bounds_csv
    from .report import VerificationReport
    from .verify import factor_band

    opts = merged(args, {"d": 2, "radii": "10:200:10", "r0": 5.0, "out": "runs/greens"})
    try:
        d = int(opts["d"])
        radii = parse_range(str(opts["radii"]))
        r0 = float(opts["r0"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if d < 2 or not radii:
        raise ConfigError("need d >= 2 and at least one radius")
    radii = [R for R in radii if R >= r0]
    if not radii:
        raise ConfigError(f"no radius at or above r0={r0}")
    rd = RunDir(str(opts["out"]), "greens", {"d": d, "radii": radii, "r0": r0})
    rows = bounds_table(radii, d, r0)
    write_bounds_csv(rows, rd.file("greens.csv"))
    ok_lo, med_lo = factor_band([r.min_normalized for r in rows])
    ok_hi, med_hi = factor_band([r.max_normalized for r in rows])
    rep = VerificationReport("greens_band", {"d": d}, 0.0, None, 2.0, ok_lo and ok_hi, len(rows),
                             {"median_min": med_lo, "median_max": med_hi})
    rd.write_reports([rep])
    rd.finish(_status([rep]))
    with open(rd.file("greens.csv")) as f:
        sys.stdout.write(f.read())
    return _status([rep])


def cmd_scale(args) -> int:
    from .dynamics import stabilize_asm
    from .scaling import boundary_cone_check, compare_scaled, scaled_odometer

    opts = merged(args, {"n": 1000.0, "ladder": 3, "rho": 0.2, "model": "bs", "d": 2, "out": "runs/scale"})
    try:
        n0 = float(opts["n"])
        steps = int(opts["ladder"])
        rho = float(opts["rho"])
        d = int(opts["d"])
        model = str(opts["model"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if model not in ("bs", "asm") or steps < 1 or n0 <= 0:
        raise ConfigError("scale needs model bs|asm, ladder >= 1, n > 0")
    ns = [n0 * (2 ** d) ** k for k in range(steps)]
    if model == "bs":
        runs = _point_runs(ns, d)
    else:
        runs = [stabilize_asm({(0,) * d: int(n)}) for n in ns]
    scaled = [scaled_odometer(r) for r in runs]
    rd = RunDir(str(opts["out"]), "scale", {"n": ns, "rho": rho, "model": model})
    lines = ["n_a,n_b,discrepancy"]
    for a, b, sa, sb in zip(ns, ns[1:], scaled, scaled[1:]):
        lines.append(f"{a:g},{b:g},{compare_scaled(sa, sb, rho)!r}")
    rd.write_text("ladder.csv", "\n".join(lines) + "\n")
    reports = [boundary_cone_check(r) for r in runs]
    rd.write_reports(reports)
    status = _status(reports)
    rd.finish(status)
    print("\n".join(lines))
    return status


def cmd_render(args) -> int:
    from .io_render import load, render

    opts = merged(args, {"out": None})
    if not opts.get("checkpoint"):
        raise ConfigError("render needs --checkpoint")
    state = load(opts["checkpoint"])
    out = opts.get("out") or os.path.splitext(opts["checkpoint"])[0] + ".ppm"
    cap = float(opts["capacity"]) if opts.get("capacity") else None
    render(state, out, capacity=cap)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsandpile", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="stabilize one configuration")
    s.add_argument("--config")
    s.add_argument("--model", choices=MODELS)
    s.add_argument("--d", type=int)
    s.add_argument("--mass", type=float, help="point mass at the origin")
    s.add_argument("--source", action="append", help="x1,x2,...:mass (repeatable)")
    s.add_argument("--capacity", help="number or 'auto' (n^(1/d))")
    s.add_argument("--method", choices=("naive", "fast"))
    s.add_argument("--eps", type=float)
    s.add_argument("--schedule", choices=("fifo", "lifo", "random"))
    s.add_argument("--seeds", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--config")
    v.add_argument("--suite", choices=SUITES)
    v.add_argument("--seeds", type=int)
    v.add_argument("--n", help="comma list of point masses for sweep suites")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("greens", help="boundary Laplacian of discrete Green's functions")
    g.add_argument("--config")
    g.add_argument("--d", type=int)
    g.add_argument("--radii", help="a:b:step or comma list")
    g.add_argument("--r0", type=float, help="smallest admissible radius")
    g.add_argument("--out")
    g.set_defaults(func=cmd_greens)

    c = sub.add_parser("scale", help="scaled odometer ladder n, 2^d n, 4^d n")
    c.add_argument("--config")
    c.add_argument("--model", choices=("bs", "asm"))
    c.add_argument("--d", type=int)
    c.add_argument("--n", type=float, help="smallest mass of the ladder")
    c.add_argument("--ladder", type=int, help="number of rungs")
    c.add_argument("--rho", type=float, help="exclusion radius around the origin")
    c.add_argument("--out")
    c.set_defaults(func=cmd_scale)

    r = sub.add_parser("render", help="render a checkpoint to PPM")
    r.add_argument("--config")
    r.add_argument("--checkpoint")
    r.add_argument("--capacity", type=float)
    r.add_argument("--out")
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        from .io_render import CheckpointError

        if isinstance(exc, CheckpointError):
            print(f"io error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
