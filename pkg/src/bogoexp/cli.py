"""Command-line runs driven by a sectioned key-value config file.

Each subcommand writes one JSON run record (config echo, version, results,
timings, checks) and CSV tables into the output directory.  A run record can
be passed back as ``--config`` to repeat the run.

Exit codes: 0 success, 1 ``compare`` found differences, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import re
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import GRID, TORUS, ConfigError, InteractionPotential, NumericalFailure, TrapPotential, build_basis
from .fixtures import FIXTURES, Fixture

EXIT_OK, EXIT_DIFF, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SECTIONS = {
    "model": {"fixture"},
    "basis": {"kind", "modes", "length"},
    "potential": {"fourier", "strength", "width", "positive_type"},
    "trap": {"strength"},
    "scaling": {"particles", "order"},
    "fock": {"n_max"},
    "dynamics": {"t_max", "dt", "initial"},
    "tolerance": {"rk_tol", "min_r2"},
    "output": {"directory"},
    "run": {"seed"},
}


def fmt(x):
    """CSV number format: scientific notation with 17 significant digits."""
    return f"{float(x):.16e}"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    fixture: Fixture
    particles: tuple
    order: int
    n_max: int
    t_max: float
    dt: float
    initial: str
    rk_tol: float
    min_r2: float
    directory: Path
    seed: int
    echo: dict = field(default_factory=dict)


def _line_index(text):
    """``(section, key) -> line number`` for diagnostics."""
    out, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = n
        elif section and "=" in s and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip())] = n
    return out


class _Fields:
    def __init__(self, parser, lines):
        self.parser = parser
        self.lines = lines

    def where(self, section, key=None):
        n = self.lines.get((section, key)) or self.lines.get((section, None))
        loc = f"line {n}: " if n else ""
        return f"{loc}[{section}]" + (f" {key}" if key else "")

    def get(self, section, key, cast, default):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key)
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.where(section, key)}: cannot parse {raw!r} ({exc})") from None


def _floats(raw):
    return tuple(float(x) for x in raw.replace(",", " ").split())


def _ints(raw):
    return tuple(int(x) for x in raw.replace(",", " ").split())


def _bool(raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def parse_config_text(text):
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    lines = _line_index(text)
    f = _Fields(parser, lines)
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{f.where(section)}: unknown section")
        for key in parser.options(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"{f.where(section, key)}: unknown field")

    name = f.get("model", "fixture", str, None)
    if name is not None and name not in FIXTURES:
        raise ConfigError(f"{f.where('model', 'fixture')}: unknown fixture {name!r}")
    base = FIXTURES[name] if name else None
    if base is None and not parser.has_section("basis"):
        raise ConfigError("config needs [model] fixture or a [basis] section")

    kind = f.get("basis", "kind", str, base.kind if base else None)
    modes = f.get("basis", "modes", int, base.mode_count if base else None)
    length = f.get("basis", "length", float, base.length if base else None)
    if kind not in (TORUS, GRID):
        raise ConfigError(f"{f.where('basis', 'kind')}: expected {TORUS!r} or {GRID!r}")
    if modes is None or length is None:
        raise ConfigError(f"{f.where('basis')}: modes and length are required")
    try:
        basis = build_basis(kind, modes, length)
    except ValueError as exc:
        raise ConfigError(f"{f.where('basis')}: {exc}") from None

    fourier = f.get("potential", "fourier", _floats, base.fourier if base else None)
    strength = f.get("potential", "strength", float, base.strength if base else 0.0)
    width = f.get("potential", "width", float, base.width if base else 1.0)
    positive = f.get("potential", "positive_type", _bool, True)
    if kind == GRID:
        fourier = None
    try:
        pot = (InteractionPotential(np.array(fourier), positive) if fourier is not None
               else InteractionPotential(None, positive, strength, width))
        if fourier is not None:
            pot.fourier_lookup(basis)
    except ValueError as exc:
        raise ConfigError(f"{f.where('potential')}: {exc}") from None

    if parser.has_section("trap"):
        trap_strength = f.get("trap", "strength", float, 1.0)
    else:
        trap_strength = base.trap_strength if base else None
    if trap_strength is not None:
        if kind != GRID:
            raise ConfigError(f"{f.where('trap')}: traps need the trapped grid")
        try:
            TrapPotential.harmonic(basis, trap_strength)
        except ValueError as exc:
            raise ConfigError(f"{f.where('trap', 'strength')}: {exc}") from None

    n_max = f.get("fock", "n_max", int, base.n_max if base else 12)
    dt = f.get("dynamics", "dt", float, base.dt if base else 0.00125)
    fx = Fixture(name or "custom", kind, modes, length, tuple(fourier) if fourier is not None else None,
                 strength, width, trap_strength, n_max, dt)

    particles = f.get("scaling", "particles", _ints, (10, 20, 40, 80))
    order = f.get("scaling", "order", int, 1)
    if order < 0:
        raise ConfigError(f"{f.where('scaling', 'order')}: order must be >= 0")
    if any(n < 2 for n in particles) or any(b <= a for a, b in zip(particles, particles[1:])):
        raise ConfigError(f"{f.where('scaling', 'particles')}: particle numbers must be >= 2 "
                          "and strictly increasing")
    if n_max < 1:
        raise ConfigError(f"{f.where('fock', 'n_max')}: n_max must be >= 1")
    t_max = f.get("dynamics", "t_max", float, 1.0)
    initial = f.get("dynamics", "initial", str, "trap-ground")
    if initial != "trap-ground":
        raise ConfigError(f"{f.where('dynamics', 'initial')}: only 'trap-ground' initial data are supported")
    if dt <= 0 or t_max <= 0:
        raise ConfigError(f"{f.where('dynamics')}: dt and t_max must be positive")
    steps = t_max / (2 * dt)
    if abs(steps - round(steps)) > 1e-9:
        raise ConfigError(f"{f.where('dynamics')}: t_max must be an even multiple of dt")
    echo = {s: dict(parser.items(s)) for s in parser.sections()}
    return RunConfig(
        fixture=fx, particles=particles, order=order, n_max=n_max, t_max=t_max, dt=dt,
        initial=initial,
        rk_tol=f.get("tolerance", "rk_tol", float, 1e-9),
        min_r2=f.get("tolerance", "min_r2", float, 0.98),
        directory=Path(f.get("output", "directory", str, "bogoexp-out")),
        seed=f.get("run", "seed", int, 0),
        echo=echo,
    )


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".json":
        try:
            echo = json.loads(text)["config"]
        except (ValueError, KeyError, TypeError):
            raise ConfigError(f"{path}: not a run record with a 'config' entry") from None
        parser = configparser.ConfigParser()
        parser.read_dict(echo)
        lines = []
        for s in parser.sections():
            lines.append(f"[{s}]")
            lines += [f"{k} = {v}" for k, v in parser.items(s)]
        text = "\n".join(lines) + "\n"
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# outputs


def _commit():
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return str(path)


def write_record(cfg, command, results, checks, timings, tables):
    record = {
        "command": command,
        "version": __version__,
        "commit": _commit(),
        "config": cfg.echo,
        "results": results,
        "checks": checks,
        "timings": timings,
        "tables": tables,
    }
    path = cfg.directory / f"{command}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(record), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_hartree(cfg):
    from .hartree import minimize_hartree

    fx = cfg.fixture
    sol = minimize_hartree(fx.basis, fx.potential, fx.trap)
    basis = fx.basis
    coords = basis.points if basis.kind == GRID else basis.wavenumbers
    rows = [(i, float(c), float(p.real), float(p.imag), float(abs(p))) for i, (c, p) in enumerate(zip(coords, sol.phi))]
    table = write_csv(cfg.directory / "hartree_phi.csv", ["mode", "coordinate", "re", "im", "abs"], rows)
    results = {"e_H": sol.energy, "mu_H": sol.chemical_potential, "residual": sol.residual, "unique": sol.unique}
    checks = {"normalized": abs(np.linalg.norm(sol.phi) - 1) < 1e-12, "stationary": sol.residual < 1e-8}
    return results, checks, [table]


def cmd_bogoliubov(cfg):
    from .pipeline import model_from_fixture

    m = model_from_fixture(cfg.fixture, 0, cfg.n_max)
    bmap = m.bmap
    rows = [(i, float(e)) for i, e in enumerate(bmap.energies)]
    table = write_csv(cfg.directory / "bogoliubov_energies.csv", ["index", "energy"], rows)
    results = {"e_H": m.hartree.energy, "E0": bmap.ground_energy, "E0_truncated": m.expansion.engine.E0,
               "excitation_energies": list(bmap.energies), "symplectic_defect": bmap.defect}
    checks = {"symplectic_defect<=1e-10": bmap.defect <= 1e-10,
              "E0_matches_truncated": abs(bmap.ground_energy - m.expansion.engine.E0) <= 1e-8}
    return results, checks, [table]


def cmd_expand_static(cfg):
    from .pipeline import model_from_fixture

    m = model_from_fixture(cfg.fixture, cfg.order, cfg.n_max)
    energies = m.energies()
    gammas = m.densities(min(cfg.order, 2))
    rows = []
    for ell, g in enumerate(gammas):
        for x in range(g.shape[0]):
            for y in range(g.shape[1]):
                rows.append((ell, x, y, float(g[x, y].real), float(g[x, y].imag)))
    tables = [
        write_csv(cfg.directory / "static_energies.csv", ["ell", "E_ell"],
                  [(ell, float(e)) for ell, e in enumerate(energies)]),
        write_csv(cfg.directory / "static_densities.csv", ["ell", "x", "y", "re", "im"], rows),
    ]
    results = {"e_H": m.hartree.energy, "energies": energies}
    checks = {}
    if cfg.order >= 1:
        closed = m.expansion.energy_first_closed_form()
        results["E1_closed_form"] = closed
        checks["E1_formulas_agree"] = abs(closed - energies[1]) <= 1e-10
    for ell, g in enumerate(gammas[1:], 1):
        checks[f"trace_gamma_{ell}_zero"] = abs(np.trace(g)) <= 1e-10
    return results, checks, tables


def cmd_expand_dynamics(cfg):
    from .dynamics import (dynamic_density, fock_two_point, integrate_propagator, propagate_two_point,
                           route_agreement)
    from .pipeline import DynamicModel

    if cfg.fixture.trap is None:
        raise ConfigError("[trap]: expand-dynamics releases a trapped ground state; configure a trap")
    model = DynamicModel(cfg.fixture, cfg.order, cfg.t_max, cfg.dt, cfg.n_max)
    h = model.hierarchy
    blocks = integrate_propagator(model.frame, cfg.t_max)
    state0 = fock_two_point(model.frame.fock, model.initial[0])
    route_b = propagate_two_point(model.frame, state0, cfg.t_max)
    agreement = route_agreement(blocks, state0, route_b)
    rows = []
    for i, t in enumerate(h.times):
        phi = model.trajectory.phis[2 * i]
        norms = [float(np.linalg.norm(c)) for c in h.chis[i]]
        g1 = dynamic_density(h, i, 1, phi) if cfg.order >= 1 else np.zeros((len(phi), len(phi)))
        rows.append([float(t)] + norms + [float(abs(np.trace(g1))), float(np.real(np.trace(route_b.states[i].gamma)))])
    header = ["t"] + [f"norm_chi{ell}" for ell in range(cfg.order + 1)] + ["abs_trace_gamma11", "excitations"]
    tables = [write_csv(cfg.directory / "dynamics_series.csv", header, rows)]
    results = {"final_time": float(h.times[-1]), "overflow_mass": h.overflow, "route_agreement": agreement,
               "max_symplectic_defect": blocks.max_defect, "hartree_norm_drift": model.trajectory.norm_drift}
    checks = {"symplectic_defect<=1e-8": blocks.max_defect <= 1e-8,
              "routes_agree<=10*rk_tol": agreement <= 10 * cfg.rk_tol}
    return results, checks, tables


def _sweep_rows(sweep, kinds):
    rows = []
    for p in sweep.points:
        row = [p.N, p.coupling]
        if "energy" in kinds:
            row += [p.exact_energy, p.N * p.hartree_energy] + list(sweep.energies[:2])
            row += list(p.energy_residuals[:2])
        row += list(p.wave_residuals) + list(p.density_residuals)
        rows.append(row)
    return rows


def _fits(sweep, key, orders, min_r2):
    from .oracle import fit_convergence_rate

    out = {}
    for a in orders:
        fit = fit_convergence_rate(sweep.residual_pairs(key, a), min_r2=min_r2)
        out[f"{key}[{a}]"] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                              "points_used": len(fit.used), "points_dropped": [list(d) for d in fit.dropped]}
    return out


def cmd_oracle_verify(cfg):
    from .pipeline import DynamicModel, dynamic_sweep, model_from_fixture, static_sweep

    order = max(cfg.order, 1)
    m = model_from_fixture(cfg.fixture, order, cfg.n_max)
    d_orders = tuple(range(min(order, 2) + 1))
    sweep = static_sweep(m, cfg.particles, density_orders=d_orders)
    header = (["N", "lambda", "E_exact", "Ne_H", "E0", "E1", "residual0", "residual1"]
              + [f"wave_residual{a}" for a in range(order + 1)]
              + [f"density_residual{a}" for a in d_orders])
    tables = [write_csv(cfg.directory / "static_sweep.csv", header, _sweep_rows(sweep, {"energy"}))]
    results = {"static": {"energies": sweep.energies,
                          "fits": {**_fits(sweep, "energy_residuals", range(order + 1), cfg.min_r2),
                                   **_fits(sweep, "wave_residuals", range(order + 1), cfg.min_r2),
                                   **_fits(sweep, "density_residuals", d_orders, cfg.min_r2)}}}
    fits = results["static"]["fits"]
    checks = {f"static energy slope a={a} >= {a + 1} - 0.3": fits[f"energy_residuals[{a}]"]["slope"] >= a + 0.7
              for a in range(order + 1)}
    checks.update({f"static wave slope a={a} >= {(a + 1) / 2} - 0.3":
                   fits[f"wave_residuals[{a}]"]["slope"] >= (a + 1) / 2 - 0.3 for a in range(order + 1)})
    checks.update({f"static density slope a={a} >= {a + 1} - 0.3":
                   fits[f"density_residuals[{a}]"]["slope"] >= a + 0.7 for a in d_orders})
    if cfg.fixture.trap is not None and "dynamics" in cfg.echo:
        dm = DynamicModel(cfg.fixture, min(order, 1), cfg.t_max, cfg.dt, cfg.n_max)
        dsweep = dynamic_sweep(dm, cfg.particles)
        dh = (["N", "lambda"] + [f"wave_residual{a}" for a in range(dm.order + 1)]
              + ["density_residual0", "density_residual1"])
        tables.append(write_csv(cfg.directory / "dynamic_sweep.csv", dh, _sweep_rows(dsweep, set())))
        dfits = {**_fits(dsweep, "wave_residuals", range(dm.order + 1), cfg.min_r2),
                 **_fits(dsweep, "density_residuals", (0, 1), cfg.min_r2)}
        results["dynamic"] = {"t": cfg.t_max, "fits": dfits}
        checks.update({f"dynamic wave slope a={a} >= {(a + 1) / 2} - 0.3":
                       dfits[f"wave_residuals[{a}]"]["slope"] >= (a + 1) / 2 - 0.3 for a in range(dm.order + 1)})
        checks.update({f"dynamic density slope a={a} >= {a + 1} - 0.3":
                       dfits[f"density_residuals[{a}]"]["slope"] >= a + 0.7 for a in (0, 1)})
    return results, checks, tables


def fit_table(path, min_r2=0.98):
    """Slopes of every residual column of a sweep table against ``lambda``."""
    from .oracle import fit_convergence_rate

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "lambda" not in rows[0]:
        raise ConfigError(f"{path}: expected a sweep table with a 'lambda' column")
    out = {}
    for col in rows[0]:
        if "residual" not in col:
            continue
        pts = [(float(r["lambda"]), float(r[col])) for r in rows]
        fit = fit_convergence_rate(pts, min_r2=min_r2)
        out[col] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2, "points_used": len(fit.used)}
    return out


def compare_records(a, b, tol):
    """Paths and values of numeric leaves that differ by more than ``tol`` (relative to scale 1)."""
    diffs = []

    def walk(x, y, path):
        if isinstance(x, dict) and isinstance(y, dict):
            for k in sorted(set(x) | set(y)):
                if k in ("timings", "commit", "tables") or (path == "/config" and k == "output"):
                    continue
                if k not in x or k not in y:
                    diffs.append((f"{path}/{k}", x.get(k), y.get(k)))
                else:
                    walk(x[k], y[k], f"{path}/{k}")
        elif isinstance(x, list) and isinstance(y, list):
            if len(x) != len(y):
                diffs.append((path, f"len {len(x)}", f"len {len(y)}"))
            for i, (u, v) in enumerate(zip(x, y)):
                walk(u, v, f"{path}[{i}]")
        elif isinstance(x, bool) or isinstance(y, bool):
            if x != y:
                diffs.append((path, x, y))
        elif isinstance(x, (int, float)) and isinstance(y, (int, float)):
            if not (math.isfinite(x) and math.isfinite(y)) or abs(x - y) > tol * max(1.0, abs(x), abs(y)):
                if not (x == y):
                    diffs.append((path, x, y))
        elif x != y:
            diffs.append((path, x, y))

    walk(a, b, "")
    return diffs


COMMANDS = {
    "hartree": cmd_hartree,
    "bogoliubov": cmd_bogoliubov,
    "expand-static": cmd_expand_static,
    "expand-dynamics": cmd_expand_dynamics,
    "oracle-verify": cmd_oracle_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="bogoexp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="config file (.ini) or a previous run record (.json)")
        s.add_argument("--out", help="output directory (overrides [output] directory)")
    r = sub.add_parser("rates", help="fit convergence slopes of a sweep table")
    r.add_argument("table")
    r.add_argument("--min-r2", type=float, default=0.98)
    r.add_argument("--out", help="write the fits as JSON here")
    c = sub.add_parser("compare", help="diff two run records")
    c.add_argument("first")
    c.add_argument("second")
    c.add_argument("--tol", type=float, default=1e-8)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rates":
            fits = fit_table(args.table, args.min_r2)
            text = json.dumps(_clean(fits), indent=2, sort_keys=True)
            if args.out:
                Path(args.out).write_text(text + "\n")
            print(text)
            return EXIT_OK
        if args.command == "compare":
            try:
                a = json.loads(Path(args.first).read_text())
                b = json.loads(Path(args.second).read_text())
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read records: {exc}") from None
            diffs = compare_records(a, b, args.tol)
            for path, x, y in diffs:
                print(f"{path}: {x!r} != {y!r}")
            return EXIT_DIFF if diffs else EXIT_OK
        cfg = load_config(args.config)
        if args.out:
            cfg.directory = Path(args.out)
            cfg.echo.setdefault("output", {})["directory"] = str(cfg.directory)
        start = time.perf_counter()
        results, checks, tables = COMMANDS[args.command](cfg)
        timings = {"total_seconds": time.perf_counter() - start}
        path = write_record(cfg, args.command, results, checks, timings, tables)
        for name, ok in checks.items():
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
        print(f"record: {path}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
