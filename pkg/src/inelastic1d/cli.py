"""Command line front end: config ingestion, study orchestration, artifact files.

Usage::

    inelastic1d convergence --config run.ini --case stationary --order 2
    inelastic1d application --epsilon-list 0.2,0.1,0.05
    inelastic1d evolve --config run.ini
    inelastic1d coeffs --out-dir coeffs/
    inelastic1d check

Configs are INI files with four sections; every key is optional and unknown
keys are rejected with their line number::

    [scenario]
    epsilon = 0.1
    v0 = 1.0
    r0 = 0.5
    a = 1.0
    branch = 1
    t_final = 1.0
    potential_strength = 1.0
    potential_width = 1.0

    [numerics]
    n_max = 8
    scheme = yoshida4
    steps_per_eps = 40
    spill_threshold = 1e-8
    max_grid_points = 32768

    [study]
    epsilon_list = 0.2, 0.1, 0.05, 0.025
    order = 2
    case = stationary
    lemma_samples = 100
    lemma_seed = 0
    x_half_width = 8
    x_points = 161
    full = false

    [output]
    out_dir = results
    plot_script = true

The thread count of the numerical backends is taken from ``INELASTIC1D_THREADS``.
Exit status: 0 on success, 1 when ``check`` finds a tolerance breach,
2 on configuration or numerical errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import platform
import re
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

THREAD_ENV = "INELASTIC1D_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("inelastic1d")


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending line."""


def _floats(text):
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    if not items:
        raise ValueError("empty list")
    return tuple(float(s) for s in items)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ScenarioSection:
    epsilon: float = 0.1
    v0: float = 1.0
    r0: float = 0.5
    a: float = 1.0
    branch: int = 1
    t_final: float = 1.0
    potential_strength: float = 1.0
    potential_width: float = 1.0


@dataclass(frozen=True)
class NumericsSection:
    n_max: int = 8
    scheme: str = "yoshida4"
    steps_per_eps: float = 40.0
    spill_threshold: float = 1e-8
    max_grid_points: int = 2 ** 15


@dataclass(frozen=True)
class StudySection:
    epsilon_list: tuple = (0.2, 0.1, 0.05, 0.025)
    order: int = 2
    case: str = "stationary"
    lemma_samples: int = 100
    lemma_seed: int = 0
    x_half_width: float = 8.0
    x_points: int = 161
    full: bool = False


@dataclass(frozen=True)
class OutputSection:
    out_dir: str = "results"
    plot_script: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration: file values over defaults, flags over both."""

    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    study: StudySection = field(default_factory=StudySection)
    output: OutputSection = field(default_factory=OutputSection)

    def as_dict(self):
        return asdict(self)

    def validate(self):
        sc, nu, st = self.scenario, self.numerics, self.study
        checks = [
            (sc.epsilon > 0, "scenario.epsilon must be positive"),
            (sc.v0 > 0, "scenario.v0 must be positive"),
            (sc.branch in (1, -1), "scenario.branch must be 1 or -1"),
            (sc.t_final > 0, "scenario.t_final must be positive"),
            (sc.potential_width > 0, "scenario.potential_width must be positive"),
            (nu.n_max >= 4, "numerics.n_max must be at least 4"),
            (nu.scheme in ("strang", "yoshida4"), "numerics.scheme must be strang or yoshida4"),
            (nu.steps_per_eps > 0, "numerics.steps_per_eps must be positive"),
            (nu.max_grid_points >= 32, "numerics.max_grid_points must be at least 32"),
            (all(e > 0 for e in st.epsilon_list), "study.epsilon_list entries must be positive"),
            (st.order in (0, 1, 2), "study.order must be 0, 1 or 2"),
            (st.case in ("stationary", "nonstationary"), "study.case must be stationary or nonstationary"),
            (st.lemma_samples >= 2, "study.lemma_samples must be at least 2"),
            (st.x_points >= 2 and st.x_half_width > 0, "study.x grid must be non-empty"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


_SECTIONS = {"scenario": ScenarioSection, "numerics": NumericsSection, "study": StudySection,
             "output": OutputSection}


def _converter(default):
    if isinstance(default, bool):
        return _bool
    if isinstance(default, tuple):
        return _floats
    return type(default)


def _key_lines(text):
    """Map (section, key) to its 1-based line number in the config text."""
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            lines[(section, None)] = no
        elif section and s and s[0] not in "#;" and re.match(r"[^=:]+[=:]", s):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            lines[(section, key)] = no
    return lines


def load_config(path=None, text=None):
    """Parse an INI config into a validated :class:`RunConfig`.

    Raises
    ------
    ConfigError
        On unknown sections or keys, unparsable values, or failed
        validation; the message names the file and line.
    """
    if path is None and text is None:
        return RunConfig().validate()
    where = str(path) if path is not None else "<config>"
    if text is None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{where}: cannot read config ({exc.strerror})") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=where)
    except configparser.Error as exc:
        raise ConfigError(f"{where}: {exc}") from None
    lines = _key_lines(text)
    parts = {}
    for name in parser.sections():
        sec_name = name.strip().lower()
        if sec_name not in _SECTIONS:
            raise ConfigError(f"{where}:{lines.get((sec_name, None), '?')}: unknown section [{name}]")
        cls = _SECTIONS[sec_name]
        defaults = {f.name: f.default if not callable(f.default_factory) else f.default_factory()
                    for f in fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            line = lines.get((sec_name, key), "?")
            if key not in defaults:
                raise ConfigError(f"{where}:{line}: unknown key {key!r} in [{sec_name}]; "
                                  f"allowed: {', '.join(sorted(defaults))}")
            try:
                values[key] = _converter(defaults[key])(raw)
            except ValueError as exc:
                raise ConfigError(f"{where}:{line}: bad value for {sec_name}.{key}: {exc}") from None
        parts[sec_name] = cls(**values)
    try:
        return RunConfig(**parts).validate()
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def apply_overrides(cfg, args):
    """Return `cfg` with command-line flags layered on top."""
    from dataclasses import replace

    study, output = cfg.study, cfg.output
    if getattr(args, "epsilon_list", None):
        try:
            study = replace(study, epsilon_list=_floats(args.epsilon_list))
        except ValueError as exc:
            raise ConfigError(f"--epsilon-list: {exc}") from None
    if getattr(args, "order", None) is not None:
        study = replace(study, order=args.order)
    if getattr(args, "case", None):
        study = replace(study, case=args.case)
    if getattr(args, "out_dir", None):
        output = replace(output, out_dir=args.out_dir)
    return replace(cfg, study=study, output=output).validate()


# artifact writing


def _fmt(v):
    if isinstance(v, float):
        # numpy scalars subclass float but repr as "np.float64(...)"
        return repr(float(v))
    if hasattr(v, "item"):
        return _fmt(v.item())
    return str(v)


def write_csv(path, header, rows):
    """Write dict rows restricted to `header`; floats in round-trip repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions():
    import numpy
    import scipy

    from . import __version__

    return {"inelastic1d": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out_dir, command, cfg, files, timings, extra=None):
    from .experiments import config_hash

    resolved = cfg.as_dict()
    manifest = {
        "command": command,
        "config": resolved,
        "config_hash": config_hash(resolved),
        "versions": _versions(),
        "timings_s": timings,
        "files": {Path(f).name: _sha256(f) for f in files},
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


_PLOT_TEMPLATE = '''"""Plots for the {command} outputs in this directory (needs matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent


def rows(name):
    with open(here / name) as fh:
        return list(csv.DictReader(fh))

{body}
plt.tight_layout()
plt.savefig(here / "{command}.png", dpi=150)
'''

_PLOT_BODIES = {
    "convergence": '''r = rows("convergence.csv")
eps = [float(x["epsilon"]) for x in r]
err = [float(x["error_norm"]) for x in r]
plt.loglog(eps, err, "o-", label=f"{r[0]['case']}, k={r[0]['order_k']}")
plt.xlabel("epsilon")
plt.ylabel("error norm")
plt.legend()
''',
    "application": '''r = rows("application.csv")
eps = [float(x["epsilon"]) for x in r]
fig, ax = plt.subplots(1, 2, figsize=(9, 4))
ax[0].semilogx(eps, [float(x["ratio0"]) for x in r], "o-")
ax[0].axhline(0.5, color="k", lw=0.5)
ax[0].set_title("P+0 / P0")
ax[1].semilogx(eps, [float(x["ratio1"]) for x in r], "o-")
ax[1].axhline(1.0, color="k", lw=0.5)
ax[1].set_title("P+1 / P1")
''',
    "coeffs": '''r = rows("coeffs.csv")
keys = sorted({(int(x["l"]), int(x["h"]), int(x["n"])) for x in r})
for l, h, n in keys:
    sel = [x for x in r if (int(x["l"]), int(x["h"]), int(x["n"])) == (l, h, n)]
    amp = [abs(complex(float(x["re"]), float(x["im"]))) for x in sel]
    if max(amp) > 1e-6:
        plt.semilogy([float(x["x"]) for x in sel], amp, label=f"l={l} h={h} n={n}")
plt.xlabel("x")
plt.legend(fontsize=6)
''',
    "evolve": '''r = rows("populations.csv")
plt.semilogy([int(x["n"]) for x in r], [max(float(x["population"]), 1e-300) for x in r], "o")
plt.xlabel("mode n")
plt.ylabel("population")
''',
}


def write_plot_script(out_dir, command):
    body = _PLOT_BODIES.get(command)
    if body is None:
        return None
    path = Path(out_dir) / f"plot_{command}.py"
    path.write_text(_PLOT_TEMPLATE.format(command=command, body=body))
    return path


# subcommands


def _model(cfg, eps=None):
    from .model import ModelParams, PotentialSpec
    from .solver import SolverConfig

    sc, nu = cfg.scenario, cfg.numerics
    params = ModelParams(eps=eps or sc.epsilon, v0=sc.v0, r0=sc.r0, a=sc.a, branch=sc.branch, t=sc.t_final)
    solver = SolverConfig(n_max=nu.n_max, scheme=nu.scheme, steps_per_eps=nu.steps_per_eps,
                          spill_threshold=nu.spill_threshold)
    potential = PotentialSpec.gaussian(sc.potential_strength, sc.potential_width)
    return params, solver, potential


def cmd_convergence(cfg, out):
    from .experiments import convergence_study

    params, solver, potential = _model(cfg, cfg.study.epsilon_list[0])
    rep = convergence_study(cfg.study.case, cfg.study.order, cfg.study.epsilon_list, params, solver, potential,
                            cfg.numerics.max_grid_points)
    path = out / "convergence.csv"
    write_csv(path, ["epsilon", "error_norm", "order_k", "case"], rep.rows)
    (out / "convergence_report.json").write_text(rep.to_json() + "\n")
    f = rep.fit
    log.info("slope %.3f (95%% CI %.3f..%.3f), R^2 %.4f", f.slope, f.ci95[0], f.ci95[1], f.r2)
    return [path, out / "convergence_report.json"], {"slope": f.slope, "r2": f.r2}, 0


def cmd_application(cfg, out):
    from .experiments import application_run

    params, solver, potential = _model(cfg, cfg.study.epsilon_list[0])
    rep = application_run(params, cfg.study.epsilon_list, solver, potential, cfg.numerics.max_grid_points)
    path = out / "application.csv"
    write_csv(path, ["epsilon", "alpha", "p0", "p1", "p_plus_0", "p_plus_1", "ratio0", "ratio1"], rep.rows)
    (out / "application_report.json").write_text(rep.to_json() + "\n")
    for r in rep.rows:
        log.info("eps=%g  P+0/P0=%.6f  P+1/P1=%.6f", r["epsilon"], r["ratio0"], r["ratio1"])
    return [path, out / "application_report.json"], {}, 0


def cmd_evolve(cfg, out):
    from .experiments import exact_run
    from .solver import save_state

    params, solver, potential = _model(cfg)
    _, final = exact_run(params, solver, potential, False, cfg.numerics.max_grid_points)
    ckpt = out / "state.npz"
    save_state(final, ckpt)
    path = out / "populations.csv"
    write_csv(path, ["n", "population"], [{"n": n, "population": float(p)} for n, p in
                                          enumerate(final.populations())])
    log.info("norm %.15f after t=%g on %d points", final.norm(), params.t, final.grid.n)
    return [path, ckpt], {"norm": final.norm()}, 0


def cmd_coeffs(cfg, out):
    import numpy as np

    from .expansion import order0, order1_coeff, order2_double, order2_single

    params, _, potential = _model(cfg)
    if not params.stationary:
        raise ConfigError("coeffs needs the stationary geometry (packet moving toward the oscillator)")
    st = cfg.study
    x = np.linspace(-st.x_half_width, st.x_half_width, st.x_points)
    rows = []
    blocks = {(0, 0): order0(params, x, cfg.numerics.n_max).values}
    modes = range(cfg.numerics.n_max + 1)
    blocks[(1, 1)] = np.array([order1_coeff(n, params, x, potential) for n in modes])
    blocks[(1, 2)] = np.array([order2_single(n, params, x, potential) for n in modes])
    blocks[(2, 2)] = np.array([order2_double(n, params, x, potential) for n in modes])
    for (l, h), vals in blocks.items():
        for n in modes:
            for xi, v in zip(x, vals[n]):
                rows.append({"n": n, "x": float(xi), "re": float(v.real), "im": float(v.imag), "l": l, "h": h})
    path = out / "coeffs.csv"
    write_csv(path, ["n", "x", "re", "im", "l", "h"], rows)
    return [path], {}, 0


def _check_suite(cfg, out):
    """Property suite; returns rows (name, value, tolerance, passed) and data files."""
    import numpy as np

    from .experiments import (application_run, convergence_study, exact_run, is_shrinking, lemma_bound_check,
                              oracle_triangle)
    from .model import ModelParams, PotentialSpec, superposition_alpha
    from .solver import evolve_free

    params, solver, potential = _model(cfg)
    eps_list = cfg.study.epsilon_list
    budget = cfg.numerics.max_grid_points
    rows, files = [], []

    def add(name, value, tol, passed):
        rows.append({"criterion": name, "value": float(value), "tolerance": float(tol), "passed": bool(passed)})

    stat = ModelParams(eps=eps_list[0], v0=params.v0, r0=params.r0, a=params.a, branch=params.branch, t=params.t)
    conv_rows = []
    for k in (0, 1, 2):
        rep = convergence_study("stationary", k, eps_list, stat, solver, potential, budget)
        conv_rows += rep.rows
        add(f"stationary_slope_k{k}", rep.fit.slope, 0.5, abs(rep.fit.slope - (k + 1)) <= 0.5)
        add(f"stationary_r2_k{k}", rep.fit.r2, 0.98, rep.fit.r2 >= 0.98)
    drift = max(r["norm_drift"] for r in conv_rows)
    add("unitarity_norm_drift", drift, 1e-6, drift < 1e-6)

    far = ModelParams(eps=eps_list[0], v0=params.v0, r0=2 * params.a - params.r0,
                      a=params.a, branch=1, t=params.t)
    rep = convergence_study("nonstationary", 0, eps_list, far, solver, potential, budget)
    conv_rows += rep.rows
    add("nonstationary_slope", rep.fit.slope, 1.7, rep.fit.slope > 1.7)

    zero = PotentialSpec.zero_potential()
    worst = 0.0
    for e in eps_list:
        s0, fin = exact_run(stat.with_eps(e), solver, zero, False, budget)
        worst = max(worst, fin.distance(evolve_free(s0, stat.t)))
    add("zero_potential_oracle", worst, 1e-8, worst < 1e-8)

    app = application_run(stat, eps_list, solver, potential, budget)
    mid = min(app.rows, key=lambda r: abs(r["epsilon"] - 0.05))
    add("ratio0_at_eps_0.05", abs(mid["ratio0"] - 0.5), 0.05, abs(mid["ratio0"] - 0.5) <= 0.05)
    add("ratio1_at_eps_0.05", abs(mid["ratio1"] - 1.0), 0.05, abs(mid["ratio1"] - 1.0) <= 0.05)
    dev0, dev1 = app.summary["ratio0_deviation"], app.summary["ratio1_deviation"]
    add("ratio0_deviation_shrinks", max(np.diff(dev0)), 0.0, is_shrinking(dev0))
    add("ratio1_deviation_shrinks", max(np.diff(np.maximum(dev1, 1e-12))), 0.0, is_shrinking(dev1))
    p1 = max(abs(r["p1_rel_error"]) for r in app.rows if r["epsilon"] <= 0.1)
    add("p1_vs_first_order", p1, 0.2, p1 <= 0.2)
    alpha = max(abs(superposition_alpha(stat.with_eps(e)) - 2 ** -0.5) for e in eps_list if e <= 0.1)
    add("alpha_flatness", alpha, 1e-8, alpha < 1e-8)

    path = out / "convergence.csv"
    write_csv(path, ["epsilon", "error_norm", "order_k", "case"], conv_rows)
    files.append(path)
    path = out / "application.csv"
    write_csv(path, ["epsilon", "alpha", "p0", "p1", "p_plus_0", "p_plus_1", "ratio0", "ratio1"], app.rows)
    files.append(path)

    if cfg.study.full:
        tri = oracle_triangle(ModelParams(eps=1.0, v0=params.v0, r0=params.r0, a=params.a, t=params.t),
                              cfg.numerics.n_max, potential=potential)
        diff = tri.summary["max_relative_difference"]
        add("oracle_triangle", diff, 1e-4, diff <= 1e-4)
        s = cfg.study.lemma_samples
        la = lemma_bound_check(samples=s, seed=cfg.study.lemma_seed)
        lb = lemma_bound_check(samples=s, seed=cfg.study.lemma_seed + 1)
        spread = max(abs(a["constant"] / b["constant"] - 1) for a, b in zip(la.rows, lb.rows))
        add("lemma_constant_resampling", spread, 0.1, spread <= 0.1)
    return rows, files


def cmd_check(cfg, out):
    rows, files = _check_suite(cfg, out)
    path = out / "check.csv"
    write_csv(path, ["criterion", "value", "tolerance", "passed"], rows)
    files.append(path)
    failed = [r for r in rows if not r["passed"]]
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['criterion']:<28} value={r['value']:.3e} "
              f"tol={r['tolerance']:.1e}")
    print(f"{len(rows) - len(failed)}/{len(rows)} invariants hold")
    return files, {"failed": [r["criterion"] for r in failed]}, 1 if failed else 0


COMMANDS = {
    "convergence": cmd_convergence,
    "application": cmd_application,
    "evolve": cmd_evolve,
    "coeffs": cmd_coeffs,
    "check": cmd_check,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="inelastic1d", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI config file")
        p.add_argument("--out-dir", help="output directory (overrides [output] out_dir)")
        p.add_argument("--epsilon-list", help="comma-separated eps values")
        p.add_argument("--order", type=int, choices=(0, 1, 2))
        p.add_argument("--case", choices=("stationary", "nonstationary"))
        p.add_argument("--quiet", action="store_true", help="only warnings and errors")
    return parser


def _set_threads():
    n = os.environ.get(THREAD_ENV)
    if n:
        if not n.isdigit() or int(n) < 1:
            raise ConfigError(f"{THREAD_ENV} must be a positive integer, got {n!r}")
        for var in _THREAD_VARS:
            os.environ[var] = n


def run(command, config_path=None, overrides=None):
    """Run one subcommand; returns the exit status."""
    cfg = apply_overrides(load_config(config_path), overrides or argparse.Namespace())
    out = Path(cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files, extra, status = COMMANDS[command](cfg, out)
    timings = {"total": time.perf_counter() - start}
    if cfg.output.plot_script:
        script = write_plot_script(out, command)
        if script:
            files.append(script)
    write_manifest(out, command, cfg, files, timings, extra)
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        _set_threads()
        return run(args.command, args.config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MemoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        # numerical failures (spill, step size, quadrature, truncation) carry their own remedy
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
