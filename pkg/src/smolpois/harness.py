"""CLI, configuration, presets, sweeps, and reproducible file outputs.

Config files are flat INI sections of ``key = value`` pairs; unknown keys
are errors, never ignored.  All outputs are byte-deterministic for a given
config: CSV numbers carry 17 significant digits and the wall-clock time is
reported on stderr only (the summary file stores null).

Subcommands: classify, design, simulate, sweep, validate.  Exit status 0
means the work completed (whatever the scientific verdict), 1 is a
usage/config error, 2 a solver failure (inconclusive).
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import diagnostics as diag
from .coefficient import Potentials, coefficient_from_text
from .expr import ParseError, evaluate, parse_coefficient
from .regime import (
    BlowupDesign,
    CertificateUnavailable,
    DesignFailure,
    RegimeError,
    RegimeReport,
    build_majorant,
    classify,
    default_candidates,
    design_blowup,
    verify_majorant,
)
from .solver import SolverFailure, run, run_crossval
from .transform import FieldF, field_to_csv

CSV_HEADER = (
    "t,dt,f_min,f_max,u_max,mass_err,L1,m_q,sigma,"
    "slack_corollary,slack_gex5,slack_gex6,slack_moment_ode,slack_prandtl"
)


class ConfigError(ValueError):
    pass


# --- run configuration ---------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    coefficient_text: str
    theta: Optional[float] = None
    alpha: Optional[float] = None
    mass: float = 1.0
    formulation: str = "f"             # f | u | both
    n: int = 400
    n_y: int = 400
    t_max: float = 5.0
    dt_init: float = 1e-6
    dt_max: object = 0.01              # float or "auto" (0.25 * finest cell)
    output_interval: Optional[float] = None
    initial_kind: str = "constant"     # constant | cosine | pam | samples
    amplitude: float = 0.5
    pam_q: object = "auto"
    pam_delta: object = "auto"
    samples_file: Optional[str] = None
    out_dir: Optional[str] = None
    eps_touchdown: float = 1e-6
    save_fields: bool = False
    preset: Optional[str] = None

    def validate(self) -> "RunConfig":
        if self.mass <= 0.0:
            raise ConfigError("mass must be positive")
        if self.formulation not in ("f", "u", "both"):
            raise ConfigError("formulation must be one of f, u, both")
        if self.n < 2 or self.n_y < 2:
            raise ConfigError("grid.n and grid.n_y must be at least 2")
        if self.t_max <= 0.0:
            raise ConfigError("t_max must be positive")
        if self.dt_init <= 0.0:
            raise ConfigError("dt_init must be positive")
        if self.dt_max != "auto" and float(self.dt_max) <= 0.0:
            raise ConfigError("dt_max must be positive or 'auto'")
        if self.output_interval is not None and self.output_interval <= 0.0:
            raise ConfigError("output_interval must be positive")
        if self.initial_kind not in ("constant", "cosine", "pam", "samples"):
            raise ConfigError("initial.kind must be constant, cosine, pam or samples")
        if self.initial_kind == "samples" and not self.samples_file:
            raise ConfigError("initial.kind = samples needs initial.file")
        if self.eps_touchdown <= 0.0:
            raise ConfigError("eps_touchdown must be positive")
        for name, value in (("initial.q", self.pam_q), ("initial.delta", self.pam_delta)):
            if value != "auto":
                try:
                    float(value)
                except (TypeError, ValueError):
                    raise ConfigError(f"{name} must be a number or 'auto'") from None
        try:
            parse_coefficient(self.coefficient_text)
        except ParseError as err:
            raise ConfigError(f"coefficient.expr: {err}") from None
        return self

    def resolved_dt_max(self) -> float:
        if self.dt_max == "auto":
            return 0.25 * min(1.0 / self.n, self.mass / self.n_y)
        return float(self.dt_max)

    def resolved_output_interval(self) -> float:
        if self.output_interval is not None:
            return self.output_interval
        return self.t_max / 100.0

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs).validate()

    def to_dict(self) -> dict:
        return {
            "coefficient": self.coefficient_text,
            "theta": self.theta,
            "alpha": self.alpha,
            "mass": self.mass,
            "formulation": self.formulation,
            "n": self.n,
            "n_y": self.n_y,
            "t_max": self.t_max,
            "dt_init": self.dt_init,
            "dt_max": self.dt_max,
            "output_interval": self.output_interval,
            "initial_kind": self.initial_kind,
            "amplitude": self.amplitude,
            "pam_q": self.pam_q,
            "pam_delta": self.pam_delta,
            "samples_file": self.samples_file,
            "eps_touchdown": self.eps_touchdown,
            "preset": self.preset,
        }


@dataclass
class RunSummary:
    verdict: Optional[str]
    blowup_time: Optional[float]
    final_time: float
    regime: RegimeReport
    design: Optional[BlowupDesign]
    checks: dict
    config_echo: dict
    wall_clock_s: Optional[float]
    notes: tuple = ()
    final_state: object = None         # not serialized
    crossval_gap: Optional[float] = None

    def to_dict(self, include_wall_clock: bool = False) -> dict:
        if self.verdict == "blowup" and self.blowup_time is None:
            raise ValueError("blowup verdict without a blowup time estimate")
        checks = {
            name: {
                "passed": res.passed,
                "min_slack": res.min_slack,
                "first_violation_t": res.first_violation_t,
                "note": res.note,
            }
            for name, res in sorted(self.checks.items())
        }
        return {
            "verdict": self.verdict,
            "blowup_time": self.blowup_time,
            "final_time": self.final_time,
            "regime": self.regime.to_dict() if self.regime is not None else None,
            "design": self.design.to_dict() if self.design is not None else None,
            "checks": checks,
            "config": self.config_echo,
            "crossval_gap": self.crossval_gap,
            "wall_clock_s": self.wall_clock_s if include_wall_clock else None,
            "notes": list(self.notes),
        }


# --- config file loading ---------------------------------------------------------

_SCHEMA = {
    "coefficient.expr": str,
    "coefficient.theta": float,
    "coefficient.alpha": float,
    "run.mass": float,
    "run.formulation": str,
    "run.t_max": float,
    "run.dt_init": float,
    "run.dt_max": "float_or_auto",
    "run.output_interval": float,
    "run.out_dir": str,
    "run.eps_touchdown": float,
    "grid.n": int,
    "grid.n_y": int,
    "initial.kind": str,
    "initial.amplitude": float,
    "initial.q": "float_or_auto",
    "initial.delta": "float_or_auto",
    "initial.file": str,
    "output.save_fields": bool,
    "sweep.key": str,
    "sweep.values": str,
}

_KEY_TO_FIELD = {
    "coefficient.expr": "coefficient_text",
    "coefficient.theta": "theta",
    "coefficient.alpha": "alpha",
    "run.mass": "mass",
    "run.formulation": "formulation",
    "run.t_max": "t_max",
    "run.dt_init": "dt_init",
    "run.dt_max": "dt_max",
    "run.output_interval": "output_interval",
    "run.out_dir": "out_dir",
    "run.eps_touchdown": "eps_touchdown",
    "grid.n": "n",
    "grid.n_y": "n_y",
    "initial.kind": "initial_kind",
    "initial.amplitude": "amplitude",
    "initial.q": "pam_q",
    "initial.delta": "pam_delta",
    "initial.file": "samples_file",
    "output.save_fields": "save_fields",
}


def _coerce(key: str, raw: str):
    kind = _SCHEMA[key]
    raw = raw.strip()
    if kind is str:
        return raw
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if kind is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if kind is bool:
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "float_or_auto":
        if raw.lower() == "auto":
            return "auto"
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number or 'auto', got {raw!r}") from None
    raise AssertionError(kind)


def _read_config_pairs(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    pairs = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            full = f"{section}.{key}"
            if full not in _SCHEMA:
                raise ConfigError(f"unknown config key {full!r}")
            pairs[full] = _coerce(full, raw)
    if "coefficient.expr" not in pairs:
        raise ConfigError("config needs coefficient.expr")
    return pairs


def load_config(path) -> RunConfig:
    """Load and validate a run configuration file."""
    pairs = _read_config_pairs(path)
    kwargs = {}
    for key, value in pairs.items():
        if key.startswith("sweep."):
            continue
        kwargs[_KEY_TO_FIELD[key]] = value
    return RunConfig(**kwargs).validate()


def load_sweep(path) -> tuple[RunConfig, str, list]:
    """Load a sweep config: base RunConfig plus (key, values) to vary."""
    pairs = _read_config_pairs(path)
    if "sweep.key" not in pairs or "sweep.values" not in pairs:
        raise ConfigError("sweep config needs sweep.key and sweep.values")
    key = pairs["sweep.key"]
    if key not in _SCHEMA or key.startswith("sweep."):
        raise ConfigError(f"sweep.key {key!r} is not a config key")
    values = [_coerce(key, item) for item in pairs["sweep.values"].split(",") if item.strip()]
    if not values:
        raise ConfigError("sweep.values is empty")
    base = load_config(path)
    return base, key, values


# --- presets ----------------------------------------------------------------------

_PRESETS = {
    # one per dichotomy clause plus the two-formulation consistency run
    "blowup-demo": dict(
        coefficient_text="(1+r)^-2",
        theta=0.5,
        alpha=2.0,
        mass=1.0,
        formulation="f",
        initial_kind="pam",
        t_max=50.0,
        dt_init=1e-8,
        dt_max=0.01,
        output_interval=0.25,
    ),
    "global-demo": dict(
        coefficient_text="(1+r)^-1",
        mass=1.0,
        formulation="f",
        initial_kind="cosine",
        amplitude=0.5,
        t_max=5.0,
        dt_init=1e-6,
        dt_max=0.005,
        output_interval=0.05,
    ),
    "decr-demo": dict(
        coefficient_text="(1+r)*r^-2.5",
        theta=0.5,
        alpha=1.5,
        mass=1.0,
        formulation="f",
        initial_kind="pam",
        t_max=5.0,
        dt_init=1e-8,
        dt_max=0.005,
        output_interval=0.1,
    ),
    "crossval": dict(
        coefficient_text="(1+r)^-1",
        mass=1.0,
        formulation="both",
        initial_kind="cosine",
        amplitude=0.5,
        t_max=0.1,
        dt_init=1e-6,
        dt_max="auto",
        output_interval=0.02,
    ),
}


def preset_config(name: str) -> RunConfig:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(_PRESETS)}")
    return RunConfig(preset=name, **_PRESETS[name]).validate()


# --- deterministic output writing ---------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.17g}"


def _json_encode(obj, indent: int = 0) -> str:
    pad = "  " * indent
    pad_in = "  " * (indent + 1)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return f"{x:.17g}"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad_in}{json.dumps(str(k))}: {_json_encode(v, indent + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad_in}{_json_encode(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_deterministic(obj) -> str:
    return _json_encode(obj) + "\n"


def emit_outputs(summary: RunSummary, series, out_dir) -> list[Path]:
    """Write series.csv and summary.json; deterministic byte-for-byte.

    Wall-clock time is deliberately excluded from the files (stderr only)
    so identical configs produce identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [CSV_HEADER]
    for rec in series:
        rows.append(
            ",".join(
                [
                    _fmt(rec.t),
                    _fmt(rec.dt),
                    _fmt(rec.f_min),
                    _fmt(rec.f_max),
                    _fmt(rec.u_max),
                    _fmt(rec.mass_err),
                    _fmt(rec.l1),
                    _fmt(rec.m_q),
                    _fmt(rec.sigma_t),
                    _fmt(rec.slack_corollary),
                    _fmt(rec.slack_gex5),
                    _fmt(rec.slack_gex6),
                    _fmt(rec.slack_moment_ode),
                    _fmt(rec.slack_prandtl),
                ]
            )
        )
    series_path = out / "series.csv"
    series_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    summary_path = out / "summary.json"
    summary_path.write_text(dumps_deterministic(summary.to_dict()), encoding="utf-8")
    return [series_path, summary_path]


# --- subcommands -----------------------------------------------------------------


def _cmd_classify(args) -> int:
    coeff = coefficient_from_text(args.coeff)
    report = classify(coeff, args.theta, args.alpha)
    text = dumps_deterministic(report.to_dict())
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _cmd_design(args) -> int:
    coeff = coefficient_from_text(args.coeff)
    theta, alpha = default_candidates(coeff, args.theta, args.alpha)
    try:
        design = design_blowup(coeff, args.mass, theta, alpha, n_y=args.grid)
        payload = design.to_dict()
        payload["design_failed"] = False
    except DesignFailure as err:
        payload = {
            "design_failed": True,
            "reason": str(err),
            "search_trace": [list(item) for item in err.trace],
        }
    except CertificateUnavailable as err:
        # the coefficient can sit in the blowup regime through the gamma
        # condition alone, without any admissible decay pair to build the
        # explicit certificate from
        if classify(coeff, args.theta, args.alpha).clause != "blowup-via-(1)":
            raise
        payload = {
            "design_failed": True,
            "verdict": "blowup expected, certificate unavailable - verify by simulation",
            "reason": str(err),
        }
    text = dumps_deterministic(payload)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _resolve_simulate_config(args) -> RunConfig:
    if bool(args.preset) == bool(args.config):
        raise ConfigError("simulate needs exactly one of --preset or --config")
    config = preset_config(args.preset) if args.preset else load_config(args.config)
    overrides = {}
    if args.coeff:
        overrides["coefficient_text"] = args.coeff
    if args.formulation:
        overrides["formulation"] = args.formulation
    if args.t_max is not None:
        overrides["t_max"] = args.t_max
    if args.grid is not None:
        overrides["n"] = args.grid
        overrides["n_y"] = args.grid
    if args.out:
        overrides["out_dir"] = args.out
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def simulate(config: RunConfig) -> tuple[RunSummary, list]:
    """Run one config (single formulation or the two-formulation cross-check)."""
    if config.formulation == "both":
        gap, summary_f, summary_u, series_f, series_u = run_crossval(config)
        checks = dict(summary_f.checks)
        checks["crossval_gap"] = diag.CheckResult(
            name="crossval_gap",
            passed=gap <= 0.02,
            min_slack=0.02 - gap,
            note=f"relative L1 gap {gap:.6g} between formulations at t_max",
        )
        notes = tuple(summary_f.notes)
        if summary_u.verdict != summary_f.verdict:
            notes = notes + (
                f"formulations disagree: f={summary_f.verdict}, u={summary_u.verdict}",
            )
        summary = RunSummary(
            verdict=summary_f.verdict,
            blowup_time=summary_f.blowup_time,
            final_time=summary_f.final_time,
            regime=summary_f.regime,
            design=summary_f.design,
            checks=checks,
            config_echo=config.to_dict(),
            wall_clock_s=(summary_f.wall_clock_s or 0.0) + (summary_u.wall_clock_s or 0.0),
            notes=notes,
            final_state=summary_f.final_state,
            crossval_gap=gap,
        )
        return summary, series_f
    return run(config)


def _cmd_simulate(args) -> int:
    config = _resolve_simulate_config(args)
    summary, series = simulate(config)
    out_dir = config.out_dir or "out"
    emit_outputs(summary, series, out_dir)
    if config.save_fields and summary.final_state is not None:
        field_to_csv(summary.final_state.field, Path(out_dir) / "field_final.csv")
    if summary.wall_clock_s is not None:
        sys.stderr.write(f"wall clock: {summary.wall_clock_s:.3f} s\n")
    sys.stdout.write(dumps_deterministic(summary.to_dict()))
    return 2 if summary.verdict == "inconclusive" else 0


def _sweep_child(payload) -> dict:
    index, config, out_dir = payload
    summary, series = simulate(config)
    emit_outputs(summary, series, out_dir)
    return {
        "index": index,
        "dir": str(out_dir),
        "verdict": summary.verdict,
        "blowup_time": summary.blowup_time,
        "final_time": summary.final_time,
    }


def _cmd_sweep(args) -> int:
    base, key, values = load_sweep(args.config)
    out_root = Path(args.out or base.out_dir or "sweep-out")
    jobs = max(1, args.jobs)
    children = []
    for index, value in enumerate(values):
        config = base.with_overrides(**{_KEY_TO_FIELD[key]: value})
        child_dir = out_root / f"run-{index:03d}"
        children.append((index, config, str(child_dir)))
    if jobs == 1:
        results = [_sweep_child(child) for child in children]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_child, children))
    manifest = {
        "key": key,
        "values": list(values),
        "runs": sorted(results, key=lambda r: r["index"]),
    }
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "manifest.json").write_text(dumps_deterministic(manifest), encoding="utf-8")
    sys.stdout.write(dumps_deterministic(manifest))
    return 0


def _cmd_validate(args) -> int:
    results = validation_suite()
    for name, passed, detail in results:
        sys.stdout.write(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}\n")
    payload = {
        "passed": all(p for _, p, _ in results),
        "checks": [{"name": n, "passed": p, "detail": d} for n, p, d in results],
    }
    if args.out:
        Path(args.out).write_text(dumps_deterministic(payload), encoding="utf-8")
    return 0


def validation_suite() -> list[tuple[str, bool, str]]:
    """Invariant battery over the builtin coefficients; returns
    (name, passed, detail) triples."""
    results = []
    rng = np.random.default_rng(20240817)

    # parser goldens
    try:
        ok = (
            abs(evaluate(parse_coefficient("(1+r)^-2"), 1.0) - 0.25) < 1e-15
            and abs(evaluate(parse_coefficient("2^3^2"), 1.0) - 512.0) < 1e-12
            and abs(evaluate(parse_coefficient("1/(1+r)"), 1.0) - 0.5) < 1e-15
        )
        results.append(("parser_golden", ok, "precedence and arithmetic"))
    except Exception as err:  # pragma: no cover - report, don't crash
        results.append(("parser_golden", False, repr(err)))

    # regime clauses for the canonical coefficients
    try:
        canon = {
            "(1+r)^-1": "global",
            "1": "global",
            "(1+r)^-2": "blowup-via-(1)",
            "(1+r)*r^-2.5": "blowup-via-(decr)",
        }
        got = {text: classify(coefficient_from_text(text)).clause for text in canon}
        ok = got == canon
        results.append(("regime_clauses", ok, str(got)))
    except Exception as err:
        results.append(("regime_clauses", False, repr(err)))

    # potentials: derivative consistency and inverse round-trip
    for text in ("(1+r)^-1", "(1+r)^-2", "(1+r)*r^-2.5"):
        try:
            pot = Potentials(coefficient_from_text(text))
            rs = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), 12))
            worst = 0.0
            for r in rs:
                hstep = 1e-6 * r
                fd = (pot.psi(r + hstep) - pot.psi(r - hstep)) / (2.0 * hstep)
                worst = max(worst, abs(fd - pot.psi_prime(r)) / abs(pot.psi_prime(r)))
            inv_worst = 0.0
            for r in rs:
                inv_worst = max(inv_worst, abs(pot.psi_inverse(pot.psi(r)) - r) / r)
            ok = worst < 1e-6 and inv_worst < 1e-8
            results.append(
                (f"potentials[{text}]", ok, f"dpsi rel err {worst:.2e}, inverse rel err {inv_worst:.2e}")
            )
        except Exception as err:
            results.append((f"potentials[{text}]", False, repr(err)))

    # majorant domination for the integrable-tail example
    try:
        coeff = coefficient_from_text("(1+r)^-2")
        report = verify_majorant(coeff, build_majorant(coeff, i_max=40))
        results.append(
            (
                "majorant",
                report.passed,
                f"min domination slack {report.domination_min_slack:.3e}, "
                f"B(r)/r surrogate {report.sublinear_value:.3e}",
            )
        )
    except Exception as err:
        results.append(("majorant", False, repr(err)))

    # energy/norm inequalities on random unit-integral profiles
    try:
        worst = math.inf
        for text in ("(1+r)^-1", "(1+r)^-2"):
            pot = Potentials(coefficient_from_text(text))
            for _ in range(20):
                vals = _random_profile(rng, 1.0, 200)
                f = FieldF.from_samples(vals, 1.0)
                s5, s6 = diag.energy_norm_slacks(pot, f, 1.0)
                worst = min(worst, s5, s6)
        results.append(("energy_norm_random", worst >= -1e-8, f"min slack {worst:.3e}"))
    except Exception as err:
        results.append(("energy_norm_random", False, repr(err)))

    return results


def _random_profile(rng, M: float, n: int) -> np.ndarray:
    y = (np.arange(n) + 0.5) * (M / n)
    vals = np.full(n, 1.0 / M)
    for k in range(1, 6):
        vals = vals + rng.uniform(-0.1, 0.1) / k * np.cos(k * np.pi * y / M)
    return np.maximum(vals, 0.05 / M)


# --- argument parsing --------------------------------------------------------------


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="smolpois", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_classify = sub.add_parser("classify", help="regime verdict for a coefficient")
    p_classify.add_argument("--coeff", required=True, help="coefficient expression in r")
    p_classify.add_argument("--theta", type=float, default=None)
    p_classify.add_argument("--alpha", type=float, default=None)
    p_classify.add_argument("--out", default=None, help="also write the JSON report here")

    p_design = sub.add_parser("design", help="explicit blowup certificate")
    p_design.add_argument("--coeff", required=True)
    p_design.add_argument("--mass", type=float, default=1.0)
    p_design.add_argument("--theta", type=float, default=None)
    p_design.add_argument("--alpha", type=float, default=None)
    p_design.add_argument("--grid", type=int, default=400, help="n_y for the discrete profile")
    p_design.add_argument("--out", default=None)

    p_sim = sub.add_parser("simulate", help="advance a configuration to a verdict")
    p_sim.add_argument("--preset", default=None, help=f"one of {sorted(_PRESETS)}")
    p_sim.add_argument("--config", default=None, help="INI config file")
    p_sim.add_argument("--coeff", default=None)
    p_sim.add_argument("--formulation", default=None, choices=["f", "u", "both"])
    p_sim.add_argument("--t-max", type=float, default=None, dest="t_max")
    p_sim.add_argument("--grid", type=int, default=None, help="sets both n and n_y")
    p_sim.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="one run per value of a swept key")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)

    p_val = sub.add_parser("validate", help="invariant battery on builtin coefficients")
    p_val.add_argument("--out", default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        sys.stderr.write(f"usage error: {err}\n")
        return 1
    handlers = {
        "classify": _cmd_classify,
        "design": _cmd_design,
        "simulate": _cmd_simulate,
        "sweep": _cmd_sweep,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ParseError, RegimeError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 1
    except (SolverFailure, DesignFailure) as err:
        sys.stderr.write(f"solver error: {err}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
