"""Time integration of both formulations of the aggregation model.

f-form (mass-Lagrangian): d_t f = d_y^2 psi(f) - 1 + M f on (0, M) with
homogeneous Neumann conditions; advanced by backward Euler with a Newton
solve of the nonlinear tridiagonal system (Jacobian through
psi'(f) = a(1/f)/f^2, Neumann via ghost-cell reflection).  A step is
accepted only if Newton converges and the iterate stays positive;
otherwise dt halves, and dt underflow is touch-down evidence.

u-form (original system): d_t u = d_x(a(u) d_x u - u d_x v) coupled to
the Neumann Poisson problem v'' = M - u with zero mean.  Conservative
finite volumes: implicit diffusion with harmonic-mean face coefficients
frozen at the current state, explicit upwind drift, zero total flux at
the walls, mass conserved by the flux form.

Blowup is detected as touch-down of f (min f < 1e-6) or runaway of u
(max u > 1e6); dt underflow counts as touch-down evidence.  The adaptive
controller targets a 5% relative change of the monitored extremum per
step by halving/doubling between 1e-12 and dt_max.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from . import diagnostics as diag
from .coefficient import Potentials, coefficient_from_text
from .regime import BlowupDesign, classify, default_candidates, design_blowup
from .transform import TOUCHDOWN_FLOOR, FieldF, FieldU, f_to_u, pam_profile, u_to_f

DT_FLOOR = 1e-12
DT_UNDERFLOW = 1e-14
NEWTON_TOL = 1e-13
TARGET_REL_CHANGE = 0.05


class SolverFailure(RuntimeError):
    pass


class NearSingularity(SolverFailure):
    """dt underflowed while retrying a step: touch-down evidence."""


@dataclass(frozen=True)
class FieldV:
    """Chemoattractant potential on the u grid: zero mean, zero Neumann flux."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.size

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class SolverState:
    formulation: str                 # "f" | "u"
    t: float
    field: object                    # FieldF or FieldU
    potentials: Potentials
    v: Optional[FieldV] = None
    dt: float = 0.0
    steps: int = 0


# --- Poisson ------------------------------------------------------------------


def solve_poisson(uf: FieldU) -> FieldV:
    """Solve v'' = M - u with homogeneous Neumann walls and zero mean.

    u is first projected multiplicatively onto mass M (discrete solvability
    needs exact compatibility); the singular Neumann system is gauged by
    pinning v_0 and shifted to zero mean afterwards.
    """
    n = uf.n
    h = uf.h
    u = uf.values
    total = h * float(u.sum())
    u = u * (uf.mass / total)
    if abs(h * float(u.sum()) - uf.mass) > 1e-10 * max(1.0, uf.mass):
        raise SolverFailure("u could not be projected onto its mass")
    g = uf.mass - u  # v'' = M - u
    # rows 1..n-1 are the three-point stencil; row 0 is the gauge v_0 = 0
    lower = np.zeros(n)
    main = np.zeros(n)
    upper = np.zeros(n)
    rhs = np.zeros(n)
    main[0] = 1.0
    h2 = h * h
    for_row = slice(1, n - 1)
    lower[0:n - 2] = 1.0 / h2          # sub-diagonal entries for rows 1..n-2
    main[for_row] = -2.0 / h2
    upper[2:n] = 1.0 / h2              # super-diagonal entries for rows 1..n-2
    rhs[for_row] = g[1:n - 1]
    # last row: ghost reflection v_n = v_{n-1}
    lower[n - 2] = 1.0 / h2
    main[n - 1] = -1.0 / h2
    rhs[n - 1] = g[n - 1]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[1:]
    ab[1, :] = main
    ab[2, :-1] = lower[:-1]
    v = solve_banded((1, 1), ab, rhs)
    v = v - v.mean()
    return FieldV(values=v)


def poisson_residual(uf: FieldU, fv: FieldV) -> float:
    """Max residual of the three-point Neumann discretization."""
    h2 = uf.h**2
    u = uf.values * (uf.mass / (uf.h * float(uf.values.sum())))
    g = uf.mass - u
    v = fv.values
    res = np.empty_like(v)
    res[1:-1] = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / h2 - g[1:-1]
    res[0] = (v[1] - v[0]) / h2 - g[0]
    res[-1] = (v[-2] - v[-1]) / h2 - g[-1]
    return float(np.max(np.abs(res)))


# --- f-form step --------------------------------------------------------------


def _lap_neumann(vals: np.ndarray, h: float) -> np.ndarray:
    """Second difference in flux form with reflecting ghosts: the cell sum of
    the result telescopes to exactly zero in floating point, which keeps the
    discrete integral of f bit-tight through the implicit solve."""
    flux = np.diff(vals) / h
    out = np.empty_like(vals)
    out[0] = flux[0] / h
    out[-1] = -flux[-1] / h
    out[1:-1] = np.diff(flux) / h
    return out


def _newton_f(pot: Potentials, f_old: np.ndarray, M: float, h: float, dt: float) -> Optional[np.ndarray]:
    """One backward-Euler solve; None when Newton fails or positivity breaks.

    Convergence target is NEWTON_TOL plus the rounding floor of the stiff
    Laplacian term (eps * |psi| / h^2 scales far above eps for fine grids);
    a stalled iterate at that floor is accepted rather than ground down.
    """
    w = f_old.copy()
    h2 = h * h
    n = w.size
    eps = np.finfo(float).eps
    best_w = None
    best_res = math.inf
    for iteration in range(30):
        psi_w = np.asarray(pot.psi(w), dtype=float)
        residual = w - f_old - dt * (_lap_neumann(psi_w, h) + M * w - 1.0)
        res_norm = float(np.max(np.abs(residual)))
        noise_floor = 16.0 * eps * (
            dt * (float(np.max(np.abs(psi_w))) / h2 + M * float(np.max(w)) + 1.0)
            + float(np.max(w))
        )
        tol = NEWTON_TOL * max(1.0, float(np.max(w))) + noise_floor
        if res_norm <= tol:
            return w
        if res_norm < best_res:
            if res_norm > 0.5 * best_res and iteration > 3 and res_norm <= 64.0 * tol:
                # stalled at the rounding floor of the residual evaluation
                return w
            best_res = res_norm
            best_w = w
        elif iteration > 3 and best_res <= 64.0 * tol:
            return best_w
        dpsi = np.asarray(pot.psi_prime(w), dtype=float)
        # J = I - dt (T diag(psi') / h^2 + M I), T the Neumann Laplacian stencil
        main = 1.0 - dt * M + 2.0 * dt * dpsi / h2
        main[0] = 1.0 - dt * M + dt * dpsi[0] / h2
        main[-1] = 1.0 - dt * M + dt * dpsi[-1] / h2
        upper = np.zeros(n)
        lower = np.zeros(n)
        upper[1:] = -dt * dpsi[1:] / h2
        lower[:-1] = -dt * dpsi[:-1] / h2
        ab = np.vstack((upper, main, lower))
        try:
            dw = solve_banded((1, 1), ab, -residual, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return None
        w = w + dw
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            return None
    return None


def step_f(state: SolverState, dt: float) -> SolverState:
    """Advance the f-form by one accepted implicit step.

    Retries with halved dt on Newton failure or loss of positivity; raises
    ``NearSingularity`` once dt underflows (touch-down evidence).
    """
    field: FieldF = state.field
    trial = dt
    while True:
        w = _newton_f(state.potentials, field.values, field.mass, field.h, trial)
        if w is not None:
            return replace(
                state,
                t=state.t + trial,
                field=field.with_values(w),
                dt=trial,
                steps=state.steps + 1,
            )
        trial *= 0.5
        if trial < DT_UNDERFLOW:
            raise NearSingularity(
                f"dt underflowed below {DT_UNDERFLOW:g} at t={state.t:.6g} "
                f"(min f = {field.min_value:.3e})"
            )


# --- u-form step ---------------------------------------------------------------


def _try_u_step(pot: Potentials, uf: FieldU, fv: FieldV, dt: float) -> Optional[np.ndarray]:
    u = uf.values
    n = u.size
    h = uf.h
    coeff = pot.coefficient
    a_vals = np.asarray(coeff(u), dtype=float)
    # harmonic-mean diffusivity on interior faces, frozen at the current state
    a_face = 2.0 * a_vals[:-1] * a_vals[1:] / (a_vals[:-1] + a_vals[1:])
    velocity = np.diff(fv.values) / h            # d_x v on interior faces
    upwind = np.where(velocity > 0.0, u[:-1], u[1:])
    flux_adv = upwind * velocity                 # advective flux u * d_x v
    div_adv = np.zeros(n)
    div_adv[:-1] += flux_adv / h
    div_adv[1:] -= flux_adv / h
    # implicit diffusion: (I - dt/h^2 D) u_new = u_old - dt * div_adv
    h2 = h * h
    main = np.ones(n)
    upper = np.zeros(n)
    lower = np.zeros(n)
    main[:-1] += dt * a_face / h2
    main[1:] += dt * a_face / h2
    upper[1:] = -dt * a_face / h2
    lower[:-1] = -dt * a_face / h2
    rhs = u - dt * div_adv
    ab = np.vstack((upper, main, lower))
    u_new = solve_banded((1, 1), ab, rhs, check_finite=False)
    if not np.all(np.isfinite(u_new)) or np.any(u_new <= 0.0):
        return None
    return u_new


def step_u(state: SolverState, dt: float) -> SolverState:
    """Advance the original system by one accepted finite-volume step and
    re-solve the Poisson problem."""
    field: FieldU = state.field
    if state.v is None:
        state = replace(state, v=solve_poisson(field))
    trial = dt
    while True:
        u_new = _try_u_step(state.potentials, field, state.v, trial)
        if u_new is not None:
            new_field = field.with_values(u_new)
            return replace(
                state,
                t=state.t + trial,
                field=new_field,
                v=solve_poisson(new_field),
                dt=trial,
                steps=state.steps + 1,
            )
        trial *= 0.5
        if trial < DT_UNDERFLOW:
            raise NearSingularity(
                f"dt underflowed below {DT_UNDERFLOW:g} at t={state.t:.6g} "
                f"(max u = {field.max_value:.3e})"
            )


# --- run loop -------------------------------------------------------------------


@dataclass
class _RunContext:
    pot: Potentials
    M: float
    m0: float
    q: Optional[float]
    tail_integrable: bool
    lyap_f0: Optional[float] = None
    mu_m: Optional[float] = None
    l1_0: Optional[float] = None
    design: Optional[BlowupDesign] = None
    prev_mq: Optional[tuple[float, float]] = None  # (t, m_q)


def _record_f(ctx: _RunContext, t: float, dt: float, field: FieldF) -> diag.DiagnosticsRecord:
    pot, M = ctx.pot, ctx.M
    psi_f = np.asarray(pot.psi(field.values), dtype=float)
    grad_sq = diag.grad_norm_sq(psi_f, field.h)
    psi1_f = np.asarray(pot.psi1(field.values), dtype=float)
    l1 = 0.5 * grad_sq + field.h * float(np.sum(psi_f - M * psi1_f))
    psi_l1 = field.h * float(np.sum(np.abs(psi_f)))
    h1 = math.sqrt(field.h * float(np.dot(psi_f, psi_f)) + grad_sq)
    rec = diag.DiagnosticsRecord(
        t=t,
        dt=dt,
        f_min=field.min_value,
        f_max=field.max_value,
        u_max=1.0 / field.min_value,
        mass_err=field.integral_error(),
        l1=l1,
        sigma_t=diag.sigma(M, ctx.m0, t),
        grad_psi_sq=grad_sq,
        psi_f_l1=psi_l1,
        h1_psi=h1,
    )
    slack5, slack6 = diag.energy_norm_slacks(pot, field, M)
    rec.slack_gex5 = slack5
    rec.slack_gex6 = slack6
    if ctx.q is not None:
        rec.m_q = diag.moment_mq(field, ctx.q)
        if ctx.design is not None and ctx.prev_mq is not None:
            t0, mq0 = ctx.prev_mq
            if t > t0:
                rec.slack_moment_ode = diag.moment_interval_slack(ctx.design, t0, mq0, t, rec.m_q)
        ctx.prev_mq = (t, rec.m_q)
    if ctx.tail_integrable:
        rec.psi_tilde_max = float(np.max(psi_f)) - pot.limits.psi0
        if ctx.lyap_f0 is not None and ctx.mu_m is not None:
            rec.slack_corollary = diag.psi_tilde_sup_bound(ctx.lyap_f0, M, ctx.mu_m) - rec.psi_tilde_max
    else:
        x = diag.gradient_bound_rhs(pot, ctx.l1_0, M, rec.sigma_t)
        rec.slack_prandtl = x - 0.25 * grad_sq
        _, f_floor = diag.global_barrier(pot, ctx.l1_0, M, rec.sigma_t)
        rec.slack_barrier = rec.f_min - f_floor
    return rec


def _record_u(ctx: _RunContext, t: float, dt: float, field: FieldU) -> diag.DiagnosticsRecord:
    return diag.DiagnosticsRecord(
        t=t,
        dt=dt,
        u_max=field.max_value,
        mass_err=field.mass_error(),
        sigma_t=diag.sigma(ctx.M, ctx.m0, t),
    )


def build_initial_data(config) -> tuple[Optional[FieldU], Optional[FieldF], Optional[BlowupDesign]]:
    """Construct the initial fields named by the config (and the blowup
    design when the spike parameters are 'auto')."""
    M = config.mass
    design = None
    kind = config.initial_kind
    coeff = coefficient_from_text(config.coefficient_text)
    if kind == "constant":
        u0 = FieldU.from_samples(np.full(config.n, M), M)
        f0 = FieldF.from_samples(np.full(config.n_y, 1.0 / M), M)
        return u0, f0, None
    if kind == "cosine":
        amp = config.amplitude
        if not (0.0 <= amp < M):
            raise SolverFailure(f"cosine amplitude {amp!r} must lie in [0, M)")
        x = (np.arange(config.n) + 0.5) / config.n
        u0 = FieldU.from_samples(M + amp * np.cos(np.pi * x), M)
        f0 = u_to_f(u0, config.n_y)
        return u0, f0, None
    if kind == "pam":
        theta, alpha = default_candidates(coeff, config.theta, config.alpha)
        if config.pam_q == "auto" or config.pam_delta == "auto":
            design = design_blowup(coeff, M, theta, alpha, n_y=config.n_y)
            q = design.q if config.pam_q == "auto" else float(config.pam_q)
            delta = design.delta if config.pam_delta == "auto" else float(config.pam_delta)
        else:
            q = float(config.pam_q)
            delta = float(config.pam_delta)
        f0 = pam_profile(M, q, delta, config.n_y)
        return None, f0, design
    if kind == "samples":
        values = _read_samples(config.samples_file)
        if config.formulation == "u":
            return FieldU.from_samples(values, M), None, None
        f0 = FieldF.from_samples(values, M)
        return None, f0, None
    raise SolverFailure(f"unknown initial data kind {config.initial_kind!r}")


def _read_samples(path: str) -> np.ndarray:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cell = line.split(",")[-1]
            try:
                values.append(float(cell))
            except ValueError:
                continue  # header line
    return np.asarray(values, dtype=float)


def run(config):
    """Advance one formulation to t_max or a verdict.

    Returns (RunSummary, series).  Verdicts: "blowup" on touch-down of f /
    runaway of u / dt underflow, "global-so-far" at t_max, "inconclusive"
    on solver failure.
    """
    from .harness import RunSummary  # deferred: harness imports this module

    t_start = time.perf_counter()
    formulation = config.formulation
    if formulation not in ("f", "u"):
        raise SolverFailure(f"run() advances one formulation, got {formulation!r}")
    coeff = coefficient_from_text(config.coefficient_text)
    pot = Potentials(coeff)
    regime_report = classify(coeff, config.theta, config.alpha)
    u0, f0, design = build_initial_data(config)
    M = config.mass
    eps_td = config.eps_touchdown
    u_cap = 1.0 / eps_td

    if formulation == "f":
        if f0 is None:
            raise SolverFailure("initial data does not define an f profile")
        field0 = f0
        m0 = 1.0 / f0.max_value
    else:
        if u0 is None:
            if f0 is not None and f0.min_value > TOUCHDOWN_FLOOR:
                u0 = f_to_u(f0, config.n)
            else:
                raise SolverFailure("initial data does not define a u profile")
        field0 = u0
        m0 = u0.min_value

    ctx = _RunContext(
        pot=pot,
        M=M,
        m0=min(m0, M),
        q=(design.q if design is not None else (None if config.pam_q == "auto" else _maybe_float(config.pam_q))),
        tail_integrable=coeff.tail_integrable,
        design=design,
    )
    if formulation == "f" and coeff.tail_integrable:
        ctx.mu_m = diag.mu_mass(pot, M)
        ctx.lyap_f0 = diag.lyapunov_L1(pot, field0, M)
    if formulation == "f" and not coeff.tail_integrable:
        ctx.l1_0 = diag.lyapunov_L1(pot, field0, M)

    state = SolverState(
        formulation=formulation,
        t=0.0,
        field=field0,
        potentials=pot,
        v=solve_poisson(field0) if formulation == "u" else None,
        dt=config.dt_init,
    )
    record = _record_f if formulation == "f" else _record_u
    series = [record(ctx, 0.0, config.dt_init, field0)]
    out_every = config.resolved_output_interval()
    dt_max = config.resolved_dt_max()
    next_record = out_every

    verdict = None
    blowup_time = None
    notes = list(regime_report.notes)
    if config.initial_kind == "pam":
        delta_used = design.delta if design is not None else float(config.pam_delta)
        if f0 is not None and delta_used < f0.h:
            notes.append(
                f"spike width delta = {delta_used:.3e} is below the cell width "
                f"{f0.h:.3e}; the discrete initial profile degenerates toward "
                "the constant steady state"
            )
    dt = min(config.dt_init, dt_max)

    def monitored(fld):
        return fld.min_value if formulation == "f" else fld.max_value

    if formulation == "f" and field0.min_value < eps_td:
        verdict = "blowup"
        blowup_time = 0.0
        notes.append(
            f"initial min f = {field0.min_value:.3e} already below the "
            f"touch-down threshold {eps_td:g}"
        )
    if formulation == "u" and field0.max_value > u_cap:
        verdict = "blowup"
        blowup_time = 0.0

    stepper = step_f if formulation == "f" else step_u
    try:
        while verdict is None:
            if state.t >= config.t_max:
                verdict = "global-so-far"
                break
            prev_monitor = monitored(state.field)
            dt = min(dt, config.t_max - state.t)
            state = stepper(state, dt)
            new_monitor = monitored(state.field)
            if state.t >= next_record or state.t >= config.t_max:
                series.append(record(ctx, state.t, state.dt, state.field))
                while next_record <= state.t:
                    next_record += out_every
            if formulation == "f" and new_monitor < eps_td:
                verdict = "blowup"
                blowup_time = state.t
                if series[-1].t < state.t:
                    series.append(record(ctx, state.t, state.dt, state.field))
                break
            if formulation == "u" and new_monitor > u_cap:
                verdict = "blowup"
                blowup_time = state.t
                if series[-1].t < state.t:
                    series.append(record(ctx, state.t, state.dt, state.field))
                break
            rel = abs(new_monitor - prev_monitor) / max(abs(prev_monitor), 1e-300)
            used = state.dt
            if rel > TARGET_REL_CHANGE:
                dt = max(used * 0.5, DT_FLOOR)
            elif rel < 0.25 * TARGET_REL_CHANGE:
                dt = min(used * 2.0, dt_max)
            else:
                dt = min(used, dt_max)
    except NearSingularity as err:
        verdict = "blowup"
        blowup_time = state.t
        notes.append(f"near-singularity: {err}")
        if series[-1].t < state.t:
            series.append(record(ctx, state.t, state.dt, state.field))
    except SolverFailure as err:
        verdict = "inconclusive"
        notes.append(f"solver failure: {err}")

    if series[-1].t < state.t:
        series.append(record(ctx, state.t, state.dt, state.field))

    checks = _assemble_checks(ctx, series, formulation)
    wall = time.perf_counter() - t_start
    summary = RunSummary(
        verdict=verdict,
        blowup_time=blowup_time,
        final_time=state.t,
        regime=regime_report,
        design=design,
        checks=checks,
        config_echo=config.to_dict(),
        wall_clock_s=wall,
        notes=tuple(notes),
        final_state=state,
    )
    return summary, series


def _maybe_float(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return None


def _assemble_checks(ctx: _RunContext, series, formulation: str) -> dict:
    checks: dict[str, diag.CheckResult] = {}
    if formulation != "f":
        return checks
    checks["lyapunov"] = diag.check_lyapunov(series)
    checks["sigma_comparison"] = diag.check_sigma_comparison(series)
    gex5, gex6 = diag.check_energy_norm_series(series)
    checks["gex5"] = gex5
    checks["gex6"] = gex6
    if ctx.tail_integrable and ctx.lyap_f0 is not None:
        fixed, pertime = diag.check_corollary_bound(
            ctx.pot, series, ctx.lyap_f0, ctx.M, mu_m=ctx.mu_m
        )
        checks["psi_tilde_bound_fixed"] = fixed
        checks["psi_tilde_bound_pertime"] = pertime
    if not ctx.tail_integrable and ctx.l1_0 is not None:
        bounds = diag.check_global_bounds(ctx.pot, series, ctx.l1_0, ctx.M, ctx.m0)
        checks["prandtl"] = bounds.prandtl
        checks["psi_l1_bound"] = bounds.psi_l1
        checks["f_min_barrier"] = bounds.barrier
    if ctx.design is not None:
        moment = diag.check_moment_ode(series, ctx.design)
        checks["moment_ode"] = moment.ode_slack
        checks["m_q_decreasing"] = moment.monotone
        checks["lambda_chain"] = moment.lambda_chain
    return checks


def run_crossval(config):
    """Run both formulations from the same data and compare at t_max.

    Returns (relative L1 gap of the two u profiles at t_max, f summary,
    u summary, f series, u series).
    """
    cfg_f = config.with_overrides(formulation="f")
    cfg_u = config.with_overrides(formulation="u")
    summary_f, series_f = run(cfg_f)
    summary_u, series_u = run(cfg_u)
    state_f = summary_f.final_state
    state_u = summary_u.final_state
    u_from_f = f_to_u(state_f.field, config.n)
    u_direct: FieldU = state_u.field
    gap = float(np.sum(np.abs(u_from_f.values - u_direct.values))) / float(
        np.sum(np.abs(u_direct.values))
    )
    return gap, summary_f, summary_u, series_f, series_u
