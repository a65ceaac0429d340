"""Functionals and inequality checks evaluated along trajectories.

The discrete conventions are shared by every quantity so that slacks
compare like with like: derivatives are face-centered differences of
cell values, norms and integrals use the midpoint rule.

A *slack* is always (bound) - (quantity); negative slack marks a violated
inequality and is reported verbatim, never clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .coefficient import Potentials, TailDivergenceError
from .transform import FieldF


# --- discrete building blocks -------------------------------------------------


def grad_norm_sq(h_vals: np.ndarray, dy: float) -> float:
    """Squared L2 norm of the face-centered derivative of cell values."""
    d = np.diff(h_vals) / dy
    return dy * float(np.dot(d, d))


def lyapunov_L1(p: Potentials, f: FieldF, M: Optional[float] = None) -> float:
    """Lyapunov energy (1/2)||d_y psi(f)||^2 + int (psi(f) - M psi1(f)) dy.

    Non-increasing along f-form trajectories; also evaluated on arbitrary
    profiles when building blowup certificates.
    """
    if M is None:
        M = f.mass
    psi_f = np.asarray(p.psi(f.values), dtype=float)
    psi1_f = np.asarray(p.psi1(f.values), dtype=float)
    grad = grad_norm_sq(psi_f, f.h)
    bulk = f.h * float(np.sum(psi_f - M * psi1_f))
    return 0.5 * grad + bulk


def energy_E1(h_vals, M: float) -> float:
    """(1/2)||d_y h||^2 plus the integral of the negative part of h."""
    h_vals = np.asarray(h_vals, dtype=float)
    dy = M / h_vals.size
    negative_part = dy * float(np.sum(np.where(h_vals < 0.0, h_vals, 0.0)))
    return 0.5 * grad_norm_sq(h_vals, dy) + negative_part


def moment_mq(f: FieldF, q: float) -> float:
    """q-th moment int_0^M y^q f(y) dy by the midpoint rule."""
    if q <= 0.0:
        raise ValueError("moment order q must be positive")
    return f.h * float(np.sum(f.centers**q * f.values))


def sigma(M: float, m0: float, t: float) -> float:
    """Spatially flat supersolution 1/M + e^{Mt} (1/m0 - 1/M).

    m0 is the initial minimum of u; m0 = M gives the constant steady state.
    """
    if not (0.0 < m0 <= M):
        raise ValueError(f"need 0 < m0 <= M, got m0={m0!r}, M={M!r}")
    return 1.0 / M + math.exp(M * t) * (1.0 / m0 - 1.0 / M)


def mu_mass(p: Potentials, M: float) -> float:
    """Constant mu_M in the uniform bound on psi~(f); needs an integrable tail."""
    psi0 = p.limits.psi0
    if not math.isfinite(psi0):
        raise TailDivergenceError("mu_M needs a integrable at infinity")
    pt2m = p.psi_tilde(2.0 / M)
    return (
        1.0
        + 128.0 * M**4
        - 32.0 * M**2 * psi0
        + 64.0 * M**2 * pt2m
        + 8.0 * pt2m**2
        + psi0**2
        - 32.0 * M * psi0
    )


def psi_tilde_sup_bound(lyap_f0: float, M: float, mu_m: float) -> float:
    """sqrt(32 M max(L1(f0), 0) + mu_M), the uniform bound on psi~(f(t))."""
    return math.sqrt(32.0 * M * max(lyap_f0, 0.0) + mu_m)


def psi_tilde_max(p: Potentials, f: FieldF) -> float:
    return float(np.max(p.psi_tilde(f.values)))


# --- per-record slacks ---------------------------------------------------------


def energy_norm_slacks(p: Potentials, f: FieldF, M: Optional[float] = None) -> tuple[float, float]:
    """Signed slacks of the two energy/norm inequalities for h = psi(f):

        E1(h) >= (1/4)||d_y h||^2 - M^3 - M |psi(1/M)|
        ||h||_1 <= M^{3/2} ||d_y h||_2 + M |psi(1/M)|

    valid whenever the profile f integrates to one.
    """
    if M is None:
        M = f.mass
    h = np.asarray(p.psi(f.values), dtype=float)
    dy = f.h
    grad_sq = grad_norm_sq(h, dy)
    e1 = energy_E1(h, M)
    psi_inv_m = abs(p.psi(1.0 / M))
    slack_gex5 = e1 - 0.25 * grad_sq + M**3 + M * psi_inv_m
    h_l1 = dy * float(np.sum(np.abs(h)))
    slack_gex6 = M**1.5 * math.sqrt(grad_sq) + M * psi_inv_m - h_l1
    return slack_gex5, slack_gex6


def moment_interval_slack(design, t0: float, mq0: float, t1: float, mq1: float) -> float:
    """Slack of dm_q/dt <= Lambda(m_q) over one recorded interval."""
    rate = (mq1 - mq0) / (t1 - t0)
    return design.lambda_value(mq0) - rate


def gradient_bound_rhs(p: Potentials, l1_0: float, M: float, sigma_t: float) -> float:
    """Right-hand side L1(0) + M^3 + M|psi(1/M)| + M^2 psi1(Sigma(t))."""
    return l1_0 + M**3 + M * abs(p.psi(1.0 / M)) + M**2 * p.psi1(sigma_t)


def global_barrier(p: Potentials, l1_0: float, M: float, sigma_t: float) -> tuple[float, float]:
    """Explicit sup-norm bound C7(t) on |psi(f)| and the induced positive
    lower barrier psi^{-1}(-C7(t)) for f in the divergent-tail regime."""
    x = max(gradient_bound_rhs(p, l1_0, M, sigma_t), 0.0)
    rhs_grad = 2.0 * math.sqrt(x)
    rhs_l1 = 2.0 * M**1.5 * math.sqrt(x) + M * abs(p.psi(1.0 / M))
    c7 = rhs_l1 / M + math.sqrt(M) * rhs_grad
    return c7, p.psi_inverse(-c7)


# --- records -------------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    """One row of the trajectory diagnostics."""

    t: float
    dt: Optional[float] = None
    f_min: Optional[float] = None
    f_max: Optional[float] = None
    u_max: Optional[float] = None
    mass_err: Optional[float] = None
    l1: Optional[float] = None
    m_q: Optional[float] = None
    sigma_t: Optional[float] = None
    psi_tilde_max: Optional[float] = None
    grad_psi_sq: Optional[float] = None
    psi_f_l1: Optional[float] = None
    h1_psi: Optional[float] = None
    slack_corollary: Optional[float] = None
    slack_gex5: Optional[float] = None
    slack_gex6: Optional[float] = None
    slack_moment_ode: Optional[float] = None
    slack_prandtl: Optional[float] = None
    slack_barrier: Optional[float] = None


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    min_slack: Optional[float] = None
    first_violation_t: Optional[float] = None
    note: str = ""


def _suite(name: str, pairs: Sequence[tuple[float, float]], tol: float) -> CheckResult:
    """Aggregate (t, slack) pairs into a pass/fail verdict at tolerance tol."""
    if not pairs:
        return CheckResult(name=name, passed=True, note="no records to check")
    min_t, min_slack = min(pairs, key=lambda ts: ts[1])
    violations = [(t, s) for t, s in pairs if s < -tol]
    if violations:
        return CheckResult(
            name=name, passed=False, min_slack=min_slack, first_violation_t=violations[0][0]
        )
    return CheckResult(name=name, passed=True, min_slack=min_slack)


# --- suite checks over a series -------------------------------------------------


def check_lyapunov(series: Sequence[DiagnosticsRecord], tol_rate: float = 1e-8) -> CheckResult:
    """L1 must not increase by more than tol_rate per unit time."""
    pairs = []
    for prev, cur in zip(series, series[1:]):
        if prev.l1 is None or cur.l1 is None:
            continue
        dt = cur.t - prev.t
        pairs.append((cur.t, prev.l1 + tol_rate * dt - cur.l1))
    return _suite("lyapunov_monotone", pairs, tol=0.0)


def check_sigma_comparison(series: Sequence[DiagnosticsRecord], tol: float = 1e-8) -> CheckResult:
    """Pointwise comparison f(t, .) <= Sigma(t) + tol via the recorded max."""
    pairs = [
        (rec.t, rec.sigma_t + tol - rec.f_max)
        for rec in series
        if rec.sigma_t is not None and rec.f_max is not None
    ]
    return _suite("sigma_comparison", pairs, tol=0.0)


def check_corollary_bound(
    p: Potentials,
    series: Sequence[DiagnosticsRecord],
    lyap_f0: float,
    M: float,
    mu_m: Optional[float] = None,
    tol: float = 1e-6,
) -> tuple[CheckResult, CheckResult]:
    """Uniform bound on psi~ along the trajectory (integrable-tail regime).

    Returns the trajectory-level check against the fixed bound from L1(f0)
    and the sharper per-time variant using L1(f(t)).
    """
    if mu_m is None:
        mu_m = mu_mass(p, M)
    bound = psi_tilde_sup_bound(lyap_f0, M, mu_m)
    fixed_pairs = []
    pertime_pairs = []
    for rec in series:
        if rec.psi_tilde_max is None:
            continue
        fixed_pairs.append((rec.t, bound - rec.psi_tilde_max))
        if rec.l1 is not None:
            pertime_pairs.append(
                (rec.t, 32.0 * M * max(rec.l1, 0.0) + mu_m - rec.psi_tilde_max**2)
            )
    return (
        _suite("psi_tilde_bound_fixed", fixed_pairs, tol=tol),
        _suite("psi_tilde_bound_pertime", pertime_pairs, tol=tol),
    )


def check_energy_norm_series(series: Sequence[DiagnosticsRecord], tol: float = 1e-8) -> tuple[CheckResult, CheckResult]:
    gex5 = [(r.t, r.slack_gex5) for r in series if r.slack_gex5 is not None]
    gex6 = [(r.t, r.slack_gex6) for r in series if r.slack_gex6 is not None]
    return _suite("gex5", gex5, tol=tol), _suite("gex6", gex6, tol=tol)


@dataclass(frozen=True)
class MomentOdeResult:
    ode_slack: CheckResult
    monotone: CheckResult
    lambda_chain: CheckResult


def check_moment_ode(series: Sequence[DiagnosticsRecord], design, tol: Optional[float] = None) -> MomentOdeResult:
    """Verify dm_q/dt <= Lambda(m_q) over recorded intervals, strict decrease
    of m_q, and the chain Lambda(m_q(t)) <= Lambda(m_q(0)) < 0."""
    if design is None:
        raise ValueError("moment ODE check needs a blowup design")
    records = [r for r in series if r.m_q is not None]
    lam0 = design.lambda_value(design.m_q0)
    if tol is None:
        tol = 1e-3 * abs(lam0)
    ode_pairs = []
    mono_pairs = []
    chain_pairs = []
    for prev, cur in zip(records, records[1:]):
        ode_pairs.append((cur.t, moment_interval_slack(design, prev.t, prev.m_q, cur.t, cur.m_q)))
        mono_pairs.append((cur.t, prev.m_q - cur.m_q))
    for rec in records:
        chain_pairs.append((rec.t, lam0 - design.lambda_value(rec.m_q)))
    chain = _suite("lambda_chain", chain_pairs, tol=max(tol, 1e-12))
    if lam0 >= 0.0:
        chain = CheckResult(
            name="lambda_chain", passed=False, min_slack=chain.min_slack,
            note=f"Lambda(m_q(0)) = {lam0!r} not negative",
        )
    return MomentOdeResult(
        ode_slack=_suite("moment_ode", ode_pairs, tol=tol),
        monotone=_suite("m_q_decreasing", mono_pairs, tol=0.0),
        lambda_chain=chain,
    )


@dataclass(frozen=True)
class GlobalBoundsResult:
    prandtl: CheckResult
    psi_l1: CheckResult
    barrier: CheckResult
    c7_values: tuple[tuple[float, float], ...] = field(default=())


def check_global_bounds(
    p: Potentials,
    series: Sequence[DiagnosticsRecord],
    l1_0: float,
    M: float,
    m0: float,
    tol: float = 1e-8,
) -> GlobalBoundsResult:
    """Divergent-tail bound chain: gradient bound, L1 bound on psi(f), and
    the induced lower barrier on min f."""
    if p.limits.tail_integrable:
        raise TailDivergenceError("global bound chain applies to divergent tails only")
    prandtl_pairs = []
    l1_pairs = []
    barrier_pairs = []
    c7_values = []
    for rec in series:
        if rec.grad_psi_sq is None or rec.sigma_t is None:
            continue
        x = gradient_bound_rhs(p, l1_0, M, rec.sigma_t)
        prandtl_pairs.append((rec.t, x - 0.25 * rec.grad_psi_sq))
        if rec.psi_f_l1 is not None:
            rhs_l1 = 2.0 * M**1.5 * math.sqrt(max(x, 0.0)) + M * abs(p.psi(1.0 / M))
            l1_pairs.append((rec.t, rhs_l1 - rec.psi_f_l1))
        c7, f_floor = global_barrier(p, l1_0, M, rec.sigma_t)
        c7_values.append((rec.t, c7))
        if rec.f_min is not None:
            barrier_pairs.append((rec.t, rec.f_min - f_floor))
    return GlobalBoundsResult(
        prandtl=_suite("prandtl", prandtl_pairs, tol=tol),
        psi_l1=_suite("psi_l1_bound", l1_pairs, tol=tol),
        barrier=_suite("f_min_barrier", barrier_pairs, tol=0.0),
        c7_values=tuple(c7_values),
    )
