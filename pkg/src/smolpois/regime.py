"""Regime classification and explicit blowup certificates.

For a positive diffusion coefficient a the trichotomy is decided by the
tail of a and its singularity strength near zero:

  * tail divergent (a not integrable on (1, inf))  ->  every solution is
    global: clause ``global``;
  * tail integrable and gamma = sup_{(0,1)} r int_r^inf a < inf  ->
    blowup from suitable data: clause ``blowup-via-(1)``;
  * tail integrable, gamma = inf, but r^{2+theta} a bounded near 0 and
    r^alpha a bounded at infinity for admissible (theta, alpha)  ->
    clause ``blowup-via-(decr)``;
  * otherwise ``unclassified`` (the dichotomy is silent).

The module also builds the piecewise-linear concave majorant B of
-r A(r) with dyadic slopes b_i = int_{2^i}^inf a, and assembles the fully
explicit certificate (q, eps_M, delta, mu_M, K0, C1, C2) whose moment
inequality dm_q/dt <= Lambda(m_q) < 0 forces finite-time touch-down.

Suprema over open intervals are estimated on a 2048-point log grid with
golden-section refinement around the maximizer; divergence at the corner
of the interval is decided exactly for recognized power products and by
decade-growth heuristics (flagged "numeric") otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coefficient import (
    CLOSED_FORM,
    NUMERIC,
    Coefficient,
    Potentials,
    PowerProductCoefficient,
    TailDivergenceError,
)
from .diagnostics import lyapunov_L1, mu_mass
from .quadrature import integrate
from .transform import pam_profile

_GRID_POINTS = 2048
_GSS_ITERS = 140
_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class RegimeError(ValueError):
    pass


class CertificateUnavailable(RegimeError):
    """The decay-pair constants are infinite, so the explicit moment
    certificate cannot be assembled for this coefficient."""


class DesignFailure(RuntimeError):
    """The halving search exhausted its range without a valid certificate."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace


# --- supremum estimation -------------------------------------------------------


def _gss_max(phi, lo: float, hi: float) -> float:
    """Best value of phi seen by a golden-section maximum search on [lo, hi]."""
    best = -math.inf
    a, b = lo, hi
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    best = max(best, fc, fd)
    for _ in range(_GSS_ITERS):
        if b - a < 1e-300:
            break
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = phi(d)
        else:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = phi(c)
        best = max(best, fc, fd)
    return best


def _sup_on_grid(phi, lo: float, hi: float, corner: str) -> tuple[float, bool]:
    """Supremum of phi over the open interval via log grid plus refinement.

    ``corner`` names the potentially divergent end ("left" or "right");
    returns (value, diverged_numeric) where the flag applies decade growth
    heuristics: growth by a factor > 10 over the corner decade, or a
    maximizer inside the corner decade that still climbs into the corner.
    """
    grid = np.geomspace(lo, hi, _GRID_POINTS)
    vals = np.array([phi(r) for r in grid])
    if corner == "left":
        corner_mask = grid < lo * 10.0
        next_mask = (grid >= lo * 10.0) & (grid < lo * 100.0)
    else:
        corner_mask = grid > hi / 10.0
        next_mask = (grid <= hi / 10.0) & (grid > hi / 100.0)
    m_corner = float(vals[corner_mask].max())
    m_next = float(vals[next_mask].max())
    if m_corner > 10.0 * m_next:
        return math.inf, True
    imax = int(np.argmax(vals))
    if bool(corner_mask[imax]) and m_corner > m_next * (1.0 + 1e-3):
        # maximizer sits in the corner decade and is still climbing: the
        # grid has not resolved a finite supremum
        return math.inf, True
    a = grid[max(imax - 1, 0)]
    b = grid[min(imax + 1, grid.size - 1)]
    refined = _gss_max(phi, a, b)
    return max(float(vals[imax]), refined), False


def _sup_unit_interval(phi) -> tuple[float, bool]:
    """sup over (0,1): grid on [1e-8, 1) with the divergence corner at 0."""
    value, diverged = _sup_on_grid(phi, 1e-8, 1.0 - 1e-15, corner="left")
    return value, diverged


def _sup_from_one(phi) -> tuple[float, bool]:
    """sup over [1, inf): grid on [1, 1e8] with the divergence corner at inf."""
    value, diverged = _sup_on_grid(phi, 1.0, 1e8, corner="right")
    return value, diverged


# --- condition (gamma) and the decay-pair constants -----------------------------


def compute_gamma(c: Coefficient) -> float:
    """gamma = sup_{r in (0,1)} r * int_r^inf a(s) ds; inf when the tail
    diverges or the singularity of a near zero is stronger than 1/r^2."""
    if not c.tail_integrable:
        return math.inf
    if isinstance(c, PowerProductCoefficient):
        # -r A(r) ~ r^{p+2} near zero: divergent exactly when p < -2
        if c.smallr_exponent < -2.0:
            return math.inf
        phi = lambda r: -r * c.tail_integral(r)
        value, _ = _sup_unit_interval(phi)
        return value
    return _gamma_numeric(c)


def _gamma_numeric(c: Coefficient) -> float:
    """Numeric gamma: one cumulative sweep of the tail integral over the log
    grid (2048 independent improper integrals would be needlessly slow)."""
    lo, hi = 1e-8, 1.0 - 1e-15
    grid = np.geomspace(lo, hi, _GRID_POINTS)
    tails = np.empty(_GRID_POINTS)
    tails[-1] = -c.tail_integral(float(grid[-1]))
    for k in range(_GRID_POINTS - 2, -1, -1):
        tails[k] = tails[k + 1] + integrate(c, float(grid[k]), float(grid[k + 1]))
    vals = grid * tails

    corner_mask = grid < lo * 10.0
    next_mask = (grid >= lo * 10.0) & (grid < lo * 100.0)
    m_corner = float(vals[corner_mask].max())
    m_next = float(vals[next_mask].max())
    if m_corner > 10.0 * m_next:
        return math.inf
    imax = int(np.argmax(vals))
    if bool(corner_mask[imax]) and m_corner > m_next * (1.0 + 1e-3):
        return math.inf

    def phi(r: float) -> float:
        k = int(np.searchsorted(grid, r))
        if k >= _GRID_POINTS:
            return r * -c.tail_integral(r)
        return r * (tails[k] + integrate(c, r, float(grid[k])))

    a = grid[max(imax - 1, 0)]
    b = grid[min(imax + 1, grid.size - 1)]
    return max(float(vals[imax]), _gss_max(phi, float(a), float(b)))


def compute_decr_constants(c: Coefficient, theta: float, alpha: float) -> tuple[float, float]:
    """(gamma_theta, C_inf) = (sup_{(0,1)} r^{2+theta} a, sup_{r>=1} r^alpha a).

    Requires theta > 0 and alpha in (theta/(1+theta), 2]; infinite values
    are returned as math.inf rather than raised.
    """
    if theta <= 0.0:
        raise RegimeError("theta must be positive")
    if not (theta / (1.0 + theta) < alpha <= 2.0):
        raise RegimeError(
            f"alpha={alpha!r} outside the admissible range ({theta/(1+theta)!r}, 2]"
        )
    if isinstance(c, PowerProductCoefficient):
        gamma_theta = (
            math.inf
            if c.smallr_exponent + 2.0 + theta < 0.0
            else _sup_unit_interval(lambda r: r ** (2.0 + theta) * c.eval_a(r))[0]
        )
        c_inf = (
            math.inf
            if c.tail_exponent + alpha > 0.0
            else _sup_from_one(lambda r: r**alpha * c.eval_a(r))[0]
        )
        return gamma_theta, c_inf
    gt, gt_div = _sup_unit_interval(lambda r: r ** (2.0 + theta) * c.eval_a(r))
    ci, ci_div = _sup_from_one(lambda r: r**alpha * c.eval_a(r))
    return (math.inf if gt_div else gt), (math.inf if ci_div else ci)


# --- classification --------------------------------------------------------------


@dataclass(frozen=True)
class RegimeReport:
    clause: str                      # global | blowup-via-(1) | blowup-via-(decr) | unclassified
    tail_integrable: bool
    gamma: float                     # may be math.inf
    theta: Optional[float] = None
    alpha: Optional[float] = None
    gamma_theta: Optional[float] = None
    c_infinity: Optional[float] = None
    source: str = CLOSED_FORM        # closed-form | numeric verdicts
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        def enc(x):
            if x is None:
                return None
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x

        return {
            "clause": self.clause,
            "tail_integrable": self.tail_integrable,
            "gamma": enc(self.gamma),
            "theta": enc(self.theta),
            "alpha": enc(self.alpha),
            "gamma_theta": enc(self.gamma_theta),
            "c_infinity": enc(self.c_infinity),
            "source": self.source,
            "notes": list(self.notes),
        }


def default_candidates(c: Coefficient, theta: Optional[float], alpha: Optional[float]) -> tuple[float, float]:
    """Fill unspecified (theta, alpha): theta = 0.5 and alpha the largest
    admissible value in (theta/(1+theta), 2] keeping C_inf finite."""
    theta = 0.5 if theta is None else theta
    if alpha is not None:
        return theta, alpha
    alpha_floor = theta / (1.0 + theta)
    if isinstance(c, PowerProductCoefficient):
        alpha = min(2.0, -c.tail_exponent)
        if alpha <= alpha_floor:
            alpha = 2.0  # no admissible choice keeps C_inf finite; report as such
        return theta, alpha
    for candidate in np.arange(2.0, alpha_floor, -0.1):
        _, ci = compute_decr_constants(c, theta, float(candidate))
        if math.isfinite(ci):
            return theta, float(candidate)
    return theta, 2.0


def classify(c: Coefficient, theta: Optional[float] = None, alpha: Optional[float] = None) -> RegimeReport:
    """Decide which clause of the dichotomy applies to a coefficient."""
    notes = []
    source = c.verdict_source
    if source == NUMERIC:
        notes.append("integrability and supremum verdicts are numeric heuristics")
    if not c.tail_integrable:
        return RegimeReport(
            clause="global",
            tail_integrable=False,
            gamma=math.inf,
            source=source,
            notes=tuple(notes),
        )
    gamma = compute_gamma(c)
    if math.isfinite(gamma):
        report_theta = report_alpha = gamma_theta = c_inf = None
        if theta is not None or alpha is not None:
            report_theta, report_alpha = default_candidates(c, theta, alpha)
            gamma_theta, c_inf = compute_decr_constants(c, report_theta, report_alpha)
        return RegimeReport(
            clause="blowup-via-(1)",
            tail_integrable=True,
            gamma=gamma,
            theta=report_theta,
            alpha=report_alpha,
            gamma_theta=gamma_theta,
            c_infinity=c_inf,
            source=source,
            notes=tuple(notes),
        )
    use_theta, use_alpha = default_candidates(c, theta, alpha)
    gamma_theta, c_inf = compute_decr_constants(c, use_theta, use_alpha)
    if math.isfinite(gamma_theta) and math.isfinite(c_inf):
        if theta is None or alpha is None:
            notes.append(
                f"(theta, alpha) = ({use_theta}, {use_alpha}) chosen by default; "
                "other admissible pairs may exist"
            )
        return RegimeReport(
            clause="blowup-via-(decr)",
            tail_integrable=True,
            gamma=math.inf,
            theta=use_theta,
            alpha=use_alpha,
            gamma_theta=gamma_theta,
            c_infinity=c_inf,
            source=source,
            notes=tuple(notes),
        )
    notes.append("tail integrable but neither singularity condition verified")
    return RegimeReport(
        clause="unclassified",
        tail_integrable=True,
        gamma=math.inf,
        theta=use_theta,
        alpha=use_alpha,
        gamma_theta=gamma_theta,
        c_infinity=c_inf,
        source=source,
        notes=tuple(notes),
    )


# --- concave majorant -------------------------------------------------------------


@dataclass(frozen=True)
class ConcaveMajorant:
    """Piecewise-linear concave dominator of -r A(r) with sublinear growth.

    Slopes b_i = int_{2^i}^inf a on the dyadic blocks (2^i, 2^{i+1}];
    B(r) = b_0 r + gamma on [0, 2]; the evaluator extends the last branch
    beyond 2^{i_max + 1} (flagged truncation).
    """

    gamma: float
    slopes: tuple[float, ...]        # b_0 .. b_{i_max}
    offsets: tuple[float, ...]       # sum_{j<i} (b_j - b_{j+1}) 2^{j+1}

    @property
    def i_max(self) -> int:
        return len(self.slopes) - 1

    def branch_index(self, r: float) -> int:
        if r <= 2.0:
            return 0
        i = int(math.floor(math.log2(r)))
        if 2.0**i >= r:  # exact powers of two belong to the lower branch
            i -= 1
        return min(i, self.i_max)

    def __call__(self, r: float) -> float:
        if r < 0.0:
            raise ValueError("majorant defined on r >= 0")
        i = self.branch_index(r)
        return self.slopes[i] * r + self.offsets[i] + self.gamma

    def is_truncated_at(self, r: float) -> bool:
        return r > 2.0 ** (self.i_max + 1)


def build_majorant(c: Coefficient, i_max: int = 40) -> ConcaveMajorant:
    """Assemble the dyadic-slope concave majorant; requires an integrable
    tail and finite gamma."""
    if not c.tail_integrable:
        raise TailDivergenceError("majorant needs a integrable at infinity")
    gamma = compute_gamma(c)
    if not math.isfinite(gamma):
        raise RegimeError("majorant needs gamma < inf")
    slopes = [-c.tail_integral(2.0**i) for i in range(i_max + 1)]
    offsets = [0.0]
    for j in range(i_max):
        offsets.append(offsets[-1] + (slopes[j] - slopes[j + 1]) * 2.0 ** (j + 1))
    return ConcaveMajorant(gamma=gamma, slopes=tuple(slopes), offsets=tuple(offsets))


@dataclass(frozen=True)
class MajorantReport:
    passed: bool
    domination_min_slack: float
    nonnegative_ok: bool
    slopes_decreasing: bool
    sublinear_value: float           # B(2^{i_max}) / 2^{i_max}
    sublinear_bound: float           # b_{i_max-1} + (gamma + 2^{i_max-1} b_0) / 2^{i_max}
    failures: tuple[tuple[float, float], ...]  # (r, slack) with slack < 0


def verify_majorant(c: Coefficient, majorant: ConcaveMajorant, samples: Optional[np.ndarray] = None) -> MajorantReport:
    """Check domination B(r) >= -r A(r) >= 0 on log-spaced samples, strict
    slope decrease (concavity), and the sublinear-growth surrogate at the
    last breakpoint."""
    i_max = majorant.i_max
    if samples is None:
        samples = np.geomspace(1e-6, 2.0**i_max, 200)
    failures = []
    min_slack = math.inf
    nonneg = True
    for r in samples:
        target = -float(r) * c.tail_integral(float(r))
        if target < 0.0:
            nonneg = False
        slack = majorant(float(r)) - target
        min_slack = min(min_slack, slack)
        if slack < 0.0:
            failures.append((float(r), slack))
    slopes = majorant.slopes
    decreasing = all(b1 > b2 for b1, b2 in zip(slopes, slopes[1:]))
    r_last = 2.0**i_max
    sub_value = majorant(r_last) / r_last
    sub_bound = slopes[i_max - 1] + (majorant.gamma + 2.0 ** (i_max - 1) * slopes[0]) / r_last
    passed = (not failures) and nonneg and decreasing and sub_value <= sub_bound
    return MajorantReport(
        passed=passed,
        domination_min_slack=min_slack,
        nonnegative_ok=nonneg,
        slopes_decreasing=decreasing,
        sublinear_value=sub_value,
        sublinear_bound=sub_bound,
        failures=tuple(failures),
    )


# --- explicit blowup design --------------------------------------------------------


@dataclass(frozen=True)
class BlowupDesign:
    """All constants of the explicit finite-time blowup certificate."""

    M: float
    theta: float
    alpha: float
    q: float
    eps_m: float
    delta: float
    c1: float
    c2: float
    mu_m: float
    k0: float
    lyap_f0: float
    m_q0: float
    lambda_m_q0: float
    gamma_theta: float
    c_infinity: float
    n_y: int
    search_trace: tuple[tuple[float, float, float], ...] = field(default=(), repr=False)

    def lambda_value(self, m: float) -> float:
        """Lambda(m) = C2 K0^{theta+1} m^{(q-2)/q} + M m - M^{q+1}/(2(q+1))."""
        if m < 0.0:
            raise ValueError("moment must be nonnegative")
        return (
            self.c2 * self.k0 ** (self.theta + 1.0) * m ** ((self.q - 2.0) / self.q)
            + self.M * m
            - self.M ** (self.q + 1.0) / (2.0 * (self.q + 1.0))
        )

    def validate(self) -> None:
        cap = min(1.0, 2.0 * self.M, (2.0 * self.M) ** (-1.0 / self.q))
        q_floor = max(
            3.0 + self.theta,
            (5.0 + 3.0 * self.theta) / (self.alpha * (self.theta + 1.0) - self.theta),
        )
        if not self.q > q_floor:
            raise RegimeError(f"q={self.q} does not exceed its floor {q_floor}")
        if not (0.0 < self.delta < cap):
            raise RegimeError(f"delta={self.delta} outside (0, {cap})")
        if not self.k0 > 1.0:
            raise RegimeError(f"K0={self.k0} not > 1")
        if not self.mu_m > 0.0:
            raise RegimeError(f"mu_M={self.mu_m} not positive")
        if not self.lambda_m_q0 < 0.0:
            raise RegimeError(f"Lambda(m_q(0))={self.lambda_m_q0} not negative")

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "theta": self.theta,
            "alpha": self.alpha,
            "q": self.q,
            "eps_m": self.eps_m,
            "delta": self.delta,
            "c1": self.c1,
            "c2": self.c2,
            "mu_m": self.mu_m,
            "k0": self.k0,
            "lyap_f0": self.lyap_f0,
            "m_q0": self.m_q0,
            "lambda_m_q0": self.lambda_m_q0,
            "gamma_theta": self.gamma_theta,
            "c_infinity": self.c_infinity,
            "n_y": self.n_y,
        }


def lambda_value(design: BlowupDesign, m: float) -> float:
    return design.lambda_value(m)


def moment_at_start(M: float, q: float, delta: float) -> float:
    """Closed-form q-th moment of the spike profile:
    (2(1 - M delta^q)/((q+1)(q+2)) + M^{q+1}/(q+1)) delta^q."""
    dq = delta**q
    return (2.0 * (1.0 - M * dq) / ((q + 1.0) * (q + 2.0)) + M ** (q + 1.0) / (q + 1.0)) * dq


def _choose_q(theta: float, alpha: float) -> float:
    q_floor = max(3.0 + theta, (5.0 + 3.0 * theta) / (alpha * (theta + 1.0) - theta))
    # exceed the floor by 0.5, then round up to one decimal
    return math.ceil((q_floor + 0.5) * 10.0 - 1e-9) / 10.0


def _choose_eps(p: Potentials, M: float, q: float) -> float:
    """Largest dyadic 2^{-k} in (0,1) with q(q+1)/M^2 * psi~(eps) <= 1/2."""
    budget = 0.5 * M**2 / (q * (q + 1.0))
    for k in range(1, 200):
        eps = 2.0**-k
        if p.psi_tilde(eps) <= budget:
            return eps
    raise RegimeError("no dyadic eps_M satisfied the tail-smallness condition")


def select_delta(
    p: Potentials,
    M: float,
    q: float,
    theta: float,
    eps_m: float,
    mu_m: float,
    c2: float,
    n_y: int = 400,
    delta_floor: float = 1e-8,
):
    """Halving search for the spike width delta.

    delta_k = min(1, 2M, (2M)^{-1/q}) * 2^{-k} / 2 for k = 1, 2, ...; each
    candidate builds the discrete spike profile, evaluates its Lyapunov value
    and the induced K0, and accepts the first delta whose certificate value
    Lambda(m_q(0)) is negative.  Returns (delta, k0, lyap_f0, m_q0,
    lambda_m_q0, trace).
    """
    cap = min(1.0, 2.0 * M, (2.0 * M) ** (-1.0 / q))
    trace = []
    k = 1
    while True:
        delta = cap * 2.0**-k / 2.0
        if delta < delta_floor:
            raise DesignFailure(
                f"no certificate delta above {delta_floor:g}; Lambda stayed nonnegative",
                tuple(trace),
            )
        f0 = pam_profile(M, q, delta, n_y)
        lyap = lyapunov_L1(p, f0, M)
        k0 = (32.0 * M * max(lyap, 0.0) + mu_m) ** (1.0 / (2.0 * (2.0 + theta)))
        mq0 = moment_at_start(M, q, delta)
        lam = (
            c2 * k0 ** (theta + 1.0) * mq0 ** ((q - 2.0) / q)
            + M * mq0
            - M ** (q + 1.0) / (2.0 * (q + 1.0))
        )
        trace.append((delta, k0, lam))
        if lam < 0.0:
            return delta, k0, lyap, mq0, lam, tuple(trace)
        k += 1


def design_blowup(
    c: Coefficient,
    M: float,
    theta: float,
    alpha: float,
    n_y: int = 400,
    potentials: Optional[Potentials] = None,
) -> BlowupDesign:
    """Assemble the explicit certificate for finite-time blowup at mass M.

    Requires the decay pair (theta, alpha) to hold with finite constants and
    an integrable tail; every constant is fully computed, nothing is left
    implicit.
    """
    if M <= 0.0:
        raise RegimeError("mass must be positive")
    if not c.tail_integrable:
        raise TailDivergenceError("blowup design needs a integrable at infinity")
    gamma_theta, c_inf = compute_decr_constants(c, theta, alpha)
    if not (math.isfinite(gamma_theta) and math.isfinite(c_inf)):
        raise CertificateUnavailable(
            f"decay pair (theta={theta}, alpha={alpha}) has infinite constants: "
            f"gamma_theta={gamma_theta}, C_inf={c_inf}"
        )
    p = potentials if potentials is not None else Potentials(c)
    q = _choose_q(theta, alpha)
    eps_m = _choose_eps(p, M, q)
    mu_m = mu_mass(p, M)
    psi0 = p.limits.psi0
    c1 = (2.0 + (q + 2.0) * M ** (q + 1.0)) / ((q + 1.0) * (q + 2.0))
    c2 = q * (q - 1.0) * (gamma_theta - psi0 + eps_m) / eps_m
    delta, k0, lyap, mq0, lam, trace = select_delta(p, M, q, theta, eps_m, mu_m, c2, n_y=n_y)
    design = BlowupDesign(
        M=M,
        theta=theta,
        alpha=alpha,
        q=q,
        eps_m=eps_m,
        delta=delta,
        c1=c1,
        c2=c2,
        mu_m=mu_m,
        k0=k0,
        lyap_f0=lyap,
        m_q0=mq0,
        lambda_m_q0=lam,
        gamma_theta=gamma_theta,
        c_infinity=c_inf,
        n_y=n_y,
        search_trace=trace,
    )
    design.validate()
    return design
