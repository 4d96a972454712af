"""
Profile ODEs of the entire sub- and supersolution barriers.

Both profiles are integrated in t = ln(1+s) for the state psi = ln|W - 1|.
The right-hand sides are assembled from deviations (see envelopes_implicit),
so psi stays meaningful down to |W - 1| ~ 1e-300 and the decay exponent is
the slope of psi in t.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.stats import linregress, norm, qmc

from lagrangian.envelopes_implicit import (
    PhaseEnvelope,
    _H_from_deviation,
    _positive_spectrum,
    _j_and_slope,
    h_gap,
    w_over_deviation,
    w_under_deviation,
)
from lagrangian.errors import (
    DomainError,
    FitError,
    IntegrationError,
    InternalError,
    KindError,
    PreconditionError,
)
from lagrangian.phase_core import PhaseParams, jacobi_eigen_batch
from utils.config import INTEGRATOR_CONFIG, PROFILE_GRID, SAMPLING_CONFIG, TOLERANCES

logger = logging.getLogger(__name__)

KINDS = ("sub", "super", "radial")
R2_ACCEPT = 0.999
START_SLACK = 1e-12


@dataclass(frozen=True)
class RateFit:
    """
    Power-law fit of a decaying or growing quantity.

    For decay models the quantity behaves like x^(-exponent) (times ln x when
    log_flag is set); for "power_growth" like x^exponent; "log_growth" fits
    C ln x + b; "convergent" means a bounded limit was detected.
    """

    exponent: float
    log_flag: bool
    r2: float
    window: Tuple[float, float]
    model: str = "power_decay"
    prefactor: float = float("nan")
    intercept: float = float("nan")
    ssr: float = float("nan")
    bounds: Optional[Tuple[float, float]] = None

    @property
    def accepted(self) -> bool:
        return self.r2 >= R2_ACCEPT

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "log_flag": self.log_flag,
            "r2": self.r2,
            "window": list(self.window),
            "model": self.model,
            "prefactor": self.prefactor,
            "intercept": self.intercept,
            "accepted": self.accepted,
            "bounds": list(self.bounds) if self.bounds is not None else None,
        }


@dataclass(frozen=True, eq=False)
class Profile:
    """
    Tabulated profile W on a grid, with the deviation from its limit stored
    either as psi = ln|W - limit| (sub/super) or directly (radial).
    """

    kind: str
    s_grid: np.ndarray
    t_grid: np.ndarray
    phi_values: np.ndarray
    w0: float
    limit: float = 1.0
    psi_values: Optional[np.ndarray] = None
    phi_sign: float = 1.0
    phi_offset: float = 0.0
    slope_fn: Optional[Callable[[float, float], float]] = field(default=None, repr=False)
    constant: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KindError(f"Unknown profile kind '{self.kind}'")
        if self.psi_values is not None:
            interp = PchipInterpolator(self.t_grid, self.psi_values, extrapolate=False)
        elif not self.constant:
            interp = PchipInterpolator(self.t_grid, self.phi_values, extrapolate=False)
        else:
            interp = None
        object.__setattr__(self, "_interp", interp)

    @property
    def w_values(self) -> np.ndarray:
        return self.limit + self.phi_values

    def to_t(self, s):
        s = np.asarray(s, dtype=float)
        return np.log(s) if self.kind == "radial" else np.log1p(s)

    def phi(self, s):
        """W(s) - limit, vectorized."""
        s_arr = np.asarray(s, dtype=float)
        if self.constant:
            out = np.full(s_arr.shape, self.phi_values[0])
            return float(out) if out.ndim == 0 else out
        t = self.to_t(np.maximum(s_arr, self.s_grid[0]) if self.kind == "radial" else s_arr)
        t = np.atleast_1d(t)
        t_lo, t_hi = self.t_grid[0], self.t_grid[-1]
        inside = np.clip(t, t_lo, t_hi)
        if self.psi_values is not None:
            y = self._interp(inside)
            # beyond the grid psi continues with its terminal slope
            end_slope = (self.psi_values[-1] - self.psi_values[-2]) / (self.t_grid[-1] - self.t_grid[-2])
            y = np.where(t > t_hi, self.psi_values[-1] + end_slope * (t - t_hi), y)
            out = self.phi_offset + self.phi_sign * np.exp(y)
        else:
            out = self._interp(inside)
            out = np.where(t > t_hi, self.phi_values[-1], out)
        out = out.reshape(s_arr.shape)
        return float(out) if out.ndim == 0 else out

    def w(self, s):
        return self.limit + self.phi(s)

    def dw(self, s):
        """W'(s) from the ODE right-hand side at the interpolated state."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        if self.constant or self.slope_fn is None:
            out = np.zeros(s_arr.shape)
        else:
            phis = np.atleast_1d(self.phi(s_arr))
            out = np.array([self.slope_fn(si, pi) for si, pi in zip(s_arr, phis)])
        return float(out[0]) if np.ndim(s) == 0 else out.reshape(np.shape(s))

    def terminal_gap(self) -> float:
        return float(abs(self.phi_values[-1]))

    def to_frame(self) -> pd.DataFrame:
        """Columns s, W, U with U(s) = int_0^s W (no barrier constant)."""
        ds = np.diff(self.s_grid, prepend=self.s_grid[0])
        phis = self.phi_values
        increments = 0.5 * (phis + np.concatenate([[phis[0]], phis[:-1]])) * ds
        U = self.s_grid * self.limit + np.cumsum(increments)
        return pd.DataFrame({"s": self.s_grid, "W": self.w_values, "U": U})


def default_t_grid(points: Optional[int] = None, s_max: Optional[float] = None) -> np.ndarray:
    points = points or PROFILE_GRID["points"]
    s_max = s_max or PROFILE_GRID["s_max"]
    return np.linspace(0.0, math.log1p(s_max), points)


def _constant_profile(kind: str, w0: float, t_grid: np.ndarray, phi: float = 0.0) -> Profile:
    s_grid = np.expm1(t_grid)
    return Profile(
        kind=kind,
        s_grid=s_grid,
        t_grid=t_grid,
        phi_values=np.full(t_grid.shape, phi),
        w0=w0,
        constant=True,
    )


def _sub_slope(envelope: PhaseEnvelope, avals: Tuple[float, ...]) -> Callable[[float, float], float]:
    a1, an = avals[0], avals[-1]

    def slope(s: float, phi: float) -> float:
        h, gap = h_gap(envelope, avals, s, phi)
        if h < 0:
            gap = -a1 * (1.0 + phi)
        return gap / (2.0 * an * (s + 1.0))

    return slope


def _super_slope(envelope: PhaseEnvelope, avals: Tuple[float, ...]) -> Callable[[float, float], float]:
    def slope(s: float, phi: float) -> float:
        return _H_from_deviation(envelope, avals, s, phi).value / (s + 1.0)

    return slope


def _integrate_log_deviation(
    kind: str,
    slope: Callable[[float, float], float],
    phi_offset: float,
    phi0: float,
    sign: float,
    t_grid: np.ndarray,
    rtol: float,
    atol: float,
):
    def rhs(t, y):
        s = math.expm1(t)
        mag = math.exp(y[0])
        dphi_dt = (s + 1.0) * slope(s, phi_offset + sign * mag)
        return [dphi_dt / (sign * mag)]

    last = [float(t_grid[0]), math.log(abs(phi0))]

    def tracked_rhs(t, y):
        out = rhs(t, y)
        last[0], last[1] = float(t), float(y[0])
        return out

    try:
        sol = solve_ivp(
            tracked_rhs,
            (t_grid[0], t_grid[-1]),
            [math.log(abs(phi0))],
            method=INTEGRATOR_CONFIG["method"],
            t_eval=t_grid,
            rtol=rtol,
            atol=atol,
        )
    except DomainError as e:
        # a stage left the region where H is defined
        raise IntegrationError(
            f"{kind} profile left the admissible region near s={math.expm1(last[0]):.3e}: {e}",
            last_t=last[0],
            last_state=phi_offset + sign * math.exp(last[1]),
        ) from e
    if not sol.success:
        last_t = float(sol.t[-1]) if sol.t.size else float(t_grid[0])
        last_y = float(sol.y[0, -1]) if sol.y.size else math.log(abs(phi0))
        raise IntegrationError(
            f"{kind} profile integration failed at s={math.expm1(last_t):.3e}: {sol.message}",
            last_t=last_t,
            last_state=phi_offset + sign * math.exp(last_y),
        )
    logger.debug(f"{kind} profile: {sol.nfev} right-hand side evaluations")
    return sol.y[0]


def integrate_sub_profile(
    envelope: PhaseEnvelope,
    a,
    w0: Optional[float] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    t_grid: Optional[np.ndarray] = None,
) -> Profile:
    """
    Integrate dW/ds = (h0(s, W) - a_1 W) / (2 a_n (s + 1)) from W(0) = w0.

    Args:
        envelope (PhaseEnvelope): Envelopes around the phase
        a: Spectrum of A
        w0 (float, optional): Initial value; defaults to 1.05 w_under(0)
        rtol, atol (float, optional): Integrator tolerances on ln|W - 1|
        t_grid (np.ndarray, optional): Output grid in t = ln(1+s)

    Returns:
        Profile: sub-kind profile

    Raises:
        DomainError: If w0 <= w_under(0)
        IntegrationError: If the integrator gives up
        InternalError: If the computed profile breaks monotonicity or the w_under bound
    """
    avals = _positive_spectrum(a)
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    s_grid = np.expm1(t_grid)
    phi_under0 = w_under_deviation(envelope, avals, 0.0)
    phi_limit = w_under_deviation(envelope, avals, math.inf)
    if w0 is None:
        w0 = PROFILE_GRID["sub_start_factor"] * (1.0 + phi_under0)
    phi0 = w0 - 1.0
    # w0 and 1 + phi_under0 differ by rounding when w0 comes from solve_w_under
    edge = START_SLACK * max(1.0, abs(w0))

    if envelope.upper_constant and abs(w0 - (1.0 + phi_under0)) <= edge:
        logger.info("Sub profile at the fixed point; W is constant")
        return _constant_profile("sub", w0, t_grid, phi_under0)
    if w0 <= 1.0 + phi_under0 + edge:
        raise DomainError(f"w0={w0} must exceed w_under(0)={1.0 + phi_under0}")

    slope = _sub_slope(envelope, avals)
    psi = _integrate_log_deviation(
        "sub", slope, phi_limit, phi0 - phi_limit, 1.0, t_grid,
        rtol or INTEGRATOR_CONFIG["rtol"], atol or INTEGRATOR_CONFIG["atol"],
    )
    phi = phi_limit + np.exp(psi)

    if np.any(np.diff(psi) > 1e-8):
        raise InternalError("Sub profile is not nonincreasing")
    under = np.array([w_under_deviation(envelope, avals, s) for s in s_grid])
    bad = phi - under <= -1e-10 * np.abs(under)
    if np.any(bad):
        raise InternalError(f"Sub profile touches w_under at s={s_grid[np.argmax(bad)]:.3e}")
    if abs(phi[-1]) >= TOLERANCES["profile_terminal"]:
        raise InternalError(f"Sub profile has not settled: W(s_K) - 1 = {phi[-1]:.3e}")

    logger.info(f"Sub profile integrated: w0={w0:.6f}, W(s_K)-1={phi[-1]:.3e}")
    return Profile(
        kind="sub", s_grid=s_grid, t_grid=t_grid, phi_values=phi, w0=w0,
        psi_values=psi, phi_sign=1.0, phi_offset=phi_limit, slope_fn=slope,
    )


def integrate_super_profile(
    envelope: PhaseEnvelope,
    a,
    w0: Optional[float] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    t_grid: Optional[np.ndarray] = None,
) -> Profile:
    """
    Integrate dW/ds = H(s, W) / (s + 1) from W(0) = w0, 0 < w0 < w_over(0).

    Defaults to w0 = 0.95 w_over(0). Errors mirror integrate_sub_profile.
    """
    avals = _positive_spectrum(a)
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    s_grid = np.expm1(t_grid)
    phi_over0 = w_over_deviation(envelope, avals, 0.0)
    phi_limit = w_over_deviation(envelope, avals, math.inf)
    if w0 is None:
        w0 = PROFILE_GRID["super_start_factor"] * (1.0 + phi_over0)
    if not 0.0 < w0 < 1.0 + phi_over0 - START_SLACK * max(1.0, abs(w0)):
        raise DomainError(f"w0={w0} must lie in (0, w_over(0)={1.0 + phi_over0})")
    phi0 = w0 - 1.0

    slope = _super_slope(envelope, avals)
    psi = _integrate_log_deviation(
        "super", slope, phi_limit, phi0 - phi_limit, -1.0, t_grid,
        rtol or INTEGRATOR_CONFIG["rtol"], atol or INTEGRATOR_CONFIG["atol"],
    )
    phi = phi_limit - np.exp(psi)

    if np.any(np.diff(psi) > 1e-8):
        raise InternalError("Super profile is not nondecreasing")
    over = np.array([w_over_deviation(envelope, avals, s) for s in s_grid])
    bad = phi - over >= 1e-10 * np.abs(over)
    if np.any(bad[1:]):
        raise InternalError(f"Super profile touches w_over at s={s_grid[1:][np.argmax(bad[1:])]:.3e}")
    if abs(phi[-1]) >= TOLERANCES["profile_terminal"]:
        raise InternalError(f"Super profile has not settled: W(s_K) - 1 = {phi[-1]:.3e}")

    logger.info(f"Super profile integrated: w0={w0:.6f}, W(s_K)-1={phi[-1]:.3e}")
    return Profile(
        kind="super", s_grid=s_grid, t_grid=t_grid, phi_values=phi, w0=w0,
        psi_values=psi, phi_sign=-1.0, phi_offset=phi_limit, slope_fn=slope,
    )


# ============================================================================
# RATE FITTING
# ============================================================================

def _regress(x: np.ndarray, y: np.ndarray):
    result = linregress(x, y)
    predicted = result.intercept + result.slope * x
    ssr = float(np.sum((y - predicted) ** 2))
    return float(result.slope), float(result.intercept), float(result.rvalue ** 2), ssr


def fit_power_law(
    x: np.ndarray,
    y: np.ndarray,
    window: Tuple[float, float],
    try_log: bool = False,
    min_points: int = 10,
) -> RateFit:
    """
    Fit |y| ~ C x^(-p) (or C x^(-p) ln x) on a window by log-log regression.

    Raises:
        FitError: If fewer than min_points samples fall in the window or y vanishes there
    """
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    mask = (x >= window[0]) & (x <= window[1]) & (y > 0)
    if np.count_nonzero(mask) < min_points:
        raise FitError(f"Window {window} holds {np.count_nonzero(mask)} usable points, need {min_points}")
    lx, ly = np.log(x[mask]), np.log(y[mask])
    return _log_decay_fit(lx, ly, window, try_log)


def _log_decay_fit(lx: np.ndarray, ly: np.ndarray, window, try_log: bool) -> RateFit:
    slope, intercept, r2, ssr = _regress(lx, ly)
    fit = RateFit(-slope, False, r2, tuple(window), "power_decay", math.exp(intercept), intercept, ssr)
    if try_log:
        slope2, intercept2, r2b, ssr2 = _regress(lx, ly - np.log(lx))
        if ssr2 < ssr:
            fit = RateFit(-slope2, True, r2b, tuple(window), "power_decay_log",
                          math.exp(intercept2), intercept2, ssr2)
    return fit


def fit_decay_rate(
    profile: Profile,
    target_beta: float,
    m_a: float,
    window: Optional[Tuple[float, float]] = None,
) -> RateFit:
    """
    Regress ln|W - 1| against t = ln(1+s) on the fit window.

    The ln-corrected model is tried when |M(A) - beta/2| is below the
    configured band, and kept when its residual is lower.

    Raises:
        PreconditionError: If |W(s_K) - 1| >= 1e-4 or the profile is constant
        FitError: If the window is underpopulated
    """
    if profile.terminal_gap() >= 1e-4:
        raise PreconditionError(f"Profile has not settled: |W(s_K)-1|={profile.terminal_gap():.3e}")
    if profile.constant or profile.psi_values is None:
        raise PreconditionError("Constant profiles have no decay rate")
    window = window or PROFILE_GRID["fit_window"]
    mask = (profile.s_grid >= window[0]) & (profile.s_grid <= window[1])
    if np.count_nonzero(mask) < 10:
        raise FitError(f"Window {window} holds {np.count_nonzero(mask)} grid points, need 10")

    t = profile.t_grid[mask]
    psi = np.log(np.abs(profile.phi_values[mask]))
    try_log = abs(m_a - target_beta / 2.0) < PROFILE_GRID["log_model_band"]
    fit = _log_decay_fit(t, psi, window, try_log)
    logger.info(
        f"{profile.kind} decay: exponent={fit.exponent:.4f} log={fit.log_flag} r2={fit.r2:.6f} "
        f"(expected min(M, beta/2)={min(m_a, target_beta / 2.0):.4f})"
    )
    return fit


# ============================================================================
# BARRIERS
# ============================================================================

@dataclass(frozen=True, eq=False)
class BarrierFunction:
    """u(x) = U(x^T A x / 2) with U(s) = int_0^s W + C."""

    profile: Profile
    C: float
    params: PhaseParams
    envelope: Optional[PhaseEnvelope] = None
    fit: Optional[RateFit] = None
    deviation_table: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def kind(self) -> str:
        return self.profile.kind

    def deviation_s(self, s):
        """U(s) - s."""
        s_arr = np.asarray(s, dtype=float)
        if self.deviation_table is None:
            out = np.full(s_arr.shape, self.C)
            return float(out) if out.ndim == 0 else out
        prof = self.profile
        t = np.atleast_1d(np.log1p(s_arr))
        inside = np.interp(t, prof.t_grid, self.deviation_table)
        beyond = np.array([-_tail_integral(prof, self.fit, float(si)) for si in np.atleast_1d(s_arr)])
        out = np.where(t > prof.t_grid[-1], beyond, inside).reshape(s_arr.shape)
        return float(out) if out.ndim == 0 else out

    def U(self, s):
        return np.asarray(s, dtype=float) + self.deviation_s(s)

    def value(self, x):
        return self.U(self.params.quadratic_form(x))

    def deviation(self, x):
        """u(x) - x^T A x / 2."""
        return self.deviation_s(self.params.quadratic_form(x))

    def gradient(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        s = self.params.quadratic_form(pts)
        W = np.asarray(self.profile.w(s))
        return W[..., None] * (pts @ self.params.A.entries)

    def hessians(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(D^2 u, W, W') at a stack of points: W A + W' (Ax)(Ax)^T."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = self.params.quadratic_form(pts)
        W = np.atleast_1d(self.profile.w(s))
        Wp = np.atleast_1d(self.profile.dw(s))
        v = pts @ self.params.A.entries
        hess = W[:, None, None] * self.params.A.entries[None] + Wp[:, None, None] * np.einsum("bi,bj->bij", v, v)
        return hess, W, Wp

    def to_frame(self) -> pd.DataFrame:
        prof = self.profile
        s = prof.s_grid
        U = self.U(s)
        a11 = self.params.A.entries[0, 0]
        r = np.sqrt(2.0 * s / a11)
        return pd.DataFrame({"s": s, "W": prof.w_values, "U": U, "r": r, "u_r_e1": U})


def _tail_integral(profile: Profile, fit: Optional[RateFit], s: float) -> float:
    """int_s^inf (W - 1) beyond the grid, from the fitted model matched at the end point."""
    if fit is None:
        return 0.0
    s_end = profile.s_grid[-1]
    phi_end = profile.phi(s) if s > s_end else profile.phi_values[-1]
    base = max(s, s_end)
    p = fit.exponent
    one_plus = 1.0 + base
    if fit.log_flag:
        return phi_end * one_plus * (1.0 / (p - 1.0) + 1.0 / ((p - 1.0) ** 2 * math.log(one_plus)))
    return phi_end * one_plus / (p - 1.0)


def make_barrier(profile: Profile, params: PhaseParams, envelope: Optional[PhaseEnvelope] = None) -> BarrierFunction:
    """
    Close a profile into an entire barrier: C = int_0^inf (1 - W).

    Raises:
        KindError: For radial profiles
        PreconditionError: If the profile has not settled, M(A) <= 1, beta <= 2,
            or the fitted tail is not integrable
    """
    if profile.kind not in ("sub", "super"):
        raise KindError(f"Barriers are built from sub or super profiles, got {profile.kind}")
    if profile.terminal_gap() >= TOLERANCES["profile_terminal"]:
        raise PreconditionError(f"Profile has not settled: |W(s_K)-1|={profile.terminal_gap():.3e}")
    if not params.m_of_a > 1.0:
        raise PreconditionError(f"Barriers need M(A) > 1, got {params.m_of_a:.6f}")
    if not params.beta > 2.0:
        raise PreconditionError(f"Barriers need beta > 2, got {params.beta}")

    if profile.constant:
        if profile.phi_values[0] != 0.0:
            raise PreconditionError("A constant profile away from 1 has no finite barrier constant")
        return BarrierFunction(profile, 0.0, params, envelope)

    fit = fit_decay_rate(profile, params.beta, params.m_of_a)
    if fit.exponent <= 1.0:
        raise PreconditionError(f"Non-integrable tail: fitted exponent {fit.exponent:.4f} <= 1")

    # int_{s_k}^{s_K} (W - 1) ds with ds = e^t dt, accumulated from the far end
    integrand = profile.phi_values * np.exp(profile.t_grid)
    partial = cumulative_trapezoid(integrand[::-1], -profile.t_grid[::-1], initial=0.0)[::-1]
    tail = partial + _tail_integral(profile, fit, float(profile.s_grid[-1]))
    deviation = -tail
    C = float(deviation[0])
    logger.info(f"{profile.kind} barrier: C={C:.10f}, decay exponent {fit.exponent:.4f}")
    return BarrierFunction(profile, C, params, envelope, fit, deviation)


def quadratic_barrier(params: PhaseParams, envelope: PhaseEnvelope, kind: str) -> BarrierFunction:
    """
    x^T A x / 2 as a barrier: a supersolution when g >= g_inf everywhere
    (constant lower envelope), a subsolution when g <= g_inf.
    """
    if kind == "super" and not envelope.lower_constant:
        raise PreconditionError("The quadratic is a supersolution only when the lower envelope is g_inf")
    if kind == "sub" and not envelope.upper_constant:
        raise PreconditionError("The quadratic is a subsolution only when the upper envelope is g_inf")
    if kind not in ("sub", "super"):
        raise KindError(f"Unknown barrier kind '{kind}'")
    profile = _constant_profile(kind, 1.0, default_t_grid(points=16))
    return BarrierFunction(profile, 0.0, params, envelope)


def fit_barrier_asymptotics(barrier: BarrierFunction, window: Optional[Tuple[float, float]] = None) -> RateFit:
    """
    Decay of |u(x) - x^T A x / 2| in |x| along a ray.

    Along any ray |x| is proportional to sqrt(s), so the exponent in |x| is
    twice the exponent in s; expected 2 min(M(A), beta/2) - 2.
    """
    if barrier.deviation_table is None:
        raise PreconditionError("Constant barriers have no asymptotic decay")
    window = window or PROFILE_GRID["fit_window"]
    prof = barrier.profile
    radius = np.sqrt(2.0 * prof.s_grid)
    lo, hi = math.sqrt(2.0 * window[0]), math.sqrt(2.0 * window[1])
    try_log = abs(2.0 * barrier.params.m_of_a - barrier.params.beta) < 2.0 * PROFILE_GRID["log_model_band"]
    return fit_power_law(radius, barrier.deviation_table, (lo, hi), try_log=try_log)


# ============================================================================
# VERIFICATION
# ============================================================================

@dataclass
class BarrierCheckReport:
    kind: str
    passed: bool
    n_samples: int
    worst_margin: float
    worst_point: list
    weyl_violations: int
    spectral_bound_worst: Optional[float] = None
    issues: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "n_samples": self.n_samples,
            "worst_margin": self.worst_margin,
            "worst_point": self.worst_point,
            "weyl_violations": self.weyl_violations,
            "spectral_bound_worst": self.spectral_bound_worst,
            "issues": list(self.issues),
        }


def sample_points(
    n: int,
    count: Optional[int] = None,
    r_max: Optional[float] = None,
    seed: Optional[int] = None,
    r_min: float = 1e-3,
) -> np.ndarray:
    """
    Quasi-random points, log-uniform in radius and uniform on the sphere,
    followed by axis-aligned points where the Weyl bounds are tight.
    """
    count = count or SAMPLING_CONFIG["n_samples"]
    r_max = r_max or SAMPLING_CONFIG["max_radius"]
    seed = SAMPLING_CONFIG["seed"] if seed is None else seed
    sampler = qmc.Halton(d=n + 1, scramble=True, seed=seed)
    u = np.clip(sampler.random(count), 1e-12, 1.0 - 1e-12)
    radius = r_min * (r_max / r_min) ** u[:, 0]
    direction = norm.ppf(u[:, 1:])
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    points = radius[:, None] * direction

    axis_radii = np.geomspace(r_min * 10.0, r_max, 6)
    axis_points = []
    for i in range(n):
        for r in axis_radii:
            for sgn in (1.0, -1.0):
                x = np.zeros(n)
                x[i] = sgn * r
                axis_points.append(x)
    return np.vstack([points, np.array(axis_points)])


def _check_points(barrier: BarrierFunction, sample_points) -> np.ndarray:
    pts = sample_points if sample_points is not None else sample_points_default(barrier)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    keep = np.linalg.norm(pts, axis=1) > 0
    return pts[keep]


def sample_points_default(barrier: BarrierFunction) -> np.ndarray:
    return sample_points(barrier.params.n)


def verify_subsolution(barrier: BarrierFunction, sample_points=None) -> BarrierCheckReport:
    """
    Check F(D^2 u) >= upper(s(x)) - 1e-8 and the Weyl bounds at sample points.

    Raises:
        KindError: If the barrier is not of sub kind
    """
    if barrier.kind != "sub":
        raise KindError(f"verify_subsolution needs a sub barrier, got {barrier.kind}")
    if barrier.envelope is None:
        raise PreconditionError("Barrier carries no envelope to verify against")
    pts = _check_points(barrier, sample_points)
    params, env = barrier.params, barrier.envelope
    hess, W, Wp = barrier.hessians(pts)
    lam, _ = jacobi_eigen_batch(hess, want_vectors=False)
    phase = np.sum(np.arctan(lam), axis=1)
    s = params.quadratic_form(pts)
    margins = phase - env.upper(s)

    a = params.a.values
    v2 = np.sum((pts @ params.A.entries) ** 2, axis=1)
    upper_w = a[None, :] * W[:, None]
    lower_w = upper_w + (v2 * Wp)[:, None]
    slack = 1e-10 * (1.0 + np.abs(lam))
    weyl_bad = np.any((lam > upper_w + slack) | (lam < lower_w - slack), axis=1)

    return _report("sub", pts, margins, int(np.count_nonzero(weyl_bad)))


def verify_supersolution(barrier: BarrierFunction, sample_points=None) -> BarrierCheckReport:
    """
    Check F(D^2 u) <= lower(s(x)) + 1e-8, the Weyl bounds, and the refined
    spectral bound F(D^2 u) <= f(a_J) with J = J(W, (s+1) W').

    Raises:
        KindError: If the barrier is not of super kind
    """
    if barrier.kind != "super":
        raise KindError(f"verify_supersolution needs a super barrier, got {barrier.kind}")
    if barrier.envelope is None:
        raise PreconditionError("Barrier carries no envelope to verify against")
    pts = _check_points(barrier, sample_points)
    params, env = barrier.params, barrier.envelope
    hess, W, Wp = barrier.hessians(pts)
    lam, _ = jacobi_eigen_batch(hess, want_vectors=False)
    phase = np.sum(np.arctan(lam), axis=1)
    s = params.quadratic_form(pts)
    margins = env.lower(s) - phase

    a = params.a.values
    a1, an = float(a[0]), float(a[-1])
    v2 = np.sum((pts @ params.A.entries) ** 2, axis=1)
    lower_w = a[None, :] * W[:, None]
    upper_w = lower_w + (v2 * Wp)[:, None]
    slack = 1e-10 * (1.0 + np.abs(lam))
    weyl_bad = np.any((lam > upper_w + slack) | (lam < lower_w - slack), axis=1)

    bound_margins = np.empty(len(pts))
    for k in range(len(pts)):
        J, _ = _j_and_slope(a1, an, float(W[k]), float((s[k] + 1.0) * Wp[k]))
        shift = 2.0 * an * s[k] * Wp[k]
        a_J = a * W[k] + J * shift
        a_J[0] += shift
        bound_margins[k] = np.sum(np.arctan(a_J)) - phase[k]

    report = _report("super", pts, margins, int(np.count_nonzero(weyl_bad)))
    report.spectral_bound_worst = float(np.min(bound_margins)) if len(pts) else 0.0
    if report.spectral_bound_worst < -TOLERANCES["verify_margin"]:
        report.passed = False
        worst = int(np.argmin(bound_margins))
        report.issues.append(
            f"F(D^2u) exceeds f(a_J) by {-bound_margins[worst]:.3e} at {pts[worst].tolist()}"
        )
    return report


def _report(kind: str, pts: np.ndarray, margins: np.ndarray, weyl_violations: int) -> BarrierCheckReport:
    issues = []
    if len(pts) == 0:
        return BarrierCheckReport(kind, True, 0, math.inf, [], 0, issues=issues)
    worst = int(np.argmin(margins))
    worst_margin = float(margins[worst])
    passed = worst_margin >= -TOLERANCES["verify_margin"] and weyl_violations == 0
    if worst_margin < -TOLERANCES["verify_margin"]:
        issues.append(f"phase inequality violated by {-worst_margin:.3e} at {pts[worst].tolist()}")
    if weyl_violations:
        issues.append(f"{weyl_violations} samples break the Weyl eigenvalue bounds")
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, f"verify {kind}: {len(pts)} samples, worst margin {worst_margin:.3e}")
    return BarrierCheckReport(kind, passed, len(pts), worst_margin, pts[worst].tolist(), weyl_violations, issues=issues)


def build_barrier_pair(params: PhaseParams, envelope: PhaseEnvelope) -> Tuple[BarrierFunction, BarrierFunction]:
    """
    (sub, super) barriers for an envelope. A side whose envelope is constant
    at g_inf gets the quadratic itself.
    """
    if envelope.upper_constant:
        sub = quadratic_barrier(params, envelope, "sub")
    else:
        sub = make_barrier(integrate_sub_profile(envelope, params.a), params, envelope)
    if envelope.lower_constant:
        sup = quadratic_barrier(params, envelope, "super")
    else:
        sup = make_barrier(integrate_super_profile(envelope, params.a), params, envelope)
    return sub, sup
