"""
Radial solutions for slowly decaying phases and the nonexistence study.

The phase G(r) equals G0 on [0, 1], G_inf + r^(-beta) beyond r_switch, and a
quintic Hermite blend in between. Radial solutions u0(x) = U(|x|) with
W = U'/r satisfy arctan(W + r W') + (n-1) arctan W = G(r); for beta <= 2 the
gap d(r) = u0(r) - tan(G_inf/n) r^2 / 2 diverges, which rules out entire
solutions that approach a quadratic.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly
from scipy.stats import linregress

from lagrangian.barrier_ode import Profile, RateFit, fit_power_law
from lagrangian.envelopes_implicit import find_root
from lagrangian.errors import ConfigurationError, DomainError, FitError, IntegrationError, InternalError
from lagrangian.phase_core import phase_value
from utils.config import INTEGRATOR_CONFIG, RADIAL_CONFIG

logger = logging.getLogger(__name__)

# classify_growth treats d(r) as bounded once W - tan(G_inf/n) decays faster than r^-(2 + margin)
CONVERGENT_MARGIN = 0.1
R2_ACCEPT = 0.999

ASSUMPTIONS = [
    "Any entire solution with radially symmetric phase and A = tan(G_inf/n) I is radial "
    "(orthogonal invariance plus uniqueness from the maximum principle); cited, not computed.",
    "Uniqueness of the Dirichlet problems on balls follows from the maximum principle; cited, not computed.",
]


@dataclass(frozen=True, eq=False)
class RadialPhase:
    n: int
    G0: float
    G_inf: float
    beta: float
    r_switch: float
    blend: BPoly = field(repr=False)

    @property
    def blend_coefficients(self) -> List[float]:
        """Bernstein coefficients of the quintic on [1, r_switch]."""
        return [float(c) for c in np.ravel(self.blend.c)]

    def tail(self, r):
        """G(r) - G_inf, exact on both pure branches."""
        r_arr = np.asarray(r, dtype=float)
        inner = np.full(r_arr.shape, self.G0 - self.G_inf)
        blended = self.blend(np.clip(r_arr, 1.0, self.r_switch)) - self.G_inf
        with np.errstate(divide="ignore"):
            outer = np.power(np.maximum(r_arr, 1e-300), -self.beta)
        out = np.where(r_arr <= 1.0, inner, np.where(r_arr > self.r_switch, outer, blended))
        return float(out) if out.ndim == 0 else out

    def G(self, r):
        return self.G_inf + self.tail(r)

    def derivative(self, r, order: int = 1):
        r_arr = np.asarray(r, dtype=float)
        blended = self.blend.derivative(order)(np.clip(r_arr, 1.0, self.r_switch))
        coeff = np.prod([-self.beta - k for k in range(order)])
        outer = coeff * np.power(np.maximum(r_arr, 1e-300), -self.beta - order)
        out = np.where(r_arr <= 1.0, 0.0, np.where(r_arr > self.r_switch, outer, blended))
        return float(out) if out.ndim == 0 else out

    @property
    def t_star(self) -> float:
        """tan(G_inf / n), the limit of W."""
        return math.tan(self.G_inf / self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "G0": self.G0,
            "G_inf": self.G_inf,
            "beta": self.beta,
            "r_switch": self.r_switch,
            "blend_coefficients": self.blend_coefficients,
        }


def build_radial_phase(n: int, G0: float, G_inf: float, beta: float) -> RadialPhase:
    """
    Slow-decay phase family with a quintic blend on [1, r_switch].

    Raises:
        ConfigurationError: If (n-2)pi/2 < G_inf < G0 < n pi/2 fails or beta <= 0
        InternalError: If the blend is not monotone; retry with a wider transition
    """
    if n < 3:
        raise ConfigurationError(f"The radial study needs n >= 3, got {n}")
    if not (n - 2) * math.pi / 2.0 < G_inf < G0 < n * math.pi / 2.0:
        raise ConfigurationError(
            f"Need (n-2)pi/2 < G_inf < G0 < n pi/2, got G_inf={G_inf}, G0={G0}, n={n}"
        )
    if not beta > 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")

    r_switch = 2.0 * max(1.0, (G0 - G_inf) ** (-1.0 / beta))
    end_value = G_inf + r_switch ** (-beta)
    end_d1 = -beta * r_switch ** (-beta - 1.0)
    end_d2 = beta * (beta + 1.0) * r_switch ** (-beta - 2.0)
    blend = BPoly.from_derivatives([1.0, r_switch], [[G0, 0.0, 0.0], [end_value, end_d1, end_d2]])

    probe = np.linspace(1.0, r_switch, 2001)
    slope = blend.derivative()(probe)
    if np.any(slope > 1e-14):
        raise InternalError(
            f"Quintic blend on [1, {r_switch:.4f}] is not monotone; retry with a wider transition"
        )
    phase = RadialPhase(n, float(G0), float(G_inf), float(beta), r_switch, blend)
    logger.debug(f"Radial phase: r_switch={r_switch:.6f}, blend={phase.blend_coefficients}")
    return phase


def solve_radial_h(phase: RadialPhase, r: float, w: float) -> float:
    """
    Closed form h = tan(G(r) - (n-1) arctan w) - w.

    Raises:
        DomainError: If w is at or below tan((G(r) - pi/2) / (n-1))
    """
    G = phase.G(r)
    angle = G - (phase.n - 1) * math.atan(w)
    if angle >= math.pi / 2.0:
        raise DomainError(f"w={w} is at or below the barrier tan((G(r)-pi/2)/(n-1)) at r={r}")
    return math.tan(angle) - w


def radial_h_by_root(phase: RadialPhase, r: float, w: float, seed: Optional[float] = None) -> float:
    """The same h from a bracketed root solve of the defining equation."""
    G = phase.G(r)
    rest = (phase.n - 1) * math.atan(w)
    if G - rest >= math.pi / 2.0:
        raise DomainError(f"w={w} is at or below the radial barrier at r={r}")
    residual = lambda h: math.atan(w + h) + rest - G
    slope = lambda h: 1.0 / (1.0 + (w + h) ** 2)
    lo, hi = -w - 1.0, -w + 1.0
    while residual(lo) > 0:
        lo = -w - 2.0 * (-w - lo)
    while residual(hi) < 0:
        hi = -w + 2.0 * (hi + w)
    return find_root(residual, slope, lo, hi, seed=seed).value


def _tan_gap(n: int, G_inf: float, tail: float) -> float:
    """tan((G_inf + tail)/n) - tan(G_inf/n) without cancellation."""
    return math.sin(tail / n) / (math.cos((G_inf + tail) / n) * math.cos(G_inf / n))


def integrate_radial_deviation(
    n: int,
    G_inf: float,
    tail: Callable[[float], float],
    r_start: float,
    r_end: float,
    phi_start: float,
    d_start: float,
    points: int,
    rtol: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Integrate phi = W - tan(G_inf/n) and d = U - tan(G_inf/n) r^2 / 2 in t = ln r.

    dphi/dt = h(r, W) is assembled as sin(G - n w~) / (cos(G - (n-1) w~) cos w~)
    with w~ = arctan W, and G - n w~ built from the tail, so phi keeps full
    relative precision as it decays.

    Returns:
        tuple: (r grid, phi values, d values)
    """
    t_star = math.tan(G_inf / n)
    offset = G_inf - n * math.atan(t_star)

    def rhs(t, y):
        r = math.exp(t)
        phi = y[0]
        w = t_star + phi
        omega = math.atan(w)
        d_omega = math.atan(phi / (1.0 + w * t_star))
        excess = tail(r) + offset - n * d_omega
        theta = excess + omega
        if theta >= math.pi / 2.0:
            raise DomainError(f"Radial profile crossed the barrier at r={r:.3e}")
        h = math.sin(excess) / (math.cos(theta) * math.cos(omega))
        return [h, r * r * phi]

    t_grid = np.linspace(math.log(r_start), math.log(r_end), points)
    sol = solve_ivp(
        rhs,
        (t_grid[0], t_grid[-1]),
        [phi_start, d_start],
        method=INTEGRATOR_CONFIG["method"],
        t_eval=t_grid,
        rtol=rtol or INTEGRATOR_CONFIG["rtol"],
        atol=INTEGRATOR_CONFIG["radial_atol"],
    )
    if not sol.success:
        last_t = float(sol.t[-1]) if sol.t.size else float(t_grid[0])
        raise IntegrationError(
            f"Radial integration failed at r={math.exp(last_t):.3e}: {sol.message}",
            last_t=last_t,
            last_state=sol.y[:, -1].tolist() if sol.y.size else None,
        )
    return np.exp(t_grid), sol.y[0], sol.y[1]


@dataclass(frozen=True, eq=False)
class RadialSolution:
    phase: RadialPhase
    profile: Profile
    d_values: np.ndarray
    growth: Optional[RateFit] = None
    checks: dict = field(default_factory=dict)

    @property
    def r_grid(self) -> np.ndarray:
        return self.profile.s_grid

    def W(self, r):
        return self.profile.w(r)

    def d(self, r):
        """u0(r) - tan(G_inf/n) r^2 / 2."""
        r_arr = np.asarray(r, dtype=float)
        phi0 = self.profile.phi_values[0]
        inner = 0.5 * phi0 * r_arr * r_arr
        outer = np.interp(np.log(np.maximum(r_arr, 1.0)), self.profile.t_grid, self.d_values)
        out = np.where(r_arr <= 1.0, inner, outer)
        return float(out) if out.ndim == 0 else out

    def second_derivative(self, r):
        """U''(r) = W + dphi/dt, with dphi/dt by second-order differences of the table in ln r."""
        r_arr = np.asarray(r, dtype=float)
        t = self.profile.t_grid
        slope = np.gradient(self.profile.phi_values, t, edge_order=2)
        outer = self.W(np.maximum(r_arr, 1.0)) + np.interp(np.log(np.maximum(r_arr, 1.0)), t, slope)
        out = np.where(r_arr < 1.0, self.profile.w0, outer)
        return float(out) if out.ndim == 0 else out

    def u0(self, r):
        r_arr = np.asarray(r, dtype=float)
        return 0.5 * self.phase.t_star * r_arr * r_arr + self.d(r_arr)

    def to_frame(self) -> pd.DataFrame:
        r = self.r_grid
        return pd.DataFrame({"r": r, "W": self.profile.w_values, "u0": self.u0(r), "d": self.d_values})


def integrate_radial_profile(
    phase: RadialPhase,
    r_max: Optional[float] = None,
    points: Optional[int] = None,
) -> RadialSolution:
    """
    Radial profile with W = tan(G0/n) on [0, 1], integrated on [1, r_max] in ln r.

    Bound violations of tan(G(r)/n) <= W <= tan(G0/n) or of monotonicity are
    recorded in RadialSolution.checks rather than raised.
    """
    r_max = r_max or RADIAL_CONFIG["r_max"]
    points = points or RADIAL_CONFIG["points"]
    n, t_star = phase.n, phase.t_star
    phi0 = _tan_gap(n, phase.G_inf, phase.G0 - phase.G_inf)

    r, phi, d = integrate_radial_deviation(
        n, phase.G_inf, phase.tail, 1.0, r_max, phi0, 0.5 * phi0, points
    )
    profile = Profile(
        kind="radial", s_grid=r, t_grid=np.log(r), phi_values=phi,
        w0=t_star + phi0, limit=t_star, constant=bool(phi0 == 0.0),
        slope_fn=lambda rr, p: solve_radial_h(phase, rr, t_star + p) / rr,
    )

    floor = np.array([_tan_gap(n, phase.G_inf, phase.tail(v)) for v in r])
    slack = 1e-9 * np.abs(phi) + 1e-15
    checks = {
        "monotone": bool(np.all(np.diff(phi) <= slack[1:])),
        "lower_bound_violations": int(np.count_nonzero(phi < floor - slack)),
        "upper_bound_violations": int(np.count_nonzero(phi > phi0 + slack)),
    }
    sol = RadialSolution(phase, profile, d, checks=checks)
    if not checks["monotone"] or checks["lower_bound_violations"] or checks["upper_bound_violations"]:
        logger.warning(f"Radial profile bound checks failed: {checks}")

    window = RADIAL_CONFIG["fit_window"]
    if r_max >= window[1] and not profile.constant:
        sol = replace(sol, growth=classify_growth(sol))
    logger.info(f"Radial profile integrated to r={r_max:g}: W - tan(G_inf/n) = {phi[-1]:.3e} at the end")
    return sol


def _growth_bounds(sol: RadialSolution, window) -> Tuple[float, float]:
    r = sol.r_grid
    mask = (r >= window[0]) & (r <= window[1])
    beta = sol.phase.beta
    k = np.log(r[mask]) if beta == 2.0 else np.power(r[mask], 2.0 - beta)
    ratio = sol.d_values[mask] / k
    return float(np.min(ratio)), float(np.max(ratio))


def classify_growth(sol: RadialSolution, window: Optional[Tuple[float, float]] = None) -> RateFit:
    """
    Growth model of d(r) = u0(r) - tan(G_inf/n) r^2 / 2 on the window.

    The decay exponent q of W - tan(G_inf/n) decides boundedness (q > 2);
    otherwise power (ln d against ln r) and logarithmic (d against ln r)
    models are fitted and the higher r^2 wins. The bounds field of the result
    carries C3 <= C4 with C3 k(r) <= d(r) <= C4 k(r).
    """
    window = window or RADIAL_CONFIG["fit_window"]
    r, d = sol.r_grid, sol.d_values
    decay = fit_power_law(r, sol.profile.phi_values, window)
    mask = (r >= window[0]) & (r <= window[1])
    if np.count_nonzero(mask) < 10:
        raise FitError(f"Window {window} holds too few radii")
    bounds = _growth_bounds(sol, window)

    if decay.exponent > 2.0 + CONVERGENT_MARGIN:
        logger.info(f"Growth: convergent (W decays like r^-{decay.exponent:.3f})")
        return RateFit(decay.exponent - 2.0, False, decay.r2, tuple(window), "convergent",
                       intercept=float(d[mask][-1]), bounds=bounds)

    lr = np.log(r[mask])
    dm = d[mask]
    if np.any(dm <= 0):
        return RateFit(float("nan"), False, 0.0, tuple(window), "inconclusive", bounds=bounds)
    power = linregress(lr, np.log(dm))
    logfit = linregress(lr, dm)
    r2_power, r2_log = float(power.rvalue ** 2), float(logfit.rvalue ** 2)
    if max(r2_power, r2_log) < R2_ACCEPT:
        fit = RateFit(float(power.slope), False, max(r2_power, r2_log), tuple(window), "inconclusive", bounds=bounds)
    elif r2_log > r2_power:
        fit = RateFit(0.0, True, r2_log, tuple(window), "log_growth",
                      prefactor=float(logfit.slope), intercept=float(logfit.intercept), bounds=bounds)
    else:
        fit = RateFit(float(power.slope), False, r2_power, tuple(window), "power_growth",
                      prefactor=math.exp(power.intercept), intercept=float(power.intercept), bounds=bounds)
    logger.info(f"Growth: {fit.model} exponent={fit.exponent:.4f} r2={fit.r2:.6f}")
    return fit


def two_sided_prefactors(
    sol: RadialSolution,
    windows: Sequence[Tuple[float, float]] = ((1e2, 1e6), (1e3, 1e7)),
) -> List[Tuple[float, float]]:
    """(C1, C2) with C1 r^-beta <= W - tan(G_inf/n) <= C2 r^-beta on each window."""
    r, phi = sol.r_grid, sol.profile.phi_values
    out = []
    for lo, hi in windows:
        mask = (r >= lo) & (r <= hi)
        scaled = phi[mask] * np.power(r[mask], sol.phase.beta)
        out.append((float(np.min(scaled)), float(np.max(scaled))))
    return out


@dataclass(frozen=True)
class ProbeResult:
    epsilon: float
    outcome: str  # blow_up | barrier_crossing | regular
    r_stop: float
    w_stop: float


def backward_uniqueness_probe(phase: RadialPhase, epsilon: float, r_min: Optional[float] = None) -> ProbeResult:
    """
    Start from W(1) = tan(G0/n) + epsilon and integrate toward r = 0.

    Any epsilon != 0 should leave the admissible region (W blows up or reaches
    the barrier tan((G0 - pi/2)/(n-1))), which shows the regular initial value is forced.
    """
    r_min = r_min or RADIAL_CONFIG["probe_r_min"]
    n, G0 = phase.n, phase.G0
    w_start = math.tan(G0 / n) + epsilon
    edge = math.pi / 2.0 - 1e-6
    blowup = RADIAL_CONFIG["blowup_level"]

    def angle(w):
        return G0 - (n - 1) * math.atan(w)

    def rhs(t, y):
        theta = min(angle(y[0]), edge)
        return [math.tan(theta) - y[0]]

    def hit_barrier(t, y):
        return edge - angle(y[0])

    def hit_blowup(t, y):
        return blowup - y[0]

    hit_barrier.terminal = True
    hit_blowup.terminal = True

    sol = solve_ivp(
        rhs, (0.0, math.log(r_min)), [w_start],
        method=INTEGRATOR_CONFIG["method"], rtol=INTEGRATOR_CONFIG["rtol"], atol=1e-12,
        events=(hit_barrier, hit_blowup),
    )
    w_end = float(sol.y[0, -1])
    r_end = math.exp(float(sol.t[-1]))
    if sol.t_events[0].size:
        outcome = "barrier_crossing"
    elif sol.t_events[1].size:
        outcome = "blow_up"
    elif sol.status == -1:
        outcome = "blow_up" if w_end > w_start else "barrier_crossing"
    elif abs(w_end - math.tan(G0 / n)) > 1e3 * abs(epsilon):
        outcome = "blow_up" if w_end > w_start else "barrier_crossing"
    else:
        outcome = "regular"
    logger.debug(f"Backward probe eps={epsilon:g}: {outcome} at r={r_end:.3e}")
    return ProbeResult(epsilon, outcome, r_end, w_end)


def phase_consistency(sol: RadialSolution, radii: Sequence[float], directions: int = 4, seed: int = 0) -> float:
    """
    max |phase_value(D^2 u0(x)) - G(|x|)| over points x = r v with seeded unit v.

    D^2 u0(x) = W I + (U'' - W) v v^T with U'' taken from the tabulated profile.
    """
    n = sol.phase.n
    rng = np.random.default_rng(seed)
    units = rng.standard_normal((directions, n))
    units /= np.linalg.norm(units, axis=1, keepdims=True)
    worst = 0.0
    for r in radii:
        W = float(sol.W(r))
        excess = float(sol.second_derivative(r)) - W
        for v in units:
            hess = W * np.eye(n) + excess * np.outer(v, v)
            worst = max(worst, abs(phase_value(hess) - sol.phase.G(r)))
    return worst


def second_derivative_jump(sol: RadialSolution) -> float:
    """|U''(1+) - U''(1-)| with U''(1+) from the tabulated profile."""
    return abs(float(sol.second_derivative(1.0)) - sol.profile.w0)


@dataclass
class NonexistenceReport:
    phase: dict
    verdict: str
    premises: dict
    growth: dict
    assumptions: List[str]
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "verdict": self.verdict,
            "premises": self.premises,
            "growth": self.growth,
            "assumptions": list(self.assumptions),
            "details": self.details,
        }


def nonexistence_report(phase: RadialPhase, sol: Optional[RadialSolution] = None) -> NonexistenceReport:
    """
    Machine-checkable chain: (i) the radial solution with u0(0) = 0 is unique,
    (ii) d(r) diverges, (iii) hence no entire solution approaches a quadratic
    for A = tan(G_inf/n) I. Phases with beta > 2 get the "outside theorem
    scope" verdict instead.
    """
    sol = sol or integrate_radial_profile(phase)
    growth = sol.growth or classify_growth(sol)

    probes = []
    for eps in RADIAL_CONFIG["probe_epsilons"]:
        for sgn in (1.0, -1.0):
            probes.append(backward_uniqueness_probe(phase, sgn * eps))
    uniqueness_ok = all(p.outcome != "regular" for p in probes)
    bounds_ok = (
        sol.checks.get("monotone", False)
        and not sol.checks.get("lower_bound_violations", 1)
        and not sol.checks.get("upper_bound_violations", 1)
    )
    divergent = growth.model in ("log_growth", "power_growth") and growth.accepted
    if growth.model == "power_growth":
        divergent = divergent and growth.exponent > 0

    premises = {
        "unique_radial_solution": {
            "holds": uniqueness_ok,
            "probes": [p.__dict__ for p in probes],
        },
        "profile_bounds": {"holds": bool(bounds_ok), **sol.checks},
        "divergent_gap": {"holds": bool(divergent), "model": growth.model, "r2": growth.r2},
    }

    r_lo, r_hi = 1e4, 1e7
    offset = growth.intercept if growth.model == "log_growth" else 0.0
    details = {
        "growth_ratio": float(sol.d(r_hi) / sol.d(r_lo)) if sol.d(r_lo) != 0 else float("nan"),
        # d - b for the fitted d ~ C ln r + b
        "growth_ratio_offset_removed": float((sol.d(r_hi) - offset) / (sol.d(r_lo) - offset)),
        "expected_log_ratio": math.log(r_hi) / math.log(r_lo),
        "prefactors": two_sided_prefactors(sol),
        "phase_consistency": phase_consistency(sol, [0.5, 1.0, 2.0, 10.0, 1e3, 1e6]),
        "second_derivative_jump": second_derivative_jump(sol),
    }

    if phase.beta > 2.0:
        verdict = "outside theorem scope; convergent" if growth.model == "convergent" else "outside theorem scope"
    elif uniqueness_ok and bounds_ok and divergent:
        kind = "log" if growth.model == "log_growth" else "power"
        verdict = f"divergent ({kind}); nonexistence certified numerically"
    else:
        verdict = "inconclusive"

    logger.info(f"Nonexistence report beta={phase.beta}: {verdict}")
    return NonexistenceReport(phase.to_dict(), verdict, premises, growth.to_dict(), list(ASSUMPTIONS), details)
