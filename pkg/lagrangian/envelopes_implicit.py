"""
Phase envelopes and the implicit scalar functions of the barrier construction.

Everything that sits close to the phase limit is evaluated through deviations
from it: the envelope stores its tails (upper - g_inf, lower - g_inf) and
phase_excess computes f(a(1+phi)) - f(a) without forming 1 + phi first. This
keeps W - 1 accurate long after it drops below machine epsilon relative to 1.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from lagrangian.errors import ConfigurationError, DomainError, InternalError
from lagrangian.phase_core import PhaseParams, Spectrum, m_of_a
from utils.config import ROOT_CONFIG, TOLERANCES

logger = logging.getLogger(__name__)

SIGNS = ("above", "below", "two_sided")
H_BRACKET_LIMIT = 1e6
EPS = np.finfo(float).eps

SpectrumLike = Union[Spectrum, Sequence[float], np.ndarray]


class PowerTail:
    """s -> scale * (1 + s)^(-beta/2); accepts scalars (incl. inf) and arrays."""

    def __init__(self, scale: float, beta: float):
        self.scale = float(scale)
        self.beta = float(beta)

    def __call__(self, s):
        if np.ndim(s) == 0:
            if self.scale == 0.0:
                return 0.0
            return self.scale * (1.0 + float(s)) ** (-self.beta / 2.0)
        return self.scale * np.power(1.0 + np.asarray(s, dtype=float), -self.beta / 2.0)


class OffsetTail:
    """Tail of a user-supplied envelope callable, bound - g_inf."""

    def __init__(self, bound: Callable, g_inf: float):
        self.bound = bound
        self.g_inf = g_inf

    def __call__(self, s):
        if np.ndim(s) == 0:
            return float(self.bound(s)) - self.g_inf
        return np.asarray(self.bound(s), dtype=float) - self.g_inf


@dataclass(frozen=True, eq=False)
class PhaseEnvelope:
    """Monotone bounds lower(s) <= g(x) <= upper(s), stored as tails around g_inf."""

    g_inf: float
    beta: float
    n: int
    K: float
    upper_tail: Callable
    lower_tail: Callable
    sign: str = "custom"
    amplitude: float = 0.0
    trace_normalizer: float = 1.0
    upper_constant: bool = False
    lower_constant: bool = False

    @classmethod
    def from_callables(
        cls,
        g_inf: float,
        beta: float,
        n: int,
        lower: Callable,
        upper: Callable,
        K: float,
    ) -> "PhaseEnvelope":
        """Wrap user-supplied bounds; run audit_envelope before trusting them."""
        return cls(g_inf, beta, n, K, OffsetTail(upper, g_inf), OffsetTail(lower, g_inf))

    def upper(self, s):
        return self.g_inf + self.upper_tail(s)

    def lower(self, s):
        return self.g_inf + self.lower_tail(s)

    def to_dict(self) -> dict:
        return {
            "g_inf": self.g_inf,
            "beta": self.beta,
            "n": self.n,
            "K": self.K,
            "sign": self.sign,
            "amplitude": self.amplitude,
        }


@dataclass(frozen=True)
class ImplicitSolveReport:
    value: float
    residual: float
    iterations: int
    bracket: Tuple[float, float]


class CanonicalPhaseField:
    """
    Test phase g(x) = g_inf + c * profile(2 s(x) / tau), tau = trace(A)/n.

    The profile is (1 + q)^(-beta/2) for "above", its negative for "below" and
    cos(sqrt(q)) (1 + q)^(-beta/2) for "two_sided". The existence results only
    ask that g lie between two monotone envelopes, so the oscillating field is a
    non-monotone phase inside the same (1 + s)^(-beta/2) band.
    """

    def __init__(self, params: PhaseParams, c: float, sign: str):
        if sign not in SIGNS:
            raise ConfigurationError(f"Unknown envelope sign '{sign}', expected one of {SIGNS}")
        self.params = params
        self.c = float(c)
        self.sign = sign
        self.tau = params.trace_normalizer

    def _shape(self, q):
        q = np.asarray(q, dtype=float)
        base = np.power(1.0 + q, -self.params.beta / 2.0)
        if self.sign == "below":
            return -base
        if self.sign == "two_sided":
            return np.cos(np.sqrt(q)) * base
        return base

    def tail(self, points) -> np.ndarray:
        """g(x) - g_inf for a stack of points."""
        q = 2.0 * self.params.quadratic_form(points) / self.tau
        return self.c * self._shape(q)

    def __call__(self, points) -> np.ndarray:
        return self.params.g_inf + self.tail(points)

    def radial_tail(self, r):
        """G(r) - g_inf when A = tau I, where 2 s / tau = r^2."""
        r = np.asarray(r, dtype=float)
        out = self.c * self._shape(r * r)
        return float(out) if out.ndim == 0 else out

    def radial(self, r):
        return self.params.g_inf + self.radial_tail(r)

    @property
    def is_monotone(self) -> bool:
        return self.sign in ("above", "below") or self.c == 0.0


def canonical_phase_field(params: PhaseParams, c: float, sign: str) -> CanonicalPhaseField:
    return CanonicalPhaseField(params, c, sign)


def build_envelopes(params: PhaseParams, c: float, sign: str = "two_sided") -> PhaseEnvelope:
    """
    Envelopes of the canonical phase family.

    Args:
        params (PhaseParams): Normalized parameters
        c (float): Amplitude of the canonical family, c >= 0
        sign (str): "above", "below" or "two_sided"

    Returns:
        PhaseEnvelope: upper = g_inf + K (1+s)^(-beta/2) and/or lower = g_inf - K (1+s)^(-beta/2)

    Raises:
        ConfigurationError: On a negative amplitude, unknown sign, or a band violation
    """
    if sign not in SIGNS:
        raise ConfigurationError(f"Unknown envelope sign '{sign}', expected one of {SIGNS}")
    if not c >= 0:
        raise ConfigurationError(f"Amplitude c must be nonnegative, got {c}")

    tau = params.trace_normalizer
    # sup over s of ((1+s)/(1+2s/tau))^(beta/2)
    K = float(c) * max(1.0, tau / 2.0) ** (params.beta / 2.0)
    has_upper = sign in ("above", "two_sided") and K > 0
    has_lower = sign in ("below", "two_sided") and K > 0

    n = params.n
    band_lo, band_hi = (n - 2) * math.pi / 2.0, n * math.pi / 2.0
    if has_upper and params.g_inf + K >= band_hi:
        raise ConfigurationError(
            f"Upper envelope leaves the band at s=0: {params.g_inf + K} >= {band_hi}"
        )
    if has_lower and params.g_inf - K <= band_lo:
        raise ConfigurationError(
            f"Lower envelope leaves the band at s=0: {params.g_inf - K} <= {band_lo}"
        )

    envelope = PhaseEnvelope(
        g_inf=params.g_inf,
        beta=params.beta,
        n=n,
        K=K,
        upper_tail=PowerTail(K if has_upper else 0.0, params.beta),
        lower_tail=PowerTail(-K if has_lower else 0.0, params.beta),
        sign=sign,
        amplitude=float(c),
        trace_normalizer=tau,
        upper_constant=not has_upper,
        lower_constant=not has_lower,
    )
    logger.debug(f"Envelopes built: sign={sign} c={c} K={K}")
    return envelope


def audit_envelope(envelope: PhaseEnvelope, s_grid: Optional[np.ndarray] = None):
    """
    Check a PhaseEnvelope against its invariants on a geometric s-grid.

    Returns:
        tuple: (is_valid, issues list)
    """
    issues: List[str] = []
    s = np.concatenate([[0.0], np.geomspace(1e-3, 1e12, 301)]) if s_grid is None else np.asarray(s_grid)
    n = envelope.n
    upper = np.array([envelope.upper(v) for v in s])
    lower = np.array([envelope.lower(v) for v in s])

    if np.any(upper >= n * math.pi / 2.0):
        issues.append(f"upper envelope reaches n*pi/2 at s={s[np.argmax(upper >= n * math.pi / 2.0)]}")
    if np.any(lower <= (n - 2) * math.pi / 2.0):
        issues.append(f"lower envelope reaches (n-2)*pi/2 at s={s[np.argmax(lower <= (n - 2) * math.pi / 2.0)]}")
    if np.any(lower > upper):
        issues.append(f"lower exceeds upper at s={s[np.argmax(lower > upper)]}")
    if np.any(np.diff(upper) > 1e-14):
        issues.append("upper envelope is not nonincreasing")
    if np.any(np.diff(lower) < -1e-14):
        issues.append("lower envelope is not nondecreasing")

    tail_zone = s >= 1.0
    bound = envelope.K * np.power(s[tail_zone], -envelope.beta / 2.0) * (1.0 + 1e-12)
    if np.any(np.abs(upper[tail_zone] - envelope.g_inf) > bound + 1e-15):
        issues.append("upper tail exceeds K s^(-beta/2)")
    if np.any(np.abs(lower[tail_zone] - envelope.g_inf) > bound + 1e-15):
        issues.append("lower tail exceeds K s^(-beta/2)")

    return len(issues) == 0, issues


# ============================================================================
# ROOT FINDING
# ============================================================================

def find_root(
    residual: Callable[[float], float],
    slope: Callable[[float], float],
    lo: float,
    hi: float,
    seed: Optional[float] = None,
    width: Optional[float] = None,
) -> ImplicitSolveReport:
    """
    Root of an increasing residual on [lo, hi]: bisection, then safeguarded Newton.

    Args:
        residual: Increasing scalar function with residual(lo) <= 0 <= residual(hi)
        slope: Derivative of residual
        lo, hi (float): Bracket
        seed (float, optional): Newton starting point; the bisection midpoint when omitted
        width (float, optional): Bisection stops once hi - lo is below this

    Raises:
        InternalError: If the bracket does not straddle a root or the polish misses 1e-12
    """
    bracket = (lo, hi)
    f_lo, f_hi = residual(lo), residual(hi)
    if f_lo > 0 or f_hi < 0:
        raise InternalError(f"Bracket [{lo}, {hi}] does not straddle a root ({f_lo}, {f_hi})")
    if f_lo == 0:
        return ImplicitSolveReport(lo, 0.0, 0, bracket)
    if f_hi == 0:
        return ImplicitSolveReport(hi, 0.0, 0, bracket)

    target_width = ROOT_CONFIG["bisection_width"] if width is None else width
    iterations = 0
    while hi - lo > target_width * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        f_mid = residual(mid)
        iterations += 1
        if f_mid == 0:
            return ImplicitSolveReport(mid, 0.0, iterations, bracket)
        if f_mid < 0:
            lo = mid
        else:
            hi = mid

    x = seed if seed is not None and lo <= seed <= hi else 0.5 * (lo + hi)
    fx = residual(x)
    for _ in range(ROOT_CONFIG["max_newton"]):
        if fx == 0:
            break
        if fx < 0:
            lo = max(lo, x)
        else:
            hi = min(hi, x)
        d = slope(x)
        x_new = x - fx / d if d > 0 and math.isfinite(d) else 0.5 * (lo + hi)
        if not lo <= x_new <= hi:
            x_new = 0.5 * (lo + hi)
        iterations += 1
        converged = abs(x_new - x) <= 4.0 * EPS * max(abs(x), 1e-300)
        x = x_new
        fx = residual(x)
        if converged:
            break

    if abs(fx) > TOLERANCES["implicit_residual"]:
        raise InternalError(f"Newton polish stopped at residual {fx:.3e} (x={x})")
    return ImplicitSolveReport(x, fx, iterations, bracket)


def _positive_spectrum(a: SpectrumLike) -> Tuple[float, ...]:
    values = a.values if isinstance(a, Spectrum) else np.sort(np.asarray(a, dtype=float))
    if np.all(values > 0):
        return tuple(float(v) for v in values)
    if np.all(values < 0):
        return tuple(float(v) for v in np.sort(-values))
    raise DomainError(f"Spectrum must be definite, got {list(values)}")


def phase_excess(a: SpectrumLike, phi: float) -> float:
    """f(a(1+phi)) - f(a) evaluated without cancellation; needs phi > -1."""
    avals = _positive_spectrum(a)
    return _phase_excess(avals, phi)


def _phase_excess(avals: Tuple[float, ...], phi: float) -> float:
    w = 1.0 + phi
    return math.fsum(math.atan(ai * phi / (1.0 + ai * ai * w)) for ai in avals)


def _phase_excess_slope(avals: Tuple[float, ...], phi: float) -> float:
    w = 1.0 + phi
    return sum(ai / (1.0 + (ai * w) ** 2) for ai in avals)


def _phase_sum(avals: Sequence[float], w: float) -> float:
    return math.fsum(math.atan(ai * w) for ai in avals)


def _limit_offset(envelope: PhaseEnvelope, avals: Tuple[float, ...]) -> float:
    """g_inf - f(a); zero when the envelope comes from the same parameters."""
    return envelope.g_inf - _phase_sum(avals, 1.0)


def _deviation_root(avals: Tuple[float, ...], target: float) -> ImplicitSolveReport:
    """phi with phase_excess(a, phi) = target."""
    cap = ROOT_CONFIG["max_expansions"]
    residual = lambda p: _phase_excess(avals, p) - target
    slope = lambda p: _phase_excess_slope(avals, p)
    if target >= 0:
        lo, hi = 0.0, 1.0
        for _ in range(cap):
            if residual(hi) >= 0:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise InternalError(f"Could not bracket w for phase target {target}")
    else:
        lo, hi = -0.5, 0.0
        for _ in range(cap):
            if residual(lo) <= 0:
                break
            hi, lo = lo, -1.0 + 0.5 * (1.0 + lo)
        else:
            raise InternalError(f"Could not bracket w for phase target {target}")
    return find_root(residual, slope, lo, hi)


def w_under_deviation(envelope: PhaseEnvelope, a: SpectrumLike, s: float) -> float:
    """w_under(s) - 1, accurate far below machine epsilon."""
    avals = _positive_spectrum(a)
    target = envelope.upper_tail(s) + _limit_offset(envelope, avals)
    return _deviation_root(avals, target).value


def w_over_deviation(envelope: PhaseEnvelope, a: SpectrumLike, s: float) -> float:
    """w_over(s) - 1, accurate far below machine epsilon."""
    avals = _positive_spectrum(a)
    target = envelope.lower_tail(s) + _limit_offset(envelope, avals)
    return _deviation_root(avals, target).value


def w_under_report(envelope: PhaseEnvelope, a: SpectrumLike, s: float) -> ImplicitSolveReport:
    if s < 0:
        raise DomainError(f"s must be nonnegative, got {s}")
    avals = _positive_spectrum(a)
    target = envelope.upper_tail(s) + _limit_offset(envelope, avals)
    report = _deviation_root(avals, target)
    w = 1.0 + report.value
    return replace(report, value=w, residual=_phase_sum(avals, w) - envelope.upper(s))


def w_over_report(envelope: PhaseEnvelope, a: SpectrumLike, s: float) -> ImplicitSolveReport:
    if s < 0:
        raise DomainError(f"s must be nonnegative, got {s}")
    avals = _positive_spectrum(a)
    target = envelope.lower_tail(s) + _limit_offset(envelope, avals)
    report = _deviation_root(avals, target)
    w = 1.0 + report.value
    return replace(report, value=w, residual=_phase_sum(avals, w) - envelope.lower(s))


def solve_w_under(envelope: PhaseEnvelope, a: SpectrumLike, s: float) -> float:
    """Positive w with sum(arctan(a_i w)) = upper(s)."""
    return w_under_report(envelope, a, s).value


def solve_w_over(envelope: PhaseEnvelope, a: SpectrumLike, s: float) -> float:
    """Positive w with sum(arctan(a_i w)) = lower(s)."""
    return w_over_report(envelope, a, s).value


# ============================================================================
# h, h0 AND THE SUBSOLUTION SLOPE
# ============================================================================

def h_report(
    envelope: PhaseEnvelope,
    a: SpectrumLike,
    s: float,
    w: float,
    strict: bool = True,
    seed: Optional[float] = None,
) -> ImplicitSolveReport:
    """
    Solve arctan(h) + sum_{i>=2} arctan(a_i w) = upper(s).

    With strict=False the smooth extension slightly below w_under(s) is allowed,
    which the one-sided difference quotients near the limit rely on.
    """
    avals = _positive_spectrum(a)
    if s < 0:
        raise DomainError(f"s must be nonnegative, got {s}")
    if w <= 0:
        raise DomainError(f"w must be positive, got {w}")
    if strict:
        phi_under = w_under_deviation(envelope, avals, s)
        if (w - 1.0) < phi_under - 1e-12 * max(1.0, w):
            raise DomainError(f"w={w} is below w_under(s)={1.0 + phi_under} at s={s}")

    n = len(avals)
    g_up = envelope.upper(s)
    rest = _phase_sum(avals[1:], w)
    if g_up - rest >= math.pi / 2.0:
        raise DomainError(f"No h solves the equation at s={s}, w={w}")
    residual = lambda h: math.atan(h) + rest - g_up
    slope = lambda h: 1.0 / (1.0 + h * h)

    lo = math.tan(g_up - (n - 1) * math.pi / 2.0)
    hi = avals[0] * w
    for _ in range(ROOT_CONFIG["max_expansions"]):
        if residual(hi) >= 0:
            break
        hi += max(1.0, abs(hi))
    else:
        raise InternalError(f"Could not bracket h at s={s}, w={w}")
    return find_root(residual, slope, min(lo, hi), hi, seed=seed)


def solve_h(envelope: PhaseEnvelope, a: SpectrumLike, s: float, w: float, strict: bool = True) -> float:
    return h_report(envelope, a, s, w, strict=strict).value


def h_zero_clamp(h: float) -> float:
    return max(0.0, h)


def h_gap(envelope: PhaseEnvelope, avals: Tuple[float, ...], s: float, phi: float) -> Tuple[float, float]:
    """
    (h(s, w), h(s, w) - a_1 w) at w = 1 + phi, both free of cancellation.

    Uses tan(x + d) - tan(x) = sin(d) / (cos(x + d) cos(x)) with
    d = upper(s) - f(a w) built from tails.
    """
    w = 1.0 + phi
    psi1 = math.atan(avals[0] * w)
    delta = envelope.upper_tail(s) + _limit_offset(envelope, avals) - _phase_excess(avals, phi)
    theta = psi1 + delta
    if not -math.pi / 2.0 < theta < math.pi / 2.0:
        raise DomainError(f"No h solves the equation at s={s}, w={w}")
    h = math.tan(theta)
    gap = math.sin(delta) / (math.cos(theta) * math.cos(psi1))
    return h, gap


def dh_dw_limit(a: SpectrumLike) -> float:
    """
    d h / d w at (s, w) = (inf, 1): -(1 + a_1^2) sum_{i>=2} a_i / (1 + a_i^2).

    Raises:
        InternalError: If (value - a_1) / (2 a_n) differs from -M(A)
    """
    avals = _positive_spectrum(a)
    a1, an = avals[0], avals[-1]
    value = -(1.0 + a1 * a1) * sum(ai / (1.0 + ai * ai) for ai in avals[1:])
    check = (value - a1) / (2.0 * an) + m_of_a(avals)
    if abs(check) > 1e-10:
        raise InternalError(f"dh/dw limit identity off by {check:.3e}")
    return value


def dh_dw_finite_difference(
    envelope: PhaseEnvelope, a: SpectrumLike, s: float = 1e8, step: float = 1e-4
) -> float:
    """
    Second-order difference quotient of h in w at (s, w_under(s)).

    The stencil is one-sided (forward) because the centered one would leave the
    domain w >= w_under(s).
    """
    w0 = solve_w_under(envelope, a, s)
    h0 = solve_h(envelope, a, s, w0, strict=False)
    h1 = solve_h(envelope, a, s, w0 + step, strict=False)
    h2 = solve_h(envelope, a, s, w0 + 2.0 * step, strict=False)
    return (-3.0 * h0 + 4.0 * h1 - h2) / (2.0 * step)


# ============================================================================
# J AND H
# ============================================================================

def _j_and_slope(a1: float, an: float, w: float, H: float) -> Tuple[float, float]:
    x = a1 * w
    root = math.sqrt(1.0 + x * x)
    denom = (1.0 + x * x) ** 2 * x
    first = root + 4.0 * a1 * H
    second = x + x ** 3 + 4.0 * an * H
    J = first * first * second / denom - 1.0
    dJ = (8.0 * a1 * first * second + 4.0 * an * first * first) / denom
    return J, dJ


def j_factor(a: SpectrumLike, w: float, H: float) -> float:
    """Dispersion factor J(w, H) of the supersolution construction."""
    if w <= 0:
        raise DomainError(f"w must be positive, got {w}")
    if H < 0:
        raise DomainError(f"H must be nonnegative, got {H}")
    avals = _positive_spectrum(a)
    return _j_and_slope(avals[0], avals[-1], w, H)[0]


def _H_residual(avals: Tuple[float, ...], w: float, target: float):
    """Residual and slope in H of the H-equation minus its value at H = 0."""
    a1, an = avals[0], avals[-1]

    def lambdas(H):
        J, dJ = _j_and_slope(a1, an, w, H)
        inc = [2.0 * an * (1.0 + J) * H] + [2.0 * an * J * H] * (len(avals) - 1)
        dinc = [2.0 * an * (1.0 + J + H * dJ)] + [2.0 * an * (J + H * dJ)] * (len(avals) - 1)
        return inc, dinc

    def residual(H):
        inc, _ = lambdas(H)
        total = 0.0
        for ai, d in zip(avals, inc):
            base = ai * w
            total += math.atan(d / (1.0 + (base + d) * base))
        return total - target

    def slope(H):
        inc, dinc = lambdas(H)
        return sum(dl / (1.0 + (ai * w + d) ** 2) for ai, d, dl in zip(avals, inc, dinc))

    return residual, slope


def _H_from_deviation(
    envelope: PhaseEnvelope,
    avals: Tuple[float, ...],
    s: float,
    phi: float,
    seed: Optional[float] = None,
) -> ImplicitSolveReport:
    """Solve for H at w = 1 + phi; the H = 0 branch covers w = w_over(s)."""
    w = 1.0 + phi
    if w <= 0:
        raise DomainError(f"w must be positive, got {w}")
    target = envelope.lower_tail(s) + _limit_offset(envelope, avals) - _phase_excess(avals, phi)
    if target < -1e-13:
        raise DomainError(f"w={w} is above w_over(s) at s={s}")
    if target <= 0:
        return ImplicitSolveReport(0.0, -target, 0, (0.0, 0.0))

    residual, slope = _H_residual(avals, w, target)
    hi = 1.0
    while residual(hi) < 0:
        hi *= 2.0
        if hi > H_BRACKET_LIMIT:
            raise InternalError(f"H bracket exceeded {H_BRACKET_LIMIT:g} at s={s}, w={w}")
    return find_root(residual, slope, 0.0, hi, seed=seed)


def H_report(
    envelope: PhaseEnvelope, a: SpectrumLike, s: float, w: float, seed: Optional[float] = None
) -> ImplicitSolveReport:
    if s < 0:
        raise DomainError(f"s must be nonnegative, got {s}")
    avals = _positive_spectrum(a)
    report = _H_from_deviation(envelope, avals, s, w - 1.0, seed=seed)
    H = report.value
    a1, an = avals[0], avals[-1]
    J, _ = _j_and_slope(a1, an, w, H)
    lam = [a1 * w + 2.0 * an * (1.0 + J) * H] + [ai * w + 2.0 * an * J * H for ai in avals[1:]]
    return replace(report, residual=_phase_sum(lam, 1.0) - envelope.lower(s))


def solve_H(envelope: PhaseEnvelope, a: SpectrumLike, s: float, w: float) -> float:
    """Unique H >= 0 of the supersolution equation at (s, w), 0 < w <= w_over(s)."""
    return H_report(envelope, a, s, w).value


def dH_dw_limit(a: SpectrumLike) -> float:
    """d H / d w at (inf, 1), equal to -M(A)."""
    return -m_of_a(_positive_spectrum(a))


def dH_dw_finite_difference(
    envelope: PhaseEnvelope, a: SpectrumLike, s: float = 1e8, step: float = 1e-4
) -> float:
    """Backward second-order difference quotient of H in w at (s, w_over(s))."""
    avals = _positive_spectrum(a)
    phi0 = w_over_deviation(envelope, avals, s)
    values = [_H_from_deviation(envelope, avals, s, phi0 - k * step).value for k in range(3)]
    return (3.0 * values[0] - 4.0 * values[1] + values[2]) / (2.0 * step)
