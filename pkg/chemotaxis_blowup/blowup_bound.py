"""
Lower bound for the blow-up time.

Along a solution that explodes, the functional Psi obeys the differential inequality

    Psi' <= A Psi^3 + B Psi^(3/2) + C Psi^tau,

so the explosion time is at least the integral of the reciprocal of the right-hand
side from Psi(0) to infinity. The constants A, B, C come from a Sobolev-type
inequality on convex domains star-shaped with respect to the origin, whose own
constants depend only on rho = min over the boundary of x.nu and d = max |x|.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Tuple

from .diagnostics import psi_from_fields
from .errors import GeometryError, SolverError
from .grid import Grid, GridSpec, gradient_sq, integrate
from .model import InitialData, MaxBounds, ModelParams, max_bounds

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-11
TAIL_FRACTION = 1e-12
MAX_SEGMENTS = 4000
DATA_REGULARITY_Q = 4


class PayneConstants(NamedTuple):
    a1: float
    a2: float
    a3: float


class ScriptConstants(NamedTuple):
    script_a: float
    script_b: float
    script_c: float


def geometry_constants(box: GridSpec) -> Tuple[float, float]:
    """(rho, d) for an axis-aligned box.

    Raises:
        GeometryError: if the origin is not strictly inside the box.
    """
    for axis in range(3):
        if not box.lo[axis] < 0.0 < box.hi[axis]:
            raise GeometryError(
                f"origin must lie strictly inside the box, axis {axis} spans "
                f"[{box.lo[axis]}, {box.hi[axis]}]")
    # x.nu on the face x_i = hi[i] is hi[i], on x_i = lo[i] it is -lo[i]
    rho = min(min(-box.lo[i], box.hi[i]) for i in range(3))
    dmax = max(math.sqrt(x * x + y * y + z * z)
               for x in (box.lo[0], box.hi[0])
               for y in (box.lo[1], box.hi[1])
               for z in (box.lo[2], box.hi[2]))
    return float(rho), float(dmax)


def payne_constants(rho: float, dmax: float) -> PayneConstants:
    if not rho > 0:
        raise GeometryError(f"rho must be positive, got {rho}")
    stretch = (1.0 + dmax / rho) ** 1.5
    a1 = 3.0 ** 1.5 / (2.0 * rho ** 1.5)
    a2 = 27.0 / 4.0 ** 3.75 * stretch
    a3 = math.sqrt(2.0) * stretch
    return PayneConstants(a1, a2, a3)


def payne_inequality_check(f, eps: float, consts: PayneConstants) -> bool:
    """Evaluate ``int f^3 <= A1 (int f^2)^(3/2) + A2/eps^3 (int f^2)^3 + A3 eps int |grad f|^2``.

    Returns True when the left side is within a relative 1e-6 of the right side or below.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if f.min() < 0:
        raise ValueError(f"f must be nonnegative (min {f.min()})")
    l2 = integrate(f.like(f.data ** 2))
    lhs = integrate(f.like(f.data ** 3))
    rhs = (consts.a1 * l2 ** 1.5 + consts.a2 / eps ** 3 * l2 ** 3
           + consts.a3 * eps * integrate(gradient_sq(f)))
    return lhs <= rhs * (1.0 + 1e-6)


def script_constants(params: ModelParams, bounds: MaxBounds, payne: PayneConstants,
                     omega_vol: float) -> ScriptConstants:
    """Coefficients of the differential inequality for Psi in either regime."""
    a1, a2, a3 = payne
    chi, alpha = params.chi, params.alpha
    if params.tau == 1:
        s = alpha + 4.0 * (params.gamma * bounds.m3) ** 2
        chi2, chi8 = chi ** 2, chi ** 8
        # chi^8 max{1, x + y/chi^8} written without dividing by chi
        script_a = 2.0 ** 7 * a2 * a3 ** 3 * max(chi8, chi8 * 2.0 ** 8 / 3.0 ** 12 + 2.0 ** 4 * s ** 4 / 5.0 ** 3)
        script_b = 2.0 * a1 * max(chi2, chi2 * 4.0 / 27.0 + 2.0 * s)
        script_c = alpha + 4.0 * (params.delta * bounds.m2) ** 2 + 2.0 * params.mu
    else:
        if chi <= 0:
            raise ValueError("chi must be positive for the elliptic-regime constants")
        script_a = a2 * a3 ** 3 / 8.0
        script_b = a1
        script_c = 4.0 * bounds.m2 ** 3 * omega_vol / (27.0 * chi * alpha)
    return ScriptConstants(float(script_a), float(script_b), float(script_c))


def differential_rhs(psi: float, consts: ScriptConstants, tau: int) -> float:
    a, b, c = consts
    return a * psi ** 3 + b * psi ** 1.5 + c * psi ** tau


# ---------------------------------------------------------------------------
# Quadrature

def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     rtol: float = DEFAULT_RTOL, max_depth: int = 50) -> float:
    """Adaptive Simpson rule with Richardson correction, driven by an explicit stack.

    The tolerance is relative to the first Simpson estimate over ``[a, b]`` and
    is split evenly between the two halves at each bisection.
    """
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    pieces: List[float] = []
    stack = [(a, b, fa, fm, fb, whole, rtol * abs(whole), 0)]
    saturated = False
    while stack:
        lo, hi, flo, fmid, fhi, estimate, tol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - estimate
        if abs(delta) <= 15.0 * tol or depth >= max_depth:
            saturated = saturated or depth >= max_depth
            pieces.append(left + right + delta / 15.0)
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * tol, depth + 1))
    if saturated:
        logger.warning(f"adaptive Simpson hit depth {max_depth} on [{a:g}, {b:g}]")
    return math.fsum(pieces)


def lower_bound_time(psi0: float, consts: ScriptConstants, tau: int,
                     rtol: float = DEFAULT_RTOL) -> float:
    """Integral of ``1 / differential_rhs`` from ``psi0`` to infinity.

    The range is covered by doubling segments ``[c, 2c]`` until the analytic tail
    bound beyond ``c`` drops below ``1e-12`` of the partial integral; the tail bound
    is then added.

    Raises:
        ValueError: psi0 <= 0, a negative constant, or script_a = script_b = 0
            (the integral would diverge).
    """
    a, b, c = consts
    if not psi0 > 0:
        raise ValueError(f"psi0 must be positive, got {psi0}")
    if min(a, b, c) < 0:
        raise ValueError(f"script constants must be nonnegative, got {tuple(consts)}")
    if a <= 0 and b <= 0:
        raise ValueError("script_a must be positive (script_b alone is also accepted); "
                         "otherwise the integral diverges")

    def integrand(psi: float) -> float:
        return 1.0 / differential_rhs(psi, consts, tau)

    def tail(cut: float) -> float:
        if a > 0:
            return 1.0 / (2.0 * a * cut ** 2)
        return 2.0 / (b * math.sqrt(cut))

    partial: List[float] = []
    cut = psi0
    for _ in range(MAX_SEGMENTS):
        partial.append(adaptive_simpson(integrand, cut, 2.0 * cut, rtol=rtol))
        cut *= 2.0
        total = math.fsum(partial)
        remainder = tail(cut)
        if remainder < TAIL_FRACTION * total:
            logger.debug(f"lower bound: {len(partial)} segments, cut {cut:.3e}, tail {remainder:.3e}")
            return total + remainder
    raise SolverError("lower-bound integral tail did not become negligible",
                      residual=tail(cut), iterations=MAX_SEGMENTS)


# ---------------------------------------------------------------------------
# End to end

@dataclass(frozen=True)
class BoundConstants:
    rho: float
    dmax: float
    a1: float
    a2: float
    a3: float
    script_a: float
    script_b: float
    script_c: float
    tau: int
    psi0: float
    t_lower: float
    params: ModelParams = field(compare=False, default=None)
    psi0_refined: Optional[float] = None
    t_lower_refined: Optional[float] = None

    def to_report(self) -> dict:
        report = {
            "rho": self.rho,
            "d": self.dmax,
            "A1": self.a1,
            "A2": self.a2,
            "A3": self.a3,
            "scriptA": self.script_a,
            "scriptB": self.script_b,
            "scriptC": self.script_c,
            "psi0": self.psi0,
            "t_lower": self.t_lower,
            "tau": self.tau,
            "q": DATA_REGULARITY_Q,
            "parameters": None if self.params is None else {
                "chi": self.params.chi, "alpha": self.params.alpha, "beta": self.params.beta,
                "gamma": self.params.gamma, "delta": self.params.delta, "mu": self.params.mu,
                "tau": self.params.tau,
            },
        }
        if self.psi0_refined is not None:
            report["psi0_refined"] = self.psi0_refined
            report["t_lower_refined"] = self.t_lower_refined
        return report


def initial_psi(data: InitialData, tau: int) -> float:
    """Psi at t = 0 from the discrete initial data."""
    return psi_from_fields(data.u0, data.v0, data.w0, tau)


def evaluate_bound(params: ModelParams, data: InitialData, grid: Optional[Grid] = None,
                   tau: Optional[int] = None, refined_data: Optional[InitialData] = None) -> BoundConstants:
    """Geometry, inequality constants, Psi(0) and the lower bound in one record.

    Args:
        params: Model coefficients.
        data: Initial data on the simulation grid.
        grid: Simulation grid (defaults to the data's grid).
        tau: Regime override (defaults to ``params.tau``).
        refined_data: The same initial data sampled on a refined grid; when given,
            Psi(0) and the bound are recomputed on it for comparison.
    """
    grid = grid or data.grid
    if tau is not None and tau != params.tau:
        params = replace(params, tau=tau)
    tau = params.tau

    rho, dmax = geometry_constants(grid.spec)
    payne = payne_constants(rho, dmax)
    bounds = max_bounds(params, data)
    consts = script_constants(params, bounds, payne, grid.volume)
    psi0 = initial_psi(data, tau)
    t_lower = lower_bound_time(psi0, consts, tau)
    logger.info(f"Blow-up time lower bound {t_lower:.6g} (psi0 {psi0:.6g}, tau {tau})")

    psi0_refined = t_lower_refined = None
    if refined_data is not None:
        psi0_refined = initial_psi(refined_data, tau)
        t_lower_refined = lower_bound_time(psi0_refined, consts, tau)
        logger.info(f"Refined grid: psi0 {psi0_refined:.6g}, lower bound {t_lower_refined:.6g}")

    return BoundConstants(rho=rho, dmax=dmax, a1=payne.a1, a2=payne.a2, a3=payne.a3,
                          script_a=consts.script_a, script_b=consts.script_b,
                          script_c=consts.script_c, tau=tau, psi0=psi0, t_lower=t_lower,
                          params=params, psi0_refined=psi0_refined, t_lower_refined=t_lower_refined)
