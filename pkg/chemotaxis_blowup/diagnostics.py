"""Per-step observables, maximum-principle monitoring and blow-up detection."""

import logging
import math
from dataclasses import astuple, dataclass, fields
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np

from .grid import ScalarField, gradient_sq, integrate, linf_norm
from .model import MaxBounds

if TYPE_CHECKING:
    from .solver import SimState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of the diagnostics table; field order is the CSV column order."""

    step: int
    t: float
    mass_u: float
    linf_u: float
    linf_v: float
    linf_w: float
    psi: float
    grad_v4: float
    grad_w2: float
    bound_violation: bool
    cfl_violation: bool

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> tuple:
        return astuple(self)

    def is_finite(self) -> bool:
        return all(math.isfinite(x) for x in (self.mass_u, self.linf_u, self.linf_v,
                                              self.linf_w, self.psi, self.grad_v4, self.grad_w2))


def field_components(u: ScalarField, v: ScalarField, w: ScalarField) -> Tuple[float, float, float]:
    """(integral of u^2, integral of |grad v|^4, integral of |grad w|^2)."""
    u2 = integrate(u.like(u.data ** 2))
    grad_v4 = integrate(v.like(gradient_sq(v).data ** 2))
    grad_w2 = integrate(gradient_sq(w))
    return u2, grad_v4, grad_w2


def psi_from_fields(u: ScalarField, v: ScalarField, w: ScalarField, tau: int) -> float:
    if tau == 0:
        return integrate(u.like(u.data ** 2))
    u2, grad_v4, grad_w2 = field_components(u, v, w)
    return u2 + grad_v4 + grad_w2


def psi_components(state: "SimState") -> Tuple[float, float, float]:
    return field_components(state.u, state.v, state.w)


def psi_tau(state: "SimState", tau: int) -> float:
    """Blow-up functional: int u^2 + tau int |grad v|^4 + tau int |grad w|^2."""
    value = psi_from_fields(state.u, state.v, state.w, tau)
    if not math.isfinite(value):
        logger.debug(f"psi is non-finite at step {state.step}")
    return value


def record_diagnostics(state: "SimState", tau: int, bound_violation: bool = False,
                       cfl_violation: bool = False) -> DiagnosticsRecord:
    u2, grad_v4, grad_w2 = psi_components(state)
    psi = u2 if tau == 0 else u2 + grad_v4 + grad_w2
    return DiagnosticsRecord(
        step=state.step,
        t=state.t,
        mass_u=integrate(state.u),
        linf_u=linf_norm(state.u),
        linf_v=linf_norm(state.v),
        linf_w=linf_norm(state.w),
        psi=psi,
        grad_v4=grad_v4,
        grad_w2=grad_w2,
        bound_violation=bool(bound_violation),
        cfl_violation=bool(cfl_violation),
    )


@dataclass(frozen=True)
class BoundViolation:
    violated: bool
    v_max: float
    w_max: float
    negative: Tuple[str, ...] = ()


def bound_monitor(state: "SimState", bounds: MaxBounds, tol: float) -> BoundViolation:
    """Flag v above m3, w above m2 (relative ``tol``) and significantly negative values."""
    v_max = state.v.max()
    w_max = state.w.max()
    violated = v_max > bounds.m3 * (1.0 + tol) or w_max > bounds.m2 * (1.0 + tol)
    negative = []
    for name, f in (("u", state.u), ("v", state.v), ("w", state.w)):
        if f.min() < -tol * max(1.0, f.max()):
            negative.append(name)
    if negative:
        violated = True
    if violated:
        logger.debug(f"bound monitor at step {state.step}: max v {v_max:.6g} (m3 {bounds.m3:.6g}), "
                     f"max w {w_max:.6g} (m2 {bounds.m2:.6g}), negative {negative}")
    return BoundViolation(bool(violated), v_max, w_max, tuple(negative))


@dataclass(frozen=True)
class BlowupReport:
    step: int
    time: float
    linf_u: float
    linf_u_ratio: float
    psi_ratio: float


def _ratio(final: float, initial: float) -> float:
    if not math.isfinite(final):
        return math.inf
    if initial == 0:
        return math.inf if final > 0 else 1.0
    return final / initial


def detect_blowup(records: Sequence[DiagnosticsRecord], threshold: float) -> Optional[BlowupReport]:
    """First record whose ||u||_inf exceeds ``threshold`` or that carries a non-finite value."""
    if not records:
        return None
    first = records[0]
    for rec in records:
        if rec.is_finite() and not rec.linf_u > threshold:
            continue
        return BlowupReport(step=rec.step, time=rec.t, linf_u=rec.linf_u,
                            linf_u_ratio=_ratio(rec.linf_u, first.linf_u),
                            psi_ratio=_ratio(rec.psi, first.psi))
    return None


def mass_drift(records: Sequence[DiagnosticsRecord]) -> Tuple[float, float]:
    """(largest relative change of mass between consecutive records, total relative change).

    Only the leading run of finite records is considered. With zero initial
    mass the changes are absolute.
    """
    masses = []
    for rec in records:
        if not math.isfinite(rec.mass_u):
            break
        masses.append(rec.mass_u)
    if len(masses) < 2:
        return 0.0, 0.0
    m = np.asarray(masses)
    scale = abs(m[0]) if m[0] != 0 else 1.0
    per_step = float(np.max(np.abs(np.diff(m)))) / scale
    cumulative = float(abs(m[-1] - m[0])) / scale
    return per_step, cumulative
