"""
Model parameters, initial data and the analytic side of the boundedness theory.

The certificate part evaluates the auxiliary weight

    phi(x) = exp(zeta(x)),  0 <= x <= K,

with zeta built from the tangent of an affine argument. zeta is evaluated in
closed form through the log-cosine antiderivative, so no quadrature tolerance
enters the certificate path.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .grid import Grid, ScalarField, integrate, linf_norm

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the tumor-immune chemotaxis system and the regime selector tau."""

    chi: float
    alpha: float
    beta: float
    gamma: float
    delta: float
    mu: float
    tau: int = 1

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta", "mu"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value}")
        # chi = 0 switches chemotaxis off (pure reaction-diffusion reference runs)
        if not (math.isfinite(self.chi) and self.chi >= 0):
            raise ValueError(f"chi must be nonnegative and finite, got {self.chi}")
        if self.tau not in (0, 1):
            raise ValueError(f"tau must be 0 or 1, got {self.tau}")


@dataclass(frozen=True)
class InitialData:
    """Initial lymphocyte density u0, chemical v0 and tumor density w0 (all nonnegative)."""

    u0: ScalarField
    v0: ScalarField
    w0: ScalarField

    def __post_init__(self):
        grid = self.u0.grid
        for name in ("u0", "v0", "w0"):
            f = getattr(self, name)
            if f.grid != grid:
                raise ValueError(f"{name} lives on {f.grid}, u0 on {grid}")
            if not f.is_finite():
                raise ValueError(f"{name} contains non-finite values")
            if f.min() < 0:
                raise ValueError(f"{name} must be nonnegative (min {f.min()})")

    @property
    def grid(self) -> Grid:
        return self.u0.grid


@dataclass(frozen=True)
class MaxBounds:
    """Initial mass m1 and the maximum-principle ceilings m2 (for w) and m3 (for v)."""

    m1: float
    m2: float
    m3: float


def gaussian_data(grid: Grid, amplitude: float, rate: float,
                  center: Sequence[float] = (0.0, 0.0, 0.0)) -> ScalarField:
    """Nodewise ``amplitude * exp(-rate * |x - center|^2)``."""
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    if rate <= 0:
        raise ValueError(f"rate must be > 0, got {rate}")
    x, y, z = grid.coordinates()
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
    return ScalarField(grid, amplitude * np.exp(-rate * r2))


def constant_data(grid: Grid, value: float) -> ScalarField:
    return grid.full(value)


def load_field_file(grid: Grid, path: Union[str, Path]) -> ScalarField:
    """Read a ``.npy`` array or a raw little-endian float64 file of the grid's size."""
    path = Path(path)
    if path.suffix == ".npy":
        values = np.load(path)
    else:
        values = np.fromfile(path, dtype="<f8")
    return ScalarField(grid, values)


def max_bounds(params: ModelParams, data: InitialData) -> MaxBounds:
    """Initial mass and the elliptic/parabolic maximum-principle bounds."""
    tau = params.tau
    m1 = integrate(data.u0)
    m2 = max(1.0, tau * linf_norm(data.w0))
    m3 = max(params.alpha / params.beta * m2, tau * linf_norm(data.v0))
    return MaxBounds(m1=m1, m2=m2, m3=m3)


# ---------------------------------------------------------------------------
# Auxiliary function phi and the boundedness certificate

def phi_condition_bound(p: float, eps: float) -> float:
    """Right-hand side of the smallness condition on K for given (p, eps)."""
    s = 1.0 + (p - 1.0) * eps - p * eps ** 2
    return (2.0 / math.sqrt(p) * math.sqrt((1.0 - eps) / (1.0 + p * eps))
            * (math.pi / 2.0 + math.atan(math.sqrt(p / s) * eps)))


@dataclass(frozen=True)
class PhiCertificate:
    """Coefficients of zeta for exponent ``p``, splitting ``eps`` and range ``[0, K]``."""

    p: float
    eps: float
    K: float
    k: float
    l: float
    m: float
    r: float
    satisfied: bool

    @classmethod
    def build(cls, p: float, eps: float, K: float) -> "PhiCertificate":
        if not p > 1:
            raise ValueError(f"p must exceed 1, got {p}")
        if not 0 < eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {eps}")
        if not K > 0:
            raise ValueError(f"K must be positive, got {K}")
        k = (p - 1.0) ** 2
        l = -4.0 * (p - 1.0) * eps
        m = 4.0 / p * (1.0 + (p - 1.0) * eps)
        r = 4.0 / p * (p - 1.0) * (1.0 - eps)
        return cls(p=p, eps=eps, K=K, k=k, l=l, m=m, r=r,
                   satisfied=K < phi_condition_bound(p, eps))

    @property
    def discriminant(self) -> float:
        """4km - l^2, positive for every p > 1 and eps in (0, 1)."""
        return 4.0 * self.k * self.m - self.l ** 2

    @property
    def slope(self) -> float:
        return math.sqrt(self.discriminant) / (2.0 * self.r)

    @property
    def offset(self) -> float:
        return math.atan(self.l / math.sqrt(self.discriminant))

    def tangent_argument(self, x: ArrayLike) -> ArrayLike:
        return self.slope * np.asarray(x, dtype=float) + self.offset


def _check_domain(x: ArrayLike, cert: PhiCertificate) -> np.ndarray:
    if not cert.satisfied:
        raise ValueError(
            f"certificate (p={cert.p}, eps={cert.eps}) violates the K condition: "
            f"K={cert.K} >= {phi_condition_bound(cert.p, cert.eps)}")
    xs = np.asarray(x, dtype=float)
    slack = 1e-12 * max(1.0, cert.K)
    if np.any(xs < -slack) or np.any(xs > cert.K + slack):
        raise ValueError(f"x must lie in [0, K] = [0, {cert.K}]")
    return np.clip(xs, 0.0, cert.K)


def _scalar_or_array(values: np.ndarray, x: ArrayLike) -> ArrayLike:
    return float(values) if np.ndim(x) == 0 else values


def zeta(x: ArrayLike, cert: PhiCertificate) -> ArrayLike:
    """Closed form: -(l/2m) x + (r/m) ln(cos b / cos(a x + b))."""
    xs = _check_domain(x, cert)
    b = cert.offset
    arg = cert.tangent_argument(xs)
    values = -cert.l / (2.0 * cert.m) * xs + cert.r / cert.m * (np.log(np.cos(b)) - np.log(np.cos(arg)))
    return _scalar_or_array(values, x)


def zeta_prime(x: ArrayLike, cert: PhiCertificate) -> ArrayLike:
    xs = _check_domain(x, cert)
    values = (-cert.l / (2.0 * cert.m)
              + math.sqrt(cert.discriminant) / (2.0 * cert.m) * np.tan(cert.tangent_argument(xs)))
    return _scalar_or_array(values, x)


def zeta_second(x: ArrayLike, cert: PhiCertificate) -> ArrayLike:
    """Riccati form (m zeta'^2 + l zeta' + k) / r."""
    zp = np.asarray(zeta_prime(x, cert))
    values = (cert.m * zp ** 2 + cert.l * zp + cert.k) / cert.r
    return _scalar_or_array(values, x)


def phi(x: ArrayLike, cert: PhiCertificate) -> ArrayLike:
    return _scalar_or_array(np.exp(np.asarray(zeta(x, cert))), x)


def phi_prime(x: ArrayLike, cert: PhiCertificate) -> ArrayLike:
    values = np.exp(np.asarray(zeta(x, cert))) * np.asarray(zeta_prime(x, cert))
    return _scalar_or_array(values, x)


def phi_second(x: ArrayLike, cert: PhiCertificate) -> ArrayLike:
    zp = np.asarray(zeta_prime(x, cert))
    values = np.exp(np.asarray(zeta(x, cert))) * (np.asarray(zeta_second(x, cert)) + zp ** 2)
    return _scalar_or_array(values, x)


@dataclass(frozen=True)
class PhiPropertyReport:
    """Worst cases of the phi properties over a sample of [0, K].

    ``concavity_min`` and ``identity_residual`` are divided by phi(x), and
    ``phi_max_excess`` by phi(K), so they compare across certificates whose
    phi(K) differ by many orders of magnitude.
    ``identity_residual_abs`` is the unscaled
    ``max ||(p-1)phi - 2phi'| - 2 sqrt((p-1)(1-eps) phi ((1/p)phi'' - phi'))|``,
    meaningful where phi(K) is moderate.
    """

    samples: int
    phi_k: float
    phi_min_minus_one: float
    phi_max_excess: float
    phi_prime_min: float
    concavity_min: float
    identity_residual: float
    identity_residual_abs: float

    def holds(self, identity_tol: float = 1e-8, inequality_tol: float = 1e-10) -> bool:
        return (self.phi_min_minus_one >= -inequality_tol
                and self.phi_max_excess <= inequality_tol
                and self.phi_prime_min >= -inequality_tol
                and self.concavity_min >= -inequality_tol
                and self.identity_residual <= identity_tol)


def verify_phi_properties(cert: PhiCertificate, samples: int = 1000) -> PhiPropertyReport:
    """Check bounds, monotonicity, (1/p)phi'' - phi' >= 0 and the vanishing-gap identity.

    zeta'' is taken from its secant form here, independently of the Riccati
    form used by :func:`zeta_second`. The identity
    ``|(p-1)phi - 2phi'| = 2 sqrt((p-1)(1-eps) phi ((1/p)phi'' - phi'))`` is
    compared squared, relative to ``1 + ((p-1) - 2 zeta')^2``.
    """
    xs = np.linspace(0.0, cert.K, samples)
    z = np.asarray(zeta(xs, cert))
    zp = np.asarray(zeta_prime(xs, cert))
    zpp = cert.discriminant / (4.0 * cert.m * cert.r) / np.cos(cert.tangent_argument(xs)) ** 2
    values = np.exp(z)
    phi_k = float(np.exp(zeta(cert.K, cert)))

    # phi'/phi = zeta', phi''/phi = zeta'' + zeta'^2
    concavity = (zpp + zp ** 2) / cert.p - zp
    gap_sq = ((cert.p - 1.0) - 2.0 * zp) ** 2
    identity = np.abs(gap_sq - 4.0 * (cert.p - 1.0) * (1.0 - cert.eps) * concavity) / (1.0 + gap_sq)
    root = 2.0 * np.sqrt((cert.p - 1.0) * (1.0 - cert.eps) * np.maximum(concavity, 0.0))
    identity_abs = values * np.abs(np.abs((cert.p - 1.0) - 2.0 * zp) - root)

    report = PhiPropertyReport(
        samples=samples,
        phi_k=phi_k,
        phi_min_minus_one=float(values.min() - 1.0),
        phi_max_excess=float((values.max() - phi_k) / phi_k),
        phi_prime_min=float((values * zp).min()),
        concavity_min=float(concavity.min()),
        identity_residual=float(identity.max()),
        identity_residual_abs=float(identity_abs.max()),
    )
    logger.debug(f"phi properties for p={cert.p}, eps={cert.eps}, K={cert.K}: {report}")
    return report


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of the global-boundedness smallness check."""

    tau: int
    n: int
    K: float
    threshold: float
    margin: float
    passed: bool
    eps: Optional[float] = None
    certificate: Optional[PhiCertificate] = None
    reason: str = ""
    properties: Optional[PhiPropertyReport] = field(default=None, compare=False)


def certificate_exponent(n: int, eps: float, K: float, max_halvings: int = 60) -> PhiCertificate:
    """Certificate with p just above n/2: start at n/2 + 1/10, halve the excess until it holds."""
    excess = 0.1
    cert = PhiCertificate.build(n / 2.0 + excess, eps, K)
    for _ in range(max_halvings):
        if cert.satisfied:
            break
        excess /= 2.0
        cert = PhiCertificate.build(n / 2.0 + excess, eps, K)
    return cert


def boundedness_certificate(params: ModelParams, data: InitialData, n: int = 3) -> CertificateReport:
    """Smallness condition for uniform-in-time boundedness, with the supporting phi certificate."""
    if n < 3:
        raise ValueError(f"the certificate needs space dimension n >= 3, got {n}")
    ratio = params.alpha / params.beta
    branch = max(ratio, ratio * linf_norm(data.w0), linf_norm(data.v0))
    K = params.chi * branch
    threshold = math.pi * math.sqrt(2.0 / n)
    margin = K - threshold

    if params.tau == 0:
        return CertificateReport(tau=0, n=n, K=K, threshold=threshold, margin=margin, passed=True,
                                 reason="elliptic regime: smallness condition holds for any data")
    if not K < threshold:
        return CertificateReport(tau=1, n=n, K=K, threshold=threshold, margin=margin, passed=False,
                                 reason=f"K = chi*M3 = {K:.6g} >= pi*sqrt(2/n) = {threshold:.6g}")

    half_n = n / 2.0
    eps = (math.pi ** 2 - half_n * K ** 2) / (2.0 * (math.pi ** 2 + half_n ** 2 * K ** 2))
    if K == 0:
        # chi = 0: no chemotaxis, nothing to certify beyond the trivial weight
        return CertificateReport(tau=1, n=n, K=K, threshold=threshold, margin=margin, passed=True,
                                 eps=eps, reason="chi = 0: no chemotactic drift")
    cert = certificate_exponent(n, eps, K)
    if not cert.satisfied:
        return CertificateReport(tau=1, n=n, K=K, threshold=threshold, margin=margin, passed=False,
                                 eps=eps, certificate=cert,
                                 reason="no exponent p > n/2 satisfies the phi condition")
    return CertificateReport(tau=1, n=n, K=K, threshold=threshold, margin=margin, passed=True,
                             eps=eps, certificate=cert, properties=verify_phi_properties(cert),
                             reason="smallness condition holds")
