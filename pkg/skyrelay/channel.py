# skyrelay/channel.py

"""
Channel statistics for the IoT->UAV, UAV->TBS and IoT->TBS links.

Every SNR law here is a finite mixture of Gamma(m, 1/m) fading components:
one component per (device-distance node, LoS state). A fixed distance
gives one node; a device uniform in a cluster disk gives a polar
Gauss-Legendre cubature over the disk, averaged as a mixture of CCDFs by
default or collapsed to the mean received power per LoS state. The CCDF is
the trusted object and the PDF is its numerical derivative.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple, Union

import numpy as np
from scipy import integrate, optimize, special

from skyrelay.exceptions import ChannelError
from skyrelay.geometry import DiskOffsetLaw
from skyrelay.params import LinkSpec

logger = logging.getLogger(__name__)

PROB_TOL = 1e-6
RATE_TOL = 1e-4
TAIL = 1e-7
LOG_CHUNK = 2.0

CUBATURE_RADIAL = 32
CUBATURE_ANGULAR = 32


@dataclass(frozen=True)
class Fixed:
    """Deterministic horizontal distance, e.g. UAV hover point to TBS."""

    R: float

    def __post_init__(self):
        if self.R < 0:
            raise ChannelError(f"distance must be >= 0, got {self.R}")


DistanceLaw = Union[Fixed, DiskOffsetLaw]


@dataclass(frozen=True)
class LinkTime:
    """Seconds per bit/Hz; ``capped`` when above the configured cap."""

    tau: float
    capped: bool

    def transmission_time(self, M_over_bw: float) -> float:
        return M_over_bw * self.tau


@dataclass(frozen=True)
class ThresholdResult:
    r_t: float
    attainable: bool
    residual: float
    rate_low: float
    rate_high: float


# ---------------------------------------------------------------------------
# LoS probability and mixture components
# ---------------------------------------------------------------------------


def los_probability(link: LinkSpec, r_horiz):
    """
    P_LoS from the elevation angle seen at horizontal distance ``r_horiz``;
    r_horiz = 0 is straight overhead (90 degrees). Returns P_LoS; P_NLoS is
    its complement.
    """
    if link.kind != "aerial":
        raise ChannelError("LoS probability is defined for aerial links only")
    r = np.asarray(r_horiz, dtype=float)
    if np.any(r < 0):
        raise ChannelError("horizontal distance must be >= 0")
    elevation = np.degrees(np.arctan2(link.h, r))
    p_los = 1.0 / (1.0 + link.los_a * np.exp(-link.los_b * (elevation - link.los_a)))
    return float(p_los) if np.ndim(r_horiz) == 0 else p_los


@lru_cache(maxsize=256)
def _distance_nodes(law: DistanceLaw) -> Tuple[np.ndarray, np.ndarray]:
    """Horizontal distance nodes and weights (sum 1) for ``law``."""
    if isinstance(law, Fixed):
        return np.array([law.R]), np.array([1.0])
    if law.r_c == 0.0:
        return np.array([law.R_center]), np.array([1.0])

    xr, wr = np.polynomial.legendre.leggauss(CUBATURE_RADIAL)
    xa, wa = np.polynomial.legendre.leggauss(CUBATURE_ANGULAR)
    rho = 0.5 * law.r_c * (xr + 1.0)
    w_rho = 0.5 * law.r_c * wr
    # half circle suffices: distance is symmetric in the polar angle
    phi = 0.5 * math.pi * (xa + 1.0)
    w_phi = 0.5 * math.pi * wa

    rho_g, phi_g = np.meshgrid(rho, phi, indexing="ij")
    dist = np.sqrt(
        law.R_center**2 + rho_g**2 + 2.0 * law.R_center * rho_g * np.cos(phi_g)
    )
    weights = 2.0 * np.outer(w_rho * rho, w_phi) / (math.pi * law.r_c**2)
    return dist.ravel(), weights.ravel()


def _state_mean(gain: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """One node carrying the weighted mean gain and the total weight."""
    total = float(weights.sum())
    if total <= 0:
        return np.empty(0), np.empty(0)
    return np.array([gain @ weights / total]), np.array([total])


@lru_cache(maxsize=256)
def _components(link: LinkSpec, law: DistanceLaw) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Flattened fading mixture: (probabilities p_j, shapes m_j, scales g_j)
    with P(SNR > gamma) = sum_j p_j * Q(m_j, m_j * g_j * gamma), where
    g = sigma2 / (rho * eta * D**-alpha).

    ``link.distance_average == "mean_power"`` collapses the device-distance
    nodes of each state into one node with the state's mean received power.
    """
    r, w = _distance_nodes(law)
    mean_power = link.distance_average == "mean_power"
    if link.kind == "ground":
        gain = link.rho_tx * np.power(np.maximum(r, 1e-9), -link.alpha_ground)
        if mean_power:
            gain, w = _state_mean(gain, w)
        return w, np.ones_like(w), link.sigma2 / gain

    D = np.hypot(r, link.h)
    p_los = los_probability(link, r)
    gain_l = link.rho_tx * link.eta_l * np.power(D, -link.alpha_l)
    gain_n = link.rho_tx * link.eta_n * np.power(D, -link.alpha_n)
    w_l, w_n = w * p_los, w * (1.0 - p_los)
    if mean_power:
        gain_l, w_l = _state_mean(gain_l, w_l)
        gain_n, w_n = _state_mean(gain_n, w_n)
    p = np.concatenate([w_l, w_n])
    m = np.concatenate([np.full_like(w_l, link.m_l), np.full_like(w_n, link.m_n)])
    g = link.sigma2 / np.concatenate([gain_l, gain_n])
    keep = p > 0
    return p[keep], m[keep], g[keep]


def _snr_range(link: LinkSpec, law: DistanceLaw) -> Tuple[float, float]:
    """gamma_lo with CCDF > 1 - 1e-6 and gamma_hi with CCDF < 1e-6."""
    p, m, g = _components(link, law)
    lo = special.gammaincinv(m, TAIL) / (m * g)
    hi = special.gammainccinv(m, TAIL) / (m * g)
    return float(np.min(lo)), float(np.max(hi))


# ---------------------------------------------------------------------------
# SNR law
# ---------------------------------------------------------------------------


def coverage_ccdf(link: LinkSpec, law: DistanceLaw, gamma):
    """P(SNR > gamma); scalar in, scalar out."""
    g_arr = np.asarray(gamma, dtype=float)
    if np.any(g_arr < 0):
        raise ChannelError("SNR threshold must be >= 0")
    p, m, g = _components(link, law)
    flat = np.atleast_1d(g_arr).ravel()
    tails = special.gammaincc(m[None, :], m[None, :] * g[None, :] * flat[:, None])
    out = np.clip(tails @ p, 0.0, 1.0).reshape(g_arr.shape)
    return float(out) if np.ndim(gamma) == 0 else out


def snr_pdf(link: LinkSpec, law: DistanceLaw, gamma: float) -> float:
    """
    f_SNR(gamma) as the central difference of the CCDF with step
    max(1e-4 * gamma, 1e-6); one-sided near zero.
    """
    if gamma <= 0:
        raise ChannelError(f"SNR density needs gamma > 0, got {gamma}")
    step = max(1e-4 * gamma, 1e-6)
    upper = gamma + step
    lower = max(gamma - step, 0.0)
    if upper == lower or upper == gamma:
        raise ChannelError(f"finite-difference step underflow at gamma={gamma}")
    c_lo, c_hi = coverage_ccdf(link, law, np.array([lower, upper]))
    return float((c_lo - c_hi) / (upper - lower))


def _log_quad(
    fn: Callable[[float], float], lo: float, hi: float, epsabs: float, what: str
) -> float:
    """
    Integral of fn over [lo, hi] computed in u = ln(gamma), split into
    chunks so narrow mixture bumps are not skipped.
    """
    if hi <= lo:
        return 0.0
    u_lo, u_hi = math.log(lo), math.log(hi)
    n_chunks = max(1, math.ceil((u_hi - u_lo) / LOG_CHUNK))
    edges = np.linspace(u_lo, u_hi, n_chunks + 1)
    total = 0.0
    err_total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        value, err = integrate.quad(
            lambda u: fn(math.exp(u)) * math.exp(u),
            a,
            b,
            epsabs=epsabs / n_chunks,
            epsrel=1e-8,
            limit=200,
        )
        total += value
        err_total += err
    if err_total > epsabs:
        logger.warning(
            "Quadrature for %s reached %.3g instead of %.3g",
            what,
            err_total,
            epsabs,
            extra={"quantity": what, "achieved_tol": err_total},
        )
    return total


def snr_mass(link: LinkSpec, law: DistanceLaw) -> float:
    """Integral of f_SNR over its effective support (should be 1)."""
    lo, hi = _snr_range(link, law)
    return _log_quad(lambda g: snr_pdf(link, law, g), lo, hi, PROB_TOL, "snr_mass")


def _inverse_rate(gamma):
    return math.log(2.0) / np.log1p(gamma)


@lru_cache(maxsize=4096)
def _link_time(link: LinkSpec, law: DistanceLaw, snr_floor: float, tau_cap: float) -> LinkTime:
    lo, hi = _snr_range(link, law)
    floor_cost = _inverse_rate(snr_floor)
    below_floor = 1.0 - coverage_ccdf(link, law, snr_floor)
    start = max(snr_floor, lo)
    tau = floor_cost * below_floor + _log_quad(
        lambda g: snr_pdf(link, law, g) * _inverse_rate(g),
        start,
        hi,
        RATE_TOL,
        "tau",
    )
    capped = tau > tau_cap
    if capped:
        logger.debug("Link time %.4g s per bit/Hz above cap %.4g", tau, tau_cap)
    return LinkTime(tau=float(tau), capped=capped)


def per_unit_transmission_time(
    link: LinkSpec, law: DistanceLaw, snr_floor: float = 1e-4, tau_cap: float = 50.0
) -> LinkTime:
    """
    Expected seconds to move one bit/Hz: E[1 / log2(1 + max(SNR, floor))].

    Deep fades below ``snr_floor`` are charged the floor rate. Results are
    memoised per (link, law), since planners revisit the same radii.
    """
    if snr_floor <= 0:
        raise ChannelError(f"snr_floor must be > 0, got {snr_floor}")
    return _link_time(link, law, float(snr_floor), float(tau_cap))


def expected_rate(link: LinkSpec, law: DistanceLaw) -> float:
    """E[log2(1 + SNR)] in bit/s/Hz."""
    lo, hi = _snr_range(link, law)
    return _log_quad(
        lambda g: snr_pdf(link, law, g) * math.log2(1.0 + g), lo, hi, RATE_TOL, "rate"
    )


def simulate_snr(
    link: LinkSpec, r_horiz: float | np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """
    ``n`` SNR draws at horizontal distance ``r_horiz`` (scalar or n-array):
    LoS state, then Gamma(m, 1/m) fading.
    """
    r = np.broadcast_to(np.asarray(r_horiz, dtype=float), (n,))
    if link.kind == "ground":
        fading = rng.exponential(1.0, size=n)
        return link.rho_tx * fading / (link.sigma2 * np.power(r, link.alpha_ground))

    D = np.hypot(r, link.h)
    los = rng.uniform(size=n) < los_probability(link, r)
    m = np.where(los, link.m_l, link.m_n)
    fading = rng.gamma(shape=m, scale=1.0 / m)
    alpha = np.where(los, link.alpha_l, link.alpha_n)
    eta = np.where(los, link.eta_l, link.eta_n)
    return link.rho_tx * eta * fading / (link.sigma2 * np.power(D, alpha))


# ---------------------------------------------------------------------------
# Cluster qualification
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def threshold_radius(
    link: LinkSpec,
    c_t: float,
    r_c: float,
    bracket: Tuple[float, float] = (1.0, 50_000.0),
) -> ThresholdResult:
    """
    Cluster-to-TBS distance x at which the expected direct rate of a
    cluster device equals c_t, by bisection on ``bracket``.

    Without a sign change the threshold is unattainable: r_t is the bracket
    end on the side the rate never reaches.
    """
    if c_t <= 0:
        raise ChannelError(f"rate threshold must be > 0, got {c_t}")

    def excess(x: float) -> float:
        return expected_rate(link, DiskOffsetLaw(R_center=x, r_c=r_c)) - c_t

    lo, hi = bracket
    f_lo, f_hi = excess(lo), excess(hi)
    rate_low, rate_high = f_lo + c_t, f_hi + c_t

    if f_lo < 0:
        logger.warning(
            "Rate threshold %.3g unattainable: rate at %.0f m is only %.4g",
            c_t,
            lo,
            rate_low,
            extra={"c_t": c_t, "rate_low": rate_low},
        )
        return ThresholdResult(lo, False, abs(f_lo), rate_low, rate_high)
    if f_hi > 0:
        logger.warning(
            "Rate threshold %.3g unattainable: rate at %.0f m is still %.4g",
            c_t,
            hi,
            rate_high,
            extra={"c_t": c_t, "rate_high": rate_high},
        )
        return ThresholdResult(hi, False, abs(f_hi), rate_low, rate_high)

    r_t = optimize.bisect(excess, lo, hi, xtol=1e-6, maxiter=200)
    residual = abs(excess(r_t))
    logger.info("Threshold radius %.2f m (residual %.2g)", r_t, residual)
    return ThresholdResult(float(r_t), True, residual, rate_low, rate_high)


def qualifying_cluster_density(lambda_i: float, lambda_t: float, r_t: float) -> float:
    """Density of clusters with no TBS within r_t (void probability thinning)."""
    return lambda_i * math.exp(-math.pi * lambda_t * r_t * r_t)
