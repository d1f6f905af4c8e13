"""Data-driven robust QoS machinery for spectrum reuse.

The AV protection constraint  p_av*g_av/gamma - p_link*g_x >= sigma2  must
hold for an uncertain gain pair (g_av, g_x). From D forecast samples we learn
an ellipsoid {center + B u : |u| <= 1} that covers at least a 1-eps fraction
of the sample law, then enforce the constraint on the whole ellipsoid, which
collapses to the second-order-cone test  q.center - |q.B| >= sigma2  with
q = (p_av/gamma, -p_link). BS legs use plain empirical lower-quantile gains
with the outage budget split evenly between the two legs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class RobustError(ValueError):
    pass


@dataclass(frozen=True)
class UncertaintySet:
    center: np.ndarray  # (d,)
    cov: np.ndarray  # (d, d) biased sample covariance, regularized if needed
    size: float  # squared Mahalanobis radius z_e
    shape: np.ndarray  # B with B @ B.T == size * cov

    @property
    def dim(self) -> int:
        return self.center.shape[0]


def nominal_set(center) -> UncertaintySet:
    """Zero-uncertainty set centered at the sample mean (non-robust baseline)."""
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    return UncertaintySet(center=center, cov=np.zeros((d, d)), size=0.0, shape=np.zeros((d, d)))


def _regularized_cholesky(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = cov.shape[0]
    delta = 1e-12 * np.trace(cov) / d
    if delta <= 0.0:
        delta = 1e-12
    attempt = cov.copy()
    for _ in range(40):
        try:
            return np.linalg.cholesky(attempt), attempt
        except np.linalg.LinAlgError:
            attempt = attempt + delta * np.eye(d)
            delta *= 10.0
    raise RobustError("covariance cannot be regularized to positive definite")


def learn_uncertainty_set(samples: np.ndarray, epsilon: float) -> UncertaintySet:
    """Ellipsoid from samples: mean center, covariance shape, quantile size.

    The size z_e is the ceil((1-eps)*D)-th smallest squared Mahalanobis
    distance of the samples, so the ellipsoid covers at least a 1-eps
    fraction of the training set by construction.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise RobustError("need a (D, d) sample array with D >= 2")
    if not 0.0 < epsilon < 1.0:
        raise RobustError("epsilon must be in (0, 1)")
    d_count = samples.shape[0]
    center = samples.mean(axis=0)
    resid = samples - center
    cov = resid.T @ resid / d_count
    if not np.isfinite(cov).all():
        raise RobustError("samples contain non-finite values")

    resid_scale = float(np.abs(resid).max())
    data_scale = float(np.abs(samples).max())
    if resid_scale <= 1e-15 * data_scale:  # all samples equal, at any magnitude
        t_vals = np.zeros(d_count)
        eps_diag = max(data_scale, 1.0) ** 2 * 1e-24
        cov_reg = cov + eps_diag * np.eye(samples.shape[1])
        chol = np.linalg.cholesky(cov_reg)
    else:
        chol, cov_reg = _regularized_cholesky(cov)
        # t_l = r_l^T cov^-1 r_l via triangular solves
        y = np.linalg.solve(chol, resid.T)
        t_vals = np.sum(y * y, axis=0)

    k_star = math.ceil((1.0 - epsilon) * d_count)
    k_star = min(max(k_star, 1), d_count)
    z_e = float(max(np.sort(t_vals)[k_star - 1], 0.0))
    shape = math.sqrt(z_e) * chol
    return UncertaintySet(center=center, cov=cov_reg, size=z_e, shape=shape)


def training_coverage(uset: UncertaintySet, samples: np.ndarray) -> float:
    """Fraction of samples inside the ellipsoid (Mahalanobis distance <= size)."""
    samples = np.asarray(samples, dtype=float)
    resid = samples - uset.center
    y = np.linalg.solve(np.linalg.cholesky(uset.cov), resid.T)
    t_vals = np.sum(y * y, axis=0)
    return float(np.mean(t_vals <= uset.size * (1.0 + 1e-12) + 1e-15))


def soc_margin(
    p_av: float, p_link: float, uset: UncertaintySet, gamma_v_th: float, sigma2: float
) -> float:
    """Worst-case slack of the AV constraint over the ellipsoid; >= 0 is feasible."""
    q = np.array([p_av / gamma_v_th, -p_link])
    return float(q @ uset.center - np.linalg.norm(q @ uset.shape) - sigma2)


def soc_feasible(
    p_av: float, p_link: float, uset: UncertaintySet, gamma_v_th: float, sigma2: float
) -> bool:
    return soc_margin(p_av, p_link, uset, gamma_v_th, sigma2) >= 0.0


def max_link_power(
    p_av: float,
    uset: UncertaintySet,
    gamma_v_th: float,
    sigma2: float,
    cap: float = math.inf,
) -> float:
    """Largest p_link in [0, cap] keeping the robust AV constraint feasible.

    The margin is concave in p_link, so the feasible region is an interval
    anchored at 0 whenever the AV is protectable at all. Isolating the norm
    and squaring gives a quadratic whose roots are validated against the
    pre-squaring sign condition; a guarded bisection backs up degenerate
    configurations.
    """
    if uset.dim != 2:
        raise RobustError("link power search needs a 2-D uncertainty set")
    if p_av < 0:
        raise RobustError("p_av must be >= 0")

    def margin(p):
        return soc_margin(p_av, p, uset, gamma_v_th, sigma2)

    if margin(0.0) < 0.0:
        return 0.0
    if cap != math.inf and margin(cap) >= 0.0:
        return cap

    c = p_av / gamma_v_th
    g1, g2 = uset.center
    b1 = uset.shape[0, :]
    b2 = uset.shape[1, :]
    alpha = c * g1 - sigma2  # linear part: alpha - g2*p
    a_q = g2 * g2 - float(b2 @ b2)
    b_q = -2.0 * (alpha * g2 - c * float(b1 @ b2))
    c_q = alpha * alpha - c * c * float(b1 @ b1)

    scale = max(abs(alpha), sigma2, 1e-300)
    candidates: list[float] = []
    if abs(a_q) > 1e-14 * max(g2 * g2, float(b2 @ b2), 1e-300):
        disc = b_q * b_q - 4.0 * a_q * c_q
        if disc >= 0.0:
            sq = math.sqrt(disc)
            candidates += [(-b_q - sq) / (2.0 * a_q), (-b_q + sq) / (2.0 * a_q)]
    elif abs(b_q) > 0.0:
        candidates.append(-c_q / b_q)

    best = 0.0
    for p in candidates:
        if not math.isfinite(p) or p < 0.0:
            continue
        if alpha - g2 * p < -1e-9 * scale:  # spurious root from squaring
            continue
        if abs(margin(p)) > 1e-6 * scale:
            continue
        best = max(best, p)

    if best == 0.0:
        # degenerate quadratic; margin(0) >= 0 > margin(hi) for some hi
        hi = cap if cap != math.inf else max(1.0, 2.0 * sigma2 / max(g2, 1e-300))
        if margin(hi) >= 0.0:
            return hi if cap != math.inf else math.inf
        best = _bisect_boundary(margin, 0.0, hi)

    best = min(best, cap)
    if best > 0.0 and margin(best) < 0.0:  # land on the feasible side
        best = _bisect_boundary(margin, 0.0, best)
    return best


def _bisect_boundary(margin, lo: float, hi: float) -> float:
    """Feasibility boundary of a concave margin: margin(lo) >= 0 > margin(hi)."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def min_av_power(
    uset: UncertaintySet, gamma_v_th: float, sigma2: float, p_max_av: float
) -> float:
    """Smallest p_av meeting the AV constraint alone (p_link = 0), else p_max_av."""
    g1 = float(uset.center[0])
    denom = g1 - float(np.linalg.norm(uset.shape[0, :]))
    if denom <= 0.0:
        return p_max_av
    p = sigma2 * gamma_v_th / denom
    if p > p_max_av:
        return p_max_av
    for _ in range(64):
        if soc_feasible(p, 0.0, uset, gamma_v_th, sigma2):
            return p
        p = math.nextafter(p * (1.0 + 1e-15), math.inf)
    return min(p * (1.0 + 1e-9), p_max_av)


def split_epsilon(epsilon: float) -> tuple[float, float]:
    """Even outage-budget split across the two BS legs."""
    if not 0.0 < epsilon < 1.0:
        raise RobustError("epsilon must be in (0, 1)")
    return (epsilon / 2.0, epsilon / 2.0)


@dataclass(frozen=True)
class QuantileGain:
    gain: float
    eps: float


def quantile_gain(samples: np.ndarray, eps_leg: float) -> QuantileGain:
    """Lower-tail empirical gain quantile: the (floor(eps*D)+1)-th smallest."""
    samples = np.sort(np.asarray(samples, dtype=float))
    d_count = samples.shape[0]
    if d_count == 0:
        raise RobustError("quantile_gain needs at least one sample")
    if not 0.0 < eps_leg < 1.0:
        raise RobustError("eps_leg must be in (0, 1)")
    idx = min(int(math.floor(eps_leg * d_count)), d_count - 1)
    gain = float(samples[idx])
    if gain <= 0.0:
        raise RobustError("quantile gain must be positive; got a non-positive sample")
    return QuantileGain(gain=gain, eps=eps_leg)


def save_samples(path: str, samples: np.ndarray) -> None:
    """Write a (D, d) gain-sample array as CSV, one sample per row."""
    arr = np.atleast_2d(np.asarray(samples, dtype=float))
    np.savetxt(path, arr, delimiter=",", fmt="%.17g")


def load_samples(path: str) -> np.ndarray:
    """Read a gain-sample CSV written by save_samples; always returns (D, d)."""
    arr = np.loadtxt(path, delimiter=",", dtype=float)
    return np.atleast_2d(arr)
