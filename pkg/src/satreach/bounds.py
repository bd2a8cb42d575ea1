"""Expectation bounds on the error quadratic form and rate selection.

With a certificate (P, rate, rate_linear) and noise covariance W, the mean
of q_k = e_k' P e_k obeys the geometric bound built from `rate`.  While the
error stays inside the region of linearity (an ellipsoid of scaling `r_lin`
in the q coordinate), the linear loop contracts faster, and blending the
two regimes yields a strictly better effective rate whenever the noise is
small enough relative to r_lin.  This module computes the ingredients,
decides which rate applies, and evaluates the resulting bound sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .certify import _check_shape_matrix
from .errors import NotApplicableError, PreconditionError

EFFECTIVE_RATE_TOL = 1e-8
EFFECTIVE_RATE_MAX_ITER = 200

# Absolute tolerance used to classify the conditional-tightening branch;
# ties count as "condition failed" and select the fallback rate.
BRANCH_TOL = 1e-12


@dataclass(frozen=True)
class ContractionProfile:
    """Every rate relevant to one analysis, plus the branch evidence.

    `rate_effective` is None when the tightening condition fails, in which
    case `rate_selected` falls back to the hull-wide `rate`.
    """

    rate: float
    rate_linear: float
    noise_energy: float
    r_lin: float
    condition_lhs: float
    rate_effective: float | None
    rate_selected: float

    @property
    def fallback(self) -> bool:
        return self.rate_effective is None


def linear_region_scaling(P, K, ubar, vbar) -> float:
    """Largest q-scaling of the ellipsoid on which no feedback row saturates.

    Row i stays linear while (K_i e)^2 <= (ubar_i - vbar_i)^2, and the worst
    of K_i e over {e' P e <= r} is sqrt(r * K_i inv(P) K_i'), so the scaling
    is min_i (ubar_i - vbar_i)^2 / (K_i inv(P) K_i').  Rows with K_i = 0
    never saturate and contribute +inf; K = 0 therefore returns +inf.

    Raises:
        PreconditionError: unless 0 <= vbar <= ubar componentwise.
    """
    P = _check_shape_matrix(P)
    K = np.asarray(K, dtype=float)
    ubar = np.asarray(ubar, dtype=float)
    vbar = np.asarray(vbar, dtype=float)
    if K.ndim != 2 or K.shape[1] != P.shape[0]:
        raise ValueError(f"K must have {P.shape[0]} columns, got shape {K.shape}")
    m = K.shape[0]
    if ubar.shape != (m,) or vbar.shape != (m,):
        raise ValueError(f"ubar and vbar must have length {m}")
    if np.any(vbar < 0.0) or np.any(vbar > ubar):
        raise PreconditionError("need 0 <= vbar <= ubar componentwise")
    cho = scipy.linalg.cho_factor(P)
    quad = np.einsum("ij,ji->i", K, scipy.linalg.cho_solve(cho, K.T))
    margins = (ubar - vbar) ** 2
    ratios = np.full(m, np.inf)
    active = quad > 0.0
    ratios[active] = margins[active] / quad[active]
    return float(ratios.min())


def noise_energy(P, W) -> float:
    """Expected one-step noise contribution trace(P W) to the quadratic form."""
    P = _check_shape_matrix(P)
    W = np.asarray(W, dtype=float)
    if W.shape != P.shape:
        raise ValueError(f"W must have shape {P.shape}, got {W.shape}")
    return max(float(np.trace(P @ W)), 0.0)


def _applicable(rate: float, noise: float, r_lin: float) -> tuple[bool, float]:
    condition_lhs = noise / (1.0 - rate)
    return r_lin - condition_lhs > BRANCH_TOL, condition_lhs


def effective_rate(rate: float, rate_linear: float, noise: float, r_lin: float) -> float:
    """Blended contraction rate: the root of the two-regime balance.

    Solves for mu in [rate_linear, rate] where the geometric tail mass
    noise / (1 - mu) equals the linear-regime share
    (mu - rate_linear) / (rate - rate_linear) * r_lin, by bisection to
    absolute tolerance EFFECTIVE_RATE_TOL.  The function is increasing in
    mu minus a decreasing one, so the root is unique; the right endpoint
    of the final bracket is returned so the certified side is kept.

    Raises:
        NotApplicableError: when noise / (1 - rate) >= r_lin, i.e. the
            tightening hypothesis fails.
        ValueError: on rate ordering or sign violations.
    """
    if not (0.0 <= rate_linear < rate < 1.0):
        raise ValueError("need 0 <= rate_linear < rate < 1")
    if noise < 0.0:
        raise ValueError("noise energy must be nonnegative")
    if r_lin < 0.0:
        raise ValueError("r_lin must be nonnegative")
    applicable, condition_lhs = _applicable(rate, noise, r_lin)
    if not applicable:
        raise NotApplicableError(
            f"noise mass {condition_lhs:.6g} does not fit the linear region {r_lin:.6g}"
        )
    if noise == 0.0 or not np.isfinite(r_lin):
        return rate_linear

    slope = r_lin / (rate - rate_linear)

    def balance(mu: float) -> float:
        return (mu - rate_linear) * slope - noise / (1.0 - mu)

    lo, hi = rate_linear, rate
    for _ in range(EFFECTIVE_RATE_MAX_ITER):
        if hi - lo <= EFFECTIVE_RATE_TOL:
            break
        mid = 0.5 * (lo + hi)
        if balance(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def select_rate(rate: float, rate_linear: float, noise: float, r_lin: float) -> ContractionProfile:
    """Pick the tightest applicable rate and record the decision.

    Uses the effective rate when the tightening condition holds strictly
    (beyond BRANCH_TOL); ties and failures fall back to the hull-wide rate.
    """
    if not (0.0 <= rate_linear < rate):
        raise ValueError("need 0 <= rate_linear < rate")
    if rate >= 1.0:
        raise ValueError(f"rate must be below one, got {rate}")
    if noise < 0.0:
        raise ValueError("noise energy must be nonnegative")
    if r_lin < 0.0:
        raise ValueError("r_lin must be nonnegative")
    applicable, condition_lhs = _applicable(rate, noise, r_lin)
    if applicable:
        blended = effective_rate(rate, rate_linear, noise, r_lin)
        selected = blended
    else:
        blended = None
        selected = rate
    return ContractionProfile(
        rate=rate,
        rate_linear=rate_linear,
        noise_energy=noise,
        r_lin=r_lin,
        condition_lhs=condition_lhs,
        rate_effective=blended,
        rate_selected=selected,
    )


def expectation_bound_sequence(rate: float, noise: float, k_max: int) -> np.ndarray:
    """Geometric bound b_k = (1 - rate^k) / (1 - rate) * noise for k = 0..k_max.

    Nondecreasing, b_0 = 0, and converging to noise / (1 - rate).

    Raises:
        ValueError: unless 0 <= rate < 1, noise >= 0 and k_max >= 0.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    if noise < 0.0:
        raise ValueError("noise energy must be nonnegative")
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    k = np.arange(k_max + 1)
    return (1.0 - rate ** k) / (1.0 - rate) * noise


def quadratic_recursion_bound(
    rate: float, rate_linear: float, r_lin: float, noise: float, k_max: int
) -> np.ndarray:
    """Exact two-regime recursion c_{k+1} = rl*c_k + (r-rl)/r_lin*c_k^2 + noise.

    Starts at c_0 = 0 and upper-bounds the mean quadratic form one step at
    a time; tighter than the geometric `rate` bound while c_k stays small
    relative to r_lin.  Infinite r_lin degenerates to the pure linear-rate
    recursion.

    Raises:
        NotApplicableError: when r_lin = 0 (the recursion is undefined).
    """
    if not (0.0 <= rate_linear < rate < 1.0):
        raise ValueError("need 0 <= rate_linear < rate < 1")
    if noise < 0.0:
        raise ValueError("noise energy must be nonnegative")
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    if r_lin == 0.0:
        raise NotApplicableError("r_lin = 0 leaves no linear region to exploit")
    curvature = (rate - rate_linear) / r_lin
    out = np.empty(k_max + 1)
    out[0] = 0.0
    value = 0.0
    for k in range(k_max):
        value = rate_linear * value + curvature * value * value + noise
        out[k + 1] = value
    return out
