"""Ewens-Pitman partition model over contingency-table cell sizes.

The cell-size frequencies (s_1, ..., s_n) of a sample of n chunks are modeled
by the two-parameter Ewens-Pitman sampling formula with concentration theta
and discount alpha. Fitting it lets us extrapolate how many of the sample's
singleton cells are also unique in a hypothetical population of size N, which
is what the risk measure needs.

Log-space throughout: the theta-rising-factorial ratio is computed as
sum(log(theta + i*alpha)) - sum(log(theta + i)) with the shared i = 0 factor
cancelled analytically, so theta in (-alpha, 0] never feeds log-gamma a
negative argument.
"""

from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, digamma, polygamma

from .contingency import FrequencyCounts

_V_CLAMP = 35.0
_U_CLAMP = 30.0


class EwensFitError(RuntimeError):
    """Maximum-likelihood fit did not converge from any start."""


@dataclass(frozen=True)
class EwensPitmanParams:
    theta: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if not self.theta > -self.alpha:
            raise ValueError(f"theta must exceed -alpha, got theta={self.theta}, alpha={self.alpha}")


def _counts_arrays(counts):
    js = np.array(sorted(counts.s), dtype=float)
    sj = np.array([counts.s[int(j)] for j in js], dtype=float)
    return js, sj


def epsf_log_pmf(counts, params):
    """Log probability of observed cell-size frequencies under (theta, alpha).

    The distribution is over all partitions of n; summed over every partition
    it is 1.
    """
    if not isinstance(counts, FrequencyCounts):
        raise TypeError("counts must be FrequencyCounts")
    th, al = params.theta, params.alpha
    n, k = counts.n, counts.k
    if n == 0:
        return 0.0
    js, sj = _counts_arrays(counts)
    # multinomial coefficient n! / prod(j!^s_j s_j!)
    const = gammaln(n + 1) - float(np.sum(sj * gammaln(js + 1)) + np.sum(gammaln(sj + 1)))
    # rising-factorial ratio with the i = 0 terms cancelled
    i = np.arange(1, k, dtype=float)
    rise = float(np.sum(np.log(th + i * al))) - float(gammaln(th + n) - gammaln(th + 1))
    # product over cells of (1 - alpha)^(j-1 rising)
    inner = float(np.sum(sj * (gammaln(js - al) - gammaln(1.0 - al))))
    return const + rise + inner


def _loglik_terms(theta, alpha, n, k, js, sj):
    """Parameter-dependent part of the log-likelihood and its derivatives."""
    i = np.arange(1.0, k)
    den = theta + i * alpha                     # all > 0 on the domain
    inv = 1.0 / den
    L = float(np.sum(np.log(den))) - float(gammaln(theta + n) - gammaln(theta + 1))
    L += float(np.sum(sj * (gammaln(js - alpha) - gammaln(1.0 - alpha))))

    psi_n = digamma(theta + n) - digamma(theta + 1)
    L_t = float(np.sum(inv)) - psi_n
    L_a = float(np.sum(i * inv)) + float(np.sum(sj * (digamma(1.0 - alpha) - digamma(js - alpha))))

    tri_n = polygamma(1, theta + n) - polygamma(1, theta + 1)
    inv2 = inv * inv
    L_tt = -float(np.sum(inv2)) - tri_n
    L_ta = -float(np.sum(i * inv2))
    L_aa = -float(np.sum(i * i * inv2)) + float(
        np.sum(sj * (polygamma(1, js - alpha) - polygamma(1, 1.0 - alpha))))
    return L, L_t, L_a, L_tt, L_ta, L_aa


def _transformed(theta_alpha_derivs, u, v):
    """Gradient/Hessian in (u, v) = (log(theta+alpha), logit(alpha))."""
    L, L_t, L_a, L_tt, L_ta, L_aa = theta_alpha_derivs
    eu = math.exp(u)
    sig = 1.0 / (1.0 + math.exp(-v))
    sp = sig * (1.0 - sig)
    spp = sp * (1.0 - 2.0 * sig)
    F_u = L_t * eu
    F_v = (L_a - L_t) * sp
    F_uu = L_tt * eu * eu + L_t * eu
    F_uv = eu * sp * (L_ta - L_tt)
    F_vv = sp * sp * (L_aa - 2.0 * L_ta + L_tt) + (L_a - L_t) * spp
    return L, np.array([F_u, F_v]), np.array([[F_uu, F_uv], [F_uv, F_vv]])


def _newton_2d(n, k, js, sj, theta0, alpha0, max_iter=200):
    u = math.log(theta0 + alpha0)
    v = math.log(alpha0 / (1.0 - alpha0))

    def eval_at(u_, v_):
        al = 1.0 / (1.0 + math.exp(-v_))
        th = math.exp(u_) - al
        return _transformed(_loglik_terms(th, al, n, k, js, sj), u_, v_)

    L, g, H = eval_at(u, v)
    for _ in range(max_iter):
        gn = np.linalg.norm(g)
        if gn < 1e-8:
            break
        # Saddle-free Newton: flip negative-curvature directions by taking the
        # absolute value of the Hessian spectrum. Coincides with plain Newton
        # wherever the Hessian is negative definite; on ridges and saddles it
        # still gives a well-scaled ascent direction.
        lam, Q = np.linalg.eigh(H)
        denom = np.maximum(np.abs(lam), 1e-8 * max(1.0, float(np.abs(lam).max())))
        step = Q @ ((Q.T @ g) / denom)
        t, improved = 1.0, False
        while t > 1e-14:
            u_c = float(np.clip(u + t * step[0], -_U_CLAMP, _U_CLAMP))
            v_c = float(np.clip(v + t * step[1], -_V_CLAMP, _V_CLAMP))
            L_c, g_c, H_c = eval_at(u_c, v_c)
            # Near the optimum the true gain can drop below the float
            # resolution of L; accept a full step that halves the gradient.
            polish = (t == 1.0 and gn < 1e-3
                      and np.linalg.norm(g_c) < 0.5 * gn
                      and L_c > L - 1e-7 * (1.0 + abs(L)))
            if L_c > L or polish:
                u, v, L, g, H = u_c, v_c, L_c, g_c, H_c
                improved = True
                break
            t *= 0.5
        if not improved:
            break
    return u, v, L, g


def _newton_1d(n, k, js, sj, alpha, theta0, max_iter=100):
    """Maximize over theta with alpha held fixed; Newton on log(theta+alpha)."""
    u = math.log(theta0 + alpha)
    L, L_t, _, L_tt, _, _ = _loglik_terms(math.exp(u) - alpha, alpha, n, k, js, sj)
    for _ in range(max_iter):
        eu = math.exp(u)
        G = L_t * eu
        if abs(G) < 1e-9:
            break
        Hq = L_tt * eu * eu + L_t * eu
        step = G / max(abs(Hq), 1e-8)
        t, improved = 1.0, False
        while t > 1e-14:
            u_c = float(np.clip(u + t * step, -_U_CLAMP, _U_CLAMP))
            L_c, L_t_c, _, L_tt_c, _, _ = _loglik_terms(math.exp(u_c) - alpha, alpha, n, k, js, sj)
            G_c = L_t_c * math.exp(u_c)
            polish = (t == 1.0 and abs(G) < 1e-3 and abs(G_c) < 0.5 * abs(G)
                      and L_c > L - 1e-7 * (1.0 + abs(L)))
            if L_c > L or polish:
                u, L, L_t, L_tt = u_c, L_c, L_t_c, L_tt_c
                improved = True
                break
            t *= 0.5
        if not improved:
            break
    return math.exp(u) - alpha, L


_STARTS = ((1.0, 0.1), (1.0, 0.5), (10.0, 0.5), (50.0, 0.9))


def fit_mle(counts):
    """Maximum-likelihood (theta, alpha) for observed cell-size frequencies.

    Newton-Raphson in transformed coordinates (log(theta+alpha), logit(alpha))
    with analytic gradient and Hessian, 4 fixed multi-starts, step halving when
    the Hessian is not negative definite. Boundary handling: a fit driven to
    alpha -> 0 is refit as the one-parameter (alpha = 0) submodel; alpha -> 1
    is clamped to 1 - 1e-8 with a warning.
    """
    if counts.k < 2:
        raise ValueError("need at least 2 occupied cells to identify (theta, alpha)")
    n, k = counts.n, counts.k
    js, sj = _counts_arrays(counts)

    best = None
    for theta0, alpha0 in _STARTS:
        u, v, L, g = _newton_2d(n, k, js, sj, theta0, alpha0)
        alpha = 1.0 / (1.0 + math.exp(-v))
        theta = math.exp(u) - alpha
        if v <= -_V_CLAMP + 1e-9 or alpha < 1e-12:
            theta, L = _newton_1d(n, k, js, sj, 0.0, max(theta, 0.1))
            cand = (L, EwensPitmanParams(theta=theta, alpha=0.0), 0.0)
        elif v >= _V_CLAMP - 1e-9:
            alpha = 1.0 - 1e-8
            theta, L = _newton_1d(n, k, js, sj, alpha, max(theta, 0.1))
            warnings.warn("alpha at the upper boundary; clamped to 1 - 1e-8", stacklevel=2)
            cand = (L, EwensPitmanParams(theta=theta, alpha=alpha), 0.0)
        else:
            gnorm = float(np.linalg.norm(g))
            if gnorm >= 1e-6:
                continue
            cand = (L, EwensPitmanParams(theta=theta, alpha=alpha), gnorm)
        if best is None or cand[0] > best[0]:
            best = cand
    if best is None:
        raise EwensFitError(
            f"MLE did not converge from any start (n={n}, k={k}); "
            "cell-size frequencies may be degenerate"
        )
    return best[1]


def _log_gamma_ratio_shifted(N, a, b):
    """log Gamma(N + a) - log Gamma(N + b), safe for astronomically large N."""
    if N <= 1e8:
        return float(gammaln(N + a) - gammaln(N + b))
    # Gamma(z+a)/Gamma(z+b) = z^(a-b) (1 + (a-b)(a+b-1)/(2z) + O(1/z^2))
    return (a - b) * math.log(N) + math.log1p((a - b) * (a + b - 1.0) / (2.0 * N))


def expected_uniques_exact(params, N):
    """Exact expected number of population uniques E(S1) at population size N."""
    th, al = params.theta, params.alpha
    if N < 1:
        raise ValueError(f"population size must be >= 1, got {N}")
    if th + al <= 0:
        raise ValueError("theta + alpha must be positive")
    logval = (_log_gamma_ratio_shifted(N, th + al - 1.0, th)
              + float(gammaln(th + 1.0) - gammaln(th + al)))
    return N * math.exp(logval)


def expected_uniques_asymptotic(params, N):
    """Large-N approximation: E(S1) ~ Gamma(theta+1)/Gamma(theta+alpha) * N^alpha."""
    th, al = params.theta, params.alpha
    if N < 1:
        raise ValueError(f"population size must be >= 1, got {N}")
    return math.exp(float(gammaln(th + 1.0) - gammaln(th + al)) + al * math.log(N))


def pop_unique_ratio(params, N, n, s1):
    """Estimated fraction of the sample's singleton cells that are also unique
    in a population of size N (clamped into [0, 1], warning when it exceeds 1).
    """
    if s1 < 1:
        raise ValueError("s1 must be >= 1; no sample uniques means no ratio to estimate")
    if not s1 <= n <= N:
        raise ValueError(f"need s1 <= n <= N, got s1={s1}, n={n}, N={N}")
    th, al = params.theta, params.alpha
    logp = (float(gammaln(th + 1.0) - gammaln(th + al))
            + (al - 1.0) * math.log(N) + math.log(n) - math.log(s1))
    p = math.exp(logp)
    if p > 1.0:
        warnings.warn(f"estimated unique ratio {p:.4f} exceeds 1; clamped", stacklevel=2)
        return 1.0
    return p


def sample_crp(params, n, seed=0):
    """Draw cell-size frequencies from the two-parameter Chinese restaurant
    process with n customers.

    Customer i+1 opens a new table with probability (theta + alpha*k)/(theta+i)
    and otherwise joins table j with probability (n_j - alpha)/(theta + i).
    Joining is sampled in O(1) expected time: pick a seated customer uniformly
    (that weights tables by n_j) and accept with probability 1 - alpha/n_j.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    th, al = params.theta, params.alpha
    rng = random.Random(seed)
    sizes = [1]
    seats = [0]
    for i in range(1, n):
        if rng.random() * (th + i) < th + al * len(sizes):
            seats.append(len(sizes))
            sizes.append(1)
        else:
            while True:
                j = seats[rng.randrange(i)]
                if al == 0.0 or rng.random() >= al / sizes[j]:
                    break
            seats.append(j)
            sizes[j] += 1
    s = {}
    for sz in sizes:
        s[sz] = s.get(sz, 0) + 1
    return FrequencyCounts(s=s, n=n, k=len(sizes))
