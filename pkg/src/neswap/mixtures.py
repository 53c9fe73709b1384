"""Finite mixtures of Poisson-kernel-based and spherical Cauchy densities.

Densities are taken with respect to the uniform probability measure on the
unit sphere S^(d-1), so the uniform density is identically 1 and a component
with concentration rho = 0 has log-density 0 everywhere. Both families share
the kernel q = ||x - rho*mu||^2 = 1 - 2*rho*(x.mu) + rho^2:

    PKB:              f = (1 - rho^2) / q^(d/2)
    spherical Cauchy: f = ((1 - rho^2) / q)^(d-1)

At d = 2 the two coincide. Fitting is EM with a lower bound eps on mixture
weights and numerically maximized component updates (generalized EM: a
candidate update is kept only if it does not decrease the objective, so the
log-likelihood trace is monotone by construction).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

RHO_MAX = 1.0 - 1e-6
_FAMILIES = ("pkb", "scauchy")


class MixtureFitError(RuntimeError):
    """EM failed to stabilize (a component kept collapsing)."""


def _check_unit_rows(X, tol=1e-6, who="X"):
    norms = np.linalg.norm(X, axis=-1)
    bad = np.where(np.abs(norms - 1.0) > tol)[0]
    if bad.size:
        raise ValueError(f"{who}: row {bad[0]} has norm {norms[bad[0]]:.8f}, not unit")


@dataclass(frozen=True)
class ComponentParams:
    mu: np.ndarray
    rho: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "mu", mu)
        if mu.ndim != 1 or mu.shape[0] < 2:
            raise ValueError("mu must be a vector of dimension >= 2")
        if abs(np.linalg.norm(mu) - 1.0) > 1e-6:
            raise ValueError(f"mu must be unit-norm, got {np.linalg.norm(mu):.8f}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")


def _kernel(T, rhos):
    # ||x - rho mu||^2 = (1-rho)^2 + 2 rho (1-t); both terms >= 0, no cancellation
    return (1.0 - rhos) ** 2 + 2.0 * rhos * (1.0 - T)


def _log_density_matrix(X, mus, rhos, family):
    """(n, K) matrix of log densities; no input validation (hot path)."""
    d = X.shape[1]
    T = X @ mus.T
    q = np.maximum(_kernel(T, rhos[None, :]), 1e-300)
    log_one_minus_rho2 = np.log1p(-rhos * rhos)
    if family == "pkb":
        return log_one_minus_rho2[None, :] - 0.5 * d * np.log(q)
    return (d - 1) * (log_one_minus_rho2[None, :] - np.log(q))


def _log_density_single(x, comp, family):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    _check_unit_rows(X, who="x")
    if X.shape[1] != comp.mu.shape[0]:
        raise ValueError("x and mu dimensions differ")
    out = _log_density_matrix(X, comp.mu[None, :], np.array([comp.rho]), family)[:, 0]
    return float(out[0]) if squeeze else out


def pkb_log_density(x, comp):
    """Log of the Poisson-kernel-based density at x (unit vector or rows)."""
    return _log_density_single(x, comp, "pkb")


def scauchy_log_density(x, comp):
    """Log of the spherical Cauchy density at x (unit vector or rows)."""
    return _log_density_single(x, comp, "scauchy")


@dataclass
class MixtureModel:
    family: str
    weights: np.ndarray
    mus: np.ndarray          # (K, d), unit rows
    rhos: np.ndarray         # (K,), each in [0, 1)
    eps: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}")
        self.weights = np.asarray(self.weights, dtype=float)
        self.mus = np.asarray(self.mus, dtype=float)
        self.rhos = np.asarray(self.rhos, dtype=float)
        K = self.weights.shape[0]
        if self.mus.shape[0] != K or self.rhos.shape[0] != K:
            raise ValueError("weights, mus, rhos disagree on K")
        if abs(self.weights.sum() - 1.0) > 1e-8 or np.any(self.weights < self.eps - 1e-12):
            raise ValueError("weights must sum to 1 and respect the eps lower bound")
        if np.any(self.rhos < 0.0) or np.any(self.rhos >= 1.0):
            raise ValueError("rhos must lie in [0, 1)")
        _check_unit_rows(self.mus, who="mus")

    @property
    def K(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.mus.shape[1]

    @property
    def components(self):
        return [ComponentParams(mu=self.mus[k], rho=float(self.rhos[k]))
                for k in range(self.K)]


def mixture_log_density(model, X):
    """Mixture log density at each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    logd = _log_density_matrix(X, model.mus, model.rhos, model.family)
    return logsumexp(np.log(model.weights)[None, :] + logd, axis=1)


def responsibilities(model, x):
    """Posterior component probabilities for one point (or rows); sums to 1."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    _check_unit_rows(X, who="x")
    logd = _log_density_matrix(X, model.mus, model.rhos, model.family)
    A = np.log(model.weights)[None, :] + logd
    G = np.exp(A - logsumexp(A, axis=1, keepdims=True))
    return G[0] if squeeze else G


def assign(model, X):
    """Hard memberships: argmax responsibility, ties to the lowest index."""
    return np.argmax(responsibilities(model, np.atleast_2d(X)), axis=1)


def conditional_log_likelihood(model, X, memberships):
    """Sum of per-point log densities under each point's assigned component.

    No mixture weights enter: this conditions on the membership vector.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    l = np.asarray(memberships)
    if l.shape[0] != X.shape[0]:
        raise ValueError(f"memberships length {l.shape[0]} != n = {X.shape[0]}")
    if l.size and (l.min() < 0 or l.max() >= model.K):
        raise ValueError("membership index out of range")
    _check_unit_rows(X, who="X")
    d = X.shape[1]
    mus = model.mus[l]
    rhos = model.rhos[l]
    t = np.einsum("ij,ij->i", X, mus)
    q = np.maximum(_kernel(t, rhos), 1e-300)
    log_one_minus_rho2 = np.log1p(-rhos * rhos)
    if model.family == "pkb":
        vals = log_one_minus_rho2 - 0.5 * d * np.log(q)
    else:
        vals = (d - 1) * (log_one_minus_rho2 - np.log(q))
    return float(vals.sum())


def _simplex_clamp(raw, eps):
    """Exact argmax of sum(N_k log pi_k) over the simplex with pi >= eps.

    Iterated clamp-and-renormalize (water filling): components pinned at eps
    leave the rest to share the remaining mass proportionally. A single-pass
    clamp would not be the argmax and could break EM monotonicity.
    """
    K = raw.shape[0]
    total = raw.sum()
    if total <= 0:
        return np.full(K, 1.0 / K)
    pi = raw / total
    pinned = np.zeros(K, dtype=bool)
    for _ in range(K):
        free_mass = 1.0 - eps * pinned.sum()
        share = raw * ~pinned
        denom = share.sum()
        if denom <= 0:
            pi = np.where(pinned, eps, free_mass / max(1, (~pinned).sum()))
            break
        pi = np.where(pinned, eps, raw * free_mass / denom)
        below = (pi < eps) & ~pinned
        if not below.any():
            break
        pinned |= below
    return pi / pi.sum()


def _farthest_point_init(X, K, rng):
    n = X.shape[0]
    first = int(rng.integers(n))
    centers = [first]
    mind = 1.0 - X @ X[first]
    for _ in range(1, K):
        nxt = int(np.argmax(mind))
        centers.append(nxt)
        mind = np.minimum(mind, 1.0 - X @ X[nxt])
    return X[centers].copy()


def _maximize_component(X, w, mu0, rho0, family, max_inner=50):
    """Numerically maximize the w-weighted mean log density of one component.

    Alternates projected gradient ascent on mu (tangent step, backtracking,
    renormalize) with a bounded line search on rho in [0, RHO_MAX]. Never
    returns parameters worse than the input.
    """
    W = float(w.sum())
    d = X.shape[1]
    if W <= 0.0:
        return mu0, rho0

    def t_of(mu):
        return X @ mu

    def obj(t, rho):
        q = np.maximum(_kernel(t, rho), 1e-300)
        mean_log_q = float(w @ np.log(q)) / W
        if family == "pkb":
            return math.log1p(-rho * rho) - 0.5 * d * mean_log_q
        return (d - 1) * (math.log1p(-rho * rho) - mean_log_q)

    mu = mu0.copy()
    rho = float(rho0)
    t = t_of(mu)
    f = obj(t, rho)
    for _ in range(max_inner):
        f_start = f
        if rho > 0.0:
            q = np.maximum(_kernel(t, rho), 1e-300)
            g = (X.T @ (w / q)) / W
            g_tan = g - (g @ mu) * mu
            if np.linalg.norm(g_tan) > 1e-12:
                eta = 1.0
                for _bt in range(30):
                    cand = mu + eta * g_tan
                    cand = cand / np.linalg.norm(cand)
                    t_c = t_of(cand)
                    f_c = obj(t_c, rho)
                    if f_c > f:
                        mu, t, f = cand, t_c, f_c
                        break
                    eta *= 0.5
        res = minimize_scalar(lambda r: -obj(t, r), bounds=(0.0, RHO_MAX),
                              method="bounded", options={"xatol": 1e-10, "maxiter": 100})
        r_c = float(res.x)
        f_c = obj(t, r_c)
        if f_c > f:
            rho, f = r_c, f_c
        if f - f_start <= 1e-12 * (1.0 + abs(f_start)):
            break
    return mu, rho


def fit_em(X, family, K, eps=1e-3, tol=1e-8, max_iter=300, seed=0,
           _init_mus=None, _init_rhos=None):
    """Fit a K-component mixture by (generalized) EM.

    Initialization: greedy farthest-point seeding of the mu's on cosine
    distance (first seed drawn with the given seed), rho = 0.5, uniform
    weights. The M-step weight update is the exact eps-constrained argmax;
    (mu, rho) updates are guarded, so the returned trace of per-iteration
    log-likelihoods is non-decreasing. A component whose effective count
    drops below 1e-10 * n is re-seeded from the observation with the lowest
    mixture log-likelihood (the trace restarts); more than 3 re-seeds of the
    same component raise MixtureFitError.

    Returns ``(model, trace)`` with trace a float array, one entry per
    E-step, whose last entry matches the returned model.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array of unit rows")
    n, d = X.shape
    if family not in _FAMILIES:
        raise ValueError(f"family must be one of {_FAMILIES}")
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    if eps < 0 or eps * K > 1.0 + 1e-12:
        raise ValueError("need eps >= 0 and eps * K <= 1")
    _check_unit_rows(X)
    if d > n:
        warnings.warn(f"d = {d} exceeds n = {n}; fit may be ill-determined", stacklevel=2)

    rng = np.random.default_rng(seed)
    mus = _farthest_point_init(X, K, rng) if _init_mus is None else np.array(_init_mus, dtype=float)
    rhos = np.full(K, 0.5) if _init_rhos is None else np.array(_init_rhos, dtype=float)
    pis = np.full(K, 1.0 / K)
    reseeds = np.zeros(K, dtype=int)

    trace = []
    prev_ll = -np.inf
    for _it in range(max_iter):
        logd = _log_density_matrix(X, mus, rhos, family)
        A = np.log(pis)[None, :] + logd
        ll_i = logsumexp(A, axis=1)
        ll = float(ll_i.sum())
        G = np.exp(A - ll_i[:, None])
        Nk = G.sum(axis=0)

        collapsed = np.where(Nk < 1e-10 * n)[0]
        if collapsed.size:
            for k in collapsed:
                reseeds[k] += 1
                if reseeds[k] > 3:
                    raise MixtureFitError(
                        f"component {k} collapsed {reseeds[k]} times "
                        f"(n={n}, K={K}, family={family}); data cannot support K components"
                    )
                worst = int(np.argmin(ll_i))
                mus[k] = X[worst]
                rhos[k] = 0.5
            trace = []            # the rescue may lower the likelihood
            prev_ll = -np.inf
            continue

        trace.append(ll)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll

        pis = _simplex_clamp(Nk, eps)
        for k in range(K):
            mus[k], rhos[k] = _maximize_component(X, G[:, k], mus[k], rhos[k], family)
    else:
        logd = _log_density_matrix(X, mus, rhos, family)
        A = np.log(pis)[None, :] + logd
        trace.append(float(logsumexp(A, axis=1).sum()))

    model = MixtureModel(family=family, weights=pis, mus=mus, rhos=rhos, eps=eps)
    return model, np.asarray(trace)


def model_to_json(model):
    return {
        "family": model.family,
        "eps": model.eps,
        "weights": [float(x) for x in model.weights],
        "components": [
            {"mu": [float(v) for v in model.mus[k]], "rho": float(model.rhos[k])}
            for k in range(model.K)
        ],
    }


def model_from_json(doc):
    comps = doc["components"]
    return MixtureModel(
        family=doc["family"],
        weights=np.asarray(doc["weights"], dtype=float),
        mus=np.asarray([c["mu"] for c in comps], dtype=float),
        rhos=np.asarray([c["rho"] for c in comps], dtype=float),
        eps=float(doc.get("eps", 0.0)),
    )


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
