"""ARMA modeling of daily residual series: exact-likelihood fitting with
order selection by AICc, simulation, and theoretical autocorrelation.

The Gaussian likelihood is evaluated exactly in state-space form with a
steady-state Kalman recursion (numba-compiled). Stationarity and
invertibility are guaranteed by optimizing in partial-autocorrelation space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import FitError


@njit(cache=True)
def _pacf_to_coef(r):
    """Durbin recursion: partial autocorrelations -> AR coefficients."""
    k = len(r)
    y = np.zeros(k)
    for i in range(k):
        prev = y[:i].copy()
        y[i] = r[i]
        for j in range(i):
            y[j] = prev[j] - r[i] * prev[i - 1 - j]
    return y


@njit(cache=True)
def _coef_to_pacf(c):
    """Inverse Durbin recursion; entries >= 1 in magnitude mark invalid input."""
    k = len(c)
    y = c.copy()
    r = np.zeros(k)
    for i in range(k - 1, -1, -1):
        r[i] = y[i]
        if np.abs(r[i]) >= 1.0:
            return r
        prev = y[:i].copy()
        denom = 1.0 - r[i] * r[i]
        for j in range(i):
            y[j] = (prev[j] + r[i] * prev[i - 1 - j]) / denom
    return r


@njit(cache=True)
def _kalman_loglike(x, phi, psi):
    """Exact Gaussian log-likelihood with concentrated innovation variance.

    Uses the companion state-space form initialized at the stationary state
    covariance. The covariance recursion exploits the companion structure
    (no temporaries) and collapses to a fixed-gain recursion once the
    prediction variance converges.
    """
    p = len(phi)
    q = len(psi)
    m = max(p, q + 1)
    T = np.zeros((m, m))
    for i in range(p):
        T[i, 0] = phi[i]
    for i in range(m - 1):
        T[i, i + 1] = 1.0
    R = np.zeros(m)
    R[0] = 1.0
    for i in range(q):
        R[i + 1] = psi[i]
    RR = np.outer(R, R)
    P = np.linalg.solve(np.eye(m * m) - np.kron(T, T), RR.flatten()).reshape((m, m))

    a = np.zeros(m)
    anew = np.zeros(m)
    K = np.zeros(m)
    TP = np.zeros((m, m))
    Pn = np.zeros((m, m))
    ssq = 0.0
    sumlogF = 0.0
    n = len(x)
    F = P[0, 0]
    Fprev = -1.0
    t = 0
    while t < n:
        F = P[0, 0]
        if not np.isfinite(F) or F <= 0.0:
            return -np.inf, 1.0
        v = x[t] - a[0]
        ssq += v * v / F
        sumlogF += np.log(F)
        # K = T @ P[:, 0] / F, exploiting the companion structure of T
        for i in range(m):
            acc = P[i + 1, 0] if i + 1 < m else 0.0
            if i < p:
                acc += phi[i] * P[0, 0]
            K[i] = acc / F
        a0 = a[0]
        for i in range(m):
            acc = K[i] * v
            if i < p:
                acc += phi[i] * a0
            if i + 1 < m:
                acc += a[i + 1]
            anew[i] = acc
        for i in range(m):
            a[i] = anew[i]
        # P <- T P T' + RR - F K K'   (row then column companion products)
        for j in range(m):
            for i in range(m):
                acc = P[i + 1, j] if i + 1 < m else 0.0
                if i < p:
                    acc += phi[i] * P[0, j]
                TP[i, j] = acc
        for i in range(m):
            for j in range(m):
                acc = TP[i, j + 1] if j + 1 < m else 0.0
                if j < p:
                    acc += phi[j] * TP[i, 0]
                Pn[i, j] = acc + RR[i, j] - F * K[i] * K[j]
        for i in range(m):
            for j in range(m):
                P[i, j] = Pn[i, j]
        t += 1
        if np.abs(F - Fprev) < 1e-13 * (1.0 + np.abs(F)):
            break
        Fprev = F
    if t < n:
        # steady state: constant gain and prediction variance
        logF = np.log(F)
        for s in range(t, n):
            v = x[s] - a[0]
            ssq += v * v / F
            sumlogF += logF
            a0 = a[0]
            for i in range(m):
                acc = K[i] * v
                if i < p:
                    acc += phi[i] * a0
                if i + 1 < m:
                    acc += a[i + 1]
                anew[i] = acc
            for i in range(m):
                a[i] = anew[i]
    sigma2 = ssq / n
    ll = -0.5 * n * (np.log(2.0 * np.pi) + 1.0 + np.log(sigma2)) - 0.5 * sumlogF
    return ll, sigma2


@dataclass(frozen=True)
class ArmaModel:
    """Zero-mean ARMA(p, q) with innovation variance sigma2."""

    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    loglik: float = field(default=np.nan, compare=False)
    aicc: float = field(default=np.nan, compare=False)

    @property
    def order(self):
        return len(self.ar), len(self.ma)

    def is_causal(self) -> bool:
        if len(self.ar) == 0:
            return True
        roots = np.roots(np.concatenate([[1.0], -np.asarray(self.ar)])[::-1])
        return bool(np.all(np.abs(roots) > 1.0))

    def is_invertible(self) -> bool:
        if len(self.ma) == 0:
            return True
        roots = np.roots(np.concatenate([[1.0], np.asarray(self.ma)])[::-1])
        return bool(np.all(np.abs(roots) > 1.0))

    def as_dict(self) -> dict:
        return {"p": len(self.ar), "q": len(self.ma),
                "ar": [float(v) for v in self.ar],
                "ma": [float(v) for v in self.ma],
                "sigma2": float(self.sigma2)}

    @staticmethod
    def from_dict(d) -> "ArmaModel":
        return ArmaModel(np.asarray(d["ar"], dtype=float),
                         np.asarray(d["ma"], dtype=float), float(d["sigma2"]))


def arma_loglike(x, model: ArmaModel):
    """Exact Gaussian log-likelihood of a series under a model (variance profiled out)."""
    return _kalman_loglike(np.ascontiguousarray(x, dtype=float),
                           np.asarray(model.ar, dtype=float),
                           np.asarray(model.ma, dtype=float))[0]


def _params_from_u(u, p, q):
    r = np.tanh(u)
    phi = _pacf_to_coef(np.ascontiguousarray(r[:p])) if p else np.zeros(0)
    psi = -_pacf_to_coef(np.ascontiguousarray(r[p:])) if q else np.zeros(0)
    return phi, psi


def _u_from_params(phi, psi):
    parts = []
    for c in (np.asarray(phi, dtype=float), -np.asarray(psi, dtype=float)):
        if len(c) == 0:
            continue
        r = _coef_to_pacf(np.ascontiguousarray(c))
        r = np.clip(r, -0.97, 0.97)
        parts.append(np.arctanh(r))
    return np.concatenate(parts) if parts else np.zeros(0)


def _hannan_rissanen_start(x, p, q):
    """Long-AR residual regression start values (may be rough)."""
    h = max(8, 2 * (p + q))
    if len(x) <= h + p + q + 1:
        return np.zeros(p), np.zeros(q)
    lagmat = np.column_stack([x[h - i:len(x) - i] for i in range(1, h + 1)])
    a, *_ = np.linalg.lstsq(lagmat, x[h:], rcond=None)
    e = np.concatenate([np.zeros(h), x[h:] - lagmat @ a])
    k = max(p, q)
    cols = [x[k - i:len(x) - i] for i in range(1, p + 1)]
    cols += [e[k - j:len(e) - j] for j in range(1, q + 1)]
    if not cols:
        return np.zeros(0), np.zeros(0)
    design = np.column_stack(cols)
    b, *_ = np.linalg.lstsq(design, x[k:], rcond=None)
    return b[:p], b[p:]


def _neg_ll_factory(x, p, q):
    def neg_ll(u):
        phi, psi = _params_from_u(u, p, q)
        try:
            ll, _ = _kalman_loglike(x, phi, psi)
        except np.linalg.LinAlgError:
            return 1e12
        return -ll if np.isfinite(ll) else 1e12
    return neg_ll


def _optimize(x, p, q, starts, tight: bool):
    """L-BFGS over the transformed parameter space from the given starts.

    The search mode uses loose tolerances and forward differences, good
    enough to rank candidates by AICc; the tight mode polishes with central
    differences to pin down the returned coefficients.
    """
    neg_ll = _neg_ll_factory(x, p, q)
    k = p + q
    h = 1e-5 if tight else 1e-6
    opts = ({"maxiter": 300, "ftol": 1e-12, "gtol": 1e-7} if tight
            else {"maxiter": 80, "ftol": 2e-8, "gtol": 1e-3})

    def fg(u):
        f0 = neg_ll(u)
        g = np.empty(k)
        for i in range(k):
            up = u.copy()
            up[i] += h
            if tight:
                um = u.copy()
                um[i] -= h
                g[i] = (neg_ll(up) - neg_ll(um)) / (2 * h)
            else:
                g[i] = (neg_ll(up) - f0) / h
        return f0, g

    best = None
    for u_start in starts:
        res = minimize(fg, u_start, jac=True, method="L-BFGS-B",
                       bounds=[(-6.0, 6.0)] * k, options=opts)
        if np.isfinite(res.fun) and res.fun < 1e11 and (best is None
                                                        or res.fun < best.fun):
            best = res
    if best is None:
        return None
    phi, psi = _params_from_u(best.x, p, q)
    ll, sigma2 = _kalman_loglike(x, phi, psi)
    if not np.isfinite(ll):
        return None
    return float(ll), phi, psi, float(sigma2)


def _fit_order(x, p, q):
    """Maximize the exact likelihood for one (p, q); returns None on failure."""
    n = len(x)
    if p == 0 and q == 0:
        sigma2 = float(np.mean(x * x))
        if sigma2 <= 0:
            return None
        ll = -0.5 * n * (np.log(2 * np.pi) + 1.0 + np.log(sigma2))
        return ll, np.zeros(0), np.zeros(0), sigma2

    starts = [np.zeros(p + q)]
    phi0, psi0 = _hannan_rissanen_start(x, p, q)
    u0 = _u_from_params(phi0, psi0)
    if len(u0) == p + q and np.all(np.isfinite(u0)):
        starts.insert(0, u0)
    return _optimize(x, p, q, starts, tight=False)


def aicc(loglik: float, n_params: int, n_obs: int) -> float:
    k = n_params
    return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / (n_obs - k - 1)


_ROOT_MARGIN = 1.005  # fits this close to the stationarity boundary are suspect
_CANCEL_TOL = 0.05    # near-common AR/MA roots mean a redundant, smaller model


def _candidate_is_degenerate(phi, psi) -> bool:
    """Flag fits that are not identifiable at their nominal order.

    A near-common root of the AR and MA polynomials means the extra
    parameters cancel (the fit is a smaller model in disguise); roots nearly
    on the unit circle are boundary artifacts. Both inflate the likelihood
    spuriously during order selection.
    """
    ar_roots = (np.roots(np.concatenate([[1.0], -phi])[::-1])
                if len(phi) else np.zeros(0))
    ma_roots = (np.roots(np.concatenate([[1.0], psi])[::-1])
                if len(psi) else np.zeros(0))
    for roots in (ar_roots, ma_roots):
        if len(roots) and np.min(np.abs(roots)) < _ROOT_MARGIN:
            return True
    if len(ar_roots) and len(ma_roots):
        cross = np.min(np.abs(ar_roots[:, None] - ma_roots[None, :]))
        if cross < _CANCEL_TOL:
            return True
    return False


def arma_fit(series, max_p: int = 3, max_q: int = 3) -> ArmaModel:
    """Fit all orders up to (max_p, max_q) and keep the lowest-AICc model.

    The innovation variance counts as a parameter in AICc. Candidates whose
    fitted polynomials nearly cancel or sit on the stationarity boundary are
    treated as non-identifiable at their order and skipped (used only if no
    clean candidate exists). The returned model is causal and invertible by
    construction.
    """
    x = np.ascontiguousarray(series, dtype=float)
    if len(x) < 500:
        raise ValueError(f"ARMA fit needs >= 500 observations, got {len(x)}")
    n = len(x)
    best_clean = None
    best_any = None
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            out = _fit_order(x, p, q)
            if out is None:
                continue
            ll, phi, psi, sigma2 = out
            cand = (aicc(ll, p + q + 1, n), ll, phi, psi, sigma2)
            if best_any is None or cand[0] < best_any[0]:
                best_any = cand
            if not _candidate_is_degenerate(phi, psi):
                if best_clean is None or cand[0] < best_clean[0]:
                    best_clean = cand
    best = best_clean if best_clean is not None else best_any
    if best is None:
        raise FitError("no ARMA candidate converged")
    crit, ll, phi, psi, sigma2 = best
    # polish the winner at tight tolerances
    if len(phi) + len(psi) > 0:
        out = _optimize(x, len(phi), len(psi), [_u_from_params(phi, psi)],
                        tight=True)
        if out is not None and out[0] >= ll:
            ll, phi, psi, sigma2 = out
            crit = aicc(ll, len(phi) + len(psi) + 1, n)
    return ArmaModel(phi, psi, sigma2, loglik=ll, aicc=crit)


def arma_simulate(model: ArmaModel, n_days: int, seed) -> np.ndarray:
    """Simulate a stationary series; burn-in of 10*(p+q+1) days is discarded."""
    rng = np.random.default_rng(seed)
    p, q = model.order
    burn = 10 * (p + q + 1)
    eps = rng.normal(scale=np.sqrt(model.sigma2), size=n_days + burn)
    b = np.concatenate([[1.0], np.asarray(model.ma, dtype=float)])
    a = np.concatenate([[1.0], -np.asarray(model.ar, dtype=float)])
    return lfilter(b, a, eps)[burn:]


def arma_acf(model: ArmaModel, max_lag: int) -> np.ndarray:
    """Theoretical autocorrelation at lags 0..max_lag."""
    gamma = arma_acovf(model, max_lag)
    return gamma / gamma[0]


def arma_acovf(model: ArmaModel, max_lag: int) -> np.ndarray:
    """Theoretical autocovariance at lags 0..max_lag (exact linear solve)."""
    phi = np.asarray(model.ar, dtype=float)
    theta = np.asarray(model.ma, dtype=float)
    p, q = len(phi), len(theta)
    # psi weights of the MA(inf) representation, up to lag q
    psi = np.zeros(q + 1)
    psi[0] = 1.0
    for j in range(1, q + 1):
        psi[j] = theta[j - 1] + sum(phi[i] * psi[j - 1 - i]
                                    for i in range(min(j, p)))
    theta_full = np.concatenate([[1.0], theta])

    def rhs(k):
        if k > q:
            return 0.0
        return model.sigma2 * sum(theta_full[j] * psi[j - k] for j in range(k, q + 1))

    A = np.zeros((p + 1, p + 1))
    b = np.zeros(p + 1)
    for k in range(p + 1):
        A[k, k] += 1.0
        for i in range(1, p + 1):
            A[k, abs(k - i)] -= phi[i - 1]
        b[k] = rhs(k)
    gamma_head = np.linalg.solve(A, b)

    gamma = np.zeros(max_lag + 1)
    gamma[:min(p + 1, max_lag + 1)] = gamma_head[:max_lag + 1]
    for k in range(p + 1, max_lag + 1):
        gamma[k] = sum(phi[i - 1] * gamma[k - i] for i in range(1, p + 1)) + rhs(k)
    return gamma
