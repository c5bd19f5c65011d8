"""Unscented transform and UKF predict/update.

The public functions work on a single :class:`GaussianState`. The ``batch_*``
helpers run the same computation over a leading batch axis and are what the
particle filter uses for its per-particle target filters.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NonPsdCovariance, SingularInnovation

JITTER_START = 1e-9
JITTER_MAX = 1e-3
LIKELIHOOD_FLOOR = 1e-300
_LOG_2PI = np.log(2.0 * np.pi)


def symmetrize(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.array(self.mean, dtype=float).reshape(-1)
        P = symmetrize(np.array(self.cov, dtype=float).reshape(len(m), len(m)))
        m.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", P)

    @property
    def dim(self):
        return len(self.mean)


@dataclass(frozen=True)
class UtParams:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")

    def weights(self, L):
        lam = self.alpha ** 2 * (L + self.kappa) - L
        if abs(L + lam) < 1e-12:
            raise ValueError("degenerate unscented weights (L + lambda == 0)")
        wm = np.full(2 * L + 1, 1.0 / (2.0 * (L + lam)))
        wc = wm.copy()
        wm[0] = lam / (L + lam)
        wc[0] = wm[0] + (1.0 - self.alpha ** 2 + self.beta)
        if not np.all(np.isfinite(wc)):
            raise ValueError("non-finite unscented weights")
        return wm, wc, lam


DEFAULT_UT = UtParams()


def batch_cholesky(P):
    """Lower Cholesky factors of (..., L, L) covariances with jitter repair.

    Jitter starts at 1e-9 * I and doubles up to 1e-3 * I before giving up.
    """
    P = symmetrize(np.asarray(P, dtype=float))
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    flat = P.reshape(-1, P.shape[-2], P.shape[-1])
    out = np.empty_like(flat)
    eye = np.eye(P.shape[-1])
    for i, Pi in enumerate(flat):
        try:
            out[i] = np.linalg.cholesky(Pi)
            continue
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START
        while jitter <= JITTER_MAX:
            try:
                out[i] = np.linalg.cholesky(Pi + jitter * eye)
                break
            except np.linalg.LinAlgError:
                jitter *= 2.0
        else:
            raise NonPsdCovariance("covariance is not positive definite even after jitter")
    return out.reshape(P.shape)


def batch_sigma_points(means, covs, params=DEFAULT_UT):
    """Sigma points (B, 2L+1, L) for means (B, L) and covariances (B, L, L)."""
    L = means.shape[-1]
    _, _, lam = params.weights(L)
    S = batch_cholesky(covs) * np.sqrt(L + lam)
    cols = np.swapaxes(S, -1, -2)  # rows are the columns of the factor
    m = means[..., None, :]
    return np.concatenate([m, m + cols, m - cols], axis=-2)


def batch_unscented(means, covs, fn, params=DEFAULT_UT):
    """Batched unscented transform.

    ``fn`` maps sigma points (B, S, L) to (B, S, d). Returns the transformed
    mean (B, d), covariance (B, d, d), cross-covariance (B, L, d) and the
    propagated sigma points.
    """
    L = means.shape[-1]
    wm, wc, _ = params.weights(L)
    X = batch_sigma_points(means, covs, params)
    Y = fn(X)
    ym = np.tensordot(Y, wm, axes=([-2], [0]))
    dY = Y - ym[..., None, :]
    dX = X - means[..., None, :]
    wdY = dY * wc[:, None]
    Pyy = np.swapaxes(wdY, -1, -2) @ dY
    Pxy = np.swapaxes(dX, -1, -2) @ wdY
    return ym, symmetrize(Pyy), Pxy, Y


def batch_predict(means, covs, fn, Q, params=DEFAULT_UT):
    m, P, _, _ = batch_unscented(means, covs, fn, params)
    return m, symmetrize(P + Q)


def batch_gaussian_logpdf(y, mean, cov):
    """log N(y; mean, cov) for stacked (B, d) inputs; also returns cov^{-1}."""
    try:
        Lc = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is not positive definite") from exc
    d = y - mean
    z = np.linalg.solve(Lc, d[..., None])[..., 0]
    logdet = 2.0 * np.log(np.diagonal(Lc, axis1=-2, axis2=-1)).sum(-1)
    k = y.shape[-1]
    return -0.5 * ((z * z).sum(-1) + logdet + k * _LOG_2PI)


def batch_measure(means, covs, fn, R, params=DEFAULT_UT):
    """Predicted measurement, innovation covariance V = Pyy + R, and cross-covariance."""
    ym, Pyy, Pxy, _ = batch_unscented(means, covs, fn, params)
    return ym, symmetrize(Pyy + R), Pxy


def batch_correct(means, covs, y, ym, V, Pxy):
    """Kalman correction given the unscented predicted moments."""
    # K = Pxy V^-1, via solve on the transposed system
    K = np.swapaxes(np.linalg.solve(V, np.swapaxes(Pxy, -1, -2)), -1, -2)
    new_m = means + np.einsum("...ij,...j->...i", K, y - ym)
    new_P = covs - np.einsum("...ij,...jk,...lk->...il", K, V, K)
    return new_m, symmetrize(new_P)


def unscented_transform(state, f, params=DEFAULT_UT):
    """Propagate a Gaussian through ``f`` with the unscented transform.

    ``f`` must accept an (S, L) array of sigma points and return (S, d).

    Returns
    -------
    (mean, cov, cross_cov)
    """
    ym, Pyy, Pxy, _ = batch_unscented(state.mean[None], state.cov[None],
                                      lambda X: f(X[0])[None], params)
    return ym[0], Pyy[0], Pxy[0]


def ukf_predict(state, motion_fn, process_noise, params=DEFAULT_UT):
    """Unscented time update with additive process noise."""
    Q = np.asarray(process_noise, dtype=float)
    mean, cov, _ = unscented_transform(state, motion_fn, params)
    return GaussianState(mean, cov + Q)


def ukf_update(state, y, meas_fn, meas_noise, params=DEFAULT_UT):
    """Unscented measurement update.

    Returns
    -------
    (posterior GaussianState, likelihood N(y; y_hat, V), innovation covariance V)
        The likelihood is floored at 1e-300.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    R = np.asarray(meas_noise, dtype=float)
    ym, Pyy, Pxy = unscented_transform(state, meas_fn, params)
    if ym.shape != y.shape:
        raise ValueError(f"measurement has dimension {y.shape[0]}, model predicts {ym.shape[0]}")
    V = symmetrize(Pyy + R)
    if not np.all(np.isfinite(V)) or np.linalg.cond(V) > 1e15:
        raise SingularInnovation("innovation covariance is singular")
    logp = batch_gaussian_logpdf(y[None], ym[None], V[None])[0]
    m, P = batch_correct(state.mean[None], state.cov[None], y[None], ym[None], V[None], Pxy[None])
    return GaussianState(m[0], P[0]), max(float(np.exp(logp)), LIKELIHOOD_FLOOR), V


def ukf_log_likelihood(state, y, meas_fn, meas_noise, params=DEFAULT_UT):
    """log N(y; y_hat, V) without the floor; useful for far outliers."""
    y = np.asarray(y, dtype=float).reshape(-1)
    ym, Pyy, _ = unscented_transform(state, meas_fn, params)
    V = symmetrize(Pyy + np.asarray(meas_noise, dtype=float))
    return float(batch_gaussian_logpdf(y[None], ym[None], V[None])[0])
