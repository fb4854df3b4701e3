"""Functional PCA for sparsely observed curves via conditional expectation.

Mean and covariance are estimated by local linear smoothing of the pooled
observations (Epanechnikov kernel), the covariance surface is eigendecomposed
on a regular grid with trapezoid quadrature, and each curve's component
scores are the Gaussian conditional means given its own observations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from . import _smooth
from .data import FunctionalDataset, SparseCurve
from .errors import (
    CovarianceError,
    DegenerateCovarianceError,
    ExtrapolationError,
    InsufficientDataError,
    NumericalError,
    SmoothingError,
)

MAX_BANDWIDTH_DOUBLINGS = 10


def make_grid(domain: tuple[float, float], n_points: int = 51) -> np.ndarray:
    if n_points < 2:
        raise ValueError("grid needs at least two points")
    lo, hi = domain
    grid = np.linspace(lo, hi, n_points)
    grid.setflags(write=False)
    return grid


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    dx = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def epanechnikov(u: np.ndarray) -> np.ndarray:
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def _singular(det: np.ndarray, diag_prod: np.ndarray) -> np.ndarray:
    return ~(det > 1e-10 * diag_prod)


def _local_linear_1d_once(x, y, x0, h):
    s0, s1, s2, t0, t1 = _smooth.moments_1d(x, y, x0, h).T
    det = s0 * s2 - s1 * s1
    bad = _singular(det, s0 * s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = (s2 * t0 - s1 * t1) / det
    return est, bad


def local_linear_1d(x, y, x0, bandwidth: float) -> np.ndarray:
    """Local linear regression of ``y`` on ``x`` evaluated at ``x0``.

    Where the local design is singular the bandwidth is doubled for those
    evaluation points only, at most ``MAX_BANDWIDTH_DOUBLINGS`` times.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    x0 = np.asarray(x0, float)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    out = np.empty(x0.size)
    todo = np.arange(x0.size)
    h = float(bandwidth)
    for _ in range(MAX_BANDWIDTH_DOUBLINGS + 1):
        est, bad = _local_linear_1d_once(x, y, x0[todo], h)
        out[todo[~bad]] = est[~bad]
        todo = todo[bad]
        if todo.size == 0:
            return out
        h *= 2.0
    raise SmoothingError(f"local design still singular after {MAX_BANDWIDTH_DOUBLINGS} bandwidth doublings")


def _solve3(a, b):
    det = np.linalg.det(a)
    bad = _singular(det, a[..., 0, 0] * a[..., 1, 1] * a[..., 2, 2])
    a[bad] = np.eye(3)
    return np.linalg.solve(a, b[..., None])[..., 0, 0], bad


def _local_linear_2d_once(s, t, z, gs, gt, h):
    if gs is gt:
        # raw products come in mirrored pairs: accumulate s < t only and
        # recover the full moments from the transpose
        keep = s < t
        m = _smooth.moments_2d(s[keep], t[keep], z[keep], gs, gs, h)
        mt = m.transpose(1, 0, 2)
        swap = [0, 2, 1, 5, 4, 3, 6, 8, 7]
        m = m + mt[..., swap]
        if np.any(s == t):
            m += _smooth.moments_2d(s[s == t], t[s == t], z[s == t], gs, gs, h)
    else:
        m = _smooth.moments_2d(s, t, z, gs, gt, h)
    s00, s10, s01, s20, s11, s02, t0, t1, t2 = np.moveaxis(m, -1, 0)
    a = np.stack(
        [
            np.stack([s00, s10, s01], -1),
            np.stack([s10, s20, s11], -1),
            np.stack([s01, s11, s02], -1),
        ],
        -2,
    )
    return _solve3(a, np.stack([t0, t1, t2], -1))


def local_linear_2d(s, t, z, grid, bandwidth: float) -> np.ndarray:
    """Bivariate local linear smoother of ``z`` at ``(s, t)`` on ``grid x grid``."""
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    z = np.asarray(z, float)
    grid = np.asarray(grid, float)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    est, bad = _local_linear_2d_once(s, t, z, grid, grid, bandwidth)
    out = est
    h = float(bandwidth)
    for _ in range(MAX_BANDWIDTH_DOUBLINGS):
        if not bad.any():
            return out
        h *= 2.0
        rows = np.flatnonzero(bad.any(1))
        cols = np.flatnonzero(bad.any(0))
        sub, sub_bad = _local_linear_2d_once(s, t, z, grid[rows], grid[cols], h)
        block = bad[np.ix_(rows, cols)]
        fill = block & ~sub_bad
        r, c = np.nonzero(fill)
        out[rows[r], cols[c]] = sub[r, c]
        still = np.zeros_like(bad)
        r, c = np.nonzero(block & sub_bad)
        still[rows[r], cols[c]] = True
        bad = still
    if bad.any():
        raise SmoothingError(f"local design still singular after {MAX_BANDWIDTH_DOUBLINGS} bandwidth doublings")
    return out


def _rotated_diagonal_once(s, t, z, x0, h):
    u1 = (s + t) / np.sqrt(2.0)
    u2 = (t - s) / np.sqrt(2.0)
    m = _smooth.moments_rotated(u1, u2, z, x0, h)
    iu = np.triu_indices(3)
    a = np.empty((x0.size, 3, 3))
    a[:, iu[0], iu[1]] = m[:, :6]
    a[:, iu[1], iu[0]] = m[:, :6]
    return _solve3(a, m[:, 6:])


def rotated_diagonal(s, t, z, grid, bandwidth: float) -> np.ndarray:
    """Covariance diagonal ``G(t, t)`` from off-diagonal raw products.

    Fits, in coordinates rotated by 45 degrees, a model that is linear along
    the diagonal and quadratic across it. A plain bivariate local linear
    smoother flattens the ridge a covariance surface has on its diagonal,
    which would bias the error-variance estimate upwards.
    """
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    z = np.asarray(z, float)
    x0 = np.asarray(grid, float) * np.sqrt(2.0)
    out = np.empty(x0.size)
    todo = np.arange(x0.size)
    h = float(bandwidth)
    for _ in range(MAX_BANDWIDTH_DOUBLINGS + 1):
        est, bad = _rotated_diagonal_once(s, t, z, x0[todo], h)
        out[todo[~bad]] = est[~bad]
        todo = todo[bad]
        if todo.size == 0:
            return out
        h *= 2.0
    raise SmoothingError(f"local design still singular after {MAX_BANDWIDTH_DOUBLINGS} bandwidth doublings")


@dataclass(frozen=True, eq=False)
class MeanFunction:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.grid, self.values)


@dataclass(frozen=True, eq=False)
class CovarianceSurface:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float


@dataclass(frozen=True)
class FpcaConfig:
    """Settings for :func:`fit_fpca`.

    Bandwidths default to a fraction of the domain length when left as None.
    ``k_min``/``k_max`` optionally clamp the PVE-selected component count.
    """

    n_grid: int = 51
    mean_bandwidth: float | None = None
    cov_bandwidth: float | None = None
    noise_bandwidth: float | None = None
    mean_bandwidth_frac: float = 0.10
    cov_bandwidth_frac: float = 0.20
    pve_threshold: float = 0.99
    k_min: int | None = None
    k_max: int | None = None

    def bandwidths(self, domain: tuple[float, float]) -> tuple[float, float, float]:
        """(mean, covariance, noise) bandwidths; noise defaults to the mean bandwidth."""
        length = domain[1] - domain[0]
        hm = self.mean_bandwidth if self.mean_bandwidth is not None else self.mean_bandwidth_frac * length
        hc = self.cov_bandwidth if self.cov_bandwidth is not None else self.cov_bandwidth_frac * length
        hn = self.noise_bandwidth if self.noise_bandwidth is not None else hm
        return float(hm), float(hc), float(hn)


@dataclass(frozen=True, eq=False)
class FpcaModel:
    mean: MeanFunction
    eigenvalues: np.ndarray  # (K,)
    eigenfunctions: np.ndarray  # (K, G)
    noise_variance: float
    pve_threshold: float
    pve: float
    covariance: CovarianceSurface | None = None

    @property
    def n_components(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def grid(self) -> np.ndarray:
        return self.mean.grid

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def scores(self, curves: Iterable[SparseCurve]) -> np.ndarray:
        return pace_scores_batch(self, curves)


def estimate_mean(data: FunctionalDataset, grid: np.ndarray, bandwidth: float) -> MeanFunction:
    t, z, _ = data.pooled
    if t.size < 2:
        raise InsufficientDataError("mean estimation needs at least two pooled observations")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    values = local_linear_1d(t, z, grid, bandwidth)
    values.setflags(write=False)
    return MeanFunction(grid, values, float(bandwidth))


def raw_covariances(data: FunctionalDataset, mean: MeanFunction):
    """Off-diagonal products ``(s, t, c)`` and diagonal ``(t, c)`` of centered observations."""
    s_parts, t_parts, c_parts = [], [], []
    dt_parts, dc_parts = [], []
    for curve in data:
        r = curve.values - mean(curve.times)
        dt_parts.append(curve.times)
        dc_parts.append(r * r)
        m = r.size
        if m < 2:
            continue
        j, l = np.nonzero(~np.eye(m, dtype=bool))
        s_parts.append(curve.times[j])
        t_parts.append(curve.times[l])
        c_parts.append(r[j] * r[l])
    if not s_parts:
        raise CovarianceError("no curve has two or more observations")
    off = tuple(np.concatenate(p) for p in (s_parts, t_parts, c_parts))
    diag = (np.concatenate(dt_parts), np.concatenate(dc_parts))
    return off, diag


def estimate_covariance(
    data: FunctionalDataset,
    mean: MeanFunction,
    bandwidth: float,
    noise_bandwidth: float | None = None,
) -> tuple[CovarianceSurface, float]:
    """Smoothed covariance surface and measurement-error variance.

    The diagonal raw products carry the error variance, so the surface is
    smoothed from off-diagonal products only. The error variance is the
    average gap, over the central 80% of the domain, between a 1-D smooth
    of the diagonal products and the covariance diagonal (see
    :func:`rotated_diagonal`), floored at zero.
    """
    grid = mean.grid
    (s, t, c), (td, cd) = raw_covariances(data, mean)
    g = local_linear_2d(s, t, c, grid, bandwidth)
    g = (g + g.T) / 2
    g.setflags(write=False)

    hn = bandwidth if noise_bandwidth is None else noise_bandwidth
    v = local_linear_1d(td, cd, grid, hn)
    g_diag = rotated_diagonal(s, t, c, grid, hn)
    lo, hi = grid[0], grid[-1]
    pad = 0.1 * (hi - lo)
    central = (grid >= lo + pad - 1e-12) & (grid <= hi - pad + 1e-12)
    sigma2 = max(0.0, float(np.mean(v[central] - g_diag[central])))
    return CovarianceSurface(grid, g, float(bandwidth)), sigma2


def select_k(eigenvalues: np.ndarray, pve_threshold: float, k_min=None, k_max=None) -> int:
    """Smallest K whose cumulative variance share reaches ``pve_threshold``."""
    if not 0.0 < pve_threshold <= 1.0:
        raise ValueError("pve_threshold must lie in (0, 1]")
    lam = np.asarray(eigenvalues, float)
    share = np.cumsum(lam) / lam.sum()
    k = int(np.searchsorted(share, pve_threshold * (1 - 1e-12), side="left")) + 1
    k = min(k, lam.size)
    if k_min is not None:
        k = max(k, int(k_min))
    if k_max is not None:
        k = min(k, int(k_max))
    return max(1, min(k, lam.size))


def eigendecompose(
    surface: CovarianceSurface,
    pve_threshold: float = 0.99,
    k_bounds: tuple[int | None, int | None] = (None, None),
    atol: float = 0.0,
    rtol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Eigenpairs of the covariance operator discretized on the surface grid.

    Returns all retained positive eigenvalues (descending), the matching
    eigenfunctions as rows (unit norm under trapezoid quadrature, largest
    magnitude entry positive) and the PVE-selected K. Eigenvalues within
    ``max(atol, rtol * largest)`` of zero count as non-positive.
    """
    grid = surface.grid
    g = np.asarray(surface.values, float)
    if not np.allclose(g, g.T, atol=1e-10, rtol=0):
        raise ValueError("covariance surface is not symmetric")
    w = trapezoid_weights(grid)
    sw = np.sqrt(w)
    lam, u = np.linalg.eigh(sw[:, None] * g * sw[None, :])
    lam = lam[::-1]
    u = u[:, ::-1]
    cutoff = max(atol, rtol * max(lam[0], 0.0))
    keep = lam > cutoff
    if not keep.any():
        raise DegenerateCovarianceError("covariance surface has no positive eigenvalue")
    lam = lam[keep]
    phi = (u[:, keep] / sw[:, None]).T
    phi /= np.sqrt((phi * phi * w).sum(1))[:, None]
    idx = np.argmax(np.abs(phi), axis=1)
    signs = np.sign(phi[np.arange(phi.shape[0]), idx])
    phi *= signs[:, None]
    k = select_k(lam, pve_threshold, *k_bounds)
    return lam, phi, k


def fit_fpca(data: FunctionalDataset, config: FpcaConfig = FpcaConfig()) -> FpcaModel:
    if len(data) < 2:
        raise InsufficientDataError("FPCA needs at least two curves")
    grid = make_grid(data.domain, config.n_grid)
    h_mean, h_cov, h_noise = config.bandwidths(data.domain)
    mean = estimate_mean(data, grid, h_mean)
    surface, sigma2 = estimate_covariance(data, mean, h_cov, h_noise)
    _, z, _ = data.pooled
    # treat rounding-level variance (e.g. constant curves) as exactly zero
    atol = 1e-12 * (float(np.max(np.abs(z))) ** 2 + 1e-300)
    lam, phi, k = eigendecompose(surface, config.pve_threshold, (config.k_min, config.k_max), atol=atol)
    lam_k = lam[:k].copy()
    phi_k = phi[:k].copy()
    lam_k.setflags(write=False)
    phi_k.setflags(write=False)
    return FpcaModel(
        mean=mean,
        eigenvalues=lam_k,
        eigenfunctions=phi_k,
        noise_variance=sigma2,
        pve_threshold=config.pve_threshold,
        pve=float(lam[:k].sum() / lam.sum()),
        covariance=surface,
    )


def _check_domain(model: FpcaModel, times: np.ndarray, cid) -> None:
    lo, hi = model.domain
    tol = 1e-9 * max(1.0, hi - lo)
    if times[0] < lo - tol or times[-1] > hi + tol:
        raise ExtrapolationError(f"curve {cid!r} has times outside the model domain [{lo}, {hi}]")


def pace_scores_batch(model: FpcaModel, curves: Iterable[SparseCurve]) -> np.ndarray:
    """Conditional-expectation scores for many curves, shape ``(n, K)``.

    Curves are grouped by observation count so each group is a single
    batched linear solve.
    """
    curves = list(curves)
    K = model.n_components
    out = np.empty((len(curves), K))
    if not curves:
        return out
    by_len: dict[int, list[int]] = {}
    for i, c in enumerate(curves):
        _check_domain(model, c.times, c.id)
        by_len.setdefault(len(c), []).append(i)
    grid = model.grid
    lam = model.eigenvalues
    sigma2 = model.noise_variance
    for m, idx in by_len.items():
        times = np.stack([curves[i].times for i in idx])  # (c, m)
        values = np.stack([curves[i].values for i in idx])
        phi = np.stack([np.interp(times, grid, f) for f in model.eigenfunctions], -1)  # (c, m, K)
        resid = values - np.interp(times, grid, model.mean.values)
        sigma = np.einsum("cik,k,cjk->cij", phi, lam, phi)
        if sigma2 > 0:
            ridge = np.full(len(idx), sigma2)
        else:
            ridge = 1e-8 * np.trace(sigma, axis1=1, axis2=2) / m
        sigma[:, np.arange(m), np.arange(m)] += ridge[:, None]
        try:
            x = np.linalg.solve(sigma, resid[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular score covariance for curves of length {m}") from exc
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite scores for curves of length {m}")
        out[idx] = lam[None, :] * np.einsum("cmk,cm->ck", phi, x)
    return out


def pace_scores(model: FpcaModel, curve: SparseCurve) -> np.ndarray:
    return pace_scores_batch(model, [curve])[0]


def dump_model(model: FpcaModel, fh: IO[str]) -> None:
    """Write ``model`` as CSV blocks separated by ``# section`` headers."""

    def row(vals: Sequence[float]) -> str:
        return ",".join(repr(float(v)) for v in vals)

    fh.write("# summary\n")
    fh.write("n_components,noise_variance,pve_threshold,pve,mean_bandwidth\n")
    fh.write(
        f"{model.n_components},{model.noise_variance!r},{model.pve_threshold!r},"
        f"{model.pve!r},{model.mean.bandwidth!r}\n"
    )
    fh.write("# eigenvalues\n")
    fh.write("k,eigenvalue\n")
    for k, lam in enumerate(model.eigenvalues, start=1):
        fh.write(f"{k},{float(lam)!r}\n")
    fh.write("# functions\n")
    fh.write("t,mean," + ",".join(f"phi{k}" for k in range(1, model.n_components + 1)) + "\n")
    for j, t in enumerate(model.grid):
        fh.write(row([t, model.mean.values[j], *model.eigenfunctions[:, j]]) + "\n")
