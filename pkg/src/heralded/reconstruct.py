"""Photon-number reconstruction from monitor-detector data.

Pipeline: fit one Gaussian per peak of a pulse-area histogram, normalise the
peak areas into a detected-count distribution ``f``, then undo dark counts
and binomial loss, ``f = D @ L @ p``, by two triangular solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import least_squares
from scipy.special import ndtr

from .detector import LossMatrix, dark_matrix, forward_matrix, loss_matrix
from .histogram import Histogram
from .stats import MAX_TRUNCATION, PhotonNumberDistribution

__all__ = [
    "FitError",
    "ConvergenceError",
    "Histogram",
    "LossMatrix",
    "PeakFit",
    "fit_peaks",
    "detected_distribution",
    "invert_counts",
    "invert_counts_constrained",
    "condition_report",
    "inversion_covariance",
    "project_simplex",
    "reconstruct",
    "counts_distribution",
]

Mode = Literal["signed", "constrained"]


class FitError(RuntimeError):
    """Peak fit failed; ``fit`` holds the last iterate when one exists."""

    def __init__(self, msg: str, fit: Optional["PeakFit"] = None):
        super().__init__(msg)
        self.fit = fit


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PeakFit:
    centers: np.ndarray
    sigmas: np.ndarray
    areas: np.ndarray
    residual_norm: float
    n_evaluations: int = 0
    converged: bool = True
    message: str = ""

    @property
    def n_peaks(self) -> int:
        return self.centers.size

    def to_dict(self) -> dict:
        return {
            "peaks": [
                {"index": k, "center": float(c), "sigma": float(s), "area": float(a)}
                for k, (c, s, a) in enumerate(zip(self.centers, self.sigmas, self.areas))
            ],
            "residual_norm": float(self.residual_norm),
            "n_evaluations": int(self.n_evaluations),
            "converged": bool(self.converged),
            "message": self.message,
        }


def _mixture_counts(edges, centers, sigmas, areas):
    cdf = ndtr((edges[None, :] - centers[:, None]) / sigmas[:, None])
    return (areas[:, None] * np.diff(cdf, axis=1)).sum(axis=0)


def fit_peaks(
    h: Histogram,
    n_peaks: int,
    G_hint: float,
    shared_spacing: bool = False,
    ftol: float = 1e-8,
    max_iter: int = 500,
) -> PeakFit:
    """Least-squares fit of ``n_peaks`` Gaussians to a pulse-area histogram.

    Peak k starts at k*G_hint with sigma G_hint/4 and the counts within
    G_hint/2 as its area. The model integrates each Gaussian over the bins,
    so fitted areas are in counts. Each centre may move by 0.4*G_hint unless
    ``shared_spacing`` ties them to an offset plus a common spacing.

    Raises ``ValueError`` on an empty histogram and :class:`FitError` on
    non-convergence or degenerate (overlapping) peaks.
    """
    if n_peaks < 1:
        raise ValueError("n_peaks must be >= 1")
    counts = np.asarray(h.counts, dtype=float)
    if counts.sum() <= 0:
        raise ValueError("cannot fit an empty histogram")
    G = float(G_hint)
    edges = h.edges
    x = h.centers
    k = np.arange(n_peaks)
    c0 = k * G
    area0 = np.array([counts[np.abs(x - c) <= G / 2].sum() for c in c0])
    s0 = np.full(n_peaks, G / 4)
    s_lo, s_hi = h.width / 4, 2 * G

    if shared_spacing:

        def unpack(q):
            return q[0] + q[1] * k, q[2 : 2 + n_peaks], q[2 + n_peaks :]

        q0 = np.concatenate([[0.0, G], s0, area0])
        lo = np.concatenate([[-0.4 * G, 0.5 * G], np.full(n_peaks, s_lo), np.zeros(n_peaks)])
        hi = np.concatenate([[0.4 * G, 1.5 * G], np.full(n_peaks, s_hi), np.full(n_peaks, np.inf)])
    else:

        def unpack(q):
            return q[:n_peaks], q[n_peaks : 2 * n_peaks], q[2 * n_peaks :]

        q0 = np.concatenate([c0, s0, area0])
        lo = np.concatenate([c0 - 0.4 * G, np.full(n_peaks, s_lo), np.zeros(n_peaks)])
        hi = np.concatenate([c0 + 0.4 * G, np.full(n_peaks, s_hi), np.full(n_peaks, np.inf)])

    def resid(q):
        return _mixture_counts(edges, *unpack(q)) - counts

    sol = least_squares(resid, q0, bounds=(lo, hi), method="trf", ftol=ftol, xtol=1e-12, gtol=1e-12, max_nfev=max_iter)
    centers, sigmas, areas = (np.array(a, dtype=float) for a in unpack(sol.x))
    fit = PeakFit(
        centers=centers,
        sigmas=sigmas,
        areas=areas,
        residual_norm=float(np.sqrt(2 * sol.cost)),
        n_evaluations=int(sol.nfev),
        converged=sol.status > 0,
        message=str(sol.message),
    )
    if sol.status <= 0:
        raise FitError(f"peak fit did not converge after {sol.nfev} evaluations (residual {fit.residual_norm:.4g})", fit)
    gaps = np.diff(centers)
    bad = np.flatnonzero(gaps < np.minimum(sigmas[:-1], sigmas[1:]) / 2)
    if bad.size:
        raise FitError(f"peaks {bad[0]} and {bad[0] + 1} are degenerate (spacing {gaps[bad[0]]:.3g})", fit)
    return fit


def detected_distribution(fit: PeakFit) -> PhotonNumberDistribution:
    """Peak areas, ordered by centre, normalised by their total."""
    order = np.argsort(fit.centers, kind="stable")
    areas = np.asarray(fit.areas, dtype=float)[order]
    total = areas.sum()
    if not total > 0:
        raise ValueError("total peak area is zero")
    return PhotonNumberDistribution(areas / total)


def _as_vector(f, N: int) -> np.ndarray:
    if isinstance(f, PhotonNumberDistribution):
        return f.padded(N)
    v = np.asarray(f, dtype=float)
    out = np.zeros(N + 1)
    m = min(N + 1, v.size)
    out[:m] = v[:m]
    return out


def _check_args(eta: float, d: float, N: int):
    if not eta > 0:
        raise ValueError("efficiency 0 makes the loss matrix singular")
    if N > MAX_TRUNCATION:
        raise ValueError(f"truncation N={N} exceeds cap {MAX_TRUNCATION}")
    if N < 0:
        raise ValueError("N must be >= 0")


def counts_distribution(counts, N: Optional[int] = None) -> np.ndarray:
    """Empirical detected distribution from a count tally (cut at N, not renormalised)."""
    c = np.asarray(counts, dtype=float)
    total = c.sum()
    if total <= 0:
        raise ValueError("no counts")
    f = c / total
    return f if N is None else _as_vector(f, N)


def invert_counts(f, eta: float, d: float, N: int) -> PhotonNumberDistribution:
    """Undo darks then loss: p = L^-1 D^-1 f by triangular solves.

    The result may contain negative entries when ``f`` is noisy; it keeps
    the sum of ``f`` up to the dark-matrix truncation tail.
    """
    _check_args(eta, d, N)
    fv = _as_vector(f, N)
    y = solve_triangular(dark_matrix(d, N).matrix, fv, lower=True)
    p = solve_triangular(loss_matrix(eta, N).matrix, y, lower=False)
    return PhotonNumberDistribution(p, signed=True, normalized=False)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {p >= 0, sum p = 1}."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, v.size + 1) > css)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _objective(A, p, f):
    r = A @ p - f
    return float(r @ r)


def _polish(A, f, p, tol=1e-12):
    """Exact equality-constrained least squares on the support of ``p``.

    Returns None if the candidate is infeasible or violates the optimality
    conditions on the inactive set.
    """
    S = np.flatnonzero(p > tol)
    if S.size == 0:
        return None
    As = A[:, S]
    m = S.size
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = 2 * As.T @ As
    K[:m, m] = 1.0
    K[m, :m] = 1.0
    rhs = np.concatenate([2 * As.T @ f, [1.0]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    q = np.zeros_like(p)
    q[S] = sol[:m]
    if np.any(q < 0):
        return None
    # KKT on the inactive set: gradient must not undercut the multiplier
    g = 2 * A.T @ (A @ q - f)
    lam = -sol[m]
    inactive = np.setdiff1d(np.arange(p.size), S)
    if inactive.size and np.any(g[inactive] < lam - 1e-9 * max(1.0, abs(lam))):
        return None
    return q


def invert_counts_constrained(
    f, eta: float, d: float, N: int, tol: float = 1e-12, max_iter: int = 100_000
) -> PhotonNumberDistribution:
    """Least-squares inversion restricted to the probability simplex.

    Minimises ||D L p - f||^2 over p >= 0, sum p = 1 by accelerated
    projected gradient (restarted when the objective rises), starting from
    the projected direct solution. Stops when the objective changes by less
    than ``tol``, then re-solves exactly on the detected support.
    """
    _check_args(eta, d, N)
    fv = _as_vector(f, N)
    A = forward_matrix(eta, d, N).matrix
    step = 1.0 / (2 * np.linalg.norm(A, 2) ** 2)

    p = project_simplex(invert_counts(fv, eta, d, N).probs)
    y = p.copy()
    t = 1.0
    obj = _objective(A, p, fv)
    for it in range(1, max_iter + 1):
        grad = 2 * A.T @ (A @ y - fv)
        p_new = project_simplex(y - step * grad)
        obj_new = _objective(A, p_new, fv)
        if obj_new > obj:
            if t == 1.0:
                # a plain projected step no longer descends
                break
            y, t = p.copy(), 1.0
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = p_new + ((t - 1) / t_new) * (p_new - p)
        change = obj - obj_new
        p, obj, t = p_new, obj_new, t_new
        if change < tol:
            break
    else:
        raise ConvergenceError(f"constrained inversion did not converge in {max_iter} iterations (objective {obj:.3e})")

    q = _polish(A, fv, p)
    if q is not None and _objective(A, q, fv) <= obj + 1e-15:
        p = q
    p = np.maximum(p, 0.0)
    return PhotonNumberDistribution(p / p.sum())


def reconstruct(f, eta: float, d: float, N: int, mode: Mode = "signed") -> PhotonNumberDistribution:
    if mode == "signed":
        return invert_counts(f, eta, d, N)
    if mode == "constrained":
        return invert_counts_constrained(f, eta, d, N)
    raise ValueError(f"unknown mode {mode!r}")


def _inverse(eta: float, d: float, N: int) -> np.ndarray:
    eye = np.eye(N + 1)
    y = solve_triangular(dark_matrix(d, N).matrix, eye, lower=True)
    return solve_triangular(loss_matrix(eta, N).matrix, y, lower=False)


def condition_report(eta: float, d: float, N: int) -> float:
    """Infinity-norm condition number of the forward matrix D @ L.

    Grows roughly like ((1 - eta) / eta)-powers of N for eta < 1, which is
    why a direct inversion amplifies counting noise in the upper entries.
    """
    _check_args(eta, d, N)
    A = forward_matrix(eta, d, N).matrix
    return float(np.abs(A).sum(axis=1).max() * np.abs(_inverse(eta, d, N)).sum(axis=1).max())


def inversion_covariance(f, n_events: float, eta: float, d: float, N: int) -> np.ndarray:
    """Covariance of the signed inversion when ``f`` is a multinomial estimate from ``n_events`` pulses."""
    fv = _as_vector(f, N)
    cov_f = (np.diag(fv) - np.outer(fv, fv)) / n_events
    M = _inverse(eta, d, N)
    return M @ cov_f @ M.T
