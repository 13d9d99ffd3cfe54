"""Exact posterior sampling under the prior ``p(alpha, beta, gamma, sigma2) ~ 1/sigma2``.

Given a least-squares fit with ``n`` rows, the posterior is

    sigma2            ~ scaled-Inv-chi2(n - 3, sigma2_hat)
    (alpha, beta, gamma) | sigma2 ~ N3(theta_hat, sigma2 * (X'X)^-1)

so the coefficient marginal is a multivariate Student t with ``n - 3``
degrees of freedom. ``literal=True`` uses ``sigma2_hat`` in the normal
covariance instead of the drawn ``sigma2``.

Draw ``r`` of the ``k``-th state (sorted by code) always comes from stream
``stream_index(r, k)``; the batch and the simulator therefore agree draw for
draw, whatever the chunking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegeneratePosteriorError
from .regression import StateFit
from .rng import RngStream, StreamArray, stream_index
from .stats_core import SingleStream, chi2_cells, cholesky3, lower_times

__all__ = [
    "PosteriorDraw",
    "PosteriorParams",
    "draw_cells",
    "sample_posterior",
    "sample_posterior_arrays",
    "sample_posterior_batch",
    "write_draws",
]


@dataclass(frozen=True)
class PosteriorDraw:
    alpha: float
    beta: float
    gamma: float
    sigma2: float


@dataclass(frozen=True, eq=False)
class PosteriorParams:
    """Per-state quantities the sampler needs, precomputed once."""

    theta_hat: np.ndarray
    sigma2_hat: float
    chol: np.ndarray
    dof: int

    @classmethod
    def from_fit(cls, fit: StateFit) -> PosteriorParams:
        if fit.n < 4:
            raise DegeneratePosteriorError(f"{fit.state}: need n >= 4, got {fit.n}", fit.state)
        if not fit.sigma2_hat > 0:
            raise DegeneratePosteriorError(
                f"{fit.state}: zero residual variance, posterior is a point mass", fit.state
            )
        return cls(fit.theta_hat, fit.sigma2_hat, cholesky3(fit.xtx_inv), fit.n - 3)


def draw_cells(source, idx: np.ndarray, params: list[PosteriorParams], which: np.ndarray, literal: bool = False):
    """One posterior draw per selected cell.

    ``which[i]`` picks the entry of ``params`` used by cell ``idx[i]``.
    Returns ``(alpha, beta, gamma, sigma2)`` arrays.
    """
    theta = np.array([p.theta_hat for p in params])[which]
    s2hat = np.array([p.sigma2_hat for p in params])[which]
    dof = np.array([p.dof for p in params], dtype=np.int64)[which]
    low = np.array([p.chol for p in params])[which].transpose(1, 2, 0)

    sigma2 = (dof * s2hat) / chi2_cells(source, idx, dof)
    z0 = source.normals(idx)
    z1 = source.normals(idx)
    z2 = source.normals(idx)
    d0, d1, d2 = lower_times(low, z0, z1, z2)
    scale = np.sqrt(s2hat if literal else sigma2)
    return theta[:, 0] + scale * d0, theta[:, 1] + scale * d1, theta[:, 2] + scale * d2, sigma2


def sample_posterior(fit: StateFit, rng: RngStream, literal: bool = False) -> PosteriorDraw:
    params = PosteriorParams.from_fit(fit)
    cell = np.zeros(1, dtype=np.int64)
    a, b, g, s2 = draw_cells(SingleStream(rng), cell, [params], cell, literal)
    return PosteriorDraw(float(a[0]), float(b[0]), float(g[0]), float(s2[0]))


def sample_posterior_arrays(
    fits: dict[str, StateFit], seed: int, replications, literal: bool = False
) -> dict[str, np.ndarray]:
    """Draw arrays of shape ``(len(replications), n_states)`` keyed by field."""
    states = sorted(fits)
    reps = np.asarray(replications, dtype=np.int64)
    params = [PosteriorParams.from_fit(fits[s]) for s in states]
    k = len(states)
    ordinal = np.tile(np.arange(k), reps.size)
    streams = StreamArray(seed, stream_index(np.repeat(reps, k), ordinal))
    a, b, g, s2 = draw_cells(streams, np.arange(len(streams)), params, ordinal, literal)
    shape = (reps.size, k)
    return {
        "alpha": a.reshape(shape),
        "beta": b.reshape(shape),
        "gamma": g.reshape(shape),
        "sigma2": s2.reshape(shape),
    }


def sample_posterior_batch(
    fits: dict[str, StateFit], seed: int, count: int, literal: bool = False
) -> dict[str, list[PosteriorDraw]]:
    if count <= 0:
        return {s: [] for s in sorted(fits)}
    arr = sample_posterior_arrays(fits, seed, np.arange(count), literal)
    return {
        s: [
            PosteriorDraw(*(float(arr[f][r, j]) for f in ("alpha", "beta", "gamma", "sigma2")))
            for r in range(count)
        ]
        for j, s in enumerate(sorted(fits))
    }


def write_draws(path, draws: dict[str, list[PosteriorDraw]]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "replication", "alpha", "beta", "gamma", "sigma2"])
        for state in sorted(draws):
            for r, d in enumerate(draws[state]):
                w.writerow([state, r] + [f"{v:.6f}" for v in (d.alpha, d.beta, d.gamma, d.sigma2)])
