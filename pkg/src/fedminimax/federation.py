"""Simulated federation: client sampling and per-round drift / variance measurements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream
from .problems import ProblemSpec, full_gradient

SAMPLING_SCHEMES = ("uniform_without_replacement",)


def federation_errors(M, m, K, batch_size, sampling="uniform_without_replacement") -> list[str]:
    out = []
    if M < 1:
        out.append(f"M must be >= 1 (got {M})")
    if m < 1:
        out.append(f"m must be >= 1 (got {m})")
    if m > M:
        out.append(f"m={m} exceeds M={M}")
    if K < 1:
        out.append(f"K must be >= 1 (got {K})")
    if batch_size < 1:
        out.append(f"batch_size must be >= 1 (got {batch_size})")
    if sampling not in SAMPLING_SCHEMES:
        out.append(f"unknown sampling {sampling!r}")
    return out


@dataclass(frozen=True)
class FederationConfig:
    M: int = 1
    m: int = 1
    K: int = 1
    batch_size: int = 100
    sampling: str = "uniform_without_replacement"

    def __post_init__(self):
        errors = self.errors()
        if errors:
            raise ValueError("; ".join(errors))

    def errors(self) -> list[str]:
        return federation_errors(self.M, self.m, self.K, self.batch_size, self.sampling)

    @property
    def full_participation(self) -> bool:
        return self.m == self.M


@dataclass(frozen=True)
class ParticipationSample:
    t: int
    client_ids: tuple[int, ...]


def sample_participants(fed: FederationConfig, t: int, rng: RngStream) -> ParticipationSample:
    """Uniform sample of ``m`` distinct clients for round ``t``; a pure function of ``(rng, t)``."""
    if fed.m == fed.M:
        return ParticipationSample(t, tuple(range(fed.M)))
    gen = rng.derive(t).generator()
    ids = gen.choice(fed.M, size=fed.m, replace=False)
    return ParticipationSample(t, tuple(sorted(int(i) for i in ids)))


def participation_direction(p: ProblemSpec, x, y, sample: ParticipationSample) -> tuple[np.ndarray, np.ndarray]:
    """Average full-batch gradient over the sampled clients (no local steps, no noise)."""
    gx = np.zeros(p.dim_x)
    gy = np.zeros(p.dim_y)
    for i in sample.client_ids:
        cx, cy = p.clients[i].full_oracle(x, y)
        gx = gx + cx
        gy = gy + cy
    m = len(sample.client_ids)
    return gx / m, gy / m


@dataclass(frozen=True)
class DriftStats:
    e_x_norm: float
    e_y_norm: float
    d_x: float
    d_y: float
    n_resamples: int


class DiagnosticModeError(RuntimeError):
    pass


def realized_direction(local_results, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean of the stochastic gradients actually used in a round, ``u - e``."""
    sx = 0.0
    sy = 0.0
    for r in local_results:
        sx = sx + r.grad_sum_x
        sy = sy + r.grad_sum_y
    n = len(local_results) * K
    return sx / n, sy / n


def aggregate_drift_diagnostics(p: ProblemSpec, state, participants: ParticipationSample, local_results, hp,
                                fed: FederationConfig | None = None, rng: RngStream | None = None,
                                n_resamples: int = 0) -> DriftStats:
    """Client drift ``||e_bar||`` from retained local trajectories, plus a sampling-variance estimate.

    The drift is the deterministic part of the local-update error: the
    average gap between client gradients at the round's start point and at
    the points the local steps actually visited.  ``d`` is the mean squared
    distance between the full gradient of f at ``w_t`` and the realized round
    direction; with ``n_resamples > 0`` the round is re-executed that many
    times on fresh streams and the estimate averages all of them.
    """
    if any(r.trajectory is None for r in local_results):
        raise DiagnosticModeError("local trajectories were not retained; run the round with keep_trajectory=True")
    x, y = state.x, state.y
    K = hp.K
    ex = np.zeros(p.dim_x)
    ey = np.zeros(p.dim_y)
    for r in local_results:
        client = p.clients[r.client_id]
        g0x, g0y = client.full_oracle(x, y)
        for xj, yj in r.trajectory:
            gjx, gjy = client.full_oracle(xj, yj)
            ex = ex + (g0x - gjx)
            ey = ey + (g0y - gjy)
    n = len(local_results) * K
    ex, ey = ex / n, ey / n

    fx, fy = full_gradient(p, x, y)
    dirs = [realized_direction(local_results, K)]
    if n_resamples > 0:
        if fed is None or rng is None:
            raise ValueError("resampling needs the federation config and a stream")
        from .optim import execute_round
        for s in range(n_resamples):
            _, _, results = execute_round(p, state, hp, fed, rng.derive(s))
            dirs.append(realized_direction(results, K))
        dirs = dirs[1:]
    d_x = float(np.mean([np.sum((fx - ux) ** 2) for ux, _ in dirs]))
    d_y = float(np.mean([np.sum((fy - uy) ** 2) for _, uy in dirs]))
    return DriftStats(float(np.linalg.norm(ex)), float(np.linalg.norm(ey)), d_x, d_y, max(n_resamples, 1))
