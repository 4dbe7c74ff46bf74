"""FESS-GDA and its relatives: Smoothed-GDA, Local SGDA, FSGDA, plus step-size presets.

Random streams for a run with seed ``s``:

* participant sampling in round t: ``RngStream(s, (0, t))``
* client i, round t, local step k: ``RngStream(s, (1, t, i, k))``

so a client's draws do not depend on which other clients were sampled or on
the order in which clients execute.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import NonFiniteError, RngStream, RunConfig, TraceRecord, as_vec, check_finite
from .federation import FederationConfig, ParticipationSample, sample_participants
from .geometry import diameter, is_feasible, project
from .problems import ClientShard, ClosedFormOracles, KnownConstants, ProblemSpec, full_gradient

ALGORITHMS = ("fessgda", "smoothed_gda", "local_sgda", "fsgda")
SETTINGS = ("nc_pl", "nc_1pc", "nc_c", "pointwise_max", "pl_pl")


class LocalStepCapWarning(UserWarning):
    pass


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParamState:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    t: int = 0
    samples_used: int = 0

    @classmethod
    def initial(cls, x0, y0, z0=None) -> "ParamState":
        x = as_vec(x0, "x0")
        return cls(x, as_vec(y0, "y0"), x if z0 is None else as_vec(z0, "z0"))


@dataclass(frozen=True)
class HyperParams:
    eta_x_local: float
    eta_y_local: float
    eta_x_global: float = 1.0
    eta_y_global: float = 1.0
    beta: float = 0.5
    p: float = 0.0
    K: int = 1
    provenance: str = "manual"
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        errs = self.errors()
        if errs:
            raise ValueError("; ".join(errs))

    def errors(self) -> list[str]:
        out = []
        for name in ("eta_x_local", "eta_y_local", "eta_x_global", "eta_y_global"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                out.append(f"{name} must be positive and finite (got {v})")
        if not 0.0 < self.beta <= 1.0:
            out.append(f"beta must lie in (0, 1] (got {self.beta})")
        if not (math.isfinite(self.p) and self.p >= 0):
            out.append(f"p must be >= 0 (got {self.p})")
        if int(self.K) != self.K or self.K < 1:
            out.append(f"K must be a positive integer (got {self.K})")
        return out

    @property
    def eta_x(self) -> float:
        return self.eta_x_global * self.eta_x_local

    @property
    def eta_y(self) -> float:
        return self.eta_y_global * self.eta_y_local

    def to_dict(self) -> dict:
        return {"eta_x_local": self.eta_x_local, "eta_y_local": self.eta_y_local,
                "eta_x_global": self.eta_x_global, "eta_y_global": self.eta_y_global,
                "beta": self.beta, "p": self.p, "K": self.K, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        keys = ("eta_x_local", "eta_y_local", "eta_x_global", "eta_y_global", "beta", "p", "K", "provenance")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass(frozen=True)
class LocalUpdateResult:
    client_id: int
    x_final: np.ndarray
    y_final: np.ndarray
    samples: int
    grad_sum_x: np.ndarray
    grad_sum_y: np.ndarray
    # points (x^k, y^k) at which the K gradients were drawn; diagnostic mode only
    trajectory: list | None = None


class RunResult(NamedTuple):
    trace: list
    final: ParamState


def sampling_stream(root: RngStream) -> RngStream:
    return root.derive(0)


def client_stream(root: RngStream, t: int, client_id: int) -> RngStream:
    return root.derive(1, t, client_id)


def local_step_cap(l: float, K: int) -> float:
    """Generic bound on local rates, ``1 / (2l sqrt(2(2K-1)(K-1)))``; infinite for K = 1."""
    if K <= 1:
        return math.inf
    return 1.0 / (2.0 * l * math.sqrt(2.0 * (2 * K - 1) * (K - 1)))


def local_cap_warnings(hp: HyperParams, l: float) -> list[str]:
    cap = local_step_cap(l, hp.K)
    out = []
    for name in ("eta_x_local", "eta_y_local"):
        v = getattr(hp, name)
        if v > cap:
            out.append(f"{name}={v:.3g} exceeds the local-step cap {cap:.3g} for K={hp.K}, l={l:.3g}")
    return out


# --------------------------------------------------------------------------
# one round


def local_updates(p: ProblemSpec, client: ClientShard, x_t, y_t, hp: HyperParams, batch: int,
                  rng: RngStream, keep_trajectory: bool = False, round_index: int | None = None
                  ) -> LocalUpdateResult:
    """K local stochastic GDA steps on one client; y is projected after every step.

    The smoothing term is not applied here; it enters at the server.
    """
    x = np.asarray(x_t, dtype=np.float64)
    y = np.asarray(y_t, dtype=np.float64)
    sx = np.zeros(p.dim_x)
    sy = np.zeros(p.dim_y)
    traj = [] if keep_trajectory else None
    for k in range(hp.K):
        if traj is not None:
            traj.append((x, y))
        try:
            gx, gy = client.oracle(x, y, batch, rng.derive(k))
        except Exception as exc:
            raise OracleError(f"oracle failed on client {client.client_id}, local step {k}") from exc
        sx = sx + gx
        sy = sy + gy
        x = x - hp.eta_x_local * gx
        y = project(p.constraint, y + hp.eta_y_local * gy)
        check_finite(x, f"local step {k} of client {client.client_id} (x)", round_index)
        check_finite(y, f"local step {k} of client {client.client_id} (y)", round_index)
    return LocalUpdateResult(client.client_id, x, y, hp.K * batch, sx, sy, traj)


def _check_round_inputs(p: ProblemSpec, hp: HyperParams, fed: FederationConfig) -> None:
    if fed.M != p.M:
        raise ValueError(f"federation has M={fed.M} clients but the problem has {p.M}")
    if fed.K != hp.K:
        raise ValueError(f"local steps disagree: federation K={fed.K}, hyperparameters K={hp.K}")


def execute_round(p: ProblemSpec, state: ParamState, hp: HyperParams, fed: FederationConfig,
                  rng: RngStream, keep_trajectory: bool = False, workers: int = 1,
                  ) -> tuple[ParamState, ParticipationSample, list[LocalUpdateResult]]:
    """One FESS-GDA round; returns the new state, the sampled clients and their local results.

    Server aggregation is a serial fold in ascending client id.  The x update
    is written in gradient form, which is algebraically the averaged-model
    form ``x + eta_xg (xbar - x) - eta_xl eta_xg K p (x - z)``.
    """
    _check_round_inputs(p, hp, fed)
    t = state.t
    sample = sample_participants(fed, t, sampling_stream(rng))
    if not sample.client_ids:
        raise ValueError(f"round {t}: empty participant sample")

    def work(cid):
        return local_updates(p, p.clients[cid], state.x, state.y, hp, fed.batch_size,
                             client_stream(rng, t, cid), keep_trajectory, t)

    if workers > 1 and len(sample.client_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(work, sample.client_ids))
    else:
        results = [work(cid) for cid in sample.client_ids]

    m, K = len(results), hp.K
    sx = np.zeros(p.dim_x)
    for r in results:
        sx = sx + r.grad_sum_x
    coef_x = hp.eta_x_global * hp.eta_x_local * K
    x_new = state.x - coef_x * (sx / (m * K) + hp.p * (state.x - state.z))

    if p.constraint.kind == "unconstrained":
        sy = np.zeros(p.dim_y)
        for r in results:
            sy = sy + r.grad_sum_y
        y_new = state.y + (hp.eta_y_global * hp.eta_y_local * K) * (sy / (m * K))
    else:
        ybar = np.zeros(p.dim_y)
        for r in results:
            ybar = ybar + r.y_final
        ybar = ybar / m
        y_new = project(p.constraint, (1.0 - hp.eta_y_global) * state.y + hp.eta_y_global * ybar)
    z_new = (1.0 - hp.beta) * state.z + hp.beta * x_new

    check_finite(x_new, "server x update", t)
    check_finite(y_new, "server y update", t)
    check_finite(z_new, "anchor z update", t)
    for a in (x_new, y_new, z_new):
        a.flags.writeable = False
    new = ParamState(x_new, y_new, z_new, t + 1, state.samples_used + m * K * fed.batch_size)
    return new, sample, results


def fessgda_round(p: ProblemSpec, state: ParamState, hp: HyperParams, fed: FederationConfig,
                  rng: RngStream, workers: int = 1) -> ParamState:
    return execute_round(p, state, hp, fed, rng, workers=workers)[0]


# --------------------------------------------------------------------------
# drivers


def _recorder(p: ProblemSpec, names: Sequence[str], p_smooth: float, inner):
    from .diagnostics import evaluate_metrics

    start = time.perf_counter()

    def record(state: ParamState) -> TraceRecord:
        vals = evaluate_metrics(p, state, names, p_smooth=p_smooth, cfg=inner)
        for k, v in vals.items():
            if not math.isfinite(v):
                raise NonFiniteError(f"metric {k}", state.t)
        return TraceRecord(state.t, state.samples_used, vals, (time.perf_counter() - start) * 1e3)

    return record


def _check_init(p: ProblemSpec, init: ParamState) -> None:
    p.check_point(init.x, init.y)
    if init.z.size != p.dim_x:
        raise ValueError(f"z has dimension {init.z.size}, expected {p.dim_x}")
    if not is_feasible(p.constraint, init.y, tol=1e-12):
        raise ValueError("initial y is not feasible for the constraint set")


def run_fessgda(p: ProblemSpec, init: ParamState, hp: HyperParams, fed: FederationConfig, cfg: RunConfig,
                hooks: Sequence[Callable] = (), keep_trajectory: bool = False, inner=None) -> RunResult:
    """Run T rounds of FESS-GDA, recording metrics at t = 0, every ``metrics_every`` rounds and at T.

    Each hook is called as ``hook(state, sample, local_results)`` after every
    round; pass ``keep_trajectory=True`` when a hook needs local iterates.
    """
    _check_round_inputs(p, hp, fed)
    _check_init(p, init)
    if hp.provenance == "manual":
        for msg in local_cap_warnings(hp, p.constants.l):
            warnings.warn(msg, LocalStepCapWarning, stacklevel=2)
    rng = RngStream(cfg.seed)
    record = _recorder(p, cfg.metrics, hp.p, inner)
    state = init
    trace = [record(state)]
    # overflow surfaces as a NonFiniteError naming the round, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.T):
            state, sample, results = execute_round(p, state, hp, fed, rng, keep_trajectory, cfg.workers)
            for hook in hooks:
                hook(state, sample, results)
            if state.t % cfg.metrics_every == 0 or state.t == cfg.T:
                trace.append(record(state))
    return RunResult(trace, state)


def run_local_sgda_baseline(p: ProblemSpec, init: ParamState, hp: HyperParams, fed: FederationConfig,
                            cfg: RunConfig, **kw) -> RunResult:
    """Local SGDA: FESS-GDA with no smoothing and unit server rates."""
    hp = replace(hp, p=0.0, eta_x_global=1.0, eta_y_global=1.0)
    return run_fessgda(p, init, hp, fed, cfg, **kw)


def run_fsgda(p: ProblemSpec, init: ParamState, hp: HyperParams, fed: FederationConfig,
              cfg: RunConfig, **kw) -> RunResult:
    """FSGDA: FESS-GDA with no smoothing (server rates kept)."""
    return run_fessgda(p, init, replace(hp, p=0.0), fed, cfg, **kw)


def run_smoothed_gda(p: ProblemSpec, init: ParamState, eta_x: float, eta_y: float, beta: float,
                     p_smooth: float, T: int, metrics: Sequence[str] = ("grad_x_norm", "grad_map_y_norm"),
                     metrics_every: int = 1, inner=None) -> RunResult:
    """Centralized deterministic smoothed GDA on the full-batch gradient of f."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1] (got {beta})")
    _check_init(p, init)
    record = _recorder(p, metrics, p_smooth, inner)
    x, y, z = init.x, init.y, init.z
    state = init
    trace = [record(state)]
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            gx, gy = full_gradient(p, x, y)
            x_new = x - eta_x * (gx + p_smooth * (x - z))
            y = project(p.constraint, y + eta_y * gy)
            z = (1.0 - beta) * z + beta * x_new
            x = x_new
            for a, name in ((x, "x"), (y, "y"), (z, "z")):
                check_finite(a, f"smoothed GDA {name} update", t)
            state = ParamState(x, y, z, t + 1, state.samples_used + 1)
            if state.t % metrics_every == 0 or state.t == T:
                trace.append(record(state))
    return RunResult(trace, state)


def run_algorithm(name: str, p: ProblemSpec, init: ParamState, hp: HyperParams, fed: FederationConfig,
                  cfg: RunConfig, inner=None) -> RunResult:
    if name == "fessgda":
        return run_fessgda(p, init, hp, fed, cfg, inner=inner)
    if name == "local_sgda":
        return run_local_sgda_baseline(p, init, hp, fed, cfg, inner=inner)
    if name == "fsgda":
        return run_fsgda(p, init, hp, fed, cfg, inner=inner)
    if name == "smoothed_gda":
        return run_smoothed_gda(p, init, hp.eta_x, hp.eta_y, hp.beta, hp.p, cfg.T, cfg.metrics,
                                cfg.metrics_every, inner)
    raise ValueError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")


# --------------------------------------------------------------------------
# concave-in-y wrapper


def ncc_regularize(p: ProblemSpec, epsilon: float, y0) -> ProblemSpec:
    """``f(x, y) - eps/(4D) ||y - y0||^2``: strongly concave in y with modulus ``eps/(2D)``."""
    D = diameter(p.constraint)
    if not math.isfinite(D):
        raise ValueError("the concave-case regularizer needs a bounded constraint set for y")
    if not 0.0 < epsilon <= 2.0 * p.constants.l * D:
        raise ValueError(f"epsilon must lie in (0, 2 l D] = (0, {2 * p.constants.l * D:.6g}] (got {epsilon})")
    y0 = as_vec(y0, "y0")
    if y0.size != p.dim_y:
        raise ValueError(f"y0 has dimension {y0.size}, expected {p.dim_y}")
    coef = epsilon / (2.0 * D)

    def wrap(c: ClientShard) -> ClientShard:
        def full_oracle(x, y):
            gx, gy = c.full_oracle(x, y)
            return gx, gy - coef * (np.asarray(y) - y0)

        def oracle(x, y, batch, stream):
            gx, gy = c.oracle(x, y, batch, stream)
            return gx, gy - coef * (np.asarray(y) - y0)

        def value(x, y):
            d = np.asarray(y) - y0
            return c.value(x, y) - 0.5 * coef * float(d @ d)

        return ClientShard(c.client_id, c.data, oracle, full_oracle, value)

    k = p.constants
    prov = dict(k.provenance)
    prov.update({"mu": "analytic"})
    consts = replace(k, l=k.l + coef, mu=coef, diam_y=D, phi_star=None, provenance=prov)
    source = None
    if p.source is not None:
        source = dict(p.source)
        source["ncc"] = {"epsilon": epsilon, "y0": y0.tolist()}
    return replace(p, clients=tuple(wrap(c) for c in p.clients), constants=consts,
                   closed_form=ClosedFormOracles(), source=source,
                   meta={**p.meta, "ncc": {"epsilon": epsilon, "y0": y0, "base": p}})


# --------------------------------------------------------------------------
# presets


class PresetError(ValueError):
    pass


def _require(constants: KnownConstants, setting: str, name: str, what: str):
    v = getattr(constants, name)
    if v is None or (name in ("mu", "mu1", "mu2") and v <= 0):
        raise PresetError(f"{setting} preset requires constants.{name} ({what})")
    return v


def _split(eta: float, caps: list[float]) -> tuple[float, float]:
    local = min(caps)
    if not math.isfinite(local):
        return eta, 1.0
    return local, eta / local


def _smoothed_schedule(setting: str, l: float, fed: FederationConfig, T: int, sigma: float, sigma_G: float,
                       delta: float | None) -> dict:
    K, m = fed.K, fed.m
    first = 1.0 / (1000.0 * K * l)
    eta_x = first
    stoch = math.inf
    if sigma > 0:
        if delta is None:
            raise PresetError(f"{setting} preset with sigma > 0 needs delta = V0 - Phi* "
                              "(see diagnostics.estimate_delta)")
        if not delta > 0:
            raise PresetError(f"delta must be > 0 (got {delta})")
        if m < fed.M and sigma_G > 0:
            stoch = math.sqrt(m * delta) / (sigma * math.sqrt(T * l) * K)
        else:
            stoch = math.sqrt(m * delta) / (sigma * math.sqrt(K * T * l))
        eta_x = min(first, stoch)
    return {"p": 2.0 * l, "eta_x": eta_x, "eta_y": eta_x / 256.0, "eta_x_terms": [first, stoch]}


def preset_hyperparams(setting: str, constants: KnownConstants, fed: FederationConfig, T: int,
                       target_eps: float | None = None, delta: float | None = None) -> HyperParams:
    """Step sizes, smoothing and anchor rate prescribed by the convergence theory for ``setting``.

    Local rates are the largest values meeting every explicit cap; the
    server rate is the total rate divided by the local one.  Caps stated only
    up to an unknown constant are not applied.
    """
    if setting not in SETTINGS:
        raise PresetError(f"unknown preset setting {setting!r}; expected one of {SETTINGS}")
    K = fed.K
    l = constants.l
    c0 = local_step_cap(l, K)
    details: dict = {"setting": setting, "delta": delta}

    if setting == "pl_pl":
        mu1 = _require(constants, setting, "mu1", "PL modulus in x")
        mu2 = _require(constants, setting, "mu2", "PL modulus in y")
        if mu1 >= mu2:
            eta_y = 1.0 / (4.0 * l * K)
            eta_x = eta_y * mu2 ** 2 / (64.0 * l ** 2)
            caps_x = [c0, math.sqrt(eta_x / (1536.0 * eta_y * l ** 2 * K ** 2))]
            caps_y = [c0, math.sqrt(1.0 / (1536.0 * l ** 2 * K ** 2))]
        else:
            eta_x = 1.0 / (4.0 * l * K)
            eta_y = eta_x * mu1 ** 2 / (64.0 * l ** 2)
            caps_x = [c0, math.sqrt(1.0 / (1536.0 * l ** 2 * K ** 2))]
            caps_y = [c0, math.sqrt(eta_y / (1536.0 * eta_x * l ** 2 * K ** 2))]
        p_s, beta = 0.0, 1.0
        details.update(kappa1=l / mu1, kappa2=l / mu2)
    else:
        sigma, sigma_G = constants.sigma, constants.sigma_G
        if setting == "nc_pl":
            mu = _require(constants, setting, "mu", "PL modulus of f(x, .)")
            sched = _smoothed_schedule(setting, l, fed, T, sigma, sigma_G, delta)
            beta = sched["eta_y"] * K * mu / 80000.0
            details["kappa"] = l / mu
        elif setting == "nc_c":
            D = _require(constants, setting, "diam_y", "diameter of the bounded set Y")
            if target_eps is None or not 0 < target_eps <= 2 * l * D:
                raise PresetError(f"nc_c preset requires 0 < target_eps <= 2 l D(Y) (got {target_eps})")
            mu_r = target_eps / (2.0 * D)
            l = l + mu_r
            c0 = local_step_cap(l, K)
            sched = _smoothed_schedule(setting, l, fed, T, sigma, sigma_G, delta)
            beta = sched["eta_y"] * K * mu_r / 80000.0
            details.update(kappa=2.0 * constants.l * D / target_eps, l_reg=l, mu_reg=mu_r)
        elif setting == "nc_1pc":
            D = _require(constants, setting, "diam_y", "diameter of the bounded set Y")
            if target_eps is None or not target_eps > 0:
                raise PresetError("nc_1pc preset requires target_eps > 0")
            sched = _smoothed_schedule(setting, l, fed, T, sigma, sigma_G, delta)
            beta = sched["eta_y"] * K * target_eps ** 2 / (80000.0 * D)
        else:  # pointwise_max
            _require(constants, setting, "diam_y", "diameter of the bounded set Y")
            sched = _smoothed_schedule(setting, l, fed, T, sigma, sigma_G, delta)
            beta = sched["eta_y"] * K * l / 80000.0
        p_s, eta_x, eta_y = sched["p"], sched["eta_x"], sched["eta_y"]
        caps_x = [c0, math.sqrt(beta / (6144.0 * eta_x * p_s * l ** 2 * K ** 3))]
        caps_y = [c0, math.sqrt(eta_y / (3072.0 * eta_x * l ** 2 * K ** 2))]
        details["eta_x_terms"] = sched["eta_x_terms"]

    lx, gx = _split(eta_x, caps_x)
    ly, gy = _split(eta_y, caps_y)
    details.update(eta_x=eta_x, eta_y=eta_y, caps_x=caps_x, caps_y=caps_y,
                   heuristic=sorted(n for n in constants.provenance if constants.is_heuristic(n)))
    return HyperParams(eta_x_local=lx, eta_y_local=ly, eta_x_global=gx, eta_y_global=gy,
                       beta=min(beta, 1.0), p=p_s, K=K, provenance=f"preset:{setting}", details=details)
