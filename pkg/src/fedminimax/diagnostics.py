"""Stationarity measures, the smoothed potential, inner min/max solvers and run metrics.

All metrics use full-batch gradients of f, even for stochastic runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .core import NonFiniteError, RunConfig
from .federation import FederationConfig
from .geometry import gradient_mapping, project
from .problems import ClientShard, ClosedFormOracles, ProblemSpec, full_gradient


class InnerSolverCapWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class InnerSolverConfig:
    max_iters: int = 100_000
    tol: float = 1e-8
    step: float | None = None          # None: 1/l
    use_closed_form: bool = False      # take closed-form oracles when the problem has them

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("InnerSolverConfig.tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("InnerSolverConfig.max_iters must be >= 1")
        if self.step is not None and not self.step > 0:
            raise ValueError("InnerSolverConfig.step must be > 0")


RUN_INNER = InnerSolverConfig(use_closed_form=True)


class InnerResult(NamedTuple):
    point: np.ndarray
    value: float
    converged: bool
    iters: int


@dataclass(frozen=True)
class StationarityReport:
    grad_x_norm: float
    grad_map_y_norm: float
    phi_grad_norm: float | None = None
    moreau_grad_norm: float | None = None
    inner_status: dict = field(default_factory=dict)

    @property
    def approximate(self) -> bool:
        return not all(self.inner_status.values())


@dataclass(frozen=True)
class PotentialReport:
    v_t: float
    f_hat: float
    psi: float
    P: float
    approximate: bool = False


def _flag(res: InnerResult, what: str) -> InnerResult:
    if not res.converged:
        warnings.warn(f"{what}: inner solver hit its iteration cap ({res.iters})", InnerSolverCapWarning,
                      stacklevel=3)
    return res


# --------------------------------------------------------------------------
# f-stationarity


def f_stationarity(p: ProblemSpec, x, y) -> tuple[float, float]:
    """``(||grad_x f||, l ||P_Y(y + grad_y f / l) - y||)`` at ``(x, y)``."""
    x, y = p.check_point(x, y)
    gx, gy = full_gradient(p, x, y)
    gm = gradient_mapping(p.constraint, y, gy, 1.0 / p.constants.l)
    return float(np.linalg.norm(gx)), float(np.linalg.norm(gm))


# --------------------------------------------------------------------------
# inner problems


def _default_y(p: ProblemSpec) -> np.ndarray:
    if p.constraint.kind == "simplex":
        return np.full(p.dim_y, 1.0 / p.dim_y)
    return project(p.constraint, np.zeros(p.dim_y))


def inner_max_y(p: ProblemSpec, x, cfg: InnerSolverConfig | None = None, y_init=None) -> InnerResult:
    """Projected gradient ascent on ``f(x, .)``; returns ``(y*, Phi(x), converged, iters)``.

    Stops once the gradient-mapping norm drops to ``cfg.tol``.
    """
    cfg = cfg or InnerSolverConfig()
    x = np.asarray(x, dtype=np.float64)
    cf = p.closed_form
    if cfg.use_closed_form and cf is not None and cf.y_star is not None and cf.phi is not None:
        ys = np.asarray(cf.y_star(x), dtype=np.float64)
        return InnerResult(ys, float(cf.phi(x)), True, 0)
    step = cfg.step or 1.0 / p.constants.l
    y = _default_y(p) if y_init is None else np.asarray(y_init, dtype=np.float64)
    for it in range(cfg.max_iters):
        _, gy = full_gradient(p, x, y)
        y_new = project(p.constraint, y + step * gy)
        if np.linalg.norm(y_new - y) / step <= cfg.tol:
            return InnerResult(y, p.value(x, y), True, it)
        y = y_new
    return InnerResult(y, p.value(x, y), False, cfg.max_iters)


def _phi_grad(p: ProblemSpec, x, cfg: InnerSolverConfig, y_init=None) -> tuple[np.ndarray, InnerResult]:
    cf = p.closed_form
    if cfg.use_closed_form and cf is not None and cf.phi_grad is not None:
        g = np.asarray(cf.phi_grad(x), dtype=np.float64)
        ys = cf.y_star(x) if cf.y_star is not None else None
        return g, InnerResult(ys, float(cf.phi(x)) if cf.phi else math.nan, True, 0)
    res = inner_max_y(p, x, cfg, y_init)
    gx, _ = full_gradient(p, x, res.point)
    return gx, res


def phi_stationarity(p: ProblemSpec, x, cfg: InnerSolverConfig | None = None) -> float:
    """``||grad Phi(x)|| = ||grad_x f(x, y*(x))||`` with y*(x) from the inner solver."""
    cfg = cfg or InnerSolverConfig()
    g, res = _phi_grad(p, np.asarray(x, dtype=np.float64), cfg)
    _flag(res, "phi_stationarity")
    return float(np.linalg.norm(g))


def _phi_smoothness(p: ProblemSpec) -> float:
    k = p.constants
    if k.mu:
        return k.l + k.l * k.l / k.mu
    return 2.0 * k.l


def prox_phi(p: ProblemSpec, center, rho: float, cfg: InnerSolverConfig | None = None) -> InnerResult:
    """``argmin_u Phi(u) + rho/2 ||u - center||^2`` by gradient descent with nested inner maxima.

    Needs ``rho > l`` so the subproblem is strongly convex.  The returned value
    is the subproblem's optimal value.
    """
    cfg = cfg or InnerSolverConfig()
    center = np.asarray(center, dtype=np.float64)
    cf = p.closed_form
    if cfg.use_closed_form and cf is not None and cf.x_star_of_z is not None and cf.P is not None:
        return InnerResult(np.asarray(cf.x_star_of_z(center, rho)), float(cf.P(center, rho)), True, 0)
    step = 1.0 / (_phi_smoothness(p) + rho)
    nested = replace(cfg, tol=cfg.tol * 1e-2, use_closed_form=False)
    u = center.copy()
    y = None
    converged = False
    it = 0
    for it in range(cfg.max_iters):
        g, res = _phi_grad(p, u, nested, y)
        if not res.converged:
            break
        y = res.point
        grad = g + rho * (u - center)
        if np.linalg.norm(grad) <= cfg.tol:
            converged = True
            break
        u = u - step * grad
    res = inner_max_y(p, u, nested, y)
    val = res.value + 0.5 * rho * float(np.sum((u - center) ** 2))
    return InnerResult(u, val, converged and res.converged, it)


def moreau_stationarity(p: ProblemSpec, x, cfg: InnerSolverConfig | None = None) -> float:
    """``||grad Phi_{1/2l}(x)|| = 2l ||x - prox(x)||`` with prox = argmin Phi(.) + l||. - x||^2."""
    l = p.constants.l
    res = _flag(prox_phi(p, x, 2.0 * l, cfg), "moreau_stationarity")
    return 2.0 * l * float(np.linalg.norm(np.asarray(x, dtype=np.float64) - res.point))


def moreau_envelope(p: ProblemSpec, x, cfg: InnerSolverConfig | None = None) -> float:
    """Value of ``Phi_{1/2l}(x) = min_u Phi(u) + l ||u - x||^2``."""
    return prox_phi(p, x, 2.0 * p.constants.l, cfg).value


def min_x_fhat(p: ProblemSpec, y, z, p_smooth: float, cfg: InnerSolverConfig | None = None,
               x_init=None) -> InnerResult:
    """``Psi(y, z) = min_x f(x, y) + p/2 ||x - z||^2`` by gradient descent with step ``1/(l + p)``."""
    cfg = cfg or InnerSolverConfig()
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    cf = p.closed_form
    if cfg.use_closed_form and cf is not None and cf.psi is not None and cf.x_star_of_yz is not None:
        return InnerResult(np.asarray(cf.x_star_of_yz(y, z, p_smooth)), float(cf.psi(y, z, p_smooth)), True, 0)
    if not p_smooth > p.constants.l:
        raise ValueError("Psi needs p > l so that the smoothed objective is strongly convex in x")
    step = 1.0 / (p.constants.l + p_smooth)
    x = z.copy() if x_init is None else np.asarray(x_init, dtype=np.float64)
    converged = False
    it = 0
    for it in range(cfg.max_iters):
        gx, _ = full_gradient(p, x, y)
        grad = gx + p_smooth * (x - z)
        if np.linalg.norm(grad) <= cfg.tol:
            converged = True
            break
        x = x - step * grad
    val = p.value(x, y) + 0.5 * p_smooth * float(np.sum((x - z) ** 2))
    return InnerResult(x, val, converged, it)


def potential(p: ProblemSpec, state, p_smooth: float, cfg: InnerSolverConfig | None = None) -> PotentialReport:
    """``V = f_hat(x, y, z) - 2 Psi(y, z) + 2 P(z)``."""
    x, y, z = (np.asarray(a, dtype=np.float64) for a in (state.x, state.y, state.z))
    f_hat = p.value(x, y) + 0.5 * p_smooth * float(np.sum((x - z) ** 2))
    psi = min_x_fhat(p, y, z, p_smooth, cfg)
    P = prox_phi(p, z, p_smooth, cfg)
    v = f_hat - 2.0 * psi.value + 2.0 * P.value
    approx = not (psi.converged and P.converged)
    if approx:
        warnings.warn("potential: an inner solve hit its cap", InnerSolverCapWarning, stacklevel=2)
    return PotentialReport(v, f_hat, psi.value, P.value, approx)


def w_gap(p: ProblemSpec, x, y, cfg: InnerSolverConfig | None = None) -> float:
    """``W = (Phi(x) - Phi*) + (Phi(x) - f(x, y))``, the two-sided PL Lyapunov quantity."""
    phi_star = p.constants.phi_star
    if phi_star is None:
        raise ValueError("W needs a known Phi* (constants.phi_star)")
    res = inner_max_y(p, x, cfg)
    return 2.0 * res.value - p.value(x, y) - phi_star


def stationarity_report(p: ProblemSpec, x, y, cfg: InnerSolverConfig | None = None,
                        with_phi: bool = True, with_moreau: bool = True) -> StationarityReport:
    cfg = cfg or InnerSolverConfig()
    gxn, gmn = f_stationarity(p, x, y)
    status = {}
    phi_n = mor_n = None
    if with_phi:
        g, res = _phi_grad(p, np.asarray(x, float), cfg)
        phi_n, status["phi"] = float(np.linalg.norm(g)), res.converged
    if with_moreau:
        res = prox_phi(p, x, 2.0 * p.constants.l, cfg)
        mor_n = 2.0 * p.constants.l * float(np.linalg.norm(np.asarray(x, float) - res.point))
        status["moreau"] = res.converged
    return StationarityReport(gxn, gmn, phi_n, mor_n, status)


# --------------------------------------------------------------------------
# Phi-stationarity from an f-stationary point


class TranslationError(RuntimeError):
    def __init__(self, msg: str, trace):
        super().__init__(msg)
        self.trace = trace


def augment_proximal(p: ProblemSpec, x_tilde) -> ProblemSpec:
    """``f(x, y) + l ||x - x_tilde||^2``: l-strongly convex in x, same structure in y."""
    xt = np.asarray(x_tilde, dtype=np.float64)
    l = p.constants.l
    mu = p.constants.mu
    if not mu:
        raise ValueError("the proximal translation needs a PL / strong concavity modulus mu in y")

    def wrap(c: ClientShard) -> ClientShard:
        def full_oracle(x, y):
            gx, gy = c.full_oracle(x, y)
            return gx + 2.0 * l * (np.asarray(x) - xt), gy

        def oracle(x, y, batch, stream):
            gx, gy = c.oracle(x, y, batch, stream)
            return gx + 2.0 * l * (np.asarray(x) - xt), gy

        def value(x, y):
            d = np.asarray(x) - xt
            return c.value(x, y) + l * float(d @ d)

        return ClientShard(c.client_id, c.data, oracle, full_oracle, value)

    cf = p.closed_form
    new_cf = ClosedFormOracles()
    if cf is not None and cf.y_star is not None and cf.phi is not None:
        new_cf = ClosedFormOracles(
            y_star=cf.y_star,
            phi=lambda x: cf.phi(x) + l * float(np.sum((np.asarray(x) - xt) ** 2)),
            phi_grad=(None if cf.phi_grad is None
                      else lambda x: cf.phi_grad(x) + 2.0 * l * (np.asarray(x) - xt)))
    consts = replace(p.constants, l=3.0 * l, mu1=l, mu2=mu, mu=mu, phi_star=None)
    return replace(p, clients=tuple(wrap(c) for c in p.clients), constants=consts, closed_form=new_cf,
                   source=None, target_x=None)


def translate_to_phi_stationary(p: ProblemSpec, x_tilde, y_tilde, fed: FederationConfig,
                                cfg: InnerSolverConfig | None = None, T: int = 5000, seed: int = 0,
                                hp=None) -> tuple[np.ndarray, StationarityReport]:
    """Run FESS-GDA on the proximally augmented problem from ``(x_tilde, y_tilde)``.

    Uses the two-sided PL preset of the augmented problem unless ``hp`` is
    given.  Returns the final x and its stationarity report for the original f.
    """
    from .optim import ParamState, preset_hyperparams, run_fessgda

    cfg = cfg or InnerSolverConfig()
    aug = augment_proximal(p, x_tilde)
    if hp is None:
        hp = preset_hyperparams("pl_pl", aug.constants, fed, T)
    init = ParamState.initial(x_tilde, y_tilde)
    states = [init]
    try:
        res = run_fessgda(aug, init, hp, fed, RunConfig(seed=seed, T=T, metrics_every=T, metrics=()),
                          hooks=[lambda s, *_: states.append(s)])
    except NonFiniteError as exc:
        raise TranslationError(f"augmented run diverged: {exc}", states) from exc
    x_hat = np.array(res.final.x)
    rep = stationarity_report(p, x_hat, res.final.y, cfg, with_moreau=False)
    return x_hat, rep


# --------------------------------------------------------------------------
# Delta for the step-size presets


def estimate_delta(p: ProblemSpec, init, p_smooth: float | None = None, cfg: InnerSolverConfig | None = None,
                   pilot_steps: int = 200) -> tuple[float, bool]:
    """``V_0 - Phi*`` and whether Phi* was estimated.

    Without a known Phi*, a pilot run of gradient descent on Phi (inner maxima
    solved numerically) supplies the best Phi value seen as the estimate.
    """
    cfg = cfg or RUN_INNER
    p_smooth = 2.0 * p.constants.l if p_smooth is None else p_smooth
    v0 = potential(p, init, p_smooth, cfg).v_t
    if p.constants.phi_star is not None:
        return v0 - p.constants.phi_star, False
    x = np.array(init.x, dtype=np.float64)
    step = 1.0 / _phi_smoothness(p)
    best = math.inf
    y = None
    for _ in range(pilot_steps):
        g, res = _phi_grad(p, x, cfg, y)
        y = res.point
        best = min(best, res.value)
        x = x - step * g
    return max(v0 - best, 0.0), True


# --------------------------------------------------------------------------
# metric registry


def _needs_target(p):
    return None if p.target_x is not None else "problem has no target point"


def _needs_saddle(p):
    return None if (p.closed_form and p.closed_form.saddle is not None) else "problem has no known saddle point"


def _needs_phi_star(p):
    return None if p.constants.phi_star is not None else "problem has no known Phi*"


class _Ctx:
    def __init__(self, p, state, p_smooth, cfg):
        self.p, self.state, self.p_smooth, self.cfg = p, state, p_smooth, cfg
        self._cache = {}

    def get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def fstat(self):
        return self.get("f", lambda: f_stationarity(self.p, self.state.x, self.state.y))


def _fhat_grad(c: _Ctx) -> float:
    gx, _ = full_gradient(c.p, c.state.x, c.state.y)
    return float(np.linalg.norm(gx + c.p_smooth * (np.asarray(c.state.x) - c.state.z)))


def _saddle_dist(c: _Ctx) -> float:
    xs, ys = c.p.closed_form.saddle
    return float(np.sum((c.state.x - xs) ** 2) + np.sum((c.state.y - ys) ** 2))


def _potential(c: _Ctx) -> float:
    ps = c.p_smooth if c.p_smooth > c.p.constants.l else 2.0 * c.p.constants.l
    return potential(c.p, c.state, ps, c.cfg).v_t


MetricFn = Callable[[_Ctx], float]

METRICS: dict[str, tuple[MetricFn, Callable | None, bool]] = {
    # name: (function, requirement check, depends on the PL / concavity modulus)
    "grad_x_norm": (lambda c: c.fstat()[0], None, False),
    "grad_map_y_norm": (lambda c: c.fstat()[1], None, False),
    "fhat_grad_x_norm": (_fhat_grad, None, False),
    "dist_to_target": (lambda c: float(np.sum((c.state.x - c.p.target_x) ** 2)), _needs_target, False),
    "saddle_dist_sq": (_saddle_dist, _needs_saddle, False),
    "x_minus_z_norm": (lambda c: float(np.linalg.norm(c.state.x - c.state.z)), None, False),
    "objective": (lambda c: c.p.value(c.state.x, c.state.y), None, False),
    "phi_value": (lambda c: inner_max_y(c.p, c.state.x, c.cfg).value, None, True),
    "phi_grad_norm": (lambda c: phi_stationarity(c.p, c.state.x, c.cfg), None, True),
    "moreau_grad_norm": (lambda c: moreau_stationarity(c.p, c.state.x, c.cfg), None, True),
    "potential": (_potential, None, True),
    "w_gap": (lambda c: w_gap(c.p, c.state.x, c.state.y, c.cfg), _needs_phi_star, True),
}


def metric_errors(p: ProblemSpec, names) -> list[str]:
    out = []
    for n in names:
        if n not in METRICS:
            out.append(f"unknown metric {n!r}; known metrics: {sorted(METRICS)}")
            continue
        req = METRICS[n][1]
        why = req(p) if req else None
        if why:
            out.append(f"metric {n!r} unavailable: {why}")
    return out


def heuristic_metrics(p: ProblemSpec, names) -> list[str]:
    """Metrics whose meaning relies on a modulus that was only estimated for this problem."""
    k = p.constants
    if not any(k.is_heuristic(n) for n in ("mu", "mu1", "mu2", "l")):
        return []
    return [n for n in names if n in METRICS and METRICS[n][2]]


def evaluate_metrics(p: ProblemSpec, state, names, p_smooth: float = 0.0,
                     cfg: InnerSolverConfig | None = None) -> dict:
    errs = metric_errors(p, names)
    if errs:
        raise ValueError("; ".join(errs))
    ctx = _Ctx(p, state, p_smooth, cfg or RUN_INNER)
    with np.errstate(over="ignore", invalid="ignore"):
        return {n: float(METRICS[n][0](ctx)) for n in names}
