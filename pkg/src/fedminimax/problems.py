"""Federated minimax problems ``f(x, y) = (1/M) sum_i f_i(x, y)``.

Every problem is a :class:`ProblemSpec`: a list of client shards, each with a
stochastic gradient oracle, a deterministic (full-batch) oracle and an
objective value, plus the constants that the step-size presets consume.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import DimensionError, RngStream
from .geometry import ConstraintSet, diameter

GradPair = tuple[np.ndarray, np.ndarray]
StochasticOracle = Callable[[np.ndarray, np.ndarray, int, RngStream], GradPair]
FullOracle = Callable[[np.ndarray, np.ndarray], GradPair]
ValueFn = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class KnownConstants:
    l: float
    mu: float | None = None
    mu1: float | None = None
    mu2: float | None = None
    sigma: float = 0.0
    sigma_G: float = 0.0
    diam_y: float | None = None
    G_y: float | None = None
    phi_star: float | None = None
    # per-constant origin: "analytic", "estimate" or "numerical"
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.l > 0 and math.isfinite(self.l)):
            raise ValueError(f"smoothness constant l must be positive and finite, got {self.l}")
        for name in ("mu", "mu1", "mu2", "sigma", "sigma_G", "diam_y", "G_y"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ValueError(f"constant {name} must be finite and nonnegative, got {v}")

    @property
    def kappa(self) -> float | None:
        return None if not self.mu else self.l / self.mu

    def is_heuristic(self, name: str) -> bool:
        return self.provenance.get(name, "analytic") != "analytic"


@dataclass(frozen=True)
class ClosedFormOracles:
    """Exact inner solutions, when the family has them.

    Functions taking ``p`` refer to the smoothed objective
    ``f(x, y) + p/2 ||x - z||^2``.
    """

    y_star: Callable | None = None          # x -> argmax_y f(x, y)
    phi: Callable | None = None             # x -> max_y f(x, y)
    phi_grad: Callable | None = None        # x -> grad Phi(x)
    x_star_of_z: Callable | None = None     # (z, p) -> argmin_x max_y f_hat
    x_star_of_yz: Callable | None = None    # (y, z, p) -> argmin_x f_hat(., y, z)
    psi: Callable | None = None             # (y, z, p) -> min_x f_hat(x, y, z)
    P: Callable | None = None               # (z, p) -> min_x max_y f_hat
    saddle: tuple[np.ndarray, np.ndarray] | None = None


@dataclass(frozen=True)
class ClientShard:
    client_id: int
    data: dict
    oracle: StochasticOracle
    full_oracle: FullOracle
    value: ValueFn


@dataclass(frozen=True)
class ProblemSpec:
    family: str
    dim_x: int
    dim_y: int
    constraint: ConstraintSet
    clients: tuple[ClientShard, ...]
    constants: KnownConstants
    closed_form: ClosedFormOracles | None = None
    target_x: np.ndarray | None = None
    source: dict | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.clients:
            raise ValueError("a problem needs at least one client")
        object.__setattr__(self, "clients", tuple(sorted(self.clients, key=lambda c: c.client_id)))
        if self.constraint.dim is not None and self.constraint.dim != self.dim_y:
            raise DimensionError("constraint vs dim_y", self.constraint.dim, self.dim_y)

    @property
    def M(self) -> int:
        return len(self.clients)

    def client(self, client_id: int) -> ClientShard:
        return self.clients[client_id]

    def value(self, x, y) -> float:
        total = 0.0
        for c in self.clients:
            total += c.value(x, y)
        return total / self.M

    def check_point(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if x.size != self.dim_x:
            raise DimensionError("x", x.size, self.dim_x)
        if y.size != self.dim_y:
            raise DimensionError("y", y.size, self.dim_y)
        return x, y


def full_gradient(p: ProblemSpec, x, y) -> GradPair:
    """Exact gradient of ``f``: the mean of client full-batch gradients (ascending id fold)."""
    x, y = p.check_point(x, y)
    gx = np.zeros(p.dim_x)
    gy = np.zeros(p.dim_y)
    for c in p.clients:
        cx, cy = c.full_oracle(x, y)
        gx = gx + cx
        gy = gy + cy
    return gx / p.M, gy / p.M


def measure_heterogeneity(p: ProblemSpec, sample_points: Sequence[tuple]) -> float:
    """Largest ``||grad f_i - grad f||`` seen over the given points: a lower bound on sigma_G."""
    if not sample_points:
        raise ValueError("measure_heterogeneity needs at least one sample point")
    worst = 0.0
    for x, y in sample_points:
        x, y = p.check_point(x, y)
        gx, gy = full_gradient(p, x, y)
        for c in p.clients:
            cx, cy = c.full_oracle(x, y)
            d = math.sqrt(float(np.sum((cx - gx) ** 2) + np.sum((cy - gy) ** 2)))
            worst = max(worst, d)
    return worst


def _mean_zero_offsets(gen: np.random.Generator, M: int, shape, scale: float) -> np.ndarray:
    """Per-client offsets summing to zero; the largest offset norm equals ``scale``."""
    if M == 1 or scale == 0.0:
        return np.zeros((M,) + tuple(shape))
    raw = gen.standard_normal((M,) + tuple(shape))
    raw -= raw.mean(axis=0, keepdims=True)
    norms = np.sqrt(np.sum(raw.reshape(M, -1) ** 2, axis=1))
    return raw * (scale / norms.max())


def _gaussian_noise(stream: RngStream, dx: int, dy: int, std: float, batch: int) -> GradPair:
    gen = stream.scratch_generator()
    e = gen.standard_normal(dx + dy) * (std / math.sqrt(batch))
    return e[:dx], e[dx:]


# --------------------------------------------------------------------------
# 1-D Wasserstein GAN


def _wgan_client(cid: int, z: np.ndarray, xr: np.ndarray, lam: float) -> ClientShard:
    n = z.size
    mz, mz2 = float(z.mean()), float(np.mean(z * z))
    mxr, mxr2 = float(xr.mean()), float(np.mean(xr * xr))

    def residuals(mu, sg):
        r1 = mxr - (mu + sg * mz)
        r2 = mxr2 - (mu * mu + 2.0 * mu * sg * mz + sg * sg * mz2)
        return r1, r2

    def full_oracle(x, y):
        mu, sg = x
        f1, f2 = y
        r1, r2 = residuals(mu, sg)
        gx = np.array([-f1 - 2.0 * f2 * (mu + sg * mz),
                       -f1 * mz - 2.0 * f2 * (mu * mz + sg * mz2)])
        gy = np.array([r1 - 2.0 * lam * f1, r2 - 2.0 * lam * f2])
        return gx, gy

    def value(x, y):
        r1, r2 = residuals(x[0], x[1])
        return float(y[0] * r1 + y[1] * r2 - lam * (y[0] ** 2 + y[1] ** 2))

    def oracle(x, y, batch, stream):
        idx = stream.scratch_generator().integers(0, n, size=batch)
        zb = z[idx]
        xb = xr[idx]
        mu, sg = float(x[0]), float(x[1])
        f1, f2 = float(y[0]), float(y[1])
        gb = mu + sg * zb
        w = f1 + 2.0 * f2 * gb
        inv = 1.0 / batch
        gx = np.array([-w.sum() * inv, -(w @ zb) * inv])
        gy = np.array([(xb.sum() - gb.sum()) * inv - 2.0 * lam * f1,
                       (xb @ xb - gb @ gb) * inv - 2.0 * lam * f2])
        return gx, gy

    data = {"z": z, "x_real": xr, "moments": (mz, mz2, mxr, mxr2)}
    return ClientShard(cid, data, oracle, full_oracle, value)


def _wgan_hessian(mz, mz2, lam, mu, sg, f2) -> np.ndarray:
    return np.array([
        [-2 * f2, -2 * f2 * mz, -1.0, -2 * (mu + sg * mz)],
        [-2 * f2 * mz, -2 * f2 * mz2, -mz, -2 * (mu * mz + sg * mz2)],
        [-1.0, -mz, -2 * lam, 0.0],
        [-2 * (mu + sg * mz), -2 * (mu * mz + sg * mz2), 0.0, -2 * lam],
    ])


def make_wgan1d(n_points: int = 10000, M: int = 10, mu_hat: float = 0.0, sigma_hat: float = 0.1,
                lam: float = 0.001, hetero: float = 0.0, seed: int = 0,
                x_box: float = 2.0, phi_box: float = 2.0) -> ProblemSpec:
    """WGAN fitting ``N(mu_hat, sigma_hat^2)`` with a linear generator and quadratic critic.

    x = (mu, sigma) is the generator, y = (phi1, phi2) the critic.  Data
    points are pairs ``(z_j, mu_hat + sigma_hat * z_j)``; heterogeneity shifts
    each shard's z by a client offset (mean zero, population std ``hetero``),
    which leaves the saddle ``((mu_hat, sigma_hat), 0)`` unchanged.

    ``l`` and ``sigma`` are estimates valid on the box ``|mu|, |sigma| <= x_box``,
    ``|phi| <= phi_box``.
    """
    if M < 1 or n_points % M != 0:
        raise ValueError(f"n_points={n_points} must be divisible by M={M}")
    if not lam > 0:
        raise ValueError("lam must be > 0 for the critic problem to be strongly concave")
    if not sigma_hat > 0:
        raise ValueError("sigma_hat must be > 0")
    if hetero < 0:
        raise ValueError("hetero must be >= 0")
    gen = RngStream(seed, (0,)).generator()
    z = gen.standard_normal(n_points)
    if M > 1 and hetero > 0:
        delta = gen.standard_normal(M)
        delta -= delta.mean()
        delta *= hetero / delta.std()
    else:
        delta = np.zeros(M)
    shard = n_points // M
    clients = []
    for i in range(M):
        zi = z[i * shard:(i + 1) * shard] + delta[i]
        clients.append(_wgan_client(i, zi, mu_hat + sigma_hat * zi, lam))

    l_est = 0.0
    sigma_sq = 0.0
    for c in clients:
        mz, mz2 = c.data["moments"][:2]
        for mu, sg, f2 in itertools.product((-x_box, x_box), (-x_box, x_box), (-phi_box, phi_box)):
            l_est = max(l_est, float(np.linalg.norm(_wgan_hessian(mz, mz2, lam, mu, sg, f2), 2)))
        zc, xc = c.data["z"], c.data["x_real"]
        for mu, sg, f1, f2 in itertools.product(*([(-x_box, x_box)] * 2 + [(-phi_box, phi_box)] * 2)):
            gb = mu + sg * zc
            w = f1 + 2 * f2 * gb
            per = np.stack([-w, -w * zc, xc - gb, xc * xc - gb * gb])
            sigma_sq = max(sigma_sq, float(np.sum(per.var(axis=1))))
    probe = [(np.array([a, b]), np.array([c_, d]))
             for a, b in itertools.product((-x_box, x_box), repeat=2)
             for c_, d in itertools.product((-phi_box, phi_box), repeat=2)]

    def y_star(x):
        g = np.zeros(2)
        for c in clients:
            g = g + c.full_oracle(np.asarray(x, float), np.zeros(2))[1]
        return (g / M) / (2.0 * lam)

    def phi(x):
        ys = y_star(x)
        return lam * float(ys @ ys)

    saddle = (np.array([mu_hat, sigma_hat]), np.zeros(2))
    source = {"family": "wgan1d", "seed": seed,
              "params": {"n_points": n_points, "M": M, "mu_hat": mu_hat, "sigma_hat": sigma_hat,
                         "lam": lam, "hetero": hetero, "x_box": x_box, "phi_box": phi_box}}
    spec = ProblemSpec("wgan1d", 2, 2, ConstraintSet.unconstrained(2), tuple(clients),
                       KnownConstants(l=l_est, mu=2.0 * lam, sigma=math.sqrt(sigma_sq), sigma_G=0.0,
                                      phi_star=0.0,
                                      provenance={"l": "estimate", "sigma": "estimate", "sigma_G": "estimate"}),
                       ClosedFormOracles(y_star=y_star, phi=phi, saddle=saddle),
                       target_x=saddle[0], source=source)
    sg = measure_heterogeneity(spec, probe)
    return replace(spec, constants=replace(spec.constants, sigma_G=sg))


# --------------------------------------------------------------------------
# quadratic NC-SC family


def _random_orthogonal(gen: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(gen.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def make_quadratic_minimax(dim_x: int = 4, dim_y: int = 4, M: int = 4, spec: dict | None = None,
                           seed: int = 0) -> ProblemSpec:
    """``f_i(x,y) = x'Ax/2 + x'By - c/2 |y|^2 + gx'x + gy'y + a_i'x + b_i'y``.

    ``spec`` keys (all optional): ``A``, ``B``, ``c``, ``gx``, ``gy`` explicit
    matrices/vectors; ``nonconvexity`` (size of the most negative eigenvalue of
    a random A), ``curvature`` (largest eigenvalue of A), ``coupling`` (B
    singular value scale), ``hetero`` (largest client offset norm, equal to
    sigma_G), ``noise`` (per-sample gradient noise std per coordinate),
    ``linear`` (scale of random gx, gy).
    Y is unconstrained, so every inner problem has a closed form.
    """
    spec = dict(spec or {})
    gen = RngStream(seed, (0,)).generator()
    c = float(spec.get("c", 1.0))
    if not c > 0:
        raise ValueError("c must be > 0 (strong concavity in y)")
    if "A" in spec:
        A = np.asarray(spec["A"], dtype=float)
        A = 0.5 * (A + A.T)
    else:
        neg = float(spec.get("nonconvexity", 0.5))
        pos = float(spec.get("curvature", 1.0))
        qx = _random_orthogonal(gen, dim_x)
        r = min(dim_x, dim_y)
        eig = np.full(dim_x, pos)
        eig[:r] = np.linspace(-neg, pos, r) if r > 1 else -neg
        A = qx @ np.diag(eig) @ qx.T
    if "B" in spec:
        B = np.asarray(spec["B"], dtype=float)
    else:
        r = min(dim_x, dim_y)
        coupling = float(spec.get("coupling", 1.0))
        neg = float(spec.get("nonconvexity", 0.5))
        s = np.maximum(coupling, math.sqrt(c * (neg + 0.5))) * np.linspace(1.0, 1.5, r)
        qy = _random_orthogonal(gen, dim_y)
        if "A" in spec:
            qx = _random_orthogonal(gen, dim_x)
        B = qx[:, :r] @ np.diag(s) @ qy[:, :r].T
    if A.shape != (dim_x, dim_x) or B.shape != (dim_x, dim_y):
        raise DimensionError("quadratic matrices", A.shape[0], dim_x)
    lin = float(spec.get("linear", 0.5))
    gx = np.asarray(spec["gx"], float) if "gx" in spec else lin * gen.standard_normal(dim_x)
    gy = np.asarray(spec["gy"], float) if "gy" in spec else lin * gen.standard_normal(dim_y)
    hetero = float(spec.get("hetero", 0.0))
    noise = float(spec.get("noise", 0.0))
    offsets = _mean_zero_offsets(gen, M, (dim_x + dim_y,), hetero)

    H_phi = A + B @ B.T / c
    eig_phi = np.linalg.eigvalsh(H_phi)
    if eig_phi.min() <= 1e-12 * max(1.0, abs(eig_phi).max()):
        raise np.linalg.LinAlgError("Phi Hessian A + BB'/c is singular or indefinite; no finite Phi*")
    q_phi = gx + B @ gy / c

    clients = []
    for i in range(M):
        ax, by = offsets[i, :dim_x].copy(), offsets[i, dim_x:].copy()

        def full_oracle(x, y, ax=ax, by=by):
            return A @ x + B @ y + gx + ax, B.T @ x - c * y + gy + by

        def value(x, y, ax=ax, by=by):
            return float(0.5 * x @ A @ x + x @ B @ y - 0.5 * c * y @ y + gx @ x + gy @ y + ax @ x + by @ y)

        def oracle(x, y, batch, stream, full_oracle=full_oracle):
            gxi, gyi = full_oracle(x, y)
            if noise == 0.0:
                return gxi, gyi
            ex, ey = _gaussian_noise(stream, dim_x, dim_y, noise, batch)
            return gxi + ex, gyi + ey

        clients.append(ClientShard(i, {"offset_x": ax, "offset_y": by}, oracle, full_oracle, value))

    def y_star(x):
        return (B.T @ np.asarray(x, float) + gy) / c

    def phi(x):
        x = np.asarray(x, float)
        v = B.T @ x + gy
        return float(0.5 * x @ A @ x + gx @ x + v @ v / (2 * c))

    def phi_grad(x):
        return H_phi @ np.asarray(x, float) + q_phi

    def x_star_of_z(z, p):
        return np.linalg.solve(H_phi + p * np.eye(dim_x), p * np.asarray(z, float) - q_phi)

    def x_star_of_yz(y, z, p):
        Ap = A + p * np.eye(dim_x)
        if np.linalg.eigvalsh(Ap).min() <= 0:
            raise np.linalg.LinAlgError("A + pI is not positive definite; min over x is unbounded")
        return np.linalg.solve(Ap, p * np.asarray(z, float) - B @ np.asarray(y, float) - gx)

    def f_global(x, y):
        return float(0.5 * x @ A @ x + x @ B @ y - 0.5 * c * y @ y + gx @ x + gy @ y)

    def psi(y, z, p):
        xs = x_star_of_yz(y, z, p)
        return f_global(xs, np.asarray(y, float)) + 0.5 * p * float(np.sum((xs - z) ** 2))

    def P(z, p):
        xs = x_star_of_z(z, p)
        return phi(xs) + 0.5 * p * float(np.sum((xs - np.asarray(z, float)) ** 2))

    x_sad = np.linalg.solve(H_phi, -q_phi)
    saddle = (x_sad, y_star(x_sad))
    hess = np.block([[A, B], [B.T, -c * np.eye(dim_y)]])
    l = float(np.linalg.norm(hess, 2))
    source = {"family": "quadratic", "seed": seed,
              "params": {"dim_x": dim_x, "dim_y": dim_y, "M": M,
                         "spec": {k: (np.asarray(v).tolist() if isinstance(v, (list, np.ndarray)) else v)
                                  for k, v in spec.items()}}}
    consts = KnownConstants(l=l, mu=c, sigma=noise * math.sqrt(dim_x + dim_y),
                            sigma_G=float(np.sqrt(np.sum(offsets ** 2, axis=1)).max()),
                            phi_star=phi(x_sad))
    cf = ClosedFormOracles(y_star=y_star, phi=phi, phi_grad=phi_grad, x_star_of_z=x_star_of_z,
                           x_star_of_yz=x_star_of_yz, psi=psi, P=P, saddle=saddle)
    return ProblemSpec("quadratic", dim_x, dim_y, ConstraintSet.unconstrained(dim_y), tuple(clients),
                       consts, cf, target_x=x_sad, source=source,
                       meta={"A": A, "B": B, "c": c, "gx": gx, "gy": gy})


# --------------------------------------------------------------------------
# two-sided PL testbed h(x,y) = x^2 + 3 sin^2 x sin^2 y - 4 y^2 - 10 sin^2 y


def plpl_value(x: float, y: float) -> float:
    sx, sy = math.sin(x), math.sin(y)
    return x * x + 3 * sx * sx * sy * sy - 4 * y * y - 10 * sy * sy


def plpl_grad(x: float, y: float) -> tuple[float, float]:
    sx2, sy2 = math.sin(x) ** 2, math.sin(y) ** 2
    return (2 * x + 3 * math.sin(2 * x) * sy2,
            3 * sx2 * math.sin(2 * y) - 8 * y - 10 * math.sin(2 * y))


@functools.lru_cache(maxsize=None)
def plpl_constants(grid: int = 1201, half_width: float = 3.0, safety: float = 0.9) -> tuple[float, float, float]:
    """Numerical (l, mu1, mu2) for the PL-PL testbed.

    ``l`` is the largest Hessian spectral norm over one period of the
    (periodic) Hessian; ``mu1`` and ``mu2`` are the smallest PL ratios over a
    ``grid x grid`` mesh of ``[-half_width, half_width]^2``, shrunk by
    ``safety``.  The exact inner values are known: ``min_x h = -4y^2 - 10 sin^2 y``
    and ``max_y h = x^2``.
    """
    t = np.linspace(0.0, np.pi, 1001)
    a, b = np.meshgrid(t, t, indexing="ij")
    hxx = 2 + 6 * np.cos(2 * a) * np.sin(b) ** 2
    hyy = 6 * np.sin(a) ** 2 * np.cos(2 * b) - 8 - 20 * np.cos(2 * b)
    hxy = 3 * np.sin(2 * a) * np.sin(2 * b)
    mid, rad = 0.5 * (hxx + hyy), np.sqrt(0.25 * (hxx - hyy) ** 2 + hxy ** 2)
    l = float(np.max(np.maximum(abs(mid + rad), abs(mid - rad))))

    g = np.linspace(-half_width, half_width, grid)
    X, Y = np.meshgrid(g, g, indexing="ij")
    sx2, sy2 = np.sin(X) ** 2, np.sin(Y) ** 2
    h = X ** 2 + 3 * sx2 * sy2 - 4 * Y ** 2 - 10 * sy2
    hx = 2 * X + 3 * np.sin(2 * X) * sy2
    hy = 3 * sx2 * np.sin(2 * Y) - 8 * Y - 10 * np.sin(2 * Y)
    gap_x = h - (-4 * Y ** 2 - 10 * sy2)
    gap_y = X ** 2 - h
    m1 = gap_x > 1e-12
    m2 = gap_y > 1e-12
    mu1 = float(np.min(hx[m1] ** 2 / (2 * gap_x[m1])))
    mu2 = float(np.min(hy[m2] ** 2 / (2 * gap_y[m2])))
    return l, safety * mu1, safety * mu2


def make_plpl_testbed(M: int = 1, noise: float = 0.0, seed: int = 0) -> ProblemSpec:
    """Every client holds the same scalar function h; optional additive gradient noise."""
    if M < 1:
        raise ValueError("M must be >= 1")
    l, mu1, mu2 = plpl_constants()

    def full_oracle(x, y):
        gx, gy = plpl_grad(float(x[0]), float(y[0]))
        return np.array([gx]), np.array([gy])

    def value(x, y):
        return plpl_value(float(x[0]), float(y[0]))

    def oracle(x, y, batch, stream):
        gx, gy = full_oracle(x, y)
        if noise == 0.0:
            return gx, gy
        ex, ey = _gaussian_noise(stream, 1, 1, noise, batch)
        return gx + ex, gy + ey

    clients = tuple(ClientShard(i, {}, oracle, full_oracle, value) for i in range(M))
    cf = ClosedFormOracles(y_star=lambda x: np.zeros(1),
                           phi=lambda x: float(np.asarray(x, float)[0] ** 2),
                           phi_grad=lambda x: 2.0 * np.asarray(x, float).reshape(1),
                           saddle=(np.zeros(1), np.zeros(1)))
    consts = KnownConstants(l=l, mu1=mu1, mu2=mu2, mu=mu2, sigma=noise * math.sqrt(2.0), sigma_G=0.0,
                            phi_star=0.0,
                            provenance={"l": "numerical", "mu1": "numerical", "mu2": "numerical",
                                        "mu": "numerical"})
    source = {"family": "plpl", "seed": seed, "params": {"M": M, "noise": noise}}
    return ProblemSpec("plpl", 1, 1, ConstraintSet.unconstrained(1), clients, consts, cf,
                       target_x=np.zeros(1), source=source)


# --------------------------------------------------------------------------
# pointwise maximum of finitely many losses, y on the simplex


@dataclass(frozen=True)
class Component:
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


def quadratic_components(centers, scales=None) -> list[Component]:
    """``F_c(x) = a_c ||x - center_c||^2``."""
    centers = [np.asarray(c, dtype=float).reshape(-1) for c in centers]
    scales = [1.0] * len(centers) if scales is None else [float(s) for s in scales]
    comps = []
    for cen, a in zip(centers, scales):
        comps.append(Component(value=lambda x, cen=cen, a=a: float(a * np.sum((np.asarray(x) - cen) ** 2)),
                               grad=lambda x, cen=cen, a=a: 2.0 * a * (np.asarray(x) - cen)))
    return comps


def make_pointwise_max(component_losses: Sequence[Component] | dict, M: int = 1, seed: int = 0,
                       dim_x: int | None = None, hetero: float = 0.0, noise: float = 0.0,
                       l: float | None = None, x_box: float = 2.0) -> ProblemSpec:
    """``f(x, y) = sum_c y_c F_c(x)`` with y on the probability simplex.

    ``component_losses`` is a list of :class:`Component` or a dict
    ``{"kind": "quadratic", "centers": [...], "scales": [...]}``.  Client i sees
    ``F_c(x) + b_ic`` with ``sum_i b_ic = 0``, so heterogeneity lives in the
    y-gradient only and sigma_G is exact.
    """
    source = None
    if isinstance(component_losses, dict):
        desc = dict(component_losses)
        if desc.get("kind", "quadratic") != "quadratic":
            raise ValueError(f"unsupported component kind {desc.get('kind')!r}")
        comps = quadratic_components(desc["centers"], desc.get("scales"))
        dim_x = len(desc["centers"][0])
        if l is None:
            scales = desc.get("scales") or [1.0] * len(comps)
            radii = [x_box * math.sqrt(dim_x) + float(np.linalg.norm(c)) for c in desc["centers"]]
            l = max(2 * a for a in scales) + math.sqrt(sum((2 * a * r) ** 2 for a, r in zip(scales, radii)))
        source = {"family": "pointwise_max", "seed": seed,
                  "params": {"components": desc, "M": M, "hetero": hetero, "noise": noise, "x_box": x_box}}
    else:
        comps = list(component_losses)
        if dim_x is None:
            raise ValueError("dim_x is required with callable components")
        if l is None:
            raise ValueError("l is required with callable components")
    n = len(comps)
    if n < 2:
        raise ValueError("pointwise maximum needs at least two components")
    gen = RngStream(seed, (0,)).generator()
    offsets = _mean_zero_offsets(gen, M, (n,), hetero)

    def F(x):
        return np.array([c.value(x) for c in comps])

    def J(x):
        return np.stack([c.grad(x) for c in comps], axis=1)  # dim_x x n

    clients = []
    for i in range(M):
        b = offsets[i].copy()

        def full_oracle(x, y, b=b):
            return J(x) @ y, F(x) + b

        def value(x, y, b=b):
            return float(y @ (F(x) + b))

        def oracle(x, y, batch, stream, full_oracle=full_oracle):
            gx, gy = full_oracle(x, y)
            if noise == 0.0:
                return gx, gy
            ex, ey = _gaussian_noise(stream, dim_x, n, noise, batch)
            return gx + ex, gy + ey

        clients.append(ClientShard(i, {"offset": b}, oracle, full_oracle, value))
    cset = ConstraintSet.simplex(n)
    consts = KnownConstants(l=float(l), sigma=noise * math.sqrt(dim_x + n),
                            sigma_G=float(np.sqrt(np.sum(offsets ** 2, axis=1)).max()),
                            diam_y=diameter(cset), provenance={"l": "estimate"})
    cf = ClosedFormOracles(phi=lambda x: float(np.max(F(np.asarray(x, float)))))
    return ProblemSpec("pointwise_max", dim_x, n, cset, tuple(clients), consts, cf, source=source)


# --------------------------------------------------------------------------
# JSON round trip

_BUILDERS = {
    "wgan1d": lambda prm, seed: make_wgan1d(seed=seed, **prm),
    "quadratic": lambda prm, seed: make_quadratic_minimax(prm.get("dim_x", 4), prm.get("dim_y", 4),
                                                          prm.get("M", 4), prm.get("spec"), seed),
    "plpl": lambda prm, seed: make_plpl_testbed(seed=seed, **prm),
    "pointwise_max": lambda prm, seed: make_pointwise_max(prm["components"], M=prm.get("M", 1), seed=seed,
                                                          hetero=prm.get("hetero", 0.0),
                                                          noise=prm.get("noise", 0.0),
                                                          x_box=prm.get("x_box", 2.0)),
}

FAMILIES = tuple(_BUILDERS)


def problem_to_dict(p: ProblemSpec) -> dict:
    if p.source is None:
        raise ValueError(f"problem {p.family!r} was built from callables and cannot be serialized")
    return p.source


def problem_from_dict(d: dict) -> ProblemSpec:
    """Build a problem from ``{"family": ..., "params": {...}, "seed": ..., "ncc": {...}?}``."""
    family = d.get("family")
    if family not in _BUILDERS:
        raise ValueError(f"unknown problem family {family!r}; expected one of {FAMILIES}")
    prob = _BUILDERS[family](dict(d.get("params", {})), int(d.get("seed", 0)))
    if "ncc" in d:
        from .optim import ncc_regularize
        ncc = d["ncc"]
        y0 = ncc.get("y0")
        if y0 is None:
            y0 = np.full(prob.dim_y, 1.0 / prob.dim_y) if prob.constraint.kind == "simplex" else np.zeros(prob.dim_y)
        prob = ncc_regularize(prob, float(ncc["epsilon"]), np.asarray(y0, float))
    return prob
