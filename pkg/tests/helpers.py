"""Independent numerical oracles shared by several test modules."""

import numpy as np


def fd_gradient(fun, x, y, rel_step=1e-6):
    """Central differences of a scalar ``fun(x, y)``; step 1e-6 scaled by coordinate magnitude."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    gx = np.zeros_like(x)
    gy = np.zeros_like(y)
    for v, g, is_x in ((x, gx, True), (y, gy, False)):
        for i in range(v.size):
            h = rel_step * max(1.0, abs(v[i]))
            vp, vm = v.copy(), v.copy()
            vp[i] += h
            vm[i] -= h
            if is_x:
                g[i] = (fun(vp, y) - fun(vm, y)) / (2 * h)
            else:
                g[i] = (fun(x, vp) - fun(x, vm)) / (2 * h)
    return gx, gy


def rel_err(a, b, floor=1e-8):
    a = np.concatenate([np.ravel(t) for t in a])
    b = np.concatenate([np.ravel(t) for t in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def quad_matrices(p):
    m = p.meta
    return m["A"], m["B"], m["c"], m["gx"], m["gy"]


def quad_phi_grad(p, x):
    A, B, c, gx, gy = quad_matrices(p)
    return A @ x + gx + B @ (B.T @ x + gy) / c


def quad_phi(p, x):
    A, B, c, gx, gy = quad_matrices(p)
    v = B.T @ x + gy
    return 0.5 * x @ A @ x + gx @ x + v @ v / (2 * c)


def quad_prox(p, center, rho):
    """argmin_u Phi(u) + rho/2 |u - center|^2 by one linear solve."""
    A, B, c, gx, gy = quad_matrices(p)
    H = A + B @ B.T / c
    return np.linalg.solve(H + rho * np.eye(len(center)), rho * center - gx - B @ gy / c)


def quad_potential(p, x, y, z, ps):
    A, B, c, gx, gy = quad_matrices(p)
    f = lambda u, w: 0.5 * u @ A @ u + u @ B @ w - 0.5 * c * w @ w + gx @ u + gy @ w
    fhat = f(x, y) + 0.5 * ps * np.sum((x - z) ** 2)
    xs = np.linalg.solve(A + ps * np.eye(len(x)), ps * z - B @ y - gx)
    psi = f(xs, y) + 0.5 * ps * np.sum((xs - z) ** 2)
    u = quad_prox(p, z, ps)
    P = quad_phi(p, u) + 0.5 * ps * np.sum((u - z) ** 2)
    return fhat - 2 * psi + 2 * P
