"""Constraint sets for the max variable and their Euclidean projections."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DimensionError

KINDS = ("unconstrained", "simplex", "ball", "box")

# points this close to feasible are returned untouched, which makes
# projection exactly idempotent
_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class ConstraintSet:
    kind: str = "unconstrained"
    dim: int | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "simplex":
            if self.dim is None or self.dim < 2:
                raise ValueError("simplex requires n >= 2")
        elif self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise ValueError("ball requires radius > 0")
            if self.center is None:
                raise ValueError("ball requires a center")
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
            object.__setattr__(self, "dim", len(self.center))
        elif self.kind == "box":
            if self.lo is None or self.hi is None or len(self.lo) != len(self.hi):
                raise ValueError("box requires lo and hi of equal length")
            lo = tuple(float(v) for v in self.lo)
            hi = tuple(float(v) for v in self.hi)
            if any(a > b for a, b in zip(lo, hi)):
                raise ValueError("box requires lo <= hi componentwise")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
            object.__setattr__(self, "dim", len(lo))

    @classmethod
    def unconstrained(cls, dim: int | None = None) -> "ConstraintSet":
        return cls("unconstrained", dim=dim)

    @classmethod
    def simplex(cls, n: int) -> "ConstraintSet":
        return cls("simplex", dim=int(n))

    @classmethod
    def ball(cls, center, radius: float) -> "ConstraintSet":
        return cls("ball", center=tuple(np.asarray(center, dtype=float).ravel()), radius=float(radius))

    @classmethod
    def box(cls, lo, hi) -> "ConstraintSet":
        return cls("box", lo=tuple(np.ravel(lo)), hi=tuple(np.ravel(hi)))

    @property
    def bounded(self) -> bool:
        return self.kind != "unconstrained"

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "simplex":
            d["n"] = self.dim
        elif self.kind == "ball":
            d["center"] = list(self.center)
            d["radius"] = self.radius
        elif self.kind == "box":
            d["lo"] = list(self.lo)
            d["hi"] = list(self.hi)
        elif self.dim is not None:
            d["dim"] = self.dim
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintSet":
        kind = d.get("kind", "unconstrained")
        if kind == "simplex":
            return cls.simplex(d["n"])
        if kind == "ball":
            return cls.ball(d["center"], d["radius"])
        if kind == "box":
            return cls.box(d["lo"], d["hi"])
        if kind == "unconstrained":
            return cls.unconstrained(d.get("dim"))
        raise ValueError(f"unknown constraint kind {kind!r}")


def _check_dim(cset: ConstraintSet, v: np.ndarray) -> None:
    if cset.dim is not None and v.size != cset.dim:
        raise DimensionError(f"project onto {cset.kind}", v.size, cset.dim)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Sort-and-threshold projection onto the probability simplex.

    Ties in the descending sort are broken by index (stable sort).
    """
    v = np.asarray(v, dtype=np.float64)
    if np.all(v >= 0.0) and abs(v.sum() - 1.0) <= _FEAS_TOL:
        return v.copy()
    order = np.argsort(-v, kind="stable")
    u = v[order]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    w = v - theta
    w[w < 0.0] = 0.0
    # for large |v| the subtraction cancels badly; hand the rounding residual
    # back to the support so the output sums to one at unit scale
    support = w > 0.0
    w[support] += (1.0 - w.sum()) / np.count_nonzero(support)
    w[w < 0.0] = 0.0
    return w


def project(cset: ConstraintSet, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``cset``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    _check_dim(cset, v)
    kind = cset.kind
    if kind == "unconstrained":
        return v.copy()
    if kind == "simplex":
        return project_simplex(v)
    if kind == "ball":
        c = np.asarray(cset.center)
        d = v - c
        nrm = float(np.linalg.norm(d))
        if nrm <= cset.radius * (1.0 + _FEAS_TOL):
            return v.copy()
        return c + (cset.radius / nrm) * d
    return np.clip(v, np.asarray(cset.lo), np.asarray(cset.hi))


def gradient_mapping(cset: ConstraintSet, y, g, step: float) -> np.ndarray:
    """(1/step) * (P(y + step*g) - y); equals ``g`` when the set is unconstrained."""
    if not step > 0:
        raise ValueError("gradient_mapping requires step > 0")
    g = np.asarray(g, dtype=np.float64)
    if cset.kind == "unconstrained":
        return g.copy()
    y = np.asarray(y, dtype=np.float64)
    return (project(cset, y + step * g) - y) / step


def diameter(cset: ConstraintSet) -> float:
    """Diameter of the set, ``math.inf`` for the unconstrained kind."""
    if cset.kind == "simplex":
        return math.sqrt(2.0)
    if cset.kind == "ball":
        return 2.0 * cset.radius
    if cset.kind == "box":
        return float(np.linalg.norm(np.asarray(cset.hi) - np.asarray(cset.lo)))
    return math.inf


def is_feasible(cset: ConstraintSet, y, tol: float = 1e-10) -> bool:
    y = np.asarray(y, dtype=np.float64)
    if cset.kind == "unconstrained":
        return True
    if cset.kind == "simplex":
        return bool(np.all(y >= -tol) and abs(y.sum() - 1.0) <= tol)
    if cset.kind == "ball":
        return bool(np.linalg.norm(y - np.asarray(cset.center)) <= cset.radius + tol)
    return bool(np.all(y >= np.asarray(cset.lo) - tol) and np.all(y <= np.asarray(cset.hi) + tol))
