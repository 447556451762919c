"""Cones, projections and the pointwise Hamiltonian minimization.

The two piecewise-quadratic maps ``H1`` and ``H2`` evaluated here drive the
coupled Riccati pair in :mod:`jumplq.sre`. Their infima over a closed convex
cone (optionally intersected with a centered ball) are computed by an
accelerated projected-gradient method started from the origin.

``H2`` is the reflection of ``H1``::

    H2(v; P1, P2, G1, G2) = H1(-v; P2, P1, G2, G1)

so minimizing ``H2`` over ``Pi`` amounts to minimizing ``H1`` with swapped
arguments over ``-Pi``. :func:`eval_H2` is nevertheless implemented from its
own formula so that the identity can be tested.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (ConvergenceError, InvariantViolationError, NumericError,
                     UnsupportedConeError, ValidationError)

__all__ = [
    "Cone", "Mark", "HInput", "project", "dual_membership", "eval_H1",
    "eval_H2", "minimize", "project_rows", "exact_minimize_1d",
]

_SIGN_CODES = {"free": 0, "nonneg": 1, "nonpos": -1, "zero": 2}
_SIGN_NEG = {"free": "free", "nonneg": "nonpos", "nonpos": "nonneg",
             "zero": "zero"}

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class Cone:
    """Closed convex cone in ``R^m``.

    Use the constructors :meth:`full`, :meth:`coordinate`, :meth:`ray` and
    :meth:`nonneg` rather than the raw initializer.

    Attributes
    ----------
    kind : {"full", "coordinate", "ray"}
    dim : int
    signs : tuple of str, optional
        Per-coordinate sign for coordinate cones, each one of ``"free"``,
        ``"nonneg"``, ``"nonpos"`` or ``"zero"``.
    generator : tuple of float, optional
        Spanning vector of a ray.
    """

    kind: str
    dim: int
    signs: tuple = None
    generator: tuple = None

    def __post_init__(self):
        if self.kind not in ("full", "coordinate", "ray"):
            raise UnsupportedConeError(f"unknown cone kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError("cone dimension must be a positive integer")
        if self.kind == "coordinate":
            if self.signs is None or len(self.signs) != self.dim:
                raise ValidationError("coordinate cone needs one sign per axis")
            bad = [s for s in self.signs if s not in _SIGN_CODES]
            if bad:
                raise ValidationError(f"unknown coordinate signs {bad}")
        if self.kind == "ray":
            g = self.generator
            if g is None or len(g) != self.dim:
                raise ValidationError("ray generator must have length dim")
            if not np.all(np.isfinite(g)):
                raise ValidationError("ray generator must be finite")

    @classmethod
    def full(cls, m):
        return cls("full", int(m))

    @classmethod
    def coordinate(cls, signs):
        signs = tuple(str(s) for s in signs)
        return cls("coordinate", len(signs), signs=signs)

    @classmethod
    def nonneg(cls, m):
        return cls.coordinate(["nonneg"] * int(m))

    @classmethod
    def ray(cls, generator):
        g = tuple(float(x) for x in np.atleast_1d(generator))
        return cls("ray", len(g), generator=g)

    def negated(self):
        """The cone ``-Pi``."""
        if self.kind == "coordinate":
            return Cone.coordinate([_SIGN_NEG[s] for s in self.signs])
        if self.kind == "ray":
            return Cone.ray([-x for x in self.generator])
        return self

    @property
    def is_symmetric(self):
        """True when ``Pi = -Pi``."""
        if self.kind == "full":
            return True
        if self.kind == "coordinate":
            return all(s in ("free", "zero") for s in self.signs)
        return not any(self.generator)

    @property
    def is_convex(self):
        return True

    def packed(self):
        """Array encoding understood by the compiled kernels."""
        m = self.dim
        if self.kind == "full":
            return 0, np.zeros(m, dtype=np.int64), np.zeros(m)
        if self.kind == "coordinate":
            codes = np.array([_SIGN_CODES[s] for s in self.signs],
                             dtype=np.int64)
            return 1, codes, np.zeros(m)
        return 2, np.zeros(m, dtype=np.int64), np.asarray(self.generator,
                                                          dtype=float)

    def to_dict(self):
        d = {"kind": self.kind, "dim": self.dim}
        if self.kind == "coordinate":
            d["signs"] = list(self.signs)
        if self.kind == "ray":
            d["generator"] = list(self.generator)
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind == "full":
            return cls.full(d["dim"])
        if kind == "nonneg":
            return cls.nonneg(d["dim"])
        if kind == "coordinate":
            return cls.coordinate(d["signs"])
        if kind == "ray":
            return cls.ray(d["generator"])
        raise UnsupportedConeError(f"unknown cone kind {kind!r}")


def _as_vector(x, m, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape != (m,):
        raise ValidationError(f"{name} must have shape ({m},), got {x.shape}")
    return x


def project(cone, x, radius=None):
    """Euclidean projection onto ``cone`` or onto ``cone`` ∩ ball(radius).

    The ball intersection is computed by radial clipping of the cone
    projection, which is exact for a centered ball and a closed convex cone.

    Examples
    --------
    >>> project(Cone.ray([1.0, 1.0]), [2.0, 0.0])
    array([1., 1.])
    """
    x = _as_vector(x, cone.dim)
    if not np.all(np.isfinite(x)):
        raise ValidationError("x must be finite")
    r = np.inf if radius is None else float(radius)
    if r < 0:
        raise ValidationError("radius must be nonnegative")
    kind, signs, gen = cone.packed()
    out = np.empty(cone.dim)
    _kernels.project_into(x, kind, signs, gen, r, out)
    return out


def project_rows(cone, X):
    """Project every row of ``X`` (shape ``(k, m)``) onto ``cone``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != cone.dim:
        raise ValidationError(f"rows must have length {cone.dim}")
    if cone.kind == "full":
        return X.copy()
    if cone.kind == "coordinate":
        out = X.copy()
        for i, s in enumerate(cone.signs):
            if s == "nonneg":
                np.maximum(out[:, i], 0.0, out=out[:, i])
            elif s == "nonpos":
                np.minimum(out[:, i], 0.0, out=out[:, i])
            elif s == "zero":
                out[:, i] = 0.0
        return out
    g = np.asarray(cone.generator, dtype=float)
    gg = g @ g
    if gg == 0.0:
        return np.zeros_like(X)
    return np.maximum(X @ g / gg, 0.0)[:, None] * g


def dual_membership(cone, y, tol=1e-12):
    """Test ``y`` against the dual cone ``{y : y.v <= 0 for all v in Pi}``.

    Uses ``sup{y.v : v in Pi, |v| <= 1} = |project(Pi, y)|``, valid for
    every closed convex cone.
    """
    if not cone.is_convex:
        raise UnsupportedConeError("dual cone requires a convex cone")
    return bool(np.linalg.norm(project(cone, y)) <= tol)


@dataclass(frozen=True)
class Mark:
    """One jump mark: size coefficients ``E``, ``F`` and intensity ``nu``."""

    E: float
    F: np.ndarray
    nu: float


@dataclass(frozen=True)
class HInput:
    """Arguments of ``H1``/``H2`` at a single time point.

    ``Lambda`` has length ``n``; ``Gamma1`` and ``Gamma2`` carry one entry
    per mark. Missing optional fields default to zero.
    """

    P1: float
    P2: float
    R: np.ndarray
    D: np.ndarray
    B: np.ndarray
    C: np.ndarray
    S: np.ndarray
    marks: tuple = ()
    Lambda: np.ndarray = None
    Gamma1: np.ndarray = None
    Gamma2: np.ndarray = None

    @classmethod
    def create(cls, P1, P2, *, m=None, n=None, R=None, D=None, B=None,
               C=None, S=None, marks=(), Lambda=None, Gamma1=None,
               Gamma2=None):
        """Build an input with shape checking and zero defaults."""
        if m is None:
            m = next((np.size(x) for x in (B, S) if x is not None), None)
            if m is None and R is not None:
                m = np.atleast_2d(R).shape[0]
            if m is None and D is not None:
                m = np.atleast_2d(D).shape[1]
            m = 1 if m is None else m
        if n is None:
            n = np.size(C) if C is not None else (
                np.atleast_2d(D).shape[0] if D is not None else 1)
        R = np.zeros((m, m)) if R is None else np.array(R, float).reshape(m, m)
        D = np.zeros((n, m)) if D is None else np.array(D, float).reshape(n, m)
        B = np.zeros(m) if B is None else np.array(B, float).reshape(m)
        C = np.zeros(n) if C is None else np.array(C, float).reshape(n)
        S = np.zeros(m) if S is None else np.array(S, float).reshape(m)
        mk = []
        for e in marks:
            if isinstance(e, Mark):
                E, F, nu = e.E, e.F, e.nu
            else:
                E, F, nu = e
            mk.append(Mark(float(E), np.array(F, float).reshape(m), float(nu)))
        J = len(mk)
        Lam = np.zeros(n) if Lambda is None else np.array(Lambda, float
                                                          ).reshape(n)
        G1 = np.zeros(J) if Gamma1 is None else np.array(Gamma1, float
                                                         ).reshape(J)
        G2 = np.zeros(J) if Gamma2 is None else np.array(Gamma2, float
                                                         ).reshape(J)
        return cls(float(P1), float(P2), R, D, B, C, S, tuple(mk), Lam, G1, G2)

    @property
    def m(self):
        return self.B.shape[0]

    def arrays(self):
        """Stack mark data as ``(E, F, nu)`` arrays."""
        J = len(self.marks)
        E = np.array([mk.E for mk in self.marks], dtype=float)
        F = np.array([mk.F for mk in self.marks], dtype=float).reshape(J,
                                                                      self.m)
        nu = np.array([mk.nu for mk in self.marks], dtype=float)
        return E, F, nu

    def gammas(self):
        J = len(self.marks)
        G1 = np.zeros(J) if self.Gamma1 is None else np.asarray(self.Gamma1)
        G2 = np.zeros(J) if self.Gamma2 is None else np.asarray(self.Gamma2)
        return G1, G2

    def lam(self):
        n = self.C.shape[0]
        return np.zeros(n) if self.Lambda is None else np.asarray(self.Lambda)

    def swapped(self):
        """Input with the roles of (P1, Gamma1) and (P2, Gamma2) exchanged."""
        G1, G2 = self.gammas()
        return HInput(self.P2, self.P1, self.R, self.D, self.B, self.C,
                      self.S, self.marks, self.lam(), G2, G1)

    def check(self):
        """Raise if the objective would lose convexity."""
        G1, G2 = self.gammas()
        if self.P1 < 0 or self.P2 < 0:
            raise InvariantViolationError("P1 and P2 must be nonnegative")
        if np.any(self.P1 + G1 < 0) or np.any(self.P2 + G2 < 0):
            raise InvariantViolationError("P + Gamma must be nonnegative")
        R = self.R
        if not np.allclose(R, R.T, atol=1e-12):
            raise InvariantViolationError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() < -1e-12 * max(1.0, np.abs(R).max()):
            raise InvariantViolationError("R must be positive semidefinite")
        _, _, nu = self.arrays()
        if np.any(~np.isfinite(nu)) or np.any(nu <= 0):
            raise InvariantViolationError("intensities must be positive")


def _linear_coef(inp, P):
    DtD = inp.D.T @ inp.D
    q = P * (inp.B + inp.D.T @ inp.C) + inp.D.T @ inp.lam() + inp.S
    return inp.R + P * DtD, q


def eval_H1(inp, v):
    """Value of ``H1`` at ``v``."""
    v = _as_vector(v, inp.m, "v")
    M, q = _linear_coef(inp, inp.P1)
    val = v @ M @ v + 2.0 * q @ v
    G1, G2 = inp.gammas()
    for j, mk in enumerate(inp.marks):
        s = 1.0 + mk.E + mk.F @ v
        val += mk.nu * ((inp.P1 + G1[j]) * (max(s, 0.0) ** 2 - 1.0)
                        - 2.0 * inp.P1 * (mk.E + mk.F @ v)
                        + (inp.P2 + G2[j]) * max(-s, 0.0) ** 2)
    return float(val)


def eval_H2(inp, v):
    """Value of ``H2`` at ``v``."""
    v = _as_vector(v, inp.m, "v")
    DtD = inp.D.T @ inp.D
    q = inp.P2 * (inp.B + inp.D.T @ inp.C) + inp.D.T @ inp.lam() + inp.S
    val = v @ (inp.R + inp.P2 * DtD) @ v - 2.0 * q @ v
    G1, G2 = inp.gammas()
    for j, mk in enumerate(inp.marks):
        s = -1.0 - mk.E + mk.F @ v
        val += mk.nu * ((inp.P2 + G2[j]) * (max(-s, 0.0) ** 2 - 1.0)
                        + 2.0 * inp.P2 * (-mk.E + mk.F @ v)
                        + (inp.P1 + G1[j]) * max(s, 0.0) ** 2)
    return float(val)


def _run_h1(inp, cone, radius, tol, max_iter):
    E, F, nu = inp.arrays()
    G1, G2 = inp.gammas()
    M, q = _linear_coef(inp, inp.P1)
    kind, signs, gen = cone.packed()
    r = np.inf if radius is None else float(radius)
    v, val, it, status, _ = _kernels.fista(
        np.ascontiguousarray(M), q, E, np.ascontiguousarray(F), nu,
        inp.P1, inp.P1 + G1, inp.P2 + G2, kind, signs, gen, r, float(tol),
        int(max_iter))
    if status == _kernels.STATUS_NONFINITE:
        raise NumericError("objective became non-finite")
    if status == _kernels.STATUS_MAXITER:
        raise ConvergenceError(f"no convergence within {max_iter} iterations")
    return v, float(val)


def minimize(inp, which, cone, radius=None, tol=DEFAULT_TOL,
             max_iter=DEFAULT_MAX_ITER):
    """Minimize ``H1`` or ``H2`` over ``cone`` (∩ ball of ``radius``).

    Parameters
    ----------
    inp : HInput
    which : {"H1", "H2"}
    cone : Cone
    radius : float, optional
        Restrict to ``|v| <= radius``.
    tol : float
        Bound on the projected-gradient residual at the returned point.
    max_iter : int

    Returns
    -------
    v_hat : ndarray, shape (m,)
    value : float
        Objective value at ``v_hat``.
    """
    if cone.dim != inp.m:
        raise ValidationError("cone dimension does not match the input")
    if radius is not None and radius < 0:
        raise ValidationError("radius must be nonnegative")
    inp.check()
    if which == "H1":
        return _run_h1(inp, cone, radius, tol, max_iter)
    if which == "H2":
        w, val = _run_h1(inp.swapped(), cone.negated(), radius, tol, max_iter)
        return -w, val
    raise ValidationError("which must be 'H1' or 'H2'")


def _pieces_1d(inp, which):
    """Kink data and per-piece ``(v^2, v)`` coefficients for ``m = 1``.

    Returns the coefficients of the smooth part and, per mark, the kink
    argument ``s = u0 + u1 v`` with the coefficients valid for ``s >= 0``
    and ``s < 0``.
    """
    R = inp.R[0, 0]
    d2 = float(inp.D[:, 0] @ inp.D[:, 0])
    bdc = inp.B[0] + float(inp.D[:, 0] @ inp.C)
    dl = float(inp.D[:, 0] @ inp.lam())
    G1, G2 = inp.gammas()
    P = inp.P1 if which == "H1" else inp.P2
    sgn = 1.0 if which == "H1" else -1.0
    base = (R + P * d2, sgn * 2.0 * (P * bdc + dl + inp.S[0]))
    marks = []
    for j, mk in enumerate(inp.marks):
        E, F, nu = mk.E, float(mk.F[0]), mk.nu
        if which == "H1":
            u0, u1 = 1.0 + E, F
            c_pos, c_neg = inp.P1 + G1[j], inp.P2 + G2[j]
            slope = -2.0 * inp.P1 * F
        else:
            u0, u1 = -1.0 - E, F
            c_pos, c_neg = inp.P1 + G1[j], inp.P2 + G2[j]
            slope = 2.0 * inp.P2 * F
        # c * s^2 contributes c*u1^2 v^2 + 2 c u0 u1 v
        pos = (nu * c_pos * u1 * u1, nu * (2 * c_pos * u0 * u1 + slope))
        neg = (nu * c_neg * u1 * u1, nu * (2 * c_neg * u0 * u1 + slope))
        marks.append((u0, u1, pos, neg))
    return base, marks


def exact_minimize_1d(inp, which, interval):
    """Global minimizer for ``m = 1`` by piece enumeration.

    Every kink location, every per-piece parabola vertex and both endpoints
    are evaluated with :func:`eval_H1` / :func:`eval_H2`; the smallest value
    wins. Intended as an independent reference for :func:`minimize`.
    """
    if inp.m != 1:
        raise ValidationError("exact_minimize_1d requires m = 1")
    lo, hi = (float(x) for x in interval)
    if not lo <= hi:
        raise ValidationError("empty interval")
    if which not in ("H1", "H2"):
        raise ValidationError("which must be 'H1' or 'H2'")
    evaluate = eval_H1 if which == "H1" else eval_H2
    base, marks = _pieces_1d(inp, which)
    kinks = sorted({-u0 / u1 for u0, u1, _, _ in marks
                    if u1 != 0.0 and lo < -u0 / u1 < hi})
    edges = [lo] + kinks + [hi]
    cands = set(edges)
    for left, right in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (left + right)
        c2, c1 = base
        for u0, u1, pos, neg in marks:
            piece = pos if u0 + u1 * mid >= 0 else neg
            c2, c1 = c2 + piece[0], c1 + piece[1]
        if c2 > 0:
            vert = -c1 / (2.0 * c2)
            if left <= vert <= right:
                cands.add(vert)
    best = min(sorted(cands), key=lambda v: evaluate(inp, [v]))
    return best, evaluate(inp, [best])
