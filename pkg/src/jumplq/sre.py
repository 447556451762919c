"""Backward solver for the coupled Riccati pair under deterministic data.

With deterministic coefficients the pair ``(P1, P2)`` solves the ODE system

    dP_i/dt = -[(2A + C'C) P_i + Q + H_i*(t, P1, P2)],   P_i(T) = G,

where ``H_i*`` is the infimum of ``H_i`` over the control cone, evaluated by
:func:`jumplq.conekit.minimize`'s compiled kernel at every stage. The
integration runs in reversed time ``tau = T - t``.

Coefficients are stored on a uniform grid and interpolated piecewise
constantly: the value at node ``k`` applies on ``[t_k, t_{k+1})``. Each
solver step uses the value at its left endpoint.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .conekit import DEFAULT_MAX_ITER, DEFAULT_TOL, Cone
from .errors import (ConvergenceError, NumericError, SolverDivergenceError,
                     ValidationError)

__all__ = [
    "JumpMark", "LQCoefficients", "RiccatiSolution", "BoundsReport",
    "solve_sre", "solve_truncated", "verify_bounds", "feedback",
]

BOUND_TOL = 1e-7
PICARD_TOL = 1e-12
PICARD_MAX_ITER = 100


def _time_array(value, base_shape, name, identity=False):
    """Return ``value`` as an array with a leading grid axis, or None-length.

    A value whose ``ndim`` equals ``len(base_shape)`` is constant in time and
    gets a grid axis of length one; one extra leading axis marks a
    time-dependent array.
    """
    a = np.asarray(value, dtype=float)
    if identity and a.ndim == 0:
        a = a * np.eye(base_shape[0])
    elif a.ndim == 0:
        a = np.full(base_shape, float(a))
    if a.ndim == len(base_shape):
        a = a[None]
    if a.ndim != len(base_shape) + 1 or a.shape[1:] != tuple(base_shape):
        raise ValidationError(
            f"{name} must have shape {tuple(base_shape)} or "
            f"(grid,)+{tuple(base_shape)}, got {np.shape(value)}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} must be finite")
    return a


@dataclass(frozen=True)
class JumpMark:
    """Jump mark with time-dependent sizes ``E(t)``, ``F(t)`` and rate ``nu``."""

    E: np.ndarray
    F: np.ndarray
    nu: float


@dataclass(frozen=True)
class LQCoefficients:
    """Deterministic coefficients of a scalar-state LQ problem with jumps.

    Time-dependent arrays carry a leading axis of length ``K + 1`` for a
    uniform grid with ``K`` intervals on ``[0, T]``. Build instances through
    :meth:`create`, which broadcasts scalars and constant arrays.
    """

    T: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    G: float
    marks: tuple = ()

    @classmethod
    def create(cls, T, m=1, n=1, *, A=0.0, B=0.0, C=0.0, D=0.0, Q=0.0,
               R=0.0, S=0.0, G=1.0, marks=()):
        """Assemble coefficients with broadcasting.

        Scalars fill the whole base shape, except ``R`` where a scalar ``r``
        means ``r * I``. ``marks`` is a sequence of ``(E, F, nu)`` triples or
        :class:`JumpMark` objects.
        """
        T = float(T)
        if not (T > 0 and math.isfinite(T)):
            raise ValidationError("horizon T must be positive and finite")
        m, n = int(m), int(n)
        if m < 1 or n < 1:
            raise ValidationError("m and n must be positive")
        arrs = {
            "A": _time_array(A, (), "A"),
            "B": _time_array(B, (m,), "B"),
            "C": _time_array(C, (n,), "C"),
            "D": _time_array(D, (n, m), "D"),
            "Q": _time_array(Q, (), "Q"),
            "R": _time_array(R, (m, m), "R", identity=True),
            "S": _time_array(S, (m,), "S"),
        }
        raw_marks = []
        for mk in marks:
            if isinstance(mk, JumpMark):
                E, F, nu = mk.E, mk.F, mk.nu
            else:
                E, F, nu = mk
            nu = float(nu)
            if not (nu >= 0 and math.isfinite(nu)):
                raise ValidationError("mark intensity must be finite and >= 0")
            raw_marks.append((_time_array(E, (), "E"),
                              _time_array(F, (m,), "F"), nu))
        lengths = {a.shape[0] for a in arrs.values()}
        lengths |= {x.shape[0] for E, F, _ in raw_marks for x in (E, F)}
        lengths.discard(1)
        if len(lengths) > 1:
            raise ValidationError(f"inconsistent grid lengths {lengths}")
        K1 = lengths.pop() if lengths else 2
        if K1 < 2:
            raise ValidationError("time grid needs at least two points")

        def grid(a):
            return np.ascontiguousarray(
                np.broadcast_to(a, (K1,) + a.shape[1:]), dtype=float)

        arrs = {k: grid(v) for k, v in arrs.items()}
        if np.any(arrs["Q"] < 0):
            raise ValidationError("Q must be nonnegative")
        R = arrs["R"]
        if not np.allclose(R, np.swapaxes(R, 1, 2), atol=1e-12):
            raise ValidationError("R must be symmetric")
        G = float(G)
        if not (G >= 0 and math.isfinite(G)):
            raise ValidationError("G must be finite and nonnegative")
        mk = tuple(JumpMark(grid(E), grid(F), nu)
                   for E, F, nu in raw_marks)
        return cls(T, marks=mk, G=G, **arrs)

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def n(self):
        return self.C.shape[1]

    @property
    def grid_points(self):
        return self.A.shape[0]

    @property
    def nodes(self):
        return np.linspace(0.0, self.T, self.grid_points)

    def index(self, t):
        """Grid index whose value applies at time ``t``."""
        K = self.grid_points - 1
        k = int(math.floor(t / self.T * K + 1e-9))
        return min(max(k, 0), K)

    def mark_arrays(self, k):
        """``(E, F, nu)`` stacked over marks at grid index ``k``."""
        J = len(self.marks)
        E = np.array([mk.E[k] for mk in self.marks], dtype=float)
        F = np.array([mk.F[k] for mk in self.marks], dtype=float
                     ).reshape(J, self.m)
        nu = np.array([mk.nu for mk in self.marks], dtype=float)
        return E, F, nu

    def without_marks(self):
        return LQCoefficients(self.T, self.A, self.B, self.C, self.D, self.Q,
                              self.R, self.S, self.G, ())

    def to_dict(self):
        return {
            "T": self.T, "m": self.m, "n": self.n,
            "A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(),
            "D": self.D.tolist(), "Q": self.Q.tolist(), "R": self.R.tolist(),
            "S": self.S.tolist(), "G": self.G,
            "marks": [{"E": mk.E.tolist(), "F": mk.F.tolist(), "nu": mk.nu}
                      for mk in self.marks],
        }

    @classmethod
    def from_dict(cls, d):
        allowed = {"T", "m", "n", "A", "B", "C", "D", "Q", "R", "S", "G",
                   "marks"}
        extra = set(d) - allowed
        if extra:
            raise ValidationError(f"unknown model fields {sorted(extra)}")
        if "T" not in d:
            raise ValidationError("model needs a horizon T")
        marks = []
        for mk in d.get("marks", []):
            try:
                marks.append((mk.get("E", 0.0), mk["F"], mk["nu"]))
            except (KeyError, AttributeError) as exc:
                raise ValidationError(f"bad mark entry {mk!r}") from exc
        kw = {k: d[k] for k in ("A", "B", "C", "D", "Q", "R", "S", "G")
              if k in d}
        return cls.create(d["T"], d.get("m", 1), d.get("n", 1), marks=marks,
                          **kw)

    # ------------------------------------------------------------------
    # structural flags

    def _block_psd(self, k):
        m = self.m
        blk = np.empty((m + 1, m + 1))
        blk[:m, :m] = self.R[k]
        blk[:m, m] = self.S[k]
        blk[m, :m] = self.S[k]
        blk[m, m] = self.Q[k]
        scale = max(1.0, np.abs(blk).max())
        return np.linalg.eigvalsh(blk).min() >= -1e-12 * scale

    def _intervals(self):
        # the last grid value only applies at t = T
        return range(self.grid_points - 1)

    def standard_delta(self):
        """``min_t lambda_min(R)``; positive under the standard case."""
        return min(np.linalg.eigvalsh(self.R[k]).min()
                   for k in self._intervals())

    def singular_delta(self):
        """``min(G, min_t lambda_min(D'D + sum nu F F'))``."""
        lam = np.inf
        for k in self._intervals():
            _, F, nu = self.mark_arrays(k)
            M = self.D[k].T @ self.D[k] + (F.T * nu) @ F
            lam = min(lam, np.linalg.eigvalsh(M).min())
        return min(self.G, lam)

    def classify(self):
        """Return ``"standard"``, ``"singular"`` or ``"unclassified"``.

        Raises if the cost block ``[[R, S], [S', Q]]`` is indefinite.
        """
        if not all(self._block_psd(k) for k in range(self.grid_points)):
            raise ValidationError("cost block [[R,S],[S',Q]] must be PSD")
        if self.standard_delta() > 0:
            return "standard"
        if self.singular_delta() > 0:
            return "singular"
        return "unclassified"


@dataclass(frozen=True)
class BoundsReport:
    """A-priori bound constants and the worst violations found."""

    c: float
    M: float
    upper_violation: float
    negativity: float
    delta: float = None
    c2: float = None
    lower_violation: float = None

    @property
    def max_violation(self):
        vals = [self.upper_violation, self.negativity]
        if self.lower_violation is not None:
            vals.append(self.lower_violation)
        return max(vals)

    @property
    def passed(self):
        return self.max_violation <= BOUND_TOL

    def lower_bound(self, t, T):
        if self.delta is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.delta * np.exp(-self.c2 * (T - np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class RiccatiSolution:
    """Gridded solution of the Riccati pair with cached minimizers.

    Attributes
    ----------
    t : ndarray, shape (N+1,)
    P1, P2 : ndarray, shape (N+1,)
    v1_hat, v2_hat : ndarray, shape (N+1, m)
        Minimizers of ``H1`` and ``H2`` at each node.
    case : str
    bound_M : float
    bound_lower : float or None
        ``delta * exp(-c2 T)`` when the singular-case bound applies.
    """

    t: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    v1_hat: np.ndarray
    v2_hat: np.ndarray
    case: str
    bound_M: float
    bound_lower: float
    cone: Cone
    radius: float
    scheme: str
    bounds: BoundsReport

    @property
    def T(self):
        return float(self.t[-1])

    @property
    def steps(self):
        return self.t.shape[0] - 1

    def node(self, t):
        """Index of the grid cell containing ``t`` (left-continuous lookup)."""
        T = self.T
        if not (-1e-12 * T <= t <= T * (1 + 1e-12)):
            raise ValidationError(f"time {t} outside [0, {T}]")
        n = int(math.floor(t / T * self.steps + 1e-9))
        return min(max(n, 0), self.steps)

    def gains(self, t):
        n = self.node(t)
        return self.v1_hat[n], self.v2_hat[n]

    def value(self, x):
        """Optimal cost ``P1(0) (x^+)^2 + P2(0) (x^-)^2``."""
        return self.P1[0] * max(x, 0.0) ** 2 + self.P2[0] * max(-x, 0.0) ** 2

    def to_csv(self, path=None, header_lines=()):
        m = self.v1_hat.shape[1]
        cols = (["t", "P1", "P2"] + [f"v1_{i + 1}" for i in range(m)]
                + [f"v2_{i + 1}" for i in range(m)])
        data = np.column_stack([self.t, self.P1, self.P2, self.v1_hat,
                                self.v2_hat])
        lines = [f"# {h}" for h in header_lines] + [",".join(cols)]
        lines += [",".join(format_float(x) for x in row) for row in data]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def format_float(x):
    """17 significant digits, '.' separator, negative zero normalized."""
    x = float(x)
    if x == 0.0:
        x = 0.0
    return f"{x:.17g}"


class _Stepper:
    """Per-grid-index constants and the compiled right-hand side."""

    def __init__(self, coeffs, cone, radius, tol, max_iter):
        self.coeffs = coeffs
        self.kind, self.signs, self.gen = cone.packed()
        self.nkind, self.nsigns, self.ngen = cone.negated().packed()
        self.radius = np.inf if radius is None else float(radius)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self._cache = {}
        m = coeffs.m
        self.v1 = np.zeros(m)
        self.v2 = np.zeros(m)

    def data(self, k):
        if k not in self._cache:
            c = self.coeffs
            D = c.D[k]
            E, F, nu = c.mark_arrays(k)
            self._cache[k] = (
                np.ascontiguousarray(c.R[k]), np.ascontiguousarray(D.T @ D),
                c.B[k] + D.T @ c.C[k], np.ascontiguousarray(c.S[k]), E,
                np.ascontiguousarray(F), nu,
                2.0 * c.A[k] + c.C[k] @ c.C[k], float(c.Q[k]))
        return self._cache[k]

    def rhs(self, k, P1, P2):
        R, DtD, BDC, S, E, F, nu, slope, Q = self.data(k)
        d1, d2, status = _kernels.riccati_rhs(
            P1, P2, R, DtD, BDC, S, E, F, nu, slope, Q, self.kind,
            self.signs, self.gen, self.nkind, self.nsigns, self.ngen,
            self.radius, self.tol, self.max_iter, self.v1, self.v2)
        if status == _kernels.STATUS_MAXITER:
            raise ConvergenceError("cone minimization did not converge")
        if status == _kernels.STATUS_NONFINITE or not (
                math.isfinite(d1) and math.isfinite(d2)):
            raise NumericError("non-finite Riccati right-hand side")
        return d1, d2


def _integrate(coeffs, cone, steps, scheme, radius, tol, max_iter):
    if cone.dim != coeffs.m:
        raise ValidationError("cone dimension does not match control size")
    if int(steps) != steps or steps < 1:
        raise ValidationError("steps must be a positive integer")
    if radius is not None and not radius >= 0:
        raise ValidationError("radius must be nonnegative")
    if scheme not in ("rk4", "implicit_euler"):
        raise ValidationError(f"unknown scheme {scheme!r}")
    case = coeffs.classify()
    if case == "unclassified":
        warnings.warn("coefficients satisfy neither the standard nor the "
                      "singular structural condition", stacklevel=3)
    N = int(steps)
    T = coeffs.T
    t = np.linspace(0.0, T, N + 1)
    h = T / N
    m = coeffs.m
    P1 = np.empty(N + 1)
    P2 = np.empty(N + 1)
    V1 = np.empty((N + 1, m))
    V2 = np.empty((N + 1, m))
    P1[N] = P2[N] = coeffs.G
    st = _Stepper(coeffs, cone, radius, tol, max_iter)
    idx = [coeffs.index(x) for x in t]

    def at_node(n):
        st.rhs(idx[n], P1[n], P2[n])
        V1[n], V2[n] = st.v1, st.v2

    for n in range(N - 1, -1, -1):
        k = idx[n]
        p1, p2 = P1[n + 1], P2[n + 1]
        if scheme == "rk4":
            a1, a2 = st.rhs(k, p1, p2)
            if idx[n + 1] == k:
                V1[n + 1], V2[n + 1] = st.v1, st.v2
            else:
                at_node(n + 1)
            b1, b2 = st.rhs(k, p1 + 0.5 * h * a1, p2 + 0.5 * h * a2)
            c1, c2 = st.rhs(k, p1 + 0.5 * h * b1, p2 + 0.5 * h * b2)
            d1, d2 = st.rhs(k, p1 + h * c1, p2 + h * c2)
            P1[n] = p1 + h / 6.0 * (a1 + 2 * b1 + 2 * c1 + d1)
            P2[n] = p2 + h / 6.0 * (a2 + 2 * b2 + 2 * c2 + d2)
        else:
            q1, q2 = p1, p2
            for _ in range(PICARD_MAX_ITER):
                f1, f2 = st.rhs(k, q1, q2)
                r1, r2 = p1 + h * f1, p2 + h * f2
                done = max(abs(r1 - q1), abs(r2 - q2)) <= PICARD_TOL * max(
                    1.0, abs(r1), abs(r2))
                q1, q2 = r1, r2
                if done:
                    break
            else:
                raise ConvergenceError(
                    "implicit Euler fixed point did not converge; "
                    "reduce the step size")
            P1[n], P2[n] = q1, q2
    for n in range(N + 1):
        if scheme == "implicit_euler" or n == 0:
            at_node(n)
    return t, P1, P2, V1, V2, case


def _solve(coeffs, cone, steps, scheme, radius, tol, max_iter):
    t, P1, P2, V1, V2, case = _integrate(coeffs, cone, steps, scheme, radius,
                                         tol, max_iter)
    rep = _bounds(coeffs, t, P1, P2)
    lower = None
    if rep.delta is not None:
        lower = rep.delta * math.exp(-rep.c2 * coeffs.T)
    sol = RiccatiSolution(t, P1, P2, V1, V2, case, rep.M, lower, cone,
                          radius, scheme, rep)
    if not rep.passed:
        raise SolverDivergenceError(
            f"a-priori bounds violated by {rep.max_violation:.3g}; "
            "refine the grid or check the inputs")
    return sol


def solve_sre(coeffs, cone, steps=2000, scheme="rk4", tol=DEFAULT_TOL,
              max_iter=DEFAULT_MAX_ITER):
    """Integrate the Riccati pair backward from ``P_i(T) = G``.

    Parameters
    ----------
    coeffs : LQCoefficients
    cone : Cone
        Control constraint set.
    steps : int
        Number of uniform time steps.
    scheme : {"rk4", "implicit_euler"}
    tol, max_iter
        Passed to the pointwise minimizer.

    Returns
    -------
    RiccatiSolution

    Raises
    ------
    SolverDivergenceError
        If the solution leaves its a-priori bounds by more than ``1e-7``.
    """
    return _solve(coeffs, cone, steps, scheme, None, tol, max_iter)


def solve_truncated(coeffs, cone, steps=2000, k=1.0, scheme="rk4",
                    tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """As :func:`solve_sre` with controls restricted to ``|v| <= k``."""
    if k is None or not k >= 0:
        raise ValidationError("radius k must be nonnegative")
    return _solve(coeffs, cone, steps, scheme, float(k), tol, max_iter)


def bound_constants(coeffs):
    """Constants ``c, M`` and, if applicable, ``delta, c2``."""
    vals = [coeffs.G]
    for k in coeffs._intervals():
        E, _, nu = coeffs.mark_arrays(k)
        lin = 2 * coeffs.A[k] + coeffs.C[k] @ coeffs.C[k] + nu @ E ** 2
        vals += [lin, coeffs.Q[k]]
    c = max(0.0, max(vals))
    try:
        M = (c + 1.0) * math.exp(c * coeffs.T) - 1.0
    except OverflowError:
        M = math.inf
    delta = c2 = None
    if coeffs.singular_delta() > 0:
        delta = float(coeffs.singular_delta())
        c2 = 0.0
        for k in coeffs._intervals():
            E, F, nu = coeffs.mark_arrays(k)
            D, C = coeffs.D[k], coeffs.C[k]
            lin = 2 * coeffs.A[k] + C @ C + nu @ E ** 2
            b = coeffs.B[k] + D.T @ C
            ef = (nu * E) @ F
            g = max(np.sum((b + ef) ** 2), np.sum((b - ef) ** 2))
            c2 = max(c2, float(g / delta - lin))
    return c, M, delta, c2


def _bounds(coeffs, t, P1, P2):
    c, M, delta, c2 = bound_constants(coeffs)
    P = np.concatenate([P1, P2])
    upper = max(0.0, float(np.max(P - M)))
    neg = max(0.0, float(-np.min(P)))
    lower_v = None
    if delta is not None:
        lb = delta * np.exp(-c2 * (coeffs.T - t))
        lower_v = max(0.0, float(np.max(lb - P1)), float(np.max(lb - P2)))
    return BoundsReport(c, M, upper, neg, delta, c2, lower_v)


def verify_bounds(sol, coeffs):
    """Recompute the a-priori bounds for ``sol`` and report violations."""
    return _bounds(coeffs, sol.t, sol.P1, sol.P2)


def feedback(sol, t, x):
    """Feedback control ``v1(t) x^+ + v2(t) x^-`` at state ``x``."""
    v1, v2 = sol.gains(t)
    return v1 * max(x, 0.0) + v2 * max(-x, 0.0)
