"""Cone-constrained mean-variance portfolio selection with jumps.

Wealth follows

    dX = (r X + mu'pi) dt + pi' sigma dW + sum_j F_j'pi dN~_j,

with deterministic ``r``, excess return ``mu``, volatility ``sigma`` and
jump exposures ``F_j`` of compensated Poisson marks with rates ``nu_j``.
For a target mean ``z`` the Lagrange relaxation minimizes
``E[(X_T - lambda)^2]``; in the shifted state ``Y = X - lambda e^{-int_t^T r}``
this is a singular LQ problem with ``A = r``, ``B = mu``, ``C = 0``,
``D = sigma'``, ``E = 0``, ``Q = R = S = 0``, ``G = 1``. One Riccati solve
serves every target since ``lambda`` enters only through the shift.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .conekit import Cone, dual_membership
from .errors import (DegenerateMarketError, InfeasibleError,
                     ValidationError)
from .simulate import simulate_controlled
from .sre import LQCoefficients, _time_array, format_float, solve_sre

__all__ = [
    "MarketModel", "LQShift", "to_lq", "check_feasibility", "MVSolution",
    "solve_mv", "FrontierRow", "FrontierResult", "efficient_frontier",
    "dual_value", "MVSimReport", "simulate_mv",
]

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Market data on a uniform grid with piecewise-constant interpolation.

    Build instances with :meth:`create`. Time-dependent arrays carry a
    leading grid axis of length ``K + 1``.
    """

    T: float
    r: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    marks: tuple
    cone: Cone
    x0: float
    targets: tuple = ()
    delta: float = field(default=None)

    @classmethod
    def create(cls, T, *, r=0.0, mu, sigma, marks=(), cone=None, x0=1.0,
               targets=(), m=None, n=None):
        """Assemble and validate a market.

        ``mu`` has shape ``(m,)``, ``sigma`` ``(m, n)`` and each mark is a
        pair ``(F, nu)`` with ``F`` of shape ``(m,)``; any of them may carry
        a leading grid axis. Scalars are accepted when ``m = n = 1``.
        """
        mu_a = np.asarray(mu, dtype=float)
        if m is None:
            m = 1 if mu_a.ndim == 0 else mu_a.shape[-1]
        sig_a = np.asarray(sigma, dtype=float)
        if n is None:
            n = 1 if sig_a.ndim < 2 else sig_a.shape[-1]
        m, n = int(m), int(n)
        lq = LQCoefficients.create(
            T, m, n, A=r, B=mu, D=np.swapaxes(_time_array(
                sigma, (m, n), "sigma"), 1, 2), R=0.0, G=1.0,
            marks=[(0.0, F, nu) for F, nu in marks])
        cone = Cone.full(m) if cone is None else cone
        if cone.dim != m:
            raise ValidationError("cone dimension must equal the number of "
                                  "assets")
        if not cone.is_convex:
            raise ValidationError("mean-variance requires a convex cone")
        x0 = float(x0)
        if not math.isfinite(x0):
            raise ValidationError("x0 must be finite")
        delta = lq.singular_delta()
        if not delta > 0:
            raise ValidationError(
                "sigma sigma' + sum nu F F' must be uniformly positive "
                f"definite (min eigenvalue {delta:.3g})")
        mk = tuple((mk.F, mk.nu) for mk in lq.marks)
        return cls(lq.T, lq.A, lq.B, np.swapaxes(lq.D, 1, 2), mk, cone, x0,
                   tuple(float(z) for z in targets), float(delta))

    @property
    def m(self):
        return self.mu.shape[1]

    @property
    def n(self):
        return self.sigma.shape[2]

    @property
    def grid_points(self):
        return self.r.shape[0]

    def lq(self):
        """Coefficients of the shifted LQ problem."""
        return LQCoefficients.create(
            self.T, self.m, self.n, A=self.r, B=self.mu,
            D=np.swapaxes(self.sigma, 1, 2), R=0.0, G=1.0,
            marks=[(0.0, F, nu) for F, nu in self.marks])

    def int_r(self, t=0.0):
        """``int_t^T r(s) ds`` for the piecewise-constant rate."""
        K = self.grid_points - 1
        h = self.T / K
        edges = np.linspace(0.0, self.T, K + 1)
        lo = np.maximum(edges[:-1], t)
        return float(np.sum(self.r[:-1] * np.clip(edges[1:] - lo, 0.0, h)))

    def to_dict(self):
        return {
            "T": self.T, "m": self.m, "n": self.n, "r": self.r.tolist(),
            "mu": self.mu.tolist(), "sigma": self.sigma.tolist(),
            "marks": [{"F": F.tolist(), "nu": nu} for F, nu in self.marks],
            "cone": self.cone.to_dict(), "x0": self.x0,
            "targets": list(self.targets),
        }

    @classmethod
    def from_dict(cls, d):
        allowed = {"T", "m", "n", "r", "mu", "sigma", "marks", "cone", "x0",
                   "targets"}
        extra = set(d) - allowed
        if extra:
            raise ValidationError(f"unknown market fields {sorted(extra)}")
        for key in ("T", "mu", "sigma"):
            if key not in d:
                raise ValidationError(f"market needs {key!r}")
        try:
            marks = [(mk["F"], mk["nu"]) for mk in d.get("marks", [])]
        except (KeyError, TypeError) as exc:
            raise ValidationError("each mark needs F and nu") from exc
        cone = Cone.from_dict(d["cone"]) if "cone" in d else None
        return cls.create(d["T"], r=d.get("r", 0.0), mu=d["mu"],
                          sigma=d["sigma"], marks=marks, cone=cone,
                          x0=d.get("x0", 1.0), targets=d.get("targets", ()),
                          m=d.get("m"), n=d.get("n"))


@dataclass(frozen=True)
class LQShift:
    """Shift ``h(t) = lambda exp(-int_t^T r)`` relating wealth and LQ state."""

    model: MarketModel
    lam: float

    def __call__(self, t):
        return self.lam * math.exp(-self.model.int_r(t))


def to_lq(model, lam):
    """LQ coefficients and the state shift ``X -> X - h(t)``."""
    return model.lq(), LQShift(model, float(lam))


def check_feasibility(model):
    """True iff ``mu(t)`` leaves the dual cone on some grid interval."""
    return any(not dual_membership(model.cone, model.mu[k])
               for k in range(model.grid_points - 1))


@dataclass(frozen=True, eq=False)
class MVSolution:
    """Efficient strategy for one target ``z``."""

    model: MarketModel
    z: float
    lambda_star: float
    variance: float
    V_relaxed: float
    riccati: object

    @property
    def shift(self):
        return LQShift(self.model, self.lambda_star)

    def portfolio(self, t, x):
        """Optimal holding ``v1 (x - h)^+ + v2 (x - h)^-`` at wealth ``x``."""
        y = float(x) - self.shift(t)
        v1, v2 = self.riccati.gains(t)
        return v1 * max(y, 0.0) + v2 * max(-y, 0.0)

    def feedback_csv(self, path=None):
        """Riccati CSV with the shift recorded in the header."""
        hdr = [f"lambda_star={format_float(self.lambda_star)}",
               "shift(t)=lambda_star*exp(-int_t^T r)",
               f"z={format_float(self.z)}"]
        return self.riccati.to_csv(path, hdr)


def _riccati(model, steps):
    sol = solve_sre(model.lq(), model.cone, steps)
    d2 = math.exp(-2.0 * model.int_r())
    if sol.P2[0] * d2 >= 1.0 - DEGENERACY_TOL:
        raise DegenerateMarketError(
            f"P2(0) exp(-2 int r) = {sol.P2[0] * d2:.12g} is not below 1")
    return sol


def _row(model, sol, z):
    d = math.exp(-model.int_r())
    x0 = model.x0
    growth = x0 / d
    if z < growth - 1e-12 * max(1.0, abs(growth)):
        raise ValidationError(
            f"target {z} below the riskless terminal wealth {growth}")
    p = sol.P2[0] * d * d
    lam = (z - x0 * sol.P2[0] * d) / (1.0 - p)
    var = p / (1.0 - p) * (z - growth) ** 2
    y0 = x0 - lam * d
    V = sol.P1[0] * max(y0, 0.0) ** 2 + sol.P2[0] * max(-y0, 0.0) ** 2
    return lam, var, V


def solve_mv(model, z, steps=2000, riccati=None):
    """Efficient strategy for target mean ``z``.

    Parameters
    ----------
    model : MarketModel
    z : float
        Target mean, at least ``x0 exp(int_0^T r)``.
    steps : int
        Riccati grid size.
    riccati : RiccatiSolution, optional
        Reuse an earlier solve of the same model.

    Raises
    ------
    InfeasibleError
        If ``mu`` lies in the dual cone almost everywhere.
    DegenerateMarketError
        If ``P2(0) exp(-2 int r)`` is not strictly below one.
    """
    if not check_feasibility(model):
        raise InfeasibleError("mu lies in the dual cone on the whole grid; "
                              "no target above the riskless growth is "
                              "attainable")
    sol = riccati if riccati is not None else _riccati(model, steps)
    lam, var, V = _row(model, sol, float(z))
    return MVSolution(model, float(z), lam, var, V, sol)


def dual_value(sol, lam, z):
    """Lagrange dual ``min_pi E[(X_T - lam)^2] - (lam - z)^2``."""
    d = math.exp(-sol.model.int_r())
    y0 = sol.model.x0 - lam * d
    P = sol.riccati
    V = P.P1[0] * max(y0, 0.0) ** 2 + P.P2[0] * max(-y0, 0.0) ** 2
    return V - (lam - z) ** 2


@dataclass(frozen=True)
class FrontierRow:
    z: float
    lambda_star: float
    variance: float
    V_relaxed: float


@dataclass(frozen=True, eq=False)
class FrontierResult:
    P10: float
    P20: float
    discount: float
    rows: tuple
    riccati: object

    def to_csv(self, path=None):
        lines = ["z,lambda_star,variance,std_dev"]
        for r in self.rows:
            lines.append(",".join(format_float(x) for x in (
                r.z, r.lambda_star, r.variance, math.sqrt(r.variance))))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def efficient_frontier(model, steps=2000, z_grid=None):
    """Frontier rows for every target in ``z_grid`` from one Riccati solve."""
    z_grid = model.targets if z_grid is None else tuple(z_grid)
    if not z_grid:
        raise ValidationError("no targets given")
    if not check_feasibility(model):
        raise InfeasibleError("mu lies in the dual cone on the whole grid")
    sol = _riccati(model, steps)
    rows = tuple(FrontierRow(float(z), *_row(model, sol, float(z)))
                 for z in z_grid)
    return FrontierResult(float(sol.P1[0]), float(sol.P2[0]),
                          math.exp(-model.int_r()), rows, sol)


@dataclass(frozen=True)
class MVSimReport:
    """Monte Carlo terminal-wealth statistics against the frontier."""

    z: float
    variance: float
    mean: float
    mean_se: float
    var: float
    var_se: float

    @property
    def mean_ok(self):
        return abs(self.mean - self.z) <= 3.0 * self.mean_se

    @property
    def var_ok(self):
        return abs(self.var - self.variance) <= 3.0 * self.var_se

    def to_text(self, name="mv-simulate"):
        return (f"{name} z={self.z:.10g} mean={self.mean:.10g} "
                f"mean_se={self.mean_se:.6g} variance={self.variance:.10g} "
                f"var={self.var:.10g} var_se={self.var_se:.6g} "
                f"{'PASS' if self.mean_ok and self.var_ok else 'FAIL'}\n")


def simulate_mv(sol, cfg):
    """Simulate wealth under the efficient feedback.

    The shift ``h`` grows at rate ``r`` exactly, so ``X - h`` follows the LQ
    state equation; wealth statistics are recovered by adding ``lambda``
    at ``T``.
    """
    model = sol.model
    y0 = model.x0 - sol.shift(0.0)
    rep = simulate_controlled(model.lq(), sol.riccati, y0, cfg)
    return MVSimReport(sol.z, sol.variance, rep.EX_T + sol.lambda_star,
                       rep.EX_T_se, rep.VarX_T, rep.VarX_T_se)
