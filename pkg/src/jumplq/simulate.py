"""Monte Carlo for the controlled scalar jump SDE.

The state follows, per Euler step of length ``dt``,

    X <- X + (A X + B'u - sum_j nu_j (E_j X + F_j'u)) dt
           + (C X + D u)' dW + sum_j N_j (E_j X + F_j'u),

where ``N_j ~ Poisson(nu_j dt)`` counts the jumps of mark ``j`` in the step
and the control ``u`` is frozen at the step's opening state. The cost is
the Riemann sum of ``Q X^2 + u'Ru + 2 X S'u`` plus ``G X_T^2``.

Paths are processed in fixed-size chunks; chunk ``c`` draws from a Philox
stream keyed by ``(seed, c)``, so results are reproducible bit for bit and
every control arm run with the same configuration sees the same noise.
"""

import math
from dataclasses import dataclass

import numpy as np

from .conekit import project_rows
from .errors import BlowUpError, ValidationError

__all__ = [
    "PathConfig", "SimReport", "simulate_controlled", "bias_budget",
    "euler_bias_constant", "ValueCheck", "verify_value", "ProbeRow",
    "ProbeReport", "optimality_probe",
]

CHUNK = 32768


@dataclass(frozen=True)
class PathConfig:
    """Monte Carlo settings.

    With ``antithetic`` set, the second half of each chunk reuses the first
    half's Brownian increments with flipped sign and the same jump counts;
    standard errors are then computed from pair averages.
    """

    paths: int = 100_000
    steps: int = 500
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        for name in ("paths", "steps"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")
        if self.antithetic and self.paths % 2:
            raise ValidationError("antithetic sampling needs an even number "
                                  "of paths")

    def to_dict(self):
        return {"paths": self.paths, "steps": self.steps, "seed": self.seed,
                "antithetic": self.antithetic}

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - {"paths", "steps", "seed", "antithetic"}
        if extra:
            raise ValidationError(f"unknown mc fields {sorted(extra)}")
        return cls(int(d.get("paths", 100_000)), int(d.get("steps", 500)),
                   int(d.get("seed", 0)), bool(d.get("antithetic", False)))


def _mean_se(x, antithetic):
    """Sample mean and its standard error."""
    if antithetic:
        x = _pair_means(x)
    n = x.shape[0]
    mean = float(np.mean(x))
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(x, ddof=1) / math.sqrt(n))


def _pair_means(x):
    # pairs live within chunks: (first half, second half) of each chunk
    out = []
    for start in range(0, x.shape[0], CHUNK):
        c = x[start:start + CHUNK]
        h = c.shape[0] // 2
        out.append(0.5 * (c[:h] + c[h:]))
    return np.concatenate(out)


@dataclass(frozen=True)
class SimReport:
    """Monte Carlo summary; per-path arrays are kept on request."""

    J_hat: float
    J_se: float
    EX_T: float
    EX_T_se: float
    VarX_T: float
    VarX_T_se: float
    crossing_fraction: float
    crossing_se: float
    paths: int
    steps: int
    X_T: np.ndarray = None
    cost: np.ndarray = None
    crossed: np.ndarray = None

    def to_text(self, name="simulate"):
        return "\n".join([
            f"{name} J_hat={self.J_hat:.10g} J_se={self.J_se:.6g}",
            f"{name} EX_T={self.EX_T:.10g} EX_T_se={self.EX_T_se:.6g}",
            f"{name} VarX_T={self.VarX_T:.10g} "
            f"VarX_T_se={self.VarX_T_se:.6g}",
            f"{name} crossing_fraction={self.crossing_fraction:.6g} "
            f"paths={self.paths} steps={self.steps}",
        ]) + "\n"

    def paths_csv(self, path=None):
        """Per-path CSV with columns ``path, X_T, cost, crossed``."""
        if self.X_T is None:
            raise ValidationError("per-path data was not kept")
        from .sre import format_float
        lines = ["path,X_T,cost,crossed"]
        for p in range(self.X_T.shape[0]):
            lines.append(f"{p},{format_float(self.X_T[p])},"
                         f"{format_float(self.cost[p])},{int(self.crossed[p])}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _control_factor(control):
    """Return the scaling applied to the optimal feedback."""
    if control == "optimal":
        return 1.0
    if control == "zero":
        return 0.0
    if (isinstance(control, tuple) and len(control) == 2
            and control[0] == "perturbed"):
        eps = float(control[1])
        if not math.isfinite(eps):
            raise ValidationError("perturbation must be finite")
        return 1.0 + eps
    raise ValidationError(f"unknown control {control!r}")


def _step_tables(coeffs, sol, steps):
    """Per-step coefficient and gain lookups."""
    T = coeffs.T
    dt = T / steps
    rows = []
    for s in range(steps):
        t = s * dt
        k = coeffs.index(t)
        E, F, nu = coeffs.mark_arrays(k)
        v1, v2 = sol.gains(t)
        rows.append((float(coeffs.A[k]), coeffs.B[k], coeffs.C[k],
                     coeffs.D[k], float(coeffs.Q[k]), coeffs.R[k],
                     coeffs.S[k], E, F, nu, v1, v2))
    return rows


def simulate_controlled(coeffs, sol, x0, cfg, control="optimal",
                        keep_paths=False):
    """Simulate the state under a feedback control and estimate the cost.

    Parameters
    ----------
    coeffs : LQCoefficients
    sol : RiccatiSolution
        Supplies the feedback gains ``v1_hat``, ``v2_hat``.
    x0 : float
    cfg : PathConfig
    control : "optimal", "zero" or ("perturbed", eps)
        The perturbed arm uses ``(1 + eps)`` times the optimal control,
        projected back onto the cone.
    keep_paths : bool
        Keep per-path terminal states, costs and crossing flags.

    Returns
    -------
    SimReport

    Raises
    ------
    BlowUpError
        If a state becomes non-finite; carries the path index and step.
    """
    if abs(sol.T - coeffs.T) > 1e-12 * coeffs.T or sol.v1_hat.shape[1] != \
            coeffs.m:
        raise ValidationError("solution does not match the coefficients")
    x0 = float(x0)
    if not math.isfinite(x0):
        raise ValidationError("x0 must be finite")
    scale = _control_factor(control)
    cone = sol.cone
    steps, P = cfg.steps, cfg.paths
    dt = coeffs.T / steps
    sq = math.sqrt(dt)
    rows = _step_tables(coeffs, sol, steps)
    n, J = coeffs.n, len(coeffs.marks)
    G = coeffs.G
    XT = np.empty(P)
    cost = np.empty(P)
    crossed = np.zeros(P, dtype=bool)
    for c, start in enumerate(range(0, P, CHUNK)):
        size = min(CHUNK, P - start)
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([cfg.seed, c])))
        X = np.full(size, x0)
        run = np.zeros(size)
        cr = np.zeros(size, dtype=bool)
        half = size // 2
        for s in range(steps):
            A, B, C, D, Q, R, S, E, F, nu, v1, v2 = rows[s]
            if cfg.antithetic:
                w = rng.standard_normal((half, n))
                dW = np.concatenate([w, -w]) * sq
                k = rng.poisson(nu * dt, size=(half, J))
                N = np.concatenate([k, k])
            else:
                dW = rng.standard_normal((size, n)) * sq
                N = rng.poisson(nu * dt, size=(size, J))
            xp = np.maximum(X, 0.0)
            xm = np.maximum(-X, 0.0)
            u = np.outer(xp, v1) + np.outer(xm, v2)
            if scale != 1.0:
                u *= scale
                if scale < 0.0:
                    u = project_rows(cone, u)
            uF = u @ F.T if J else np.zeros((size, 0))
            jump = E * X[:, None] + uF
            run += (Q * X * X + np.einsum("pi,ij,pj->p", u, R, u)
                    + 2.0 * X * (u @ S)) * dt
            Xn = (X + (A * X + u @ B - jump @ nu) * dt
                  + np.einsum("pi,pi->p", X[:, None] * C + u @ D.T, dW)
                  + np.einsum("pj,pj->p", N, jump))
            cr |= X * Xn < 0.0
            if not np.all(np.isfinite(Xn)):
                bad = int(np.flatnonzero(~np.isfinite(Xn))[0])
                raise BlowUpError(
                    f"non-finite state on path {start + bad} at step {s + 1}",
                    path=start + bad, step=s + 1)
            X = Xn
        XT[start:start + size] = X
        cost[start:start + size] = run + G * X * X
        crossed[start:start + size] = cr
    J_hat, J_se = _mean_se(cost, cfg.antithetic)
    m1, m1_se = _mean_se(XT, cfg.antithetic)
    dev2 = (XT - m1) ** 2
    var = float(np.sum(dev2) / max(P - 1, 1))
    _, var_se = _mean_se(dev2, cfg.antithetic)
    cf, cf_se = _mean_se(crossed.astype(float), cfg.antithetic)
    keep = keep_paths
    return SimReport(J_hat, J_se, m1, m1_se, var, var_se, cf, cf_se, P, steps,
                     XT if keep else None, cost if keep else None,
                     crossed if keep else None)


def euler_bias_constant(r=0.03, mu=0.2, sigma=0.3, T=1.0, G=1.0):
    """Leading weak-error constant of the Euler cost on the no-jump instance.

    Under the optimal feedback ``u = -(mu / sigma^2) x`` the state is
    geometric with drift ``a`` and volatility ``b``; the Euler second moment
    is ``((1 + a dt)^2 + b^2 dt)^N`` exactly, so ``N`` times its distance to
    ``exp((2a + b^2) T)`` converges to the returned constant.
    """
    v = -mu / sigma ** 2
    a = r + mu * v
    b = sigma * v
    rate = 2 * a + b * b
    return abs(G * math.exp(rate * T) * T * (a * a - 0.5 * rate * rate))


# twice the calibrated constant, for margin against other instances
KAPPA = 2.0 * euler_bias_constant()


def bias_budget(steps, kappa=KAPPA):
    """Allowance ``kappa / steps`` for the Euler discretization bias."""
    return kappa / steps


@dataclass(frozen=True)
class ValueCheck:
    passed: bool
    value: float
    J_hat: float
    deviation: float
    allowance: float

    def to_text(self, name="verify-value"):
        status = "PASS" if self.passed else "FAIL"
        return (f"{name} value={self.value:.10g} J_hat={self.J_hat:.10g} "
                f"deviation={self.deviation:.6g} "
                f"allowance={self.allowance:.6g} {status}")


def verify_value(report, sol, x0):
    """Compare the Monte Carlo cost with ``P1(0)(x^+)^2 + P2(0)(x^-)^2``.

    Passes iff the deviation is within ``3 SE + bias_budget(steps)``.
    """
    value = sol.value(float(x0))
    dev = abs(report.J_hat - value)
    allow = 3.0 * report.J_se + bias_budget(report.steps)
    return ValueCheck(bool(dev <= allow), float(value), report.J_hat,
                      float(dev), float(allow))


@dataclass(frozen=True)
class ProbeRow:
    eps: float
    J_hat: float
    difference: float
    difference_se: float
    passed: bool


@dataclass(frozen=True)
class ProbeReport:
    J_opt: float
    J_opt_se: float
    rows: tuple

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    def to_text(self, name="optimality-probe"):
        lines = [f"{name} J_opt={self.J_opt:.10g} J_opt_se={self.J_opt_se:.6g}"]
        for r in self.rows:
            status = "PASS" if r.passed else "FAIL"
            lines.append(f"{name} eps={r.eps:+g} J={r.J_hat:.10g} "
                         f"diff={r.difference:.6g} se={r.difference_se:.6g} "
                         f"{status}")
        return "\n".join(lines) + "\n"


def optimality_probe(coeffs, sol, x0, cfg, perturbations=(-0.5, -0.2, 0.2,
                                                          0.5)):
    """Check that scaled feedbacks do not beat the optimal one.

    Every arm reuses the random numbers of the optimal arm. An arm passes
    when ``J(eps) >= J(opt) - 3 SE`` with the standard error of the per-path
    cost difference.
    """
    base = simulate_controlled(coeffs, sol, x0, cfg, "optimal",
                               keep_paths=True)
    rows = []
    for eps in perturbations:
        rep = simulate_controlled(coeffs, sol, x0, cfg, ("perturbed", eps),
                                  keep_paths=True)
        d, d_se = _mean_se(rep.cost - base.cost, cfg.antithetic)
        rows.append(ProbeRow(float(eps), rep.J_hat, d, d_se,
                             bool(d >= -3.0 * d_se)))
    return ProbeReport(base.J_hat, base.J_se, tuple(rows))
