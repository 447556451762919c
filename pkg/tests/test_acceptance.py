"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines, or
directly with ``python tests/test_acceptance.py``.
"""

import math
import time
import warnings

import numpy as np
import pytest

from jumplq.bsdej import (check_elementary_inequality, random_certified_pair,
                          check_comparison, run_comparison_harness)
from jumplq.conekit import (Cone, HInput, eval_H1, eval_H2,
                            exact_minimize_1d, minimize, project,
                            project_rows)
from jumplq.meanvariance import (MarketModel, efficient_frontier,
                                 simulate_mv, solve_mv)
from jumplq.simulate import (PathConfig, optimality_probe,
                             simulate_controlled, verify_value)
from jumplq.sre import (LQCoefficients, solve_sre, solve_truncated,
                        verify_bounds)

R_, MU, SIG = 0.03, 0.2, 0.3


def report(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    return passed


def jump_instance():
    return LQCoefficients.create(1.0, A=0.1, B=0.5, C=0.2, D=0.4, Q=1.0,
                                 R=0.5, S=0.1, G=1.0,
                                 marks=[(-0.3, 0.5, 1.0)])


def crossing_instance(with_jump=True):
    marks = [(-1.5, 0.2, 0.5)] if with_jump else []
    return LQCoefficients.create(1.0, A=0.05, B=0.3, C=0.1, D=0.4, Q=0.5,
                                 R=0.2, G=1.0, marks=marks)


def quiet_solve(*args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve_sre(*args, **kw)


def random_hinput(rng, m, n):
    J = int(rng.integers(0, 4))
    P1, P2 = rng.uniform(0, 5, 2)
    A = rng.normal(size=(m, m))
    return HInput.create(
        P1, P2, R=A @ A.T * rng.uniform(0, 2), D=rng.normal(size=(n, m)),
        B=rng.normal(size=m), C=rng.normal(size=n), S=rng.normal(size=m),
        marks=[(rng.normal(), rng.normal(size=m), rng.uniform(0.1, 3))
               for _ in range(J)],
        Lambda=rng.normal(size=n), Gamma1=rng.uniform(-P1, 2, J),
        Gamma2=rng.uniform(-P2, 2, J))


# --- criteria ----------------------------------------------------------------

def criterion_1():
    c = LQCoefficients.create(1.0, A=R_, B=MU, D=SIG, G=1.0)
    solve_sre(c, Cone.full(1), steps=10)  # load compiled kernels
    start = time.perf_counter()
    sol = solve_sre(c, Cone.full(1), steps=2000)
    elapsed = time.perf_counter() - start
    exact = math.exp(2 * R_ - (MU / SIG) ** 2)
    rel = abs(sol.P2[0] - exact) / exact
    return report(1, rel <= 1e-6 and elapsed < 1.0,
                  f"closed-form Riccati rel_err={rel:.3e} "
                  f"runtime={elapsed:.3f}s")


def criterion_2():
    c = jump_instance()
    worst, gap = -np.inf, 0.0
    for cone in (Cone.nonneg(1), Cone.full(1), Cone.ray([-1.0])):
        sols = [solve_truncated(c, cone, steps=1000, k=k)
                for k in (1, 2, 4, 8, 16)]
        for a, b in zip(sols, sols[1:]):
            worst = max(worst, float(np.max(b.P1 - a.P1)),
                        float(np.max(b.P2 - a.P2)))
        # no rate is claimed; the gap at the largest k is only reported
        full = solve_sre(c, cone, steps=1000)
        gap = max(gap, float(np.max(sols[-1].P1 - full.P1)),
                  float(np.max(sols[-1].P2 - full.P2)))
    return report(2, worst <= 1e-9,
                  f"truncation monotone in k max_increase={worst:.3e} "
                  f"gap_at_k16={gap:.3e}")


def criterion_3():
    instances = [
        (jump_instance(), Cone.nonneg(1)),
        (jump_instance(), Cone.full(1)),
        (crossing_instance(), Cone.full(1)),
        (LQCoefficients.create(1.0, A=R_, B=MU, D=SIG, G=1.0), Cone.full(1)),
        (MarketModel.create(1.0, r=0.03, mu=0.3, sigma=0.1,
                            marks=[(1.0, 0.1)]).lq(), Cone.nonneg(1)),
        (LQCoefficients.create(
            2.0, 2, 2, A=-0.2, B=[0.3, -0.1], C=[0.1, 0.2],
            D=[[0.4, 0.0], [0.1, 0.3]], Q=0.5, R=0.3, G=2.0,
            marks=[(0.4, [0.2, -0.1], 0.7), (-0.5, [0.0, 0.3], 1.5)]),
         Cone.coordinate(["nonneg", "free"])),
    ]
    worst, lower, count = 0.0, 0.0, 0
    for c, cone in instances:
        rep = verify_bounds(quiet_solve(c, cone, steps=1000), c)
        worst = max(worst, rep.max_violation)
        if rep.lower_violation is not None:
            lower = max(lower, rep.lower_violation)
        count += 1
    ok = worst <= 1e-7 and lower <= 1e-7
    return report(3, ok, f"a-priori bounds instances={count} "
                         f"max_violation={max(worst, lower):.3e}")


def criterion_4():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10 ** 4):
        inp = random_hinput(rng, 2, 2)
        v = rng.normal(size=2) * rng.choice([0.1, 1.0, 10.0])
        lhs = eval_H2(inp, v)
        rhs = eval_H1(inp.swapped(), -v)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    sym = 0.0
    for c, cone in ((jump_instance(), Cone.full(1)),
                    (crossing_instance(), Cone.full(1))):
        sol = quiet_solve(c, cone, steps=1000)
        sym = max(sym, float(np.max(np.abs(sol.P1 - sol.P2))))
    return report(4, worst <= 1e-12 and sym <= 1e-8,
                  f"reflection max_err={worst:.3e} symmetric-cone "
                  f"max|P1-P2|={sym:.3e}")


def criterion_5():
    rng = np.random.default_rng(5)
    worst = 0.0
    cones = [(Cone.full(1), (-1e4, 1e4)), (Cone.nonneg(1), (0.0, 1e4)),
             (Cone.coordinate(["nonpos"]), (-1e4, 0.0))]
    for i in range(1000):
        inp = random_hinput(rng, 1, 1)
        # coercive, hence convex with a finite minimizer
        inp = HInput.create(inp.P1, inp.P2, R=inp.R + rng.uniform(0.1, 1),
                            D=inp.D, B=inp.B, C=inp.C, S=inp.S,
                            marks=inp.marks, Lambda=inp.Lambda,
                            Gamma1=inp.Gamma1, Gamma2=inp.Gamma2)
        cone, box = cones[i % 3]
        which = "H1" if i % 2 else "H2"
        _, ref = exact_minimize_1d(inp, which, box)
        _, val = minimize(inp, which, cone)
        worst = max(worst, abs(val - ref) / max(1.0, abs(ref)))
    return report(5, worst <= 1e-8,
                  f"minimizer vs breakpoint oracle instances=1000 "
                  f"max_err={worst:.3e}")


def criterion_6():
    rng = np.random.default_rng(0)
    check_comparison(*random_certified_pair(rng, 1, 1, steps=4))  # warm-up
    rep = run_comparison_harness(pairs=500, seed=0)
    ok = rep.violations == 0 and rep.elapsed < 60.0
    return report(6, ok, f"comparison harness pairs={rep.pairs} "
                         f"violations={rep.violations} "
                         f"max_violation={rep.max_violation:.3e} "
                         f"runtime={rep.elapsed:.1f}s")


def criterion_7():
    check_elementary_inequality(samples=100)  # warm-up
    rep = check_elementary_inequality(samples=10 ** 6, seed=0)
    ok = rep.violations == 0 and rep.elapsed < 5.0
    return report(7, ok, f"elementary inequality samples={rep.count} "
                         f"min_slack={rep.min_slack:.3e} "
                         f"runtime={rep.elapsed:.2f}s")


def criterion_8():
    c = jump_instance()
    sol = solve_sre(c, Cone.nonneg(1), steps=2000)
    cfg = PathConfig(paths=10 ** 5, steps=500, seed=0)
    rep = simulate_controlled(c, sol, -1.0, cfg)
    chk = verify_value(rep, sol, -1.0)
    probe = optimality_probe(c, sol, -1.0, cfg, (-0.5, -0.2, 0.2, 0.5))
    diffs = " ".join(f"{r.eps:+g}:{r.difference / r.difference_se:.1f}se"
                     for r in probe.rows)
    return report(8, chk.passed and probe.passed,
                  f"value J_hat={chk.J_hat:.5f} value={chk.value:.5f} "
                  f"dev={chk.deviation:.4f} allow={chk.allowance:.4f}; "
                  f"probe {diffs}")


def criterion_9():
    feasible = [
        MarketModel.create(1.0, r=R_, mu=MU, sigma=SIG),
        MarketModel.create(1.0, r=0.03, mu=0.3, sigma=0.1,
                           marks=[(1.0, 0.1)], cone=Cone.nonneg(1)),
        MarketModel.create(2.0, r=0.01, mu=[0.1, -0.05],
                           sigma=[[0.2, 0.0], [0.05, 0.25]],
                           marks=[([0.3, -0.2], 0.5)],
                           cone=Cone.coordinate(["nonneg", "free"])),
        MarketModel.create(1.0, r=[0.02, 0.05, 0.05], mu=[[0.1], [0.3],
                                                          [0.3]],
                           sigma=[[[0.2]], [[0.3]], [[0.3]]],
                           marks=[(-0.5, 0.4)], cone=Cone.nonneg(1)),
    ]
    strict = max(efficient_frontier(m, 1000, [m.x0 * 1.2 * math.exp(
        m.int_r())]).P20 * math.exp(-2 * m.int_r()) for m in feasible)
    ok_a = strict < 1.0
    zs = np.linspace(math.exp(R_), 1.6, 10)
    fr = efficient_frontier(feasible[0], 2000, zs)
    theta2 = (MU / SIG) ** 2
    rel = max(abs(r.variance - (r.z - math.exp(R_)) ** 2
                  / (math.exp(theta2) - 1)) / max(r.variance, 1e-300)
              for r in fr.rows if r.variance > 0)
    ok_b = rel <= 1e-6
    sol = solve_mv(feasible[1], 1.3, steps=2000)
    mc = simulate_mv(sol, PathConfig(paths=10 ** 5, steps=500, seed=0))
    ok_c = mc.mean_ok and mc.var_ok
    return report(9, ok_a and ok_b and ok_c,
                  f"(a) max P20*disc^2={strict:.4f} "
                  f"(b) frontier rel_err={rel:.3e} "
                  f"(c) mean={mc.mean:.5f}+-{mc.mean_se:.5f} z=1.3 "
                  f"var={mc.var:.5f}+-{mc.var_se:.5f} "
                  f"formula={mc.variance:.5f}")


def criterion_10():
    cfg = PathConfig(paths=10 ** 5, steps=500, seed=0)
    out = []
    for jump in (True, False):
        c = crossing_instance(jump)
        sol = solve_sre(c, Cone.full(1), steps=2000)
        out.append(simulate_controlled(c, sol, 1.0, cfg))
    z = out[0].crossing_fraction / out[0].crossing_se
    ok = z >= 5.0 and out[1].crossing_fraction == 0.0
    return report(10, ok, f"sign crossing fraction="
                          f"{out[0].crossing_fraction:.4f} ({z:.0f} sigma); "
                          f"no-jump fraction={out[1].crossing_fraction}")


def polar_projection(cone, x):
    """Projection onto the dual cone, computed independently per kind."""
    if cone.kind == "full":
        return np.zeros_like(x)
    if cone.kind == "ray":
        g = np.asarray(cone.generator, dtype=float)
        return x - max(x @ g, 0.0) / (g @ g) * g
    flip = {"free": "zero", "zero": "free", "nonneg": "nonpos",
            "nonpos": "nonneg"}
    return project(Cone.coordinate([flip[s] for s in cone.signs]), x)


def ball_grid(cone, radius, h):
    if cone.kind == "ray":
        g = np.asarray(cone.generator) / np.linalg.norm(cone.generator)
        return np.arange(0.0, radius + h / 2, h)[:, None] * g
    ax = np.arange(-radius, radius + h / 2, h)
    pts = np.stack(np.meshgrid(ax, ax), -1).reshape(-1, 2)
    pts = pts[np.all(project_rows(cone, pts) == pts, axis=1)]
    return pts[np.linalg.norm(pts, axis=1) <= radius]


def criterion_11():
    rng = np.random.default_rng(11)
    cones = [Cone.full(3), Cone.nonneg(3),
             Cone.coordinate(["free", "nonpos", "zero"]),
             Cone.ray([1.0, -2.0, 0.5])]
    worst = 0.0
    for cone in cones:
        for _ in range(10 ** 4):
            x = rng.normal(size=3) * rng.choice([0.1, 1.0, 10.0])
            p = project(cone, x)
            q = polar_projection(cone, x)
            worst = max(worst, float(np.max(np.abs(x - p - q))),
                        abs(float(p @ q)))
    h, radius, grid_ok = 0.01, 1.5, True
    for cone in (Cone.nonneg(2), Cone.ray([1.0, 2.0]), Cone.full(2),
                 Cone.coordinate(["free", "nonpos"])):
        feas = ball_grid(cone, radius, h)
        for _ in range(20):
            x = rng.uniform(-3, 3, 2)
            p = project(cone, x, radius=radius)
            d = np.linalg.norm(x - p)
            brute = np.linalg.norm(feas - x, axis=1).min()
            grid_ok &= bool(d <= brute + 1e-12 and brute - d <= h * 2 ** 0.5)
    return report(11, worst <= 1e-12 and grid_ok,
                  f"Moreau residual={worst:.3e} over {len(cones)} cones; "
                  f"ball grid search {'agrees' if grid_ok else 'disagrees'}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
            criterion_11]


@pytest.mark.parametrize("criterion", CRITERIA,
                         ids=[f.__name__ for f in CRITERIA])
def test_acceptance(criterion):
    assert criterion()


if __name__ == "__main__":
    results = [f() for f in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
