"""Optimal states that change sign: a jump instance against its no-jump twin.

With ``1 + E + F v < 0`` a single jump carries the state across zero, so
the feedback switches between its two gains along a path. Without jumps the
controlled state is a stochastic exponential and keeps its sign.
"""

from jumplq import Cone, LQCoefficients, PathConfig, simulate_controlled
from jumplq import solve_sre


def instance(with_jump):
    marks = [(-1.5, 0.2, 0.5)] if with_jump else []
    return LQCoefficients.create(1.0, A=0.05, B=0.3, C=0.1, D=0.4, Q=0.5,
                                 R=0.2, G=1.0, marks=marks)


def main():
    cfg = PathConfig(paths=100_000, steps=500, seed=0)
    for with_jump in (True, False):
        c = instance(with_jump)
        sol = solve_sre(c, Cone.full(1), steps=2000)
        rep = simulate_controlled(c, sol, 1.0, cfg)
        label = "jump" if with_jump else "no jump"
        print(f"{label:>8}: P1(0)={sol.P1[0]:.6f} P2(0)={sol.P2[0]:.6f} "
              f"crossing_fraction={rep.crossing_fraction:.4f} "
              f"se={rep.crossing_se:.4f}")


if __name__ == "__main__":
    main()
