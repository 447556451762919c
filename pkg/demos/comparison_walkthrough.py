"""Comparison on the lattice: a certified pair and an uncertified one.

The first pair couples two components through ``tanh`` of the first
component's post-jump mean and lowers the source of the dominated
generator; every node keeps ``Y <= Y_bar``. The second pair has own-jump
coefficient -3, below the admissible bound, and the order breaks.
"""

import math

from jumplq.bsdej import (Certificate, CrossTerm, Generator, LatticeBSDEJ,
                          Monotone, Terminal, TerminalTerm, check_comparison)


def coupled(steps=60):
    nu = (1.0, 0.5)
    gen = Generator.create(
        2, nu, y_coef=[[0.1, 0.2], [0.0, -0.3]], z_coef=[0.5, -0.2],
        jump_coef=[[-1.0, 0.5], [0.3, -1.0]], source=[0.1, -0.2],
        cross=[CrossTerm(0, 1, 1.0, Monotone("tanh", 1.0))])
    term = Terminal(2, math.sqrt(1.0 / steps), (
        TerminalTerm(0, "tanh_level", 1.0), TerminalTerm(1, "count", 0.5, 1)))
    low = LatticeBSDEJ(2, steps, 1.0, nu, gen.shifted([-0.3, 0.0]), term)
    high = LatticeBSDEJ(2, steps, 1.0, nu, gen, term)
    return low, high


def adversarial(steps=60):
    nu = (1.0,)
    gen = Generator.create(1, nu, jump_coef=[[-3.0]])
    term = Terminal(1, 1.0, ())
    low = LatticeBSDEJ(1, steps, 1.0, nu, gen, term)
    high = LatticeBSDEJ(1, steps, 1.0, nu, gen,
                        term.plus([TerminalTerm(0, "any_jump", 1.0)]))
    return low, high


def main():
    rep = check_comparison(*coupled())
    print(rep.to_text("coupled"), f"nodes={rep.nodes}")
    rep = check_comparison(*adversarial(), Certificate(gamma_lower=-3.0))
    print(rep.to_text("gamma=-3"), f"worst node={rep.worst}")
    for reason in rep.reasons:
        print("  uncertified:", reason)


if __name__ == "__main__":
    main()
