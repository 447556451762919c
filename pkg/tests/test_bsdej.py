import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumplq.bsdej import (Certificate, CrossTerm, Generator, LatticeBSDEJ,
                          Monotone, Terminal, TerminalTerm, check_comparison,
                          check_elementary_inequality, inequality_slack,
                          iter_slices, lattice_size, random_certified_pair,
                          slice_residual, solve_lattice)
from jumplq.errors import (CapacityError, CertificateError, StepSizeError,
                           ValidationError)


def const_terminal(dim, value):
    return Terminal(dim, 1.0, tuple(TerminalTerm(i, "const", value)
                                    for i in range(dim)))


def linear_spec(steps):
    gen = Generator.create(1, [], y_coef=[[1.0]])
    return LatticeBSDEJ(1, steps, 1.0, (), gen, const_terminal(1, 1.0))


def tilted_spec(steps, nu=0.8, gamma=0.5, cap=2.0):
    gen = Generator.create(1, [nu], jump_coef=[[gamma]])
    term = Terminal(1, 1.0, (TerminalTerm(0, "capped_count", 1.0, 0, cap),))
    return LatticeBSDEJ(1, steps, 1.0, (nu,), gen, term)


def coupled_pair(steps=40, delta=0.3):
    nu = (1.0, 0.5)
    cross = [CrossTerm(0, 1, 1.0, Monotone("tanh", 1.0))]
    gen = Generator.create(2, nu, y_coef=[[0.1, 0.2], [0.0, -0.3]],
                           z_coef=[0.5, -0.2], jump_coef=[[-1.0, 0.5],
                                                         [0.3, -1.0]],
                           cross=cross, source=[0.1, -0.2])
    dt = 1.0 / steps
    term = Terminal(2, math.sqrt(dt), (
        TerminalTerm(0, "tanh_level", 1.0), TerminalTerm(1, "count", 0.5, 1),
        TerminalTerm(1, "level", -0.2)))
    a = LatticeBSDEJ(2, steps, 1.0, nu, gen.shifted([-delta, 0.0]), term)
    b = LatticeBSDEJ(2, steps, 1.0, nu, gen, term)
    return a, b


# --- oracle examples ---------------------------------------------------------

def test_zero_generator_constant_terminal():
    gen = Generator.create(2, [0.7])
    spec = LatticeBSDEJ(2, 30, 1.0, (0.7,), gen, const_terminal(2, 2.5))
    sol = solve_lattice(spec)
    for i in range(31):
        assert np.all(sol.Y[i] == 2.5)
        assert np.all(sol.Z[i] == 0.0) and np.all(sol.Phi[i] == 0.0)


def test_zero_generator_is_martingale():
    gen = Generator.create(1, [0.5])
    spec = LatticeBSDEJ(1, 50, 1.0, (0.5,), gen, Terminal(1, 0.1, (
        TerminalTerm(0, "level", 1.0), TerminalTerm(0, "count", 2.0))))
    sol = solve_lattice(spec)
    # E[W_T] = 0 and E[N_T] = nu T
    assert sol.Y0[0] == pytest.approx(2.0 * 0.5, abs=1e-12)


def test_linear_generator_oracle():
    sol = solve_lattice(linear_spec(1000))
    assert abs(sol.Y0[0] - math.e) <= 2e-3
    assert sol.Y0[0] == pytest.approx((1 - 1e-3) ** -1000, rel=1e-12)
    exp = solve_lattice(linear_spec(1000), scheme="explicit")
    assert exp.Y0[0] == pytest.approx((1 + 1e-3) ** 1000, rel=1e-12)
    assert sol.max_residual <= 1e-12


def test_tilted_intensity_oracle():
    nu, gamma = 0.8, 0.5
    lam = nu * (1 + gamma)
    exact = 2.0 - (2.0 + lam) * math.exp(-lam)
    sol = solve_lattice(tilted_spec(600, nu, gamma))
    assert abs(sol.Y0[0] - exact) <= 5e-3


def test_tilted_intensity_full_size_exceeds_capacity():
    with pytest.raises(CapacityError):
        solve_lattice(tilted_spec(1000))


def test_identical_generators_pass():
    a, _ = coupled_pair(delta=0.0)
    rep = check_comparison(a, a)
    assert rep.status == "PASS" and rep.max_violation <= 1e-12


def test_coupled_example_passes():
    a, b = coupled_pair()
    rep = check_comparison(a, b)
    assert rep.status == "PASS" and rep.certified
    assert rep.max_violation <= 0
    assert rep.to_text("x").endswith("PASS")


def test_adversarial_gamma_never_certified():
    statuses = set()
    for p in range(12):
        rng = np.random.default_rng([7, p])
        a, b = random_certified_pair(rng, 1 + p % 2, 1, steps=40,
                                     gamma_low=-3.0)
        rep = check_comparison(a, b, Certificate(gamma_lower=-3.0))
        assert not rep.certified
        assert "declared gamma bound below -1" in rep.reasons
        statuses.add(rep.status)
    assert "PASS" not in statuses


def test_adversarial_gamma_can_fail():
    # a strongly negative own-jump coefficient reverses the order
    nu = (1.0,)
    gen = Generator.create(1, nu, jump_coef=[[-3.0]])
    term_a = Terminal(1, 1.0, ())
    term_b = term_a.plus([TerminalTerm(0, "any_jump", 1.0)])
    a = LatticeBSDEJ(1, 40, 1.0, nu, gen, term_a)
    b = LatticeBSDEJ(1, 40, 1.0, nu, gen, term_b)
    rep = check_comparison(a, b, Certificate(gamma_lower=-3.0))
    assert rep.status == "FAIL" and rep.max_violation > 0


def test_certificate_contradictions():
    a, b = coupled_pair()
    with pytest.raises(CertificateError):
        check_comparison(a, b, Certificate(gamma_lower=-0.5))
    with pytest.raises(CertificateError):
        check_comparison(b, a)
    neg = Generator.create(2, a.nu, cross=[(0, 1, -0.5)])
    c = LatticeBSDEJ(2, a.steps, 1.0, a.nu, neg, a.terminal)
    with pytest.raises(CertificateError):
        check_comparison(c, c)
    rep = check_comparison(c, c, Certificate(monotone_coupling=False))
    assert rep.status == "UNCERTIFIED"
    higher = LatticeBSDEJ(2, a.steps, 1.0, a.nu, a.generator,
                          a.terminal.plus([TerminalTerm(0, "const", 0.1)]))
    with pytest.raises(CertificateError, match="terminal"):
        check_comparison(higher, a)


def test_comparison_requires_matching_lattices():
    a, b = coupled_pair()
    c, _ = coupled_pair(steps=41)
    with pytest.raises(ValidationError):
        check_comparison(a, c)


def test_elementary_inequality_examples():
    assert inequality_slack(-1, 5, 0) == 16
    assert inequality_slack(1, 1, -1) == 4
    assert inequality_slack(1, 1, 2) == 1
    rep = check_elementary_inequality(samples=20000, seed=3)
    assert rep.passed and rep.min_slack >= 0


@settings(max_examples=200, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-1, 10))
def test_elementary_inequality_property(x, y, c):
    scale = max(1.0, x * x, y * y) * max(1.0, c * c)
    assert inequality_slack(x, y, c) >= -1e-12 * scale


# --- scheme identities -------------------------------------------------------

def test_scheme_identities_on_slices():
    a, _ = coupled_pair(steps=20)
    sol = solve_lattice(a)
    dt = a.dt
    i = 7
    Yn = sol.Y[i + 1]
    # level index 3 at step 7 has children 4 (up) and 3 (down) at step 8
    z = sol.Z[i][3, 0]
    assert np.allclose(z * 2 * math.sqrt(dt), Yn[4, 0] - Yn[3, 0],
                       atol=1e-12)
    for k in range(a.marks):
        c = tuple(int(v) for v in np.eye(a.marks, dtype=int)[k])
        y, _, phi = sol.node(i, -1, (0, 0))
        up = sol.node(i + 1, 0, c)[0]
        dn = sol.node(i + 1, -2, c)[0]
        assert np.allclose(y + phi[:, k], 0.5 * (up + dn), atol=1e-12)
    assert sol.max_residual <= 1e-12


def test_node_validation():
    a, _ = coupled_pair(steps=20)
    sol = solve_lattice(a)
    with pytest.raises(ValidationError):
        sol.node(3, 0, (0, 0))
    with pytest.raises(ValidationError):
        sol.node(3, 1, (2, 2))


def test_explicit_and_implicit_close():
    gaps = []
    for n in (200, 400):
        imp = solve_lattice(tilted_spec(n)).Y0[0]
        exp = solve_lattice(tilted_spec(n), scheme="explicit")
        assert exp.max_residual <= 1e-12
        gaps.append(abs(imp - exp.Y0[0]))
    # both schemes are first order, so the gap halves with the step
    assert gaps[0] <= 0.01
    assert gaps[1] == pytest.approx(gaps[0] / 2, rel=0.1)


def test_callable_generator_matches_builder():
    a, _ = coupled_pair(steps=25)
    gen = a.generator
    c = LatticeBSDEJ(2, 25, 1.0, a.nu, lambda t, y, z, p: gen(t, y, z, p),
                     a.terminal, lipschitz=gen.lipschitz)
    for scheme in ("implicit", "explicit"):
        s1 = solve_lattice(a, scheme)
        s2 = solve_lattice(c, scheme)
        for i in range(26):
            assert np.max(np.abs(s1.Y[i] - s2.Y[i])) <= 1e-10


def test_callable_generator_without_marks():
    spec = LatticeBSDEJ(1, 100, 1.0, (), lambda t, y, z, p: y,
                        const_terminal(1, 1.0), lipschitz=1.0)
    assert solve_lattice(spec).Y0[0] == pytest.approx(0.99 ** -100)


def test_step_size_and_declaration_errors():
    gen = Generator.create(1, [], y_coef=[[5.0]])
    with pytest.raises(StepSizeError):
        solve_lattice(LatticeBSDEJ(1, 4, 1.0, (), gen, const_terminal(1, 1)))
    with pytest.raises(ValidationError):
        LatticeBSDEJ(1, 4, 1.0, (), lambda *a: 0, const_terminal(1, 1))
    with pytest.raises(ValidationError):
        LatticeBSDEJ(1, 4, 1.0, (0.5,), gen, const_terminal(1, 1))
    with pytest.raises(ValidationError):
        Generator.create(2, [1.0], cross=[(0, 0, 1.0)])
    with pytest.raises(ValidationError):
        Monotone("ramp", -1.0, 1.0)


def test_lattice_size():
    assert lattice_size(2, 1) == 1 + 2 * 2 + 3 * 3
    assert lattice_size(3, 0) == 10


def test_round_trip():
    a, _ = coupled_pair()
    d = a.to_dict()
    b = LatticeBSDEJ.from_dict(d)
    assert b.to_dict() == d
    assert np.array_equal(solve_lattice(a).Y0, solve_lattice(b).Y0)
    with pytest.raises(ValidationError):
        LatticeBSDEJ.from_dict({"dim": 1})


def test_iter_slices_matches_solution():
    a, _ = coupled_pair(steps=10)
    sol = solve_lattice(a)
    for i, Y, Z, P, _ in iter_slices(a):
        assert np.array_equal(Y, sol.Y[i])
        if i < 10:
            assert slice_residual(a, i, Y, Z, P, sol.Y[i + 1]) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 3), st.integers(1, 2))
def test_random_certified_pairs_pass(seed, dim, marks):
    a, b = random_certified_pair(np.random.default_rng(seed), dim, marks,
                                 steps=20)
    rep = check_comparison(a, b)
    assert rep.status == "PASS"
    assert rep.max_violation <= 1e-10
