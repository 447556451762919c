"""Lattice solver for multidimensional BSDEs with jumps, and comparison checks.

The lattice has one Brownian direction and ``J`` jump marks. Over one step
of length ``dt`` the Brownian coordinate moves up or down with probability
1/2 each, independently of the jump indicator, which is "no jump" with
probability ``1 - dt * sum(nu)`` and "jump of mark k" with probability
``dt * nu_k``. A node at step ``i`` is identified by its Brownian level
``d`` in ``{-i, -i+2, ..., i}`` and its jump counts ``c`` with
``sum(c) <= i``.

Backward induction uses, for the next-slice values ``Y'``::

    E_0   = average of Y' over the two no-jump children
    E_k   = average of Y' over the two children after a jump of mark k
    Z     = (Y'(up, no jump) - Y'(down, no jump)) / (2 sqrt(dt))
    Y     = E[Y'] + dt f(t, Y, Z, Phi),   Phi_k = E_k - Y

so that ``Y + Phi_k`` is the conditional mean after a jump of mark ``k``.
With this choice the discrete scheme is order preserving whenever the
generator satisfies the structural conditions checked by
:class:`Certificate`, mirroring the continuous-time comparison theorem.
"""

import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import (CapacityError, CertificateError, ConvergenceError,
                     NumericError, StepSizeError, ValidationError)

__all__ = [
    "Monotone", "CrossTerm", "Generator", "TerminalTerm", "Terminal",
    "LatticeBSDEJ", "LatticeSolution", "solve_lattice", "iter_slices",
    "Certificate", "ComparisonReport", "check_comparison",
    "random_certified_pair", "run_comparison_harness", "InequalityReport",
    "check_elementary_inequality", "lattice_size", "slice_residual",
]

PICARD_TOL = 1e-12
PICARD_MAX_ITER = 50
CAPACITY = 10 ** 8

_MONOTONE_CODES = {"identity": 0, "ramp": 1, "tanh": 2, "clip": 3}


@dataclass(frozen=True)
class Monotone:
    """Nondecreasing Lipschitz map from a small library.

    ``identity``: ``x``; ``ramp``: slope ``p0`` for ``x < 0`` and ``p1`` for
    ``x >= 0`` (both nonnegative); ``tanh``: ``tanh(p0 x) / p0``;
    ``clip``: ``x`` clipped to ``[p0, p1]``.
    """

    kind: str = "identity"
    p0: float = 0.0
    p1: float = 0.0

    def __post_init__(self):
        if self.kind not in _MONOTONE_CODES:
            raise ValidationError(f"unknown monotone map {self.kind!r}")
        if self.kind == "ramp" and (self.p0 < 0 or self.p1 < 0):
            raise ValidationError("ramp slopes must be nonnegative")
        if self.kind == "tanh" and not self.p0 > 0:
            raise ValidationError("tanh scale must be positive")
        if self.kind == "clip" and not self.p0 <= self.p1:
            raise ValidationError("clip needs p0 <= p1")

    @property
    def lipschitz(self):
        if self.kind == "ramp":
            return max(self.p0, self.p1)
        return 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if self.kind == "ramp":
            return np.where(x < 0, self.p0 * x, self.p1 * x)
        if self.kind == "tanh":
            return np.tanh(self.p0 * x) / self.p0
        return np.clip(x, self.p0, self.p1)


@dataclass(frozen=True)
class CrossTerm:
    """Coupling ``weight * h(sum_k nu_k (y_source + phi_source,k))`` in f_target."""

    target: int
    source: int
    weight: float
    h: Monotone = field(default_factory=Monotone)


def _mat(x, shape, name):
    a = np.array(x if x is not None else np.zeros(shape), dtype=float)
    if a.ndim == 0:
        a = np.full(shape, float(a))
    if a.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} must be finite")
    return a


@dataclass(frozen=True, eq=False)
class Generator:
    """Generator assembled from the builder algebra.

    ``f_i(t, y, z, phi) = sum_j y_coef[i, j] y_j + z_coef[i] z_i
    + sum_k jump_coef[i, k] nu_k phi[i, k] + cross terms
    + source[i] + source_slope[i] t``.
    """

    nu: np.ndarray
    y_coef: np.ndarray
    z_coef: np.ndarray
    jump_coef: np.ndarray
    cross: tuple = ()
    source: np.ndarray = None
    source_slope: np.ndarray = None

    @classmethod
    def create(cls, dim, nu, *, y_coef=None, z_coef=None, jump_coef=None,
               cross=(), source=None, source_slope=None):
        ell = int(dim)
        if ell < 1:
            raise ValidationError("dimension must be positive")
        nu = np.array(nu, dtype=float).reshape(-1)
        if np.any(nu <= 0) or not np.all(np.isfinite(nu)):
            raise ValidationError("intensities must be positive and finite")
        J = nu.shape[0]
        terms = []
        for ct in cross:
            if not isinstance(ct, CrossTerm):
                tgt, src, w = ct[:3]
                h = ct[3] if len(ct) > 3 else Monotone()
                ct = CrossTerm(int(tgt), int(src), float(w), h)
            if not (0 <= ct.target < ell and 0 <= ct.source < ell):
                raise ValidationError("cross term index out of range")
            if ct.target == ct.source:
                raise ValidationError("cross terms must couple distinct "
                                      "components")
            terms.append(ct)
        return cls(nu, _mat(y_coef, (ell, ell), "y_coef"),
                   _mat(z_coef, (ell,), "z_coef"),
                   _mat(jump_coef, (ell, J), "jump_coef"), tuple(terms),
                   _mat(source, (ell,), "source"),
                   _mat(source_slope, (ell,), "source_slope"))

    @property
    def dim(self):
        return self.z_coef.shape[0]

    @property
    def marks(self):
        return self.nu.shape[0]

    @property
    def lipschitz(self):
        """Upper bound on the Lipschitz constant in ``(y, z, phi)``."""
        ell = self.dim
        tot = (np.abs(self.y_coef).sum(axis=1) + np.abs(self.z_coef)
               + np.abs(self.jump_coef) @ self.nu)
        for ct in self.cross:
            tot[ct.target] += 2 * abs(ct.weight) * ct.h.lipschitz * self.nu.sum()
        return float(tot.max()) if ell else 0.0

    def scheme_jacobian(self):
        """Derivative of ``Y -> f(t, Y, Z, E - Y)`` (constant)."""
        return self.y_coef - np.diag(self.jump_coef @ self.nu)

    def packed(self, minus=None):
        """Array form for the compiled kernel.

        With ``minus`` given, packs the difference ``self - minus``; cross
        terms of ``minus`` enter with negated weights.
        """
        cross = list(self.cross)
        y, z, g = self.y_coef, self.z_coef, self.jump_coef
        s0, s1 = self.source, self.source_slope
        if minus is not None:
            cross += [CrossTerm(c.target, c.source, -c.weight, c.h)
                      for c in minus.cross]
            y, z, g = y - minus.y_coef, z - minus.z_coef, g - minus.jump_coef
            s0, s1 = s0 - minus.source, s1 - minus.source_slope
        K = len(cross)
        idx = np.array([[c.target, c.source] for c in cross],
                       dtype=np.int64).reshape(K, 2)
        kind = np.array([_MONOTONE_CODES[c.h.kind] for c in cross],
                        dtype=np.int64)
        par = np.array([[c.weight, c.h.p0, c.h.p1] for c in cross],
                       dtype=float).reshape(K, 3)
        return (np.ascontiguousarray(y), np.array(z), np.ascontiguousarray(g),
                idx, kind, par, np.array(s0), np.array(s1))

    def __call__(self, t, y, z, phi):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = (self.source + self.source_slope * t + y @ self.y_coef.T
               + self.z_coef * z + np.einsum("ik,k,...ik->...i",
                                             self.jump_coef, self.nu, phi))
        for ct in self.cross:
            arg = (self.nu * (y[..., ct.source, None]
                              + phi[..., ct.source, :])).sum(axis=-1)
            out[..., ct.target] += ct.weight * ct.h(arg)
        return out

    def shifted(self, delta):
        """Same generator plus the constant vector ``delta``."""
        return Generator(self.nu, self.y_coef, self.z_coef, self.jump_coef,
                         self.cross, self.source + np.asarray(delta, float),
                         self.source_slope)

    def to_dict(self):
        return {
            "nu": self.nu.tolist(), "y_coef": self.y_coef.tolist(),
            "z_coef": self.z_coef.tolist(),
            "jump_coef": self.jump_coef.tolist(),
            "cross": [{"target": c.target, "source": c.source,
                       "weight": c.weight, "h": {"kind": c.h.kind,
                                                 "p0": c.h.p0, "p1": c.h.p1}}
                      for c in self.cross],
            "source": self.source.tolist(),
            "source_slope": self.source_slope.tolist(),
        }

    @classmethod
    def from_dict(cls, d, dim):
        cross = [CrossTerm(int(c["target"]), int(c["source"]),
                           float(c["weight"]), Monotone(**c.get("h", {})))
                 for c in d.get("cross", [])]
        return cls.create(dim, d["nu"], y_coef=d.get("y_coef"),
                          z_coef=d.get("z_coef"),
                          jump_coef=d.get("jump_coef"), cross=cross,
                          source=d.get("source"),
                          source_slope=d.get("source_slope"))


_TERMINAL_KINDS = ("const", "level", "tanh_level", "relu_level", "count",
                   "capped_count", "level_count", "any_jump")


@dataclass(frozen=True)
class TerminalTerm:
    """``coef * basis(x, c)`` added to component ``comp``.

    ``x = level * scale`` is the scaled Brownian position. Bases:
    ``const`` 1; ``level`` x; ``tanh_level`` tanh(x); ``relu_level``
    max(x - param, 0); ``count`` c_k; ``capped_count`` min(c_k, param);
    ``level_count`` x c_k; ``any_jump`` 1 if c_k >= 1.
    """

    comp: int
    kind: str
    coef: float
    mark: int = 0
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in _TERMINAL_KINDS:
            raise ValidationError(f"unknown terminal term {self.kind!r}")


@dataclass(frozen=True)
class Terminal:
    """Terminal map ``g(level, counts)`` built from :class:`TerminalTerm`.

    Accepts broadcastable ``level`` of shape ``S`` and ``counts`` of shape
    ``S + (J,)`` and returns shape ``S + (dim,)``.
    """

    dim: int
    scale: float
    terms: tuple = ()

    def __call__(self, level, counts):
        x = np.asarray(level, dtype=float) * self.scale
        c = np.asarray(counts, dtype=float)
        shape = np.broadcast_shapes(x.shape, c.shape[:-1])
        out = np.zeros(shape + (self.dim,))
        for tm in self.terms:
            ck = c[..., tm.mark] if c.shape[-1] else np.zeros(())
            if tm.kind == "const":
                b = np.ones(())
            elif tm.kind == "level":
                b = x
            elif tm.kind == "tanh_level":
                b = np.tanh(x)
            elif tm.kind == "relu_level":
                b = np.maximum(x - tm.param, 0.0)
            elif tm.kind == "count":
                b = ck
            elif tm.kind == "capped_count":
                b = np.minimum(ck, tm.param)
            elif tm.kind == "level_count":
                b = x * ck
            else:
                b = (ck >= 1).astype(float)
            out[..., tm.comp] += tm.coef * np.broadcast_to(b, shape)
        return out

    def plus(self, extra):
        return Terminal(self.dim, self.scale, self.terms + tuple(extra))

    def to_dict(self):
        return {"dim": self.dim, "scale": self.scale,
                "terms": [vars(t).copy() for t in self.terms]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["dim"]), float(d.get("scale", 1.0)),
                   tuple(TerminalTerm(**t) for t in d.get("terms", [])))


@dataclass(frozen=True, eq=False)
class LatticeBSDEJ:
    """Discrete BSDE instance.

    Parameters
    ----------
    dim : int
        Number of components ``l``.
    steps : int
    T : float
    nu : sequence of float
        Mark intensities.
    generator : Generator or callable
        ``f(t, y, z, phi)`` with batch shapes ``(..., l)``, ``(..., l)``,
        ``(..., l, J)``.
    terminal : Terminal or callable
        ``g(level, counts)`` broadcasting like :class:`Terminal`.
    lipschitz : float, optional
        Declared Lipschitz constant of the generator; taken from the builder
        when omitted.
    """

    dim: int
    steps: int
    T: float
    nu: tuple
    generator: object
    terminal: object
    lipschitz: float = None

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError("steps must be a positive integer")
        if not self.T > 0:
            raise ValidationError("T must be positive")
        nu = np.asarray(self.nu, dtype=float)
        if np.any(nu <= 0) or not np.all(np.isfinite(nu)):
            raise ValidationError("intensities must be positive and finite")
        if self.dt * nu.sum() >= 1:
            raise ValidationError("dt * sum(nu) must be below one")
        if isinstance(self.generator, Generator):
            if self.generator.dim != self.dim:
                raise ValidationError("generator dimension mismatch")
            if not np.array_equal(self.generator.nu, nu):
                raise ValidationError("generator intensities differ from nu")
        elif self.lipschitz is None:
            raise ValidationError("a Lipschitz constant must be declared for "
                                  "non-builder generators")

    @property
    def dt(self):
        return self.T / self.steps

    @property
    def marks(self):
        return len(self.nu)

    @property
    def nu_array(self):
        return np.asarray(self.nu, dtype=float)

    @property
    def lipschitz_bound(self):
        if self.lipschitz is not None:
            return float(self.lipschitz)
        return self.generator.lipschitz

    def to_dict(self):
        if not isinstance(self.generator, Generator) or not isinstance(
                self.terminal, Terminal):
            raise ValidationError("only builder instances serialize")
        return {"dim": self.dim, "steps": self.steps, "T": self.T,
                "nu": list(self.nu), "generator": self.generator.to_dict(),
                "terminal": self.terminal.to_dict(),
                "lipschitz": self.lipschitz}

    @classmethod
    def from_dict(cls, d):
        try:
            dim = int(d["dim"])
            gen = Generator.from_dict({"nu": d["nu"], **d["generator"]}, dim)
            term = Terminal.from_dict({"dim": dim, **d["terminal"]})
            return cls(dim, int(d["steps"]), float(d["T"]),
                       tuple(float(x) for x in d["nu"]), gen, term,
                       d.get("lipschitz"))
        except KeyError as exc:
            raise ValidationError(f"lattice instance missing {exc}") from exc


def lattice_size(steps, marks):
    """Total node count ``sum_i (i+1) C(i+J, J)``."""
    return sum((i + 1) * math.comb(i + marks, marks) for i in range(steps + 1))


@lru_cache(maxsize=16)
def _count_table(steps, marks):
    """Jump-count vectors in graded order and the child index table.

    Counts with total ``<= i`` form a prefix of length ``C(i+J, J)``.
    ``child[k, c]`` is the index of ``counts[c] + e_k``.
    """
    rows = []
    for s in range(steps + 1):
        for comb in itertools.combinations_with_replacement(range(marks), s):
            v = [0] * marks
            for k in comb:
                v[k] += 1
            rows.append(tuple(v))
    # combinations_with_replacement yields distinct multisets; order within
    # a grade is irrelevant as long as it is fixed
    index = {r: n for n, r in enumerate(rows)}
    counts = np.array(rows, dtype=np.int64).reshape(len(rows), marks)
    nprev = math.comb(steps - 1 + marks, marks) if steps >= 1 else 0
    child = np.zeros((marks, nprev), dtype=np.int64)
    for c in range(nprev):
        for k in range(marks):
            r = list(rows[c])
            r[k] += 1
            child[k, c] = index[tuple(r)]
    counts.setflags(write=False)
    child.setflags(write=False)
    return counts, child


def _prefix(i, marks):
    return math.comb(i + marks, marks)


def _terminal_slice(spec, counts):
    N = spec.steps
    nc = _prefix(N, spec.marks)
    level = (2 * np.arange(N + 1) - N)[:, None]
    g = spec.terminal(level, counts[None, :nc, :])
    g = np.asarray(g, dtype=float)
    if g.shape != (N + 1, nc, spec.dim):
        raise ValidationError(f"terminal map returned shape {g.shape}, "
                              f"expected {(N + 1, nc, spec.dim)}")
    if not np.all(np.isfinite(g)):
        raise NumericError("terminal values must be finite")
    return np.ascontiguousarray(g)


def _numpy_slice(spec, Ynext, i, child, implicit):
    """Backward step for a generic callable generator (Picard iteration)."""
    dt = spec.dt
    nu = spec.nu_array
    nc = _prefix(i, spec.marks)
    up, dn = Ynext[1:], Ynext[:-1]
    E0 = 0.5 * (up[:, :nc] + dn[:, :nc])
    Z = (up[:, :nc] - dn[:, :nc]) / (2.0 * math.sqrt(dt))
    Ek = np.zeros(E0.shape + (0,))
    if spec.marks:
        Ek = np.stack([0.5 * (up[:, child[k, :nc]] + dn[:, child[k, :nc]])
                       for k in range(spec.marks)], axis=-1)
    EY = (1.0 - dt * nu.sum()) * E0 + dt * (Ek * nu).sum(axis=-1)
    t = i * dt
    f = spec.generator
    if not implicit:
        Phi = Ek - EY[..., None]
        return EY + dt * f(t, EY, Z, Phi), Z, Phi
    Y = EY
    for _ in range(PICARD_MAX_ITER):
        Yn = EY + dt * np.asarray(f(t, Y, Z, Ek - Y[..., None]))
        if not np.all(np.isfinite(Yn)):
            raise NumericError("generator produced non-finite values")
        diff = np.max(np.abs(Yn - Y), initial=0.0)
        Y = Yn
        if diff <= PICARD_TOL * max(1.0, np.max(np.abs(Y), initial=0.0)):
            break
    else:
        raise ConvergenceError("Picard iteration did not converge")
    return Y, Z, Ek - Y[..., None]


def _check_spec(spec):
    if spec.lipschitz_bound * spec.dt >= 1:
        raise StepSizeError("Lipschitz constant times dt must be below one")
    if lattice_size(spec.steps, spec.marks) > CAPACITY:
        raise CapacityError(
            f"lattice with {spec.steps} steps and {spec.marks} marks exceeds "
            f"{CAPACITY} nodes")


def _implicit_inverse(spec):
    ell = spec.dim
    return np.ascontiguousarray(np.linalg.inv(
        np.eye(ell) - spec.dt * spec.generator.scheme_jacobian()))


def iter_slices(spec, scheme="implicit", other=None, full=True):
    """Yield ``(i, Y, Z, Phi, excess)`` from ``i = N`` down to 0.

    ``Y`` has shape ``(i+1, C_i, l)`` indexed by level ``(d + i) / 2`` and
    count index. Only two slices are alive at any time. When ``other`` is a
    builder generator, ``excess`` is the largest component of
    ``other - f`` over the slice, evaluated at this lattice's solution.
    With ``full=False`` the builder path yields ``None`` for ``Z`` and
    ``Phi``, which saves memory traffic when only ``Y`` is needed.
    """
    if scheme not in ("implicit", "explicit"):
        raise ValidationError(f"unknown scheme {scheme!r}")
    _check_spec(spec)
    implicit = scheme == "implicit"
    N, J, ell = spec.steps, spec.marks, spec.dim
    counts, child = _count_table(N, J)
    Y = _terminal_slice(spec, counts)
    yield N, Y, np.zeros_like(Y), np.zeros(Y.shape + (J,)), -np.inf
    builder = isinstance(spec.generator, Generator)
    if other is not None and not builder:
        raise ValidationError("dominance checks need builder generators")
    nu = spec.nu_array
    if builder:
        # the kernel works on (level, component, count) slices
        gen = spec.generator.packed()
        diff = other.packed(minus=spec.generator) if other is not None else gen
        Minv = _implicit_inverse(spec)
        dummy_z = np.empty((0, 0, 0))
        dummy_phi = np.empty((0, 0, 0, 0))
        Y = np.ascontiguousarray(Y.transpose(0, 2, 1))
    for i in range(N - 1, -1, -1):
        nc = _prefix(i, J)
        if builder:
            Yi = np.empty((i + 1, ell, nc))
            if full:
                Zi = np.empty((i + 1, ell, nc))
                Pi = np.empty((i + 1, ell, J, nc))
            else:
                Zi, Pi = dummy_z, dummy_phi
            exc = _kernels.lattice_slice(Y, i, child, spec.dt, nu, gen, Minv,
                                         implicit, Yi, Zi, Pi, diff,
                                         other is not None, full)
            if not np.all(np.isfinite(Yi)):
                raise NumericError("non-finite lattice values")
            Y = Yi
            Yi = Yi.transpose(0, 2, 1)
            if full:
                Zi, Pi = Zi.transpose(0, 2, 1), Pi.transpose(0, 3, 1, 2)
            else:
                Zi = Pi = None
        else:
            Yi, Zi, Pi = _numpy_slice(spec, Y, i, child, implicit)
            exc = -np.inf
            Y = Yi
        yield i, Yi, Zi, Pi, exc


def slice_residual(spec, i, Y, Z, Phi, Ynext, scheme="implicit"):
    """Largest residual of ``Y = E[Y'] + dt f(t, y, Z, Phi)`` on slice ``i``.

    ``y`` is ``Y`` for the implicit scheme and ``E[Y']`` for the explicit
    one. Computed with plain array code, independently of the kernel.
    """
    J = spec.marks
    _, child = _count_table(spec.steps, J)
    nc = _prefix(i, J)
    nu = spec.nu_array
    dt = spec.dt
    up, dn = Ynext[1:], Ynext[:-1]
    E0 = 0.5 * (up[:, :nc] + dn[:, :nc])
    Ek = [0.5 * (up[:, child[k, :nc]] + dn[:, child[k, :nc]])
          for k in range(J)]
    EY = (1.0 - dt * nu.sum()) * E0 + dt * sum(n * e for n, e in zip(nu, Ek))
    y = Y if scheme == "implicit" else EY
    f = np.asarray(spec.generator(i * dt, y, Z, Phi))
    return float(np.max(np.abs(Y - EY - dt * f), initial=0.0))


@dataclass(frozen=True, eq=False)
class LatticeSolution:
    """All slices of a solved lattice.

    ``Y[i]``, ``Z[i]`` have shape ``(i+1, C_i, l)`` and ``Phi[i]`` shape
    ``(i+1, C_i, l, J)``; ``counts[c]`` is the jump-count vector of count
    index ``c``.
    """

    spec: LatticeBSDEJ
    Y: list
    Z: list
    Phi: list
    counts: np.ndarray
    max_residual: float

    @property
    def Y0(self):
        return self.Y[0][0, 0]

    def node(self, i, level, counts):
        """``(Y, Z, Phi)`` at step ``i``, Brownian level and count vector."""
        if (level + i) % 2 or abs(level) > i:
            raise ValidationError("level must lie in {-i, -i+2, ..., i}")
        c = tuple(int(x) for x in counts)
        if sum(c) > i or len(c) != self.spec.marks:
            raise ValidationError("invalid count vector")
        idx = int(np.flatnonzero((self.counts == c).all(axis=1))[0])
        a = (level + i) // 2
        return self.Y[i][a, idx], self.Z[i][a, idx], self.Phi[i][a, idx]


def solve_lattice(spec, scheme="implicit"):
    """Backward induction over the whole lattice.

    Parameters
    ----------
    spec : LatticeBSDEJ
    scheme : {"implicit", "explicit"}

    Returns
    -------
    LatticeSolution
        ``max_residual`` is recomputed slice by slice from the generator.
    """
    N = spec.steps
    Ys, Zs, Ps = [None] * (N + 1), [None] * (N + 1), [None] * (N + 1)
    res = 0.0
    for i, Y, Z, P, _ in iter_slices(spec, scheme):
        Ys[i], Zs[i], Ps[i] = Y, Z, P
        if i < N:
            res = max(res, slice_residual(spec, i, Y, Z, P, Ys[i + 1],
                                          scheme))
    counts, _ = _count_table(N, spec.marks)
    return LatticeSolution(spec, Ys, Zs, Ps, counts, res)


# ----------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class Certificate:
    """Declared structure of the dominated instance.

    ``gamma_lower`` bounds the own-jump coefficients from below;
    ``monotone_coupling`` asserts nonnegative off-diagonal ``y`` coefficients
    and nonnegative cross weights. Comparison can only be certified when
    ``gamma_lower >= -1`` and ``monotone_coupling`` holds.
    """

    gamma_lower: float = -1.0
    monotone_coupling: bool = True


@dataclass(frozen=True)
class ComparisonReport:
    status: str
    max_violation: float
    certified: bool
    reasons: tuple
    worst: tuple
    nodes: int
    generator_excess: float

    def to_text(self, name="comparison"):
        return (f"{name} max_violation={self.max_violation:.6e} "
                f"{self.status}")


def _structural_reasons(spec, cert):
    """Reasons the scheme-level comparison cannot be certified."""
    gen = spec.generator
    reasons = []
    gmin = float(gen.jump_coef.min()) if gen.jump_coef.size else np.inf
    if gmin < cert.gamma_lower - 1e-15:
        raise CertificateError(
            f"own-jump coefficient {gmin} below declared bound "
            f"{cert.gamma_lower}")
    off = gen.y_coef - np.diag(np.diag(gen.y_coef))
    monotone = off.min(initial=0.0) >= 0 and all(
        c.weight >= 0 for c in gen.cross)
    if cert.monotone_coupling and not monotone:
        raise CertificateError("coupling declared monotone but builder has "
                               "negative off-diagonal or cross weights")
    if cert.gamma_lower < -1:
        reasons.append("declared gamma bound below -1")
    if not cert.monotone_coupling:
        reasons.append("coupling not declared monotone")
    dt = spec.dt
    lam = spec.nu_array.sum()
    if np.abs(gen.z_coef).max(initial=0.0) * math.sqrt(dt) > 1 - lam * dt:
        reasons.append("z coefficient too large for the lattice step")
    if _implicit_inverse(spec).min() < -1e-14:
        reasons.append("implicit step matrix not inverse-positive")
    return reasons


def check_comparison(spec_a, spec_b, certificate=Certificate(), tol=1e-10,
                     scheme="implicit"):
    """Solve both lattices and test ``Y_a <= Y_b`` at every node.

    The certificate is validated against the builders of ``spec_a``;
    terminal dominance is checked on every terminal node and generator
    dominance ``f_a <= f_b`` along the solution of ``spec_b``.

    Returns
    -------
    ComparisonReport
        ``status`` is ``"PASS"`` only for a certified pair with
        ``max(Y_a - Y_b) <= tol``; a larger violation gives ``"FAIL"``; an
        uncertified pair without violation gives ``"UNCERTIFIED"``.

    Raises
    ------
    CertificateError
        If the declared structure or a dominance hypothesis is contradicted.
    """
    for s in (spec_a, spec_b):
        if not isinstance(s.generator, Generator):
            raise CertificateError("comparison requires builder generators")
    if (spec_a.dim, spec_a.steps, spec_a.T, tuple(spec_a.nu)) != (
            spec_b.dim, spec_b.steps, spec_b.T, tuple(spec_b.nu)):
        raise ValidationError("instances must share dim, steps, T and nu")
    reasons = _structural_reasons(spec_a, certificate)
    certified = not reasons
    it_a = iter_slices(spec_a, scheme, full=False)
    it_b = iter_slices(spec_b, scheme, other=spec_a.generator, full=False)
    counts, _ = _count_table(spec_a.steps, spec_a.marks)
    worst_val, worst, nodes, excess = -np.inf, None, 0, -np.inf
    for (i, Ya, *_), (_, Yb, _, _, exc) in zip(it_a, it_b):
        diff = Ya - Yb
        if i == spec_a.steps and diff.max() > 0:
            raise CertificateError("terminal values are not dominated")
        excess = max(excess, exc)
        if exc > 1e-12:
            raise CertificateError(
                f"generator dominance fails by {exc:.3g} at step {i}")
        nodes += diff.shape[0] * diff.shape[1]
        k = int(np.argmax(diff))
        if diff.flat[k] > worst_val:
            a, c, p = np.unravel_index(k, diff.shape)
            worst_val = float(diff.flat[k])
            worst = (i, int(2 * a - i), tuple(int(x) for x in counts[c]),
                     int(p))
    if worst_val > tol:
        status = "FAIL"
    else:
        status = "PASS" if certified else "UNCERTIFIED"
    return ComparisonReport(status, worst_val, certified, tuple(reasons),
                            worst, nodes, float(excess))


def random_certified_pair(rng, dim, marks, steps=60, T=1.0, gamma_low=-1.0):
    """Random instance pair satisfying the comparison hypotheses.

    The dominating instance adds a nonnegative constant to the source of
    the generator and nonnegative terms to the terminal map. Own-jump
    coefficients are drawn from ``[gamma_low, 2]`` with an atom at
    ``gamma_low``.
    """
    ell, J = int(dim), int(marks)
    dt = T / steps
    nu = rng.uniform(0.2, 2.0, size=J)
    y_coef = rng.uniform(-1.0, 1.0, size=(ell, ell))
    off = ~np.eye(ell, dtype=bool)
    y_coef[off] = rng.uniform(0.0, 1.0, size=off.sum())
    gamma = rng.uniform(gamma_low, 2.0, size=(ell, J))
    gamma[rng.random((ell, J)) < 0.3] = gamma_low
    cross = []
    library = [Monotone("identity"), Monotone("ramp", 0.2, 1.0),
               Monotone("tanh", 1.5), Monotone("clip", -1.0, 1.0)]
    for i in range(ell):
        for j in range(ell):
            if i != j and rng.random() < 0.6:
                h = library[rng.integers(len(library))]
                cross.append(CrossTerm(i, j, float(rng.uniform(0, 1)), h))
    gen = Generator.create(ell, nu, y_coef=y_coef,
                           z_coef=rng.uniform(-1, 1, ell), jump_coef=gamma,
                           cross=cross, source=rng.uniform(-1, 1, ell),
                           source_slope=rng.uniform(-0.5, 0.5, ell))
    terms = []
    for i in range(ell):
        terms.append(TerminalTerm(i, "const", float(rng.normal())))
        terms.append(TerminalTerm(i, "tanh_level", float(rng.normal())))
        terms.append(TerminalTerm(i, "level", float(rng.normal(0, 0.3))))
        for k in range(J):
            terms.append(TerminalTerm(i, "capped_count", float(rng.normal()),
                                      mark=k, param=float(rng.integers(1, 4))))
            terms.append(TerminalTerm(i, "level_count",
                                      float(rng.normal(0, 0.3)), mark=k))
    term = Terminal(ell, math.sqrt(dt), tuple(terms))
    bump = []
    for i in range(ell):
        if rng.random() < 0.5:
            bump.append(TerminalTerm(i, "const", float(rng.uniform(0, 0.2))))
        if rng.random() < 0.5:
            bump.append(TerminalTerm(i, "relu_level",
                                     float(rng.uniform(0, 0.5)),
                                     param=float(rng.normal())))
        k = int(rng.integers(J))
        if rng.random() < 0.5:
            bump.append(TerminalTerm(i, "any_jump",
                                     float(rng.uniform(0, 0.5)), mark=k))
    delta = np.where(rng.random(ell) < 0.5, 0.0, rng.uniform(0, 0.5, ell))
    a = LatticeBSDEJ(ell, steps, T, tuple(nu), gen, term)
    b = LatticeBSDEJ(ell, steps, T, tuple(nu), gen.shifted(delta),
                     term.plus(bump))
    return a, b


@dataclass(frozen=True)
class HarnessReport:
    pairs: int
    violations: int
    max_violation: float
    elapsed: float
    statuses: dict

    def to_text(self):
        status = "PASS" if self.violations == 0 else "FAIL"
        return (f"comparison-harness pairs={self.pairs} "
                f"max_violation={self.max_violation:.6e} {status}")


def run_comparison_harness(pairs=500, seed=0, dims=(1, 2, 3), marks=(1, 2),
                           steps=60, T=1.0, tol=1e-10):
    """Run :func:`check_comparison` on random certified pairs.

    Dimensions and mark counts cycle deterministically over all
    combinations; instance ``p`` uses an RNG seeded by ``(seed, p)``.
    """
    combos = list(itertools.product(dims, marks))
    start = time.perf_counter()
    worst, bad, statuses = -np.inf, 0, {}
    for p in range(pairs):
        ell, J = combos[p % len(combos)]
        rng = np.random.default_rng([seed, p])
        a, b = random_certified_pair(rng, ell, J, steps, T)
        rep = check_comparison(a, b, tol=tol)
        statuses[rep.status] = statuses.get(rep.status, 0) + 1
        worst = max(worst, rep.max_violation)
        bad += rep.status != "PASS"
    return HarnessReport(pairs, bad, float(worst),
                         time.perf_counter() - start, statuses)


# ----------------------------------------------------------------------
# elementary inequality


@dataclass(frozen=True)
class InequalityReport:
    count: int
    min_slack: float
    violations: int
    worst: tuple
    elapsed: float

    @property
    def passed(self):
        return self.violations == 0

    def to_text(self):
        return (f"elementary-inequality samples={self.count} "
                f"min_slack={self.min_slack:.6e} "
                f"{'PASS' if self.passed else 'FAIL'}")


def inequality_slack(x, y, c):
    """``[(x+y)^+]^2 - (x^+)^2 - 2(1+c) x^+ y + max(c^2, 1) (x^+)^2``."""
    x, y, c = (np.asarray(a, dtype=float) for a in (x, y, c))
    xp = np.maximum(x, 0.0)
    return (np.maximum(x + y, 0.0) ** 2 - xp ** 2 - 2.0 * (1.0 + c) * xp * y
            + np.maximum(c * c, 1.0) * xp ** 2)


def check_elementary_inequality(samples=10 ** 6, seed=0, tol=1e-12):
    """Sweep the inequality over a fixed grid plus random triples.

    Random ``x, y`` are drawn from ``[-1000, 1000]`` and ``c`` from
    ``[-1, 10]``, then snapped to dyadic grids (steps 1/16 and 1/64). On
    those grids every term is an exact double, so the slack is computed
    without rounding and the ``-tol`` threshold is meaningful even where
    the terms reach ``1e8``.
    """
    start = time.perf_counter()
    vals = np.array([-1000, -37.5, -10, -1, -0.5, -0.0625, 0, 0.0625, 0.5, 1,
                     3, 10, 37.5, 1000])
    cs = np.array([-1, -0.75, -0.5, 0, 0.25, 0.5, 1, 2, 5, 10])
    gx, gy, gc = (a.ravel() for a in np.meshgrid(vals, vals, cs,
                                                 indexing="ij"))
    rng = np.random.default_rng(seed)
    rx = np.round(rng.uniform(-1000, 1000, samples) * 16) / 16
    ry = np.round(rng.uniform(-1000, 1000, samples) * 16) / 16
    rc = -1.0 + np.round(rng.uniform(0, 11, samples) * 64) / 64
    x = np.concatenate([gx, rx])
    y = np.concatenate([gy, ry])
    c = np.concatenate([gc, rc])
    s = inequality_slack(x, y, c)
    k = int(np.argmin(s))
    viol = int(np.count_nonzero(s < -tol))
    return InequalityReport(int(s.size), float(s[k]), viol,
                            (float(x[k]), float(y[k]), float(c[k])),
                            time.perf_counter() - start)
