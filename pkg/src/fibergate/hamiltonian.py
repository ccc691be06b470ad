"""Generators of the model at every level of approximation.

Builders return either a static Hermitian ``QOperator`` or a
``TimeDependentOperator`` holding a static part plus harmonic terms
``op * e^{i w t} + h.c.``. All collective-mode builders use modes at the
conjugate of the fiber phase: those are the combinations that decouple
the antisymmetric mode exactly for any phase (see ``hilbert.normal_mode``),
and the second atom's coupling then carries ``e^{+i phi}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from fibergate.hilbert import (
    HilbertSpace,
    QOperator,
    atomic_projector,
    mode_annihilation,
    normal_mode,
)
from fibergate.params import ModelParams, derive_constants, validate

__all__ = [
    "HarmonicTerm",
    "TimeDependentOperator",
    "h_cavity_fiber",
    "h_free_modes",
    "h_atom_cavity",
    "h_full",
    "h_rotated",
    "h_second_order",
    "h_effective",
    "predicted_phases",
]

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class HarmonicTerm:
    """One oscillating contribution op * e^{i freq t} + h.c."""

    op: QOperator
    freq: float


class TimeDependentOperator:
    """Static Hermitian part plus a list of harmonic terms."""

    def __init__(self, space: HilbertSpace, static: QOperator = None,
                 terms: tuple = ()):
        if static is None:
            static = QOperator(space, sp.csr_matrix((space.dim, space.dim)))
        if static.space != space:
            raise ValueError("static part lives on a different space")
        if not static.is_hermitian(1e-12):
            raise ValueError("static part must be Hermitian")
        for t in terms:
            if t.op.space != space:
                raise ValueError("term operator lives on a different space")
        self.space = space
        self.static = static
        self.terms = tuple(terms)

    @property
    def omega_max(self) -> float:
        return max((abs(t.freq) for t in self.terms), default=0.0)

    def at(self, t: float) -> QOperator:
        m = self.static.matrix.astype(complex)
        for term in self.terms:
            phase = np.exp(1j * term.freq * t)
            m = m + phase * term.op.matrix + np.conj(phase) * term.op.dag().matrix
        return QOperator(self.space, m)

    def __add__(self, other: "TimeDependentOperator") -> "TimeDependentOperator":
        if other.space != self.space:
            raise ValueError("operands live on different spaces")
        return TimeDependentOperator(
            self.space, self.static + other.static, self.terms + other.terms
        )

    def __repr__(self):
        return (
            f"TimeDependentOperator(dim={self.space.dim}, "
            f"terms={len(self.terms)}, omega_max={self.omega_max:g})"
        )


def _modes(space: HilbertSpace, params: ModelParams):
    # Conjugate phase: these combinations diagonalize the fiber coupling.
    phi = -params.phi
    return (
        normal_mode(space, "c0", phi),
        normal_mode(space, "c1", phi),
        normal_mode(space, "c2", phi),
    )


def _lower(space: HilbertSpace, params: ModelParams):
    """Raising operators |e_j><g_j| and ground projectors |g_j><g_j|."""
    e1 = atomic_projector(space, 1, "e", "g")
    e2 = atomic_projector(space, 2, "e", "g")
    g1 = atomic_projector(space, 1, "g", "g")
    g2 = atomic_projector(space, 2, "g", "g")
    return e1, e2, g1, g2


def h_cavity_fiber(space: HilbertSpace, params: ModelParams) -> QOperator:
    """Fiber-mediated hopping nu * b (a1^dag + e^{i phi} a2^dag) + h.c."""
    b = mode_annihilation(space, "fiber")
    a1 = mode_annihilation(space, "cavity1")
    a2 = mode_annihilation(space, "cavity2")
    phase = complex(math.cos(params.phi), math.sin(params.phi))
    half = params.nu * (b @ a1.dag() + phase * (b @ a2.dag()))
    return half + half.dag()


def h_free_modes(space: HilbertSpace, params: ModelParams) -> QOperator:
    """Splitting of the dressed modes, sqrt2 nu (c1^dag c1 - c2^dag c2).

    Built from truncated mode products; equals h_cavity_fiber entrywise on
    the interior subspace.
    """
    _, c1, c2 = _modes(space, params)
    return params.sqrt2_nu * (c1.dag() @ c1 - c2.dag() @ c2)


def h_atom_cavity(space: HilbertSpace, params: ModelParams) -> TimeDependentOperator:
    """Detuned atom-cavity couplings and classical drives.

    Two harmonics: the cavity photons beat at the full detuning, the drives
    at the two-photon-shifted one. The second atom couples with r * g.
    """
    e1, e2, _, _ = _lower(space, params)
    a1 = mode_annihilation(space, "cavity1")
    a2 = mode_annihilation(space, "cavity2")
    g_term = params.g * (a1 @ e1 + params.r * (a2 @ e2))
    drive = params.omega * (e1 + e2)
    return TimeDependentOperator(
        space,
        terms=(
            HarmonicTerm(g_term, params.delta_big),
            HarmonicTerm(drive, params.delta_big - params.delta_small),
        ),
    )


def h_full(space: HilbertSpace, params: ModelParams) -> TimeDependentOperator:
    """Exact reference dynamics: fiber hopping plus driven atoms."""
    return TimeDependentOperator(
        space, static=h_cavity_fiber(space, params)
    ) + h_atom_cavity(space, params)


def h_rotated(space: HilbertSpace, params: ModelParams) -> TimeDependentOperator:
    """Interaction part after rotating out the dressed-mode splitting.

    Each collective mode keeps its own beat note: the split modes at
    Delta -/+ sqrt2 nu, the antisymmetric one at Delta. The second atom
    carries e^{+i phi} and the sign flip on the antisymmetric mode.
    """
    c0, c1, c2 = _modes(space, params)
    e1, e2, _, _ = _lower(space, params)
    d = params.delta_big
    s = params.sqrt2_nu
    gh = 0.5 * params.g
    phase = params.r * complex(math.cos(params.phi), math.sin(params.phi))
    return TimeDependentOperator(
        space,
        terms=(
            HarmonicTerm(gh * (c1 @ e1 + phase * (c1 @ e2)), d - s),
            HarmonicTerm(gh * (c2 @ e1 + phase * (c2 @ e2)), d + s),
            HarmonicTerm(gh * _SQRT2 * (c0 @ e1 - phase * (c0 @ e2)), d),
            HarmonicTerm(params.omega * (e1 + e2), d - params.delta_small),
        ),
    )


def h_second_order(
    space: HilbertSpace,
    params: ModelParams,
    xi1_as_printed: bool = False,
    include_xi: bool = True,
) -> TimeDependentOperator:
    """Dynamics after eliminating the excited level.

    Raman terms push mode photons around at the slow beats delta -/+ sqrt2 nu
    and delta; mode-mode terms beat at the splitting itself; the Stark part
    is static. ``include_xi=False`` drops the mode-mode terms to quantify
    their weight. The second atom's ground projector carries e^{+i phi} and
    a factor r in the Raman terms, r^2 in the mode-mode and photon-number
    Stark terms.
    """
    c = derive_constants(params, xi1_as_printed=xi1_as_printed)
    c0, c1, c2 = _modes(space, params)
    _, _, g1, g2 = _lower(space, params)
    d = params.delta_small
    s = params.sqrt2_nu
    r = params.r
    phase = complex(math.cos(params.phi), math.sin(params.phi))

    g_plus = g1 + (r * phase) * g2
    g_minus = g1 - (r * phase) * g2
    g_plus2 = g1 + (r * r) * g2
    g_minus2 = g1 - (r * r) * g2

    terms = [
        HarmonicTerm(-c.lambda1 * (c1 @ g_plus), d - s),
        HarmonicTerm(-c.lambda2 * (c2 @ g_plus), d + s),
        HarmonicTerm(-c.lambda0 * (c0 @ g_minus), d),
    ]
    if include_xi:
        terms += [
            HarmonicTerm(-c.xi1 * (c1 @ c2.dag() @ g_plus2), -2.0 * s),
            HarmonicTerm(
                -c.xi2 * (c1 @ c0.dag() @ g_minus2)
                - c.xi0 * (c0 @ c2.dag() @ g_minus2),
                -s,
            ),
        ]
    stark = -(
        c.eta * (g1 + g2)
        + (
            c.eps1 * (c1.dag() @ c1)
            + c.eps2 * (c2.dag() @ c2)
            + c.eps0 * (c0.dag() @ c0)
        )
        @ g_plus2
    )
    return TimeDependentOperator(space, static=stark, terms=tuple(terms))


def h_effective(
    space: HilbertSpace,
    params: ModelParams,
    xi1_as_printed: bool = False,
    include_xi: bool = True,
    enforce_validity: bool = True,
) -> QOperator:
    """Static dispersive generator after all eliminations.

    Valid only when every slow beat dominates its coupling; that hierarchy
    is enforced unless ``enforce_validity=False``. Products keep the
    c c^dag mode ordering, so constant offsets appear away from the
    vacuum sector; phase differences are unaffected.
    """
    if enforce_validity:
        rep = validate(params)
        second = [k for k in rep.ratios if "lambda" in k or "xi" in k]
        bad = [k for k in second if not rep.passes[k]]
        if bad:
            raise ValueError(
                f"dispersive hierarchy violated for {', '.join(sorted(bad))}"
            )
    c = derive_constants(params, xi1_as_printed=xi1_as_printed)
    c0, c1, c2 = _modes(space, params)
    _, _, g1, g2 = _lower(space, params)
    r = params.r
    s = params.sqrt2_nu

    g_plus = g1 + r * g2
    g_minus = g1 - r * g2
    g_plus2 = g1 + (r * r) * g2
    g_minus2 = g1 - (r * r) * g2

    he = (c.mu1 + c.mu2) * (g_plus @ g_plus) + c.mu0 * (g_minus @ g_minus)
    if include_xi:
        he = he + (c.xi1**2 / (2.0 * s)) * (
            (c1 @ c1.dag() - c2 @ c2.dag()) @ g_plus2 @ g_plus2
        )
        he = he + (c.xi2**2 / s) * (
            (c1 @ c1.dag() - c0 @ c0.dag()) @ g_minus2 @ g_minus2
        )
        he = he + (c.xi0**2 / s) * (
            (c0 @ c0.dag() - c2 @ c2.dag()) @ g_minus2 @ g_minus2
        )
    he = he - (
        c.eta * (g1 + g2)
        + (
            c.eps1 * (c1.dag() @ c1)
            + c.eps2 * (c2.dag() @ c2)
            + c.eps0 * (c0.dag() @ c0)
        )
        @ g_plus2
    )
    return he


def predicted_phases(params: ModelParams, t: float) -> dict:
    """Slow phases of the four qubit basis states over the vacuum, and the
    invariant combination gg - gf - fg + ff."""
    if t < 0:
        raise ValueError("t must be >= 0")
    c = derive_constants(params)
    r = params.r
    m12 = c.mu1 + c.mu2
    gg = -(m12 * (1.0 + r) ** 2 + c.mu0 * (1.0 - r) ** 2 - 2.0 * c.eta) * t
    gf = -(m12 + c.mu0 - c.eta) * t
    fg = -((m12 + c.mu0) * r * r - c.eta) * t
    return {
        "gg": gg,
        "gf": gf,
        "fg": fg,
        "ff": 0.0,
        "conditional": -2.0 * r * (m12 - c.mu0) * t,
    }
