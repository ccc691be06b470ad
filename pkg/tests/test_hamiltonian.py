"""Structure of the exact, rotated and effective generators.

The collective-mode rewrite of the couplings is a linear identity, so most
equalities here are exact; product identities are asserted on the interior
subspace where truncation cannot bite.
"""

import math

import numpy as np
import pytest

from fibergate.hamiltonian import (
    TimeDependentOperator,
    h_atom_cavity,
    h_cavity_fiber,
    h_effective,
    h_free_modes,
    h_full,
    h_rotated,
    h_second_order,
    predicted_phases,
)
from fibergate.hilbert import (
    QOperator,
    atomic_projector,
    basis_state,
    build_space,
    interior_projector,
    mode_annihilation,
    normal_mode,
)
from fibergate.params import derive_constants, reference_params

TOL = 1e-12
SAMPLE_TIMES = (0.0, 0.137, 1.0, 7.3)


@pytest.fixture(scope="module")
def space():
    return build_space(2)


def interior_residual(space, qop):
    p = interior_projector(space)
    d = (p @ qop @ p).matrix
    return abs(d).max() if d.nnz else 0.0


class TestCavityFiber:
    def test_zero_coupling(self, space):
        h = h_cavity_fiber(space, reference_params(nu=0.0))
        assert h.matrix.nnz == 0

    def test_hermitian(self, space):
        assert h_cavity_fiber(space, reference_params(phi=0.9)).is_hermitian()

    def test_one_photon_eigenvalues(self, space):
        # Single-photon block eigenvalues are 0 and the two split energies.
        p = reference_params(phi=0.6)
        h = h_cavity_fiber(space, p).dense()
        idx = [
            space.index_of(0, 0, 1, 0, 0),
            space.index_of(0, 0, 0, 1, 0),
            space.index_of(0, 0, 0, 0, 1),
        ]
        block = h[np.ix_(idx, idx)]
        vals = np.sort(np.linalg.eigvalsh(block))
        s = p.sqrt2_nu
        assert np.allclose(vals, [-s, 0.0, s], atol=TOL)

    def test_matches_mode_splitting_on_interior(self, space):
        for phi in (0.0, 0.7, math.pi):
            p = reference_params(phi=phi)
            d = h_cavity_fiber(space, p) - h_free_modes(space, p)
            assert interior_residual(space, d) < TOL

    def test_same_phase_modes_fail_off_axis(self, space):
        # The mode combinations built with the fiber phase itself (not its
        # conjugate) only decouple the antisymmetric mode at phases 0, pi.
        p = reference_params(phi=0.7)
        c1 = normal_mode(space, "c1", p.phi)
        c2 = normal_mode(space, "c2", p.phi)
        cand = p.sqrt2_nu * (c1.dag() @ c1 - c2.dag() @ c2)
        assert interior_residual(space, h_cavity_fiber(space, p) - cand) > 0.1
        pi_point = reference_params(phi=math.pi)
        c1 = normal_mode(space, "c1", pi_point.phi)
        c2 = normal_mode(space, "c2", pi_point.phi)
        cand = pi_point.sqrt2_nu * (c1.dag() @ c1 - c2.dag() @ c2)
        assert interior_residual(space, h_cavity_fiber(space, pi_point) - cand) < TOL


class TestAtomCavity:
    def test_direct_matrix_element(self, space):
        h = h_atom_cavity(space, reference_params(omega=0.0)).at(0.0).dense()
        i = space.index_of(2, 0, 0, 0, 0)  # |e g, vac>
        j = space.index_of(0, 0, 1, 0, 0)  # |g g, one cavity-1 photon>
        assert h[i, j] == pytest.approx(1.0, rel=TOL)

    def test_asymmetry_scales_atom_two(self, space):
        h = h_atom_cavity(space, reference_params(omega=0.0, r=0.5)).at(0.0).dense()
        i = space.index_of(0, 2, 0, 0, 0)
        j = space.index_of(0, 0, 0, 1, 0)
        assert h[i, j] == pytest.approx(0.5, rel=TOL)

    def test_leaves_ff_sector_invariant(self, space):
        h = h_atom_cavity(space, reference_params())
        for t in SAMPLE_TIMES:
            m = h.at(t).matrix
            for occ in ((0, 0, 0), (1, 1, 0), (2, 0, 1)):
                st = basis_state(space, "f", "f", *occ)
                assert np.linalg.norm(m.dot(st.amplitudes)) < TOL

    def test_hermitian_at_sampled_times(self, space):
        h = h_atom_cavity(space, reference_params())
        for t in SAMPLE_TIMES:
            assert h.at(t).is_hermitian()

    def test_omega_max(self, space):
        assert h_atom_cavity(space, reference_params()).omega_max == 30.0


class TestFull:
    def test_reduces_to_hopping_without_atoms(self, space):
        p = reference_params(omega=0.0).with_(g=1e-30)
        h = h_full(space, p)
        assert h.static.max_abs_diff(h_cavity_fiber(space, p)) < TOL
        for term in h.terms:
            assert abs(term.op.matrix).max() < 1e-29

    def test_mode_rewrite_of_couplings_is_exact(self, space):
        # (c1 + c2 + sqrt2 c0)/2 = a1 and e^{i phi}(c1 + c2 - sqrt2 c0)/2 = a2
        # with the conjugate-phase modes: a linear identity, no truncation.
        p = reference_params(phi=1.1)
        c0 = normal_mode(space, "c0", -p.phi)
        c1 = normal_mode(space, "c1", -p.phi)
        c2 = normal_mode(space, "c2", -p.phi)
        a1 = mode_annihilation(space, "cavity1")
        a2 = mode_annihilation(space, "cavity2")
        phase = complex(math.cos(p.phi), math.sin(p.phi))
        lhs1 = 0.5 * (c1 + c2 + math.sqrt(2.0) * c0)
        lhs2 = (0.5 * phase) * (c1 + c2 - math.sqrt(2.0) * c0)
        assert lhs1.max_abs_diff(a1) < 1e-14
        assert lhs2.max_abs_diff(a2) < 1e-14

    def test_excitation_conservation_without_drive(self, space):
        p = reference_params(omega=0.0, phi=0.4)
        n_total = (
            atomic_projector(space, 1, "e", "e")
            + atomic_projector(space, 2, "e", "e")
            + sum(
                (
                    mode_annihilation(space, w).dag() @ mode_annihilation(space, w)
                    for w in ("cavity1", "cavity2", "fiber")
                ),
                start=QOperator(space, np.zeros((space.dim, space.dim))),
            )
        )
        h = h_full(space, p)
        for t in (0.0, 0.41):
            m = h.at(t)
            comm = m @ n_total - n_total @ m
            assert abs(comm.matrix).max() < TOL if comm.matrix.nnz else True


class TestRotated:
    def test_term_frequencies(self, space):
        p = reference_params()
        freqs = sorted(t.freq for t in h_rotated(space, p).terms)
        s = p.sqrt2_nu
        assert freqs == pytest.approx(
            sorted([p.delta_big - s, p.delta_big + s, p.delta_big,
                    p.delta_big - p.delta_small])
        )

    def test_collapses_without_fiber_splitting(self, space):
        h = h_rotated(space, reference_params(nu=0.0))
        mode_freqs = {t.freq for t in h.terms} - {29.0}
        assert mode_freqs == {30.0}

    def test_c1_coupling_coefficient(self, space):
        # At t=0, the matrix element moving |g g, one c1 photon> to
        # |e g, vac> through the c1 channel is g/2.
        p = reference_params(omega=0.0)
        h = h_rotated(space, p).at(0.0)
        c1_dag = normal_mode(space, "c1", -p.phi).dag()
        vac = basis_state(space, "g", "g", 0, 0, 0)
        one = QOperator.__matmul__(c1_dag, vac)
        target = basis_state(space, "e", "g", 0, 0, 0)
        amp = np.vdot(target.amplitudes, h.matrix.dot(one.amplitudes))
        assert amp == pytest.approx(0.5, rel=TOL)

    def test_hermitian_at_sampled_times(self, space):
        h = h_rotated(space, reference_params(phi=0.8))
        for t in SAMPLE_TIMES:
            assert h.at(t).is_hermitian()


class TestSecondOrder:
    def test_annihilates_ff_sector(self, space):
        h = h_second_order(space, reference_params(phi=0.5))
        for t in SAMPLE_TIMES:
            m = h.at(t).matrix
            for occ in ((0, 0, 0), (0, 2, 1)):
                st = basis_state(space, "f", "f", *occ)
                assert np.linalg.norm(m.dot(st.amplitudes)) < TOL

    def test_drive_off_leaves_mode_terms_only(self, space):
        p = reference_params(omega=0.0)
        h = h_second_order(space, p)
        s = p.sqrt2_nu
        # Raman amplitudes vanish with the drive; mode-mode terms survive.
        raman = [t for t in h.terms if abs(t.freq) in (abs(1.0 - s), 1.0 + s, 1.0)]
        mode_mode = [t for t in h.terms if t.freq in (-2.0 * s, -s)]
        assert raman and all(t.op.matrix.nnz == 0 for t in raman)
        assert mode_mode and all(t.op.matrix.nnz > 0 for t in mode_mode)
        assert h.static.matrix.nnz > 0  # photon-number Stark part remains

    def test_include_xi_flag(self, space):
        h = h_second_order(space, reference_params(), include_xi=False)
        assert len(h.terms) == 3  # the three Raman channels only
        assert len(h_second_order(space, reference_params()).terms) == 5

    def test_hermitian_at_sampled_times(self, space):
        h = h_second_order(space, reference_params(phi=2.1, r=0.8))
        for t in SAMPLE_TIMES:
            assert h.at(t).is_hermitian()


class TestEffective:
    def test_vacuum_sector_eigenvalues(self, space):
        he = h_effective(space, reference_params())
        gg = basis_state(space, "g", "g", 0, 0, 0)
        gf = basis_state(space, "g", "f", 0, 0, 0)
        fg = basis_state(space, "f", "g", 0, 0, 0)
        ff = basis_state(space, "f", "f", 0, 0, 0)
        assert he.expect(gg).real == pytest.approx(-0.069837357203397114, rel=1e-12)
        assert he.expect(gf).real == pytest.approx(-0.034125840820204543, rel=1e-12)
        assert he.expect(fg).real == pytest.approx(he.expect(gf).real, rel=1e-12)
        assert abs(he.expect(ff)) < TOL

    def test_no_offdiagonal_on_vacuum_qubit_block(self, space):
        he = h_effective(space, reference_params()).dense()
        idx = [
            space.index_of(a1, a2, 0, 0, 0) for a1 in (0, 1) for a2 in (0, 1)
        ]
        block = he[np.ix_(idx, idx)]
        assert np.max(np.abs(block - np.diag(np.diag(block)))) < TOL

    def test_gg_ff_split_matches_constant_combination(self, space):
        c = derive_constants(reference_params())
        he = h_effective(space, reference_params())
        gg = basis_state(space, "g", "g", 0, 0, 0)
        ff = basis_state(space, "f", "f", 0, 0, 0)
        split = (he.expect(gg) - he.expect(ff)).real
        assert split == pytest.approx(4.0 * (c.mu1 + c.mu2) - 2.0 * c.eta, rel=1e-12)

    def test_commutes_with_mode_numbers_on_interior(self, space):
        p = reference_params(phi=0.3)
        he = h_effective(space, p)
        for which in ("c0", "c1", "c2"):
            c = normal_mode(space, which, -p.phi)
            n_op = c.dag() @ c
            assert interior_residual(space, he @ n_op - n_op @ he) < TOL

    def test_commutes_with_f_projectors_exactly(self, space):
        he = h_effective(space, reference_params())
        for atom in (1, 2):
            pf = atomic_projector(space, atom, "f", "f")
            assert (he @ pf - pf @ he).matrix.nnz == 0

    def test_validity_enforced(self, space):
        bad = reference_params(delta_small=1.9)  # beat approaches the splitting
        with pytest.raises(ValueError, match="hierarchy"):
            h_effective(space, bad)
        h_effective(space, bad, enforce_validity=False)

    def test_hermitian(self, space):
        assert h_effective(space, reference_params(r=0.7)).is_hermitian()


class TestPredictedPhases:
    def test_zero_time(self):
        ph = predicted_phases(reference_params(), 0.0)
        assert all(v == 0.0 for v in ph.values())

    def test_ff_always_zero(self):
        assert predicted_phases(reference_params(), 123.4)["ff"] == 0.0

    def test_invariant_combination(self):
        for r in (1.0, 0.8, 1.3):
            ph = predicted_phases(reference_params(r=r), 10.0)
            combo = ph["gg"] - ph["gf"] - ph["fg"] + ph["ff"]
            assert combo == pytest.approx(ph["conditional"], rel=1e-12)

    def test_symmetric_point_values(self):
        c = derive_constants(reference_params())
        ph = predicted_phases(reference_params(), 2.0)
        assert ph["gg"] == pytest.approx(
            -(4.0 * (c.mu1 + c.mu2) - 2.0 * c.eta) * 2.0, rel=1e-12
        )
        assert ph["gf"] == pytest.approx(
            -(c.mu1 + c.mu2 + c.mu0 - c.eta) * 2.0, rel=1e-12
        )

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            predicted_phases(reference_params(), -1.0)


class TestTimeDependentOperator:
    def test_static_must_be_hermitian(self, space):
        a = mode_annihilation(space, "fiber")
        with pytest.raises(ValueError, match="Hermitian"):
            TimeDependentOperator(space, static=a)

    def test_space_mismatch(self, space):
        other = build_space(1)
        with pytest.raises(ValueError):
            h_full(space, reference_params()) + h_full(other, reference_params())
