"""Integrator checks against closed-form dynamics."""

import math

import numpy as np
import pytest

from fibergate.dynamics import (
    CollapseSet,
    IntegratorAbort,
    IntegratorConfig,
    LeakageError,
    Trajectory,
    apply_static_propagator,
    collapse_modes,
    collapse_standard,
    dt_bound,
    evolve_lindblad,
    evolve_pure,
    phase_of,
)
from fibergate.hamiltonian import (
    HarmonicTerm,
    TimeDependentOperator,
    h_cavity_fiber,
    h_effective,
    h_free_modes,
    h_full,
    h_rotated,
    predicted_phases,
)
from fibergate.hilbert import (
    HilbertSpace,
    QOperator,
    QState,
    atomic_projector,
    basis_state,
    mode_annihilation,
)
from fibergate.params import reference_params


@pytest.fixture(scope="module")
def small():
    return HilbertSpace(1)


@pytest.fixture(scope="module")
def params():
    return reference_params()


def rabi_generator(space, g):
    low = atomic_projector(space, 1, "g", "e")
    return TimeDependentOperator(space, g * (low + low.dag()))


def number_op(space, which):
    a = mode_annihilation(space, which)
    return a.dag() @ a


def e_population(space, atom):
    return atomic_projector(space, atom, "e", "e")


class TestConfig:
    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.0)

    def test_rejects_unknown_method(self):
        with pytest.raises(ValueError):
            IntegratorConfig(method="euler")

    def test_rejects_bad_stride_and_steps(self):
        with pytest.raises(ValueError):
            IntegratorConfig(record_stride=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(max_steps=0)

    def test_bound_scales_inversely_with_frequency(self):
        assert dt_bound(0.0) == math.inf
        assert dt_bound(30.0) == pytest.approx((2 * math.pi / 30.0) / 20.0)

    def test_step_above_bound_is_refused(self, small, params):
        h = h_full(small, params)  # fastest harmonic at delta_big
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=0.02)
        with pytest.raises(ValueError, match="stability bound"):
            evolve_pure(h, psi, 1.0, cfg)

    def test_step_budget_aborts(self, small):
        h = rabi_generator(small, 1.0)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=1e-3, max_steps=10)
        with pytest.raises(IntegratorAbort):
            evolve_pure(h, psi, 1.0, cfg)


class TestPureClosedForm:
    def test_two_level_oscillation(self, small):
        g = 1.0
        h = rabi_generator(small, g)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=2e-3, record_stride=8.0)
        traj = evolve_pure(h, psi, 3.0, cfg, observables={"pe": e_population(small, 1)})
        expected = np.sin(g * traj.times) ** 2
        assert np.max(np.abs(traj.observable("pe") - expected)) < 1e-8

    def test_photon_hops_through_the_fiber(self, small, params):
        # One photon in cavity 1 transfers fully to cavity 2 after half the
        # collective period pi / (sqrt2 nu) and returns after the full one.
        h = TimeDependentOperator(small, h_cavity_fiber(small, params))
        psi = basis_state(small, "g", "g", 1, 0, 0)
        half = math.pi / params.sqrt2_nu
        obs = {
            "n1": number_op(small, "cavity1"),
            "n2": number_op(small, "cavity2"),
        }
        cfg = IntegratorConfig(dt=half / 400.0, record_stride=2.0 / half)
        traj = evolve_pure(h, psi, 2.0 * half, cfg, observables=obs)
        i_half = int(np.argmin(np.abs(traj.times - half)))
        assert traj.times[i_half] == pytest.approx(half, abs=1e-9)
        assert traj.observable("n2")[i_half] == pytest.approx(1.0, abs=1e-8)
        assert traj.observable("n1")[i_half] == pytest.approx(0.0, abs=1e-8)
        assert traj.observable("n1")[-1] == pytest.approx(1.0, abs=1e-8)

    def test_energy_conserved_under_static_generator(self, small, params):
        hop = h_cavity_fiber(small, params)
        h = TimeDependentOperator(small, hop)
        amp = np.zeros(small.dim, dtype=complex)
        amp[small.index_of(0, 0, 1, 0, 0)] = 0.6
        amp[small.index_of(0, 0, 0, 0, 1)] = 0.8
        psi = QState(small, amp)
        traj = evolve_pure(h, psi, 4.0, IntegratorConfig(dt=4e-3), observables={"en": hop})
        en = traj.observable("en")
        assert np.max(np.abs(en - en[0])) < 1e-9

    def test_fourth_order_convergence(self, small):
        # Endpoint error against a fine-step reference shrinks 16x per halving.
        op = atomic_projector(small, 1, "g", "e")
        h = TimeDependentOperator(
            small, terms=(HarmonicTerm(0.7 * op, 3.0),)
        )
        psi = basis_state(small, "g", "g", 0, 0, 0)

        def endpoint(dt):
            cfg = IntegratorConfig(dt=dt, record_stride=0.5)
            return evolve_pure(h, psi, 2.0, cfg).final_state

        ref = endpoint(0.00125)
        err1 = np.linalg.norm(endpoint(0.01) - ref)
        err2 = np.linalg.norm(endpoint(0.005) - ref)
        assert 12.0 < err1 / err2 < 20.0

    def test_norm_stays_within_contract(self, small, params):
        h = h_full(small, params)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=1e-3, record_stride=2.0)
        traj = evolve_pure(h, psi, 20.0, cfg)
        assert np.max(np.abs(traj.observable("norm") - 1.0)) < 1e-8

    def test_segmented_run_matches_single_run(self, small):
        # Harmonic phases depend on absolute time, so restarting at t0 > 0
        # must reproduce the unbroken trajectory.
        op = atomic_projector(small, 1, "g", "e")
        h = TimeDependentOperator(small, terms=(HarmonicTerm(0.9 * op, 2.5),))
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=3.5e-3)
        whole = evolve_pure(h, psi, 1.4, cfg)
        first = evolve_pure(h, psi, 0.7, cfg)
        second = evolve_pure(
            h, QState(small, first.final_state), 0.7, cfg, t0=0.7
        )
        assert np.linalg.norm(second.final_state - whole.final_state) < 1e-10

    def test_adaptive_matches_closed_form(self, small):
        h = rabi_generator(small, 1.0)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(method="adaptive", rtol=1e-11, atol=1e-13)
        traj = evolve_pure(h, psi, 1.0, cfg, observables={"pe": e_population(small, 1)})
        assert traj.observable("pe")[-1] == pytest.approx(math.sin(1.0) ** 2, abs=1e-8)

    def test_store_states_off_keeps_final_state(self, small):
        h = rabi_generator(small, 1.0)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=2e-3, store_states=False)
        traj = evolve_pure(h, psi, 1.0, cfg)
        assert all(s is None for s in traj.states)
        assert np.linalg.norm(traj.final_state) == pytest.approx(1.0, abs=1e-8)
        with pytest.raises(ValueError, match="without states"):
            phase_of(traj, psi)


class TestFrameEquivalence:
    def test_rotated_frame_reproduces_lab_frame(self, params):
        # psi_lab(t) = exp(-i H0 t) psi_rot(t) starting from a frame-coincident
        # state, with H0 the collective-mode splitting.
        space = HilbertSpace(2)
        psi = basis_state(space, "g", "g", 0, 0, 0)
        t_final = 1.5
        cfg = IntegratorConfig(dt=4e-4, record_stride=1.0, store_states=False)
        lab = evolve_pure(h_full(space, params), psi, t_final, cfg)
        rot = evolve_pure(h_rotated(space, params), psi, t_final, cfg)
        mapped = apply_static_propagator(
            h_free_modes(space, params), rot.final_state, t_final
        )
        # The mode-hopping free Hamiltonian does not commute with the
        # per-mode cutoff on the outermost photon shell, so the agreement
        # is measured as overlap fidelity, not amplitude-wise.
        deficit = 1.0 - abs(np.vdot(lab.final_state, mapped))
        assert deficit < 1e-8


class TestPhaseExtraction:
    def test_static_eigenstate_phase_is_linear(self, small, params):
        h = TimeDependentOperator(small, h_effective(small, params))
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=5e-3, record_stride=4.0)
        traj = evolve_pure(h, psi, 10.0, cfg)
        phases = phase_of(traj, psi)
        want = np.array([predicted_phases(params, t)["gg"] for t in traj.times])
        assert phases[0] == 0.0
        assert np.max(np.abs(phases - want)) < 1e-6

    def test_unwrap_tracks_multiple_turns(self, small):
        # A bare eigenstate at energy 2.0 winds several times over t = 10.
        proj = atomic_projector(small, 1, "e", "e")
        h = TimeDependentOperator(small, 2.0 * proj)
        psi = basis_state(small, "e", "g", 0, 0, 0)
        traj = evolve_pure(h, psi, 10.0, IntegratorConfig(dt=5e-3))
        phases = phase_of(traj, psi)
        assert phases[-1] == pytest.approx(-20.0, abs=1e-6)
        assert abs(phases[-1]) > 2.0 * math.pi

    def test_orthogonal_reference_raises(self, small):
        h = rabi_generator(small, 1.0)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        other = basis_state(small, "f", "f", 0, 0, 0)
        traj = evolve_pure(h, psi, 0.5, IntegratorConfig(dt=2e-3))
        with pytest.raises(LeakageError):
            phase_of(traj, other)

    def test_density_trajectory_is_rejected(self, small, params):
        h = TimeDependentOperator(small, h_effective(small, params))
        psi = basis_state(small, "g", "g", 0, 0, 0)
        traj = evolve_lindblad(
            h, psi, collapse_standard(small, params), 0.1,
            IntegratorConfig(dt=5e-3),
        )
        with pytest.raises(ValueError, match="pure"):
            phase_of(traj, psi)


class TestLindblad:
    def test_zero_rates_match_pure_evolution(self, small, params):
        h = h_full(small, params)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=2e-3)
        traj_p = evolve_pure(h, psi, 2.0, cfg)
        traj_d = evolve_lindblad(
            h, psi, collapse_standard(small, params), 2.0, cfg
        )
        fid = np.real(
            np.vdot(traj_p.final_state, traj_d.final_state @ traj_p.final_state)
        )
        assert fid >= 1.0 - 1e-7

    def test_cavity_decay_is_exponential(self, small):
        pars = reference_params(kappa=0.03)
        h = TimeDependentOperator(small)
        psi = basis_state(small, "g", "g", 1, 0, 0)
        obs = {"n1": number_op(small, "cavity1")}
        cfg = IntegratorConfig(dt=5e-3, record_stride=2.0)
        traj = evolve_lindblad(
            h, psi, collapse_standard(small, pars), 20.0, cfg, observables=obs
        )
        want = np.exp(-pars.kappa * traj.times)
        assert np.max(np.abs(traj.observable("n1") - want)) < 1e-6

    def test_emission_branches_as_configured(self, small):
        pars = reference_params(gamma=0.05)
        h = TimeDependentOperator(small)
        psi = basis_state(small, "e", "g", 0, 0, 0)
        obs = {
            "pe": e_population(small, 1),
            "pf": atomic_projector(small, 1, "f", "f"),
        }
        cfg = IntegratorConfig(dt=5e-3, record_stride=2.0)
        traj = evolve_lindblad(
            h, psi, collapse_standard(small, pars, g_branch=0.25), 30.0, cfg,
            observables=obs,
        )
        decay = np.exp(-pars.gamma * traj.times)
        assert np.max(np.abs(traj.observable("pe") - decay)) < 1e-6
        assert traj.observable("pf")[-1] == pytest.approx(
            0.75 * (1.0 - decay[-1]), abs=1e-6
        )

    def test_trace_hermiticity_positivity_recorded(self, small, params):
        pars = reference_params(gamma=0.01, kappa=0.01)
        h = h_full(small, pars)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        cfg = IntegratorConfig(dt=2e-3, record_stride=2.0)
        traj = evolve_lindblad(h, psi, collapse_standard(small, pars), 3.0, cfg)
        assert np.max(np.abs(traj.observable("trace") - 1.0)) < 1e-9
        assert np.max(traj.observable("herm_dev")) < 1e-9
        assert np.min(traj.observable("min_eig")) > -1e-7

    def test_mode_basis_dissipator_is_equivalent(self, params):
        # Equal-rate loss through the physical modes or through the
        # collective modes is the same channel: the mixing matrix is unitary.
        space = HilbertSpace(1)
        pars = reference_params(kappa=0.04)
        amp = np.zeros(space.dim, dtype=complex)
        amp[space.index_of(0, 1, 1, 0, 0)] = 1.0 / math.sqrt(2.0)
        amp[space.index_of(0, 1, 0, 0, 1)] = 1.0j / math.sqrt(2.0)
        psi = QState(space, amp)
        h = TimeDependentOperator(space, h_cavity_fiber(space, pars))
        cfg = IntegratorConfig(dt=5e-3)
        rho_a = evolve_lindblad(
            h, psi, collapse_standard(space, pars), 1.0, cfg
        ).final_state
        rho_c = evolve_lindblad(
            h, psi, collapse_modes(space, pars), 1.0, cfg
        ).final_state
        assert np.max(np.abs(rho_a - rho_c)) < 1e-10

    def test_rejects_invalid_initial_matrix(self, small, params):
        h = TimeDependentOperator(small)
        bad = np.zeros((small.dim, small.dim), dtype=complex)
        bad[0, 1] = 0.5  # not Hermitian, trace zero
        with pytest.raises(ValueError):
            evolve_lindblad(h, bad, collapse_standard(small, params), 1.0)


class TestCollapseSets:
    def test_standard_set_has_seven_channels(self, small, params):
        # Two branches per atom plus photon loss from all three modes.
        pars = reference_params(gamma=0.1, kappa=0.2)
        cs = collapse_standard(small, pars)
        assert len(cs.channels) == 7
        rates = sorted(r for _, r in cs.channels)
        assert rates == pytest.approx([0.05, 0.05, 0.05, 0.05, 0.2, 0.2, 0.2])

    def test_branching_must_be_a_fraction(self, small, params):
        with pytest.raises(ValueError):
            collapse_standard(small, params, g_branch=1.5)

    def test_negative_rate_rejected(self, small):
        op = mode_annihilation(small, "fiber")
        with pytest.raises(ValueError):
            CollapseSet(((op, -0.1),))


class TestTrajectoryExport:
    def test_csv_roundtrip(self, small, tmp_path):
        h = rabi_generator(small, 1.0)
        psi = basis_state(small, "g", "g", 0, 0, 0)
        traj = evolve_pure(
            h, psi, 1.0, IntegratorConfig(dt=2e-3, record_stride=4.0),
            observables={"pe": e_population(small, 1)},
        )
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,norm,pe"
        first = [float(x) for x in lines[1].split(",")]
        assert first[0] == 0.0
        assert first[1] == pytest.approx(1.0, abs=1e-12)
        assert len(lines) == 1 + len(traj.times)

    def test_monotone_times_enforced(self, small):
        with pytest.raises(ValueError, match="increasing"):
            Trajectory(
                times=np.array([0.0, 0.5, 0.5]),
                states=[None, None, None],
                observables={},
                kind="pure",
                final_state=np.zeros(small.dim, dtype=complex),
            )


class TestStaticPropagator:
    def test_matches_eigenphase(self, small, params):
        h0 = h_free_modes(small, params)
        v = basis_state(small, "g", "g", 0, 0, 0).amplitudes
        out = apply_static_propagator(h0, v, 2.0)
        assert np.linalg.norm(out - v) < 1e-12  # vacuum sits at zero energy

    def test_rejects_non_hermitian(self, small):
        low = atomic_projector(small, 1, "g", "e")
        with pytest.raises(ValueError, match="Hermitian"):
            apply_static_propagator(low, np.zeros(small.dim), 1.0)
