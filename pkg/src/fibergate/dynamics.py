"""Fixed-step and adaptive integration of pure and open dynamics.

The fixed-step path is a classical 4th-order Runge-Kutta on the
Schroedinger / Lindblad right-hand side with the step bounded by the
fastest harmonic in the generator: dt <= (2 pi / omega_max) / 20, enforced
as an error. Everything is deterministic; there is no renormalization, so
norm and trace drift are genuine integrator diagnostics and abort the run
when they exceed the configured bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from fibergate.hamiltonian import TimeDependentOperator
from fibergate.hilbert import HilbertSpace, QOperator, QState, atomic_projector, mode_annihilation, normal_mode
from fibergate.params import ModelParams

__all__ = [
    "IntegratorConfig",
    "IntegratorAbort",
    "LeakageError",
    "Trajectory",
    "CollapseSet",
    "collapse_standard",
    "collapse_modes",
    "evolve_pure",
    "evolve_pure_many",
    "evolve_lindblad",
    "phase_of",
    "apply_static_propagator",
]


class IntegratorAbort(RuntimeError):
    """Integration stopped: step budget, norm drift or trace drift."""

    def __init__(self, reason: str, t: float):
        self.reason = reason
        self.t = t
        super().__init__(f"aborted at t={t:.6g}: {reason}")


class LeakageError(RuntimeError):
    """Phase extraction undefined: overlap with the reference collapsed."""

    def __init__(self, message: str, t: float, magnitude: float):
        self.t = t
        self.magnitude = magnitude
        super().__init__(message)


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control and recording policy.

    record_stride counts snapshots per unit time (1/g); states are kept at
    snapshots only when store_states is set, the final state always is.
    """

    dt: float = 5e-3
    method: str = "rk4"
    record_stride: float = 4.0
    max_steps: int = 5_000_000
    rtol: float = 1e-10
    atol: float = 1e-12
    norm_abort: float = 1e-6
    trace_abort: float = 1e-6
    store_states: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.method not in ("rk4", "adaptive"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.record_stride <= 0:
            raise ValueError("record_stride must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def with_(self, **kw) -> "IntegratorConfig":
        return replace(self, **kw)


def dt_bound(omega_max: float) -> float:
    """Largest admissible fixed step for the given fastest harmonic."""
    if omega_max <= 0:
        return math.inf
    return (2.0 * math.pi / omega_max) / 20.0


@dataclass
class Trajectory:
    """Sampled history of one integration.

    peaks holds running maxima of designated observables sampled far more
    densely than the snapshot grid (every peak_every steps), so fast
    transients are not lost between records.
    """

    times: np.ndarray
    states: list  # state vectors or density matrices; None entries if not stored
    observables: dict
    kind: str  # "pure" | "density"
    final_state: np.ndarray
    peaks: dict = None

    def __post_init__(self):
        if self.peaks is None:
            self.peaks = {}
        n = len(self.times)
        if any(len(v) != n for v in self.observables.values()):
            raise ValueError("observable series length mismatch")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def observable(self, name: str) -> np.ndarray:
        return self.observables[name]

    def to_csv(self, path) -> None:
        names = sorted(self.observables)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t," + ",".join(names) + "\n")
            for i, t in enumerate(self.times):
                row = [f"{t:.12g}"] + [
                    f"{self.observables[n][i]:.12g}" for n in names
                ]
                fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class CollapseSet:
    """Decay channels as (operator, rate) pairs."""

    channels: tuple

    def __post_init__(self):
        for op, rate in self.channels:
            if rate < 0:
                raise ValueError("collapse rates must be >= 0")
            if not isinstance(op, QOperator):
                raise TypeError("collapse channel must wrap a QOperator")


def collapse_standard(
    space: HilbertSpace, params: ModelParams, g_branch: float = 0.5
) -> CollapseSet:
    """Spontaneous emission split between the two ground states, plus
    photon loss from both cavities and the fiber at the common rate."""
    if not 0.0 <= g_branch <= 1.0:
        raise ValueError("g_branch must lie in [0, 1]")
    chans = []
    for atom in (1, 2):
        chans.append((atomic_projector(space, atom, "g", "e"), g_branch * params.gamma))
        chans.append((atomic_projector(space, atom, "f", "e"), (1.0 - g_branch) * params.gamma))
    for which in ("cavity1", "cavity2", "fiber"):
        chans.append((mode_annihilation(space, which), params.kappa))
    return CollapseSet(tuple(chans))


def collapse_modes(space: HilbertSpace, params: ModelParams) -> CollapseSet:
    """Photon loss written in the collective modes instead; the transform is
    unitary, so the dissipator is the same when all rates are equal."""
    chans = []
    for atom in (1, 2):
        chans.append((atomic_projector(space, atom, "g", "e"), 0.5 * params.gamma))
        chans.append((atomic_projector(space, atom, "f", "e"), 0.5 * params.gamma))
    for which in ("c0", "c1", "c2"):
        chans.append((normal_mode(space, which, -params.phi), params.kappa))
    return CollapseSet(tuple(chans))


def _compiled_terms(h: TimeDependentOperator):
    static = h.static.matrix.astype(complex)
    terms = [
        (t.op.matrix.astype(complex), t.op.dag().matrix.astype(complex), t.freq)
        for t in h.terms
        if t.op.matrix.nnz
    ]
    return static, terms


def _h_apply(static, terms, t, y):
    out = static.dot(y)
    for m, md, w in terms:
        ph = complex(math.cos(w * t), math.sin(w * t))
        out = out + ph * m.dot(y) + ph.conjugate() * md.dot(y)
    return out


def _plan_steps(t_final: float, cfg: IntegratorConfig, omega_max: float):
    bound = dt_bound(omega_max)
    if cfg.dt > bound * (1.0 + 1e-12):
        raise ValueError(
            f"dt={cfg.dt:g} exceeds the stability bound {bound:g} "
            f"for omega_max={omega_max:g}"
        )
    n = max(1, math.ceil(t_final / cfg.dt - 1e-12))
    if n > cfg.max_steps:
        raise IntegratorAbort(
            f"{n} steps exceed max_steps={cfg.max_steps}", 0.0
        )
    h = t_final / n
    snap_every = max(1, round(1.0 / (cfg.record_stride * h)))
    return n, h, snap_every


def _expect_pure(obs_csr, v) -> float:
    return float(np.real(np.vdot(v, obs_csr.dot(v))))


def _expect_dm(obs_csr, rho) -> float:
    return float(np.real(obs_csr.multiply(rho.T).sum()))


def evolve_pure(
    H: TimeDependentOperator,
    psi0: QState,
    t_final: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    observables: dict = None,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate the Schroedinger equation from t0 to t0 + t_final."""
    if t_final <= 0:
        raise ValueError("t_final must be > 0")
    if H.space != psi0.space:
        raise ValueError("state and generator live on different spaces")
    if cfg.method == "adaptive":
        return _evolve_pure_adaptive(H, psi0, t_final, cfg, observables, t0)
    return evolve_pure_many(H, [psi0], t_final, cfg, observables, t0)[0]


def evolve_pure_many(
    H: TimeDependentOperator,
    states,
    t_final: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    observables: dict = None,
    t0: float = 0.0,
    peak_observables: dict = None,
    peak_every: int = 5,
):
    """Integrate several states under one generator in a single pass.

    The state columns share every Hamiltonian application, which is how
    the four-basis-state protocol runs concurrently.
    """
    if t_final <= 0:
        raise ValueError("t_final must be > 0")
    static, terms = _compiled_terms(H)
    omega = H.omega_max
    n, h, snap_every = _plan_steps(t_final, cfg, omega)
    obs = dict(observables or {})
    pk = dict(peak_observables or {})
    cols = np.stack([s.amplitudes for s in states], axis=1)
    k = cols.shape[1]

    times = [t0]
    stored = [[cols[:, j].copy() if cfg.store_states else None] for j in range(k)]
    series = {name: [[_expect_pure(o.matrix, cols[:, j])] for j in range(k)]
              for name, o in obs.items()}
    norms = [[1.0] for _ in range(k)]
    peaks = {name: [(_expect_pure(o.matrix, cols[:, j]), t0) for j in range(k)]
             for name, o in pk.items()}

    y = cols.astype(complex)
    t = t0
    for step in range(1, n + 1):
        k1 = -1j * _h_apply(static, terms, t, y)
        k2 = -1j * _h_apply(static, terms, t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = -1j * _h_apply(static, terms, t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = -1j * _h_apply(static, terms, t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + step * h
        if pk and (step % peak_every == 0 or step == n):
            for name, o in pk.items():
                vals = np.real(np.einsum("ij,ij->j", y.conj(), o.matrix.dot(y)))
                for j in range(k):
                    if vals[j] > peaks[name][j][0]:
                        peaks[name][j] = (float(vals[j]), t)
        if step % snap_every == 0 or step == n:
            times.append(t)
            for j in range(k):
                v = y[:, j]
                nv = float(np.linalg.norm(v))
                if abs(nv - 1.0) > cfg.norm_abort:
                    raise IntegratorAbort(
                        f"norm drift {abs(nv - 1.0):.3e} exceeds "
                        f"{cfg.norm_abort:g}", t
                    )
                norms[j].append(nv)
                stored[j].append(v.copy() if cfg.store_states else None)
                for name, o in obs.items():
                    series[name][j].append(_expect_pure(o.matrix, v))

    out = []
    t_arr = np.array(times)
    for j in range(k):
        obs_j = {"norm": np.array(norms[j])}
        for name in series:
            obs_j[name] = np.array(series[name][j])
        out.append(
            Trajectory(
                times=t_arr,
                states=stored[j],
                observables=obs_j,
                kind="pure",
                final_state=y[:, j].copy(),
                peaks={name: peaks[name][j] for name in peaks},
            )
        )
    return out


def _evolve_pure_adaptive(H, psi0, t_final, cfg, observables, t0):
    from scipy.integrate import solve_ivp

    static, terms = _compiled_terms(H)

    def rhs(t, y):
        return -1j * _h_apply(static, terms, t, y)

    n_rec = max(2, int(round(cfg.record_stride * t_final)) + 1)
    t_eval = np.linspace(t0, t0 + t_final, n_rec)
    sol = solve_ivp(
        rhs, (t0, t0 + t_final), psi0.amplitudes.astype(complex),
        method="DOP853", rtol=cfg.rtol, atol=cfg.atol, t_eval=t_eval,
    )
    if not sol.success:
        raise IntegratorAbort(f"adaptive solver failed: {sol.message}", float(sol.t[-1]))
    obs = dict(observables or {})
    states = [sol.y[:, i].copy() for i in range(sol.y.shape[1])]
    obs_out = {"norm": np.array([np.linalg.norm(v) for v in states])}
    for name, o in obs.items():
        obs_out[name] = np.array([_expect_pure(o.matrix, v) for v in states])
    for i, v in enumerate(states):
        if abs(obs_out["norm"][i] - 1.0) > cfg.norm_abort:
            raise IntegratorAbort(
                f"norm drift {abs(obs_out['norm'][i] - 1.0):.3e}", float(sol.t[i])
            )
    return Trajectory(
        times=sol.t.copy(),
        states=states if cfg.store_states else [None] * len(states),
        observables=obs_out,
        kind="pure",
        final_state=states[-1],
    )


def _check_rho0(rho: np.ndarray, dim: int):
    if rho.shape != (dim, dim):
        raise ValueError(f"density matrix shape {rho.shape} != ({dim}, {dim})")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValueError("initial density matrix is not Hermitian within 1e-10")
    if abs(np.trace(rho).real - 1.0) > 1e-8 or abs(np.trace(rho).imag) > 1e-10:
        raise ValueError("initial density matrix trace deviates from 1")
    w = np.linalg.eigvalsh(rho)
    if w.min() < -1e-10:
        raise ValueError(f"initial density matrix has eigenvalue {w.min():.3e}")


def evolve_lindblad(
    H: TimeDependentOperator,
    rho0,
    collapse: CollapseSet,
    t_final: float,
    cfg: IntegratorConfig = IntegratorConfig(store_states=False),
    observables: dict = None,
    t0: float = 0.0,
    peak_observables: dict = None,
    peak_every: int = 5,
) -> Trajectory:
    """Integrate the zero-temperature master equation.

    rho0 may be a QState (converted to its projector) or a density matrix.
    The right-hand side is assembled as A rho + (A rho)^dag + sum_k rate_k
    L_k rho L_k^dag with A = -iH(t) - sum_k rate_k L_k^dag L_k / 2, which
    keeps Hermiticity exact at every stage.
    """
    if t_final <= 0:
        raise ValueError("t_final must be > 0")
    dim = H.space.dim
    if isinstance(rho0, QState):
        rho = rho0.density_matrix()
    elif isinstance(rho0, QOperator):
        rho = rho0.dense()
    else:
        rho = np.asarray(rho0, dtype=complex)
    _check_rho0(rho, dim)

    static, terms = _compiled_terms(H)
    jump = [
        (op.matrix.astype(complex), rate)
        for op, rate in collapse.channels
        if rate > 0 and op.matrix.nnz
    ]
    sink = sp.csr_matrix((dim, dim), dtype=complex)
    for m, rate in jump:
        sink = sink + rate * (m.conjugate().transpose() @ m)
    a_static = -1j * static - 0.5 * sink

    def rhs(t, r):
        ar = a_static.dot(r)
        for m, md, w in terms:
            ph = complex(math.cos(w * t), math.sin(w * t))
            ar = ar + (-1j * ph) * m.dot(r) + (-1j * ph.conjugate()) * md.dot(r)
        out = ar + ar.conj().T
        for m, rate in jump:
            out = out + rate * m.dot(m.dot(r).conj().T)
        return out

    omega = H.omega_max
    n, h, snap_every = _plan_steps(t_final, cfg, omega)
    obs = dict(observables or {})
    pk = dict(peak_observables or {})

    times = [t0]
    stored = [rho.copy() if cfg.store_states else None]
    tr_series = [float(np.trace(rho).real)]
    herm_series = [float(np.max(np.abs(rho - rho.conj().T)))]
    mineig_series = [float(np.linalg.eigvalsh(rho).min())]
    series = {name: [_expect_dm(o.matrix, rho)] for name, o in obs.items()}
    peaks = {name: (_expect_dm(o.matrix, rho), t0) for name, o in pk.items()}

    y = rho.astype(complex)
    t = t0
    for step in range(1, n + 1):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + step * h
        if pk and (step % peak_every == 0 or step == n):
            for name, o in pk.items():
                val = _expect_dm(o.matrix, y)
                if val > peaks[name][0]:
                    peaks[name] = (val, t)
        if step % snap_every == 0 or step == n:
            tr = complex(np.trace(y))
            if abs(tr.real - 1.0) > cfg.trace_abort or abs(tr.imag) > cfg.trace_abort:
                raise IntegratorAbort(
                    f"trace drift {abs(tr - 1.0):.3e} exceeds {cfg.trace_abort:g}", t
                )
            times.append(t)
            stored.append(y.copy() if cfg.store_states else None)
            tr_series.append(tr.real)
            herm_series.append(float(np.max(np.abs(y - y.conj().T))))
            mineig_series.append(float(np.linalg.eigvalsh(0.5 * (y + y.conj().T)).min()))
            for name, o in obs.items():
                series[name].append(_expect_dm(o.matrix, y))

    obs_out = {
        "trace": np.array(tr_series),
        "herm_dev": np.array(herm_series),
        "min_eig": np.array(mineig_series),
    }
    for name in series:
        obs_out[name] = np.array(series[name])
    return Trajectory(
        times=np.array(times),
        states=stored,
        observables=obs_out,
        kind="density",
        final_state=y,
        peaks=peaks,
    )


def phase_of(traj: Trajectory, reference: QState) -> np.ndarray:
    """Continuously unwrapped arg<reference|psi(t)> along a pure trajectory."""
    if traj.kind != "pure":
        raise ValueError("phase extraction needs a pure-state trajectory")
    ref = reference.amplitudes
    overlaps = []
    for i, st in enumerate(traj.states):
        if st is None:
            raise ValueError("trajectory was recorded without states")
        ov = np.vdot(ref, st)
        mag = abs(ov)
        if mag < 0.5:
            raise LeakageError(
                f"overlap magnitude {mag:.3f} below 0.5 at t={traj.times[i]:.6g}",
                float(traj.times[i]), mag,
            )
        overlaps.append(ov)
    return np.unwrap(np.angle(np.array(overlaps)))


def apply_static_propagator(op: QOperator, vectors, t: float) -> np.ndarray:
    """exp(-i op t) applied to the columns of ``vectors`` via eigendecomposition."""
    if not op.is_hermitian(1e-10):
        raise ValueError("propagator generator must be Hermitian")
    w, u = np.linalg.eigh(op.dense())
    cols = np.asarray(vectors, dtype=complex)
    squeeze = cols.ndim == 1
    if squeeze:
        cols = cols[:, None]
    out = u @ (np.exp(-1j * w * t)[:, None] * (u.conj().T @ cols))
    return out[:, 0] if squeeze else out
