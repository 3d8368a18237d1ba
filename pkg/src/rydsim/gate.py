"""Two-atom three-level gate engine.

Each atom is modeled as a three-level system {|0>, |1>, |r>} driven on the
|1>-|r> transition with a phase-modulated pulse.  Decay and scattering are
non-Hermitian diagonal terms, so the state norm decays and the deficit is
tracked as accumulated loss.  The two-atom Hamiltonian is block diagonal in
the four sectors defined by whether each atom occupies |0> or the driven
{|1>, |r>} manifold, which the integrator exploits; `build_hamiltonian`
exposes the full 9x9 matrix for reference and validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .constants import TWO_PI

# single-atom level indices
G0, G1, RYD = 0, 1, 2

# two-atom basis index: 3*a + b for atom-A level a, atom-B level b
def pair_index(a: int, b: int) -> int:
    return 3 * a + b


# sector index lists within the 9-dim basis
SECTOR_00 = [pair_index(G0, G0)]
SECTOR_0B = [pair_index(G0, G1), pair_index(G0, RYD)]
SECTOR_A0 = [pair_index(G1, G0), pair_index(RYD, G0)]
SECTOR_AB = [
    pair_index(G1, G1),
    pair_index(G1, RYD),
    pair_index(RYD, G1),
    pair_index(RYD, RYD),
]


class IntegrationError(RuntimeError):
    """Raised when the time stepper cannot satisfy its step-size contract."""


@dataclass(frozen=True)
class GateParams:
    """Pulse parameters of the phase-modulated CZ protocol.

    The drive phase is a single sinusoid,
    ``phi(t) = phase_mod_depth * sin(phase_mod_rate * (t - phase_mod_delay))``,
    applied on top of a constant two-photon detuning.  ``virtual_rz`` holds
    the per-atom single-qubit phase corrections applied after the pulse.
    """

    detuning: float            # rad/s
    duration: float            # s
    phase_mod_rate: float      # rad/s
    phase_mod_depth: float     # rad
    phase_mod_delay: float     # s
    virtual_rz: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.duration > 0):
            raise ValueError("duration must be positive")
        if self.phase_mod_depth < 0:
            raise ValueError("phase_mod_depth must be >= 0")
        for name in ("detuning", "duration", "phase_mod_rate",
                     "phase_mod_depth", "phase_mod_delay"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def waveform_phase(params: GateParams, t):
    """Drive phase phi(t) in rad; accepts scalar or array t in [0, duration]."""
    return params.phase_mod_depth * np.sin(
        params.phase_mod_rate * (np.asarray(t, dtype=float) - params.phase_mod_delay)
    )


@dataclass
class AtomDriveSpec:
    """Resolved single-atom drive: coupling, detuning, phase, and decay rates.

    ``decay_rate_1`` and ``decay_rate_r`` are photon-scattering rates out of
    |1> and |r> via the off-resonant intermediate state; ``rydberg_decay_rate``
    is 1/tau_r.  All are treated as pure loss from the three-level system.
    ``phase_bandwidth`` is a step-control hint: the characteristic angular
    frequency content of the phase waveform.
    """

    rabi_two_photon: float                 # rad/s
    two_photon_detuning: float             # rad/s
    phase: Callable[[np.ndarray], np.ndarray]
    decay_rate_1: float = 0.0              # 1/s
    decay_rate_r: float = 0.0              # 1/s
    rydberg_decay_rate: float = 0.0        # 1/s
    phase_bandwidth: float = 0.0           # rad/s

    def __post_init__(self):
        if self.rabi_two_photon < 0:
            raise ValueError("rabi_two_photon must be >= 0")
        for name in ("decay_rate_1", "decay_rate_r", "rydberg_decay_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("rabi_two_photon", "two_photon_detuning", "decay_rate_1",
                     "decay_rate_r", "rydberg_decay_rate"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def total_r_decay(self) -> float:
        return self.decay_rate_r + self.rydberg_decay_rate


@dataclass
class TwoAtomState:
    """Nine complex amplitudes over {0,1,r} x {0,1,r} plus accumulated loss."""

    amplitudes: np.ndarray
    loss: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(9)
        if self.loss < -1e-12:
            raise ValueError("loss must be in [0, 1]")
        self.loss = max(self.loss, 0.0)

    @classmethod
    def from_pair(cls, a: int, b: int) -> "TwoAtomState":
        amps = np.zeros(9, dtype=complex)
        amps[pair_index(a, b)] = 1.0
        return cls(amps)

    @property
    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def budget_defect(self) -> float:
        """|sum |amp|^2 + loss - 1|, which stays <= 1e-9 under evolution."""
        return abs(self.norm_squared + self.loss - 1.0)


def _single_atom_hamiltonian(drive: AtomDriveSpec, t: float) -> np.ndarray:
    h = np.zeros((3, 3), dtype=complex)
    phi = float(np.asarray(drive.phase(t)))
    coupling = 0.5 * drive.rabi_two_photon * np.exp(1j * phi)
    h[G1, RYD] = coupling
    h[RYD, G1] = np.conj(coupling)
    h[RYD, RYD] = -drive.two_photon_detuning
    h[G1, G1] += -0.5j * drive.decay_rate_1
    h[RYD, RYD] += -0.5j * drive.total_r_decay
    return h


def build_hamiltonian(drive_a: AtomDriveSpec, drive_b: AtomDriveSpec,
                      blockade: float, t: float) -> np.ndarray:
    """Full 9x9 two-atom Hamiltonian (rad/s) at time t.

    H = H_a x I + I x H_b + B |rr><rr| with non-Hermitian decay diagonals.
    """
    if not math.isfinite(blockade):
        raise ValueError("blockade must be finite")
    ha = _single_atom_hamiltonian(drive_a, t)
    hb = _single_atom_hamiltonian(drive_b, t)
    h = np.kron(ha, np.eye(3)) + np.kron(np.eye(3), hb)
    h[pair_index(RYD, RYD), pair_index(RYD, RYD)] += blockade
    return h


# ---------------------------------------------------------------------------
# step control and the sector integrator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepControl:
    """Fixed-step RK4 control.

    With ``max_step`` unset, each sector resolves the period of its fastest
    angular frequency (Rabi, detuning, blockade, phase-modulation bandwidth)
    with ``steps_per_period`` points.  The default of 100 keeps the norm
    drift of a decay-free gate below 1e-9; 50 is the coarsest contractual
    setting.  An explicit ``max_step`` applies uniformly to every sector,
    which makes step-halving convergence checks exact.
    """

    steps_per_period: int = 100
    max_step: float | None = None
    max_steps: int = 5_000_000
    min_steps: int = 16

    def steps_for(self, duration: float, scale: float) -> int:
        if self.max_step is not None:
            if self.max_step <= 0:
                raise IntegrationError("step size underflow: max_step <= 0")
            n = math.ceil(duration / self.max_step)
        else:
            dt_max = TWO_PI / (self.steps_per_period * max(scale, TWO_PI / duration))
            n = math.ceil(duration / dt_max)
        n = max(n, self.min_steps)
        if n > self.max_steps:
            raise IntegrationError(
                f"step size underflow: {n} steps exceed limit {self.max_steps}")
        return n


def _sector_scales(omega_a, delta_a, omega_b, delta_b, blockade, bandwidth):
    """Fastest angular frequency per sector (arrays in, arrays out)."""
    base_a = np.maximum.reduce([np.abs(omega_a), np.abs(delta_a),
                                np.broadcast_to(bandwidth, np.shape(omega_a))])
    base_b = np.maximum.reduce([np.abs(omega_b), np.abs(delta_b),
                                np.broadcast_to(bandwidth, np.shape(omega_b))])
    rr = np.abs(blockade - delta_a - delta_b)
    scale_ab = np.maximum.reduce([base_a, base_b, rr])
    return base_a, base_b, scale_ab


# Sector coupling patterns: positions of the e^{+i phi} coupling entries.
_COUP_2LVL = np.array([[0.0, 1.0], [0.0, 0.0]])
_COUP_AB_A = np.zeros((4, 4))
_COUP_AB_A[0, 2] = 1.0  # |11> <-> |r1|
_COUP_AB_A[1, 3] = 1.0  # |1r> <-> |rr|
_COUP_AB_B = np.zeros((4, 4))
_COUP_AB_B[0, 1] = 1.0  # |11> <-> |1r|
_COUP_AB_B[2, 3] = 1.0  # |r1> <-> |rr|

_STACK_BYTES_LIMIT = 64 * 2 ** 20


def _rk4_sector(psi, const, coups, dt, nsteps, accumulate=False):
    """RK4-evolve a batch of sector states.

    psi : (n, d) complex, modified copy returned
    const : (n, d, d) time-independent part of H
    coups : list of (coup_matrix (n,d,d), phase_values (2*nsteps+1,))
    accumulate : also return trapezoid integrals of |psi_i|^2 dt per component
    """
    n, d = psi.shape
    pairs = []
    for coup, phases in coups:
        pairs.append((coup, np.conj(np.swapaxes(coup, 1, 2)), np.exp(1j * phases)))

    n_sub = 2 * nsteps + 1
    stacked = n * d * d * n_sub * 16 <= _STACK_BYTES_LIMIT

    if stacked:
        h_all = np.broadcast_to(const, (n_sub, n, d, d)).copy()
        for coup, dag, ph in pairs:
            h_all += ph[:, None, None, None] * coup[None]
            h_all += np.conj(ph)[:, None, None, None] * dag[None]

        def h_at(j):
            return h_all[j]
    else:
        def h_at(j):
            h = const.copy()
            for coup, dag, ph in pairs:
                h += ph[j] * coup
                h += np.conj(ph[j]) * dag
            return h

    psi = psi.copy()
    acc = np.zeros((n, d)) if accumulate else None
    if accumulate:
        pop = np.abs(psi) ** 2
    col = psi[..., None]
    h_t = h_at(0)
    half = 0.5 * dt
    for k in range(nsteps):
        h_m = h_at(2 * k + 1)
        h_e = h_at(2 * k + 2)
        k1 = -1j * np.matmul(h_t, col)[..., 0]
        k2 = -1j * np.matmul(h_m, (psi + half * k1)[..., None])[..., 0]
        k3 = -1j * np.matmul(h_m, (psi + half * k2)[..., None])[..., 0]
        k4 = -1j * np.matmul(h_e, (psi + dt * k3)[..., None])[..., 0]
        psi += (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        col = psi[..., None]
        h_t = h_e
        if accumulate:
            pop_new = np.abs(psi) ** 2
            acc += 0.5 * dt * (pop + pop_new)
            pop = pop_new
    return (psi, acc) if accumulate else psi


@dataclass
class DriveBatch:
    """Per-shot drive parameters for batched evolution (all arrays (n,))."""

    omega_a: np.ndarray
    delta_a: np.ndarray
    gamma1_a: np.ndarray
    gammar_a: np.ndarray     # total |r> loss rate for atom A
    omega_b: np.ndarray
    delta_b: np.ndarray
    gamma1_b: np.ndarray
    gammar_b: np.ndarray
    blockade: np.ndarray
    phase_a: Callable[[np.ndarray], np.ndarray]
    phase_b: Callable[[np.ndarray], np.ndarray]
    bandwidth: float = 0.0

    def __len__(self):
        return len(self.omega_a)

    @classmethod
    def from_drives(cls, drive_a: AtomDriveSpec, drive_b: AtomDriveSpec,
                    blockade: float) -> "DriveBatch":
        one = np.ones(1)
        return cls(
            omega_a=one * drive_a.rabi_two_photon,
            delta_a=one * drive_a.two_photon_detuning,
            gamma1_a=one * drive_a.decay_rate_1,
            gammar_a=one * drive_a.total_r_decay,
            omega_b=one * drive_b.rabi_two_photon,
            delta_b=one * drive_b.two_photon_detuning,
            gamma1_b=one * drive_b.decay_rate_1,
            gammar_b=one * drive_b.total_r_decay,
            blockade=one * blockade,
            phase_a=drive_a.phase,
            phase_b=drive_b.phase,
            bandwidth=max(drive_a.phase_bandwidth, drive_b.phase_bandwidth),
        )

    def take(self, idx: np.ndarray) -> "DriveBatch":
        return DriveBatch(
            self.omega_a[idx], self.delta_a[idx], self.gamma1_a[idx],
            self.gammar_a[idx], self.omega_b[idx], self.delta_b[idx],
            self.gamma1_b[idx], self.gammar_b[idx], self.blockade[idx],
            self.phase_a, self.phase_b, self.bandwidth)


def _sector_const_2lvl(omega, delta, gamma1, gammar):
    n = len(omega)
    const = np.zeros((n, 2, 2), dtype=complex)
    const[:, 0, 0] = -0.5j * gamma1
    const[:, 1, 1] = -delta - 0.5j * gammar
    return const


def _sector_const_ab(batch: DriveBatch):
    n = len(batch)
    const = np.zeros((n, 4, 4), dtype=complex)
    const[:, 0, 0] = -0.5j * (batch.gamma1_a + batch.gamma1_b)
    const[:, 1, 1] = -batch.delta_b - 0.5j * (batch.gamma1_a + batch.gammar_b)
    const[:, 2, 2] = -batch.delta_a - 0.5j * (batch.gammar_a + batch.gamma1_b)
    const[:, 3, 3] = (-batch.delta_a - batch.delta_b + batch.blockade
                      - 0.5j * (batch.gammar_a + batch.gammar_b))
    return const


def _phase_samples(phase, t0, dt, nsteps):
    tgrid = t0 + 0.5 * dt * np.arange(2 * nsteps + 1)
    return np.asarray(phase(tgrid), dtype=float)


def evolve_batch(psi, batch: DriveBatch, duration: float,
                 step_ctrl: StepControl | None = None,
                 t0: float = 0.0, accumulate: bool = False):
    """Evolve a batch of 9-dim amplitude vectors under per-shot drives.

    psi : (n, 9) complex.  Returns the evolved (n, 9) array; callers account
    for norm loss.  With ``accumulate``, also returns (n, 9) integrals of
    |psi_i|^2 dt used for first-order decay estimates.  Within the batch,
    shots are bucketed by the step count their blockade sector requires, so a
    handful of extreme blockade draws do not slow every shot down.
    """
    if step_ctrl is None:
        step_ctrl = StepControl()
    psi = np.array(psi, dtype=complex)
    n = psi.shape[0]
    acc = np.zeros((n, 9)) if accumulate else None
    scale_a, scale_b, scale_ab = _sector_scales(
        batch.omega_a, batch.delta_a, batch.omega_b, batch.delta_b,
        batch.blockade, batch.bandwidth)

    # sector A (atom A driven, atom B in |0>) and sector B
    for idxs, scale, omega, delta, g1, gr, phase in (
            (SECTOR_A0, scale_a, batch.omega_a, batch.delta_a,
             batch.gamma1_a, batch.gammar_a, batch.phase_a),
            (SECTOR_0B, scale_b, batch.omega_b, batch.delta_b,
             batch.gamma1_b, batch.gammar_b, batch.phase_b)):
        nsteps = step_ctrl.steps_for(duration, float(np.max(scale)))
        dt = duration / nsteps
        const = _sector_const_2lvl(omega, delta, g1, gr)
        coup = np.zeros((n, 2, 2), dtype=complex)
        coup[:, 0, 1] = 0.5 * omega
        phases = _phase_samples(phase, t0, dt, nsteps)
        out = _rk4_sector(psi[:, idxs], const, [(coup, phases)],
                          dt, nsteps, accumulate)
        if accumulate:
            psi[:, idxs], acc[:, idxs] = out
        else:
            psi[:, idxs] = out

    # sector AB, bucketed by required step count
    req = np.array([step_ctrl.steps_for(duration, float(s)) for s in scale_ab])
    buckets = np.ceil(np.log2(req)).astype(int)
    for level in np.unique(buckets):
        sel = np.nonzero(buckets == level)[0]
        sub = batch.take(sel)
        nsteps = int(np.max(req[sel]))
        dt = duration / nsteps
        const = _sector_const_ab(sub)
        m = len(sel)
        coup_a = np.zeros((m, 4, 4), dtype=complex)
        coup_a += _COUP_AB_A
        coup_a *= (0.5 * sub.omega_a)[:, None, None]
        coup_b = np.zeros((m, 4, 4), dtype=complex)
        coup_b += _COUP_AB_B
        coup_b *= (0.5 * sub.omega_b)[:, None, None]
        ph_a = _phase_samples(batch.phase_a, t0, dt, nsteps)
        ph_b = _phase_samples(batch.phase_b, t0, dt, nsteps)
        out = _rk4_sector(psi[np.ix_(sel, SECTOR_AB)], const,
                          [(coup_a, ph_a), (coup_b, ph_b)], dt, nsteps,
                          accumulate)
        if accumulate:
            psi[np.ix_(sel, SECTOR_AB)], acc[np.ix_(sel, SECTOR_AB)] = out
        else:
            psi[np.ix_(sel, SECTOR_AB)] = out
    if accumulate:
        return psi, acc
    return psi


def evolve(state: TwoAtomState, drives: Sequence[AtomDriveSpec],
           blockade: float, duration: float,
           step_ctrl: StepControl | None = None) -> TwoAtomState:
    """Integrate i dpsi/dt = H(t) psi over [0, duration].

    Norm lost to the non-Hermitian terms is added to ``state.loss``.  Raises
    IntegrationError if the step-size contract cannot be met.
    """
    drive_a, drive_b = drives
    if not math.isfinite(blockade):
        raise ValueError("blockade must be finite")
    batch = DriveBatch.from_drives(drive_a, drive_b, blockade)
    psi0 = state.amplitudes[None, :]
    norm_in = float(np.sum(np.abs(psi0) ** 2))
    psi1 = evolve_batch(psi0, batch, duration, step_ctrl)[0]
    norm_out = float(np.sum(np.abs(psi1) ** 2))
    delta = norm_in - norm_out
    if delta < -1e-9:
        raise IntegrationError(f"norm grew by {-delta:.3e}; integration unstable")
    return TwoAtomState(psi1, loss=state.loss + max(delta, 0.0))


def evolve_dense_reference(state: TwoAtomState, drives: Sequence[AtomDriveSpec],
                           blockade: float, duration: float,
                           nsteps: int) -> TwoAtomState:
    """Plain RK4 on the full 9x9 `build_hamiltonian` matrix (validation path)."""
    drive_a, drive_b = drives
    psi = state.amplitudes.copy()
    dt = duration / nsteps
    norm_in = float(np.sum(np.abs(psi) ** 2))

    def rhs(t, y):
        return -1j * build_hamiltonian(drive_a, drive_b, blockade, t) @ y

    t = 0.0
    for _ in range(nsteps):
        k1 = rhs(t, psi)
        k2 = rhs(t + 0.5 * dt, psi + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, psi + 0.5 * dt * k2)
        k4 = rhs(t + dt, psi + dt * k3)
        psi = psi + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        t += dt
    norm_out = float(np.sum(np.abs(psi) ** 2))
    return TwoAtomState(psi, loss=state.loss + max(norm_in - norm_out, 0.0))


# ---------------------------------------------------------------------------
# Bell test circuit
# ---------------------------------------------------------------------------

def qubit_rotation(theta: float, phi: float) -> np.ndarray:
    """R(theta, phi) on the {|0>,|1>} subspace, identity on |r> (3x3)."""
    u = np.eye(3, dtype=complex)
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    u[G0, G0] = c
    u[G0, G1] = -1j * np.exp(-1j * phi) * s
    u[G1, G0] = -1j * np.exp(1j * phi) * s
    u[G1, G1] = c
    return u


def global_rotation(theta: float, phi: float) -> np.ndarray:
    """Simultaneous R(theta, phi) on both atoms (9x9)."""
    u = qubit_rotation(theta, phi)
    return np.kron(u, u)


def virtual_rz(phi_a: float, phi_b: float) -> np.ndarray:
    """Phase e^{i phi} on |1> of each atom (9x9 diagonal)."""
    da = np.ones(3, dtype=complex)
    da[G1] = np.exp(1j * phi_a)
    db = np.ones(3, dtype=complex)
    db[G1] = np.exp(1j * phi_b)
    return np.diag(np.kron(da, db))


def ideal_cz_unitary() -> np.ndarray:
    """Exact CZ on the qubit subspace: |11> -> -|11>, identity elsewhere."""
    d = np.ones(9, dtype=complex)
    d[pair_index(G1, G1)] = -1.0
    return np.diag(d)


# the minimal Bell circuit: |11> , R(pi/2,0) on both, CZ, virtual Rz,
# R(pi/2,pi/2) analysis rotation
_R_PREP = global_rotation(math.pi / 2.0, 0.0)
_R_ANALYSIS = global_rotation(math.pi / 2.0, math.pi / 2.0)


def bell_prep_state() -> np.ndarray:
    psi = np.zeros(9, dtype=complex)
    psi[pair_index(G1, G1)] = 1.0
    return _R_PREP @ psi


def bell_target_state() -> np.ndarray:
    """Circuit output for an exact CZ: (|00> + i|11>)/sqrt(2)."""
    return _R_ANALYSIS @ (ideal_cz_unitary() @ bell_prep_state())


def bell_error_from_pulse_state(psi_after_pulse: np.ndarray,
                                rz: tuple[float, float]) -> np.ndarray:
    """1 - |<bell|psi>|^2 given post-pulse amplitudes (batched over axis 0)."""
    psi = np.atleast_2d(psi_after_pulse)
    psi = psi * np.diag(virtual_rz(*rz))[None, :]
    psi = psi @ _R_ANALYSIS.T
    target = bell_target_state()
    overlap = psi @ np.conj(target)
    err = 1.0 - np.abs(overlap) ** 2
    return err if psi_after_pulse.ndim > 1 else float(err[0])


def bell_errors_batch(gate: GateParams, batch: DriveBatch,
                      step_ctrl: StepControl | None = None) -> np.ndarray:
    """Bell-circuit error per shot for a batch of resolved drives."""
    n = len(batch)
    psi0 = np.broadcast_to(bell_prep_state(), (n, 9)).copy()
    psi = evolve_batch(psi0, batch, gate.duration, step_ctrl)
    return np.clip(bell_error_from_pulse_state(psi, gate.virtual_rz), 0.0, 1.0)


def bell_error_from_drives(gate: GateParams, drive_a: AtomDriveSpec,
                           drive_b: AtomDriveSpec, blockade: float,
                           step_ctrl: StepControl | None = None) -> float:
    """Bell-circuit error for a single resolved drive pair."""
    batch = DriveBatch.from_drives(drive_a, drive_b, blockade)
    return float(bell_errors_batch(gate, batch, step_ctrl)[0])


def pulse_state_nominal(gate: GateParams, batch: DriveBatch,
                        step_ctrl: StepControl | None = None,
                        accumulate: bool = False):
    """Post-pulse amplitudes from the Bell prep state (pre-Rz), batched."""
    n = len(batch)
    psi0 = np.broadcast_to(bell_prep_state(), (n, 9)).copy()
    return evolve_batch(psi0, batch, gate.duration, step_ctrl,
                        accumulate=accumulate)


def optimal_virtual_rz(psi_after_pulse: np.ndarray) -> tuple[float, float]:
    """Single-qubit phase corrections extracted from the pulse output.

    Relies on the Bell prep state, whose |01> and |10> amplitudes are -i/2;
    the phases accumulated on the single-driven sectors are read off and
    cancelled.
    """
    u_b = 2j * psi_after_pulse[pair_index(G0, G1)]
    u_a = 2j * psi_after_pulse[pair_index(G1, G0)]
    return (-float(np.angle(u_a)), -float(np.angle(u_b)))
