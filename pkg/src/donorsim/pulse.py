"""Pulsed magnetic resonance on the driven S -> T* transitions.

Two-level dynamics in the frame rotating at the RF carrier: a pulse is an
exact SU(2) rotation about the axis (Omega cos phi, Omega sin phi,
2 pi * detuning) with Omega = 2 pi * rabi_coupling * b1_amplitude, and a
delay is a z rotation by the accumulated detuning phase (static offsets
plus the member's OU phase integral).

Sequence execution defaults to the hard-pulse idealisation: pulses act as
instantaneous rotations by their nominal angle about the in-plane phase
axis, and detuning evolves only during delays.  This keeps the textbook
echo identities exact (a Hahn echo refocuses frozen disorder completely);
``detuning_during_pulses=True`` switches to finite pulses whose rotation
axis tilts with detuning, which is also what ``rabi_experiment`` and the
four-level simulation use.

The four-level simulation integrates the full product-basis Hamiltonian
with a cosine drive in the interaction frame (commutator-free 4th-order
Magnus stepping), retaining counter-rotating terms and all off-resonant
levels, so addressability leakage to T+- is modelled rather than assumed.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from . import noise as noise_mod
from . import spincore
from .noise import EnsembleSpec, MemberEnvironment, ou_step, stretched_envelope
from .program import Delay, Pulse, PulseProgram, UnboundSymbolError, hahn_program, ramsey_program
from .spincore import FieldVector, SpinSystem

__all__ = [
    "TwoLevelParams", "Curve", "DecaySeries", "IntegrationStepError",
    "propagate_pulse", "run_sequence", "rabi_experiment", "ramsey_experiment",
    "hahn_experiment", "simulate_4level", "max_magnitude_estimate",
    "rf_spectrum", "two_level_params_for", "hahn_program", "ramsey_program",
]


class IntegrationStepError(ValueError):
    """Integration step too coarse for the requested accuracy."""


@dataclass(frozen=True)
class TwoLevelParams:
    """Driven-transition parameters.

    Attributes:
        transition_frequency_mhz: the S -> T* line frequency.
        rabi_coupling_mhz_per_mt: RF matrix element of the line.
        b1_amplitude_mt: RF amplitude.
        detuning_offset_khz: RF frequency minus line frequency.
    """

    transition_frequency_mhz: float
    rabi_coupling_mhz_per_mt: float
    b1_amplitude_mt: float
    detuning_offset_khz: float = 0.0

    def __post_init__(self) -> None:
        values = (
            self.transition_frequency_mhz, self.rabi_coupling_mhz_per_mt,
            self.b1_amplitude_mt, self.detuning_offset_khz,
        )
        if any(not math.isfinite(v) for v in values):
            raise ValueError("two-level parameters must be finite")
        if self.rabi_coupling_mhz_per_mt < 0 or self.b1_amplitude_mt < 0:
            raise ValueError("coupling and RF amplitude must be >= 0")

    @property
    def omega_rad_per_s(self) -> float:
        """Angular Rabi frequency, 2 pi * coupling * amplitude."""
        return 2.0 * math.pi * self.rabi_coupling_mhz_per_mt * self.b1_amplitude_mt * 1e6

    @property
    def detuning_rad_per_s(self) -> float:
        return 2.0 * math.pi * self.detuning_offset_khz * 1e3


@dataclass(frozen=True)
class Curve:
    """Plain x/y result curve (x strictly increasing)."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if x.shape != values.shape or x.ndim != 1:
            raise ValueError("x and values must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(values))):
            raise ValueError("curve data must be finite")
        if x.size > 1 and not np.all(np.diff(x) > 0):
            raise ValueError("x must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DecaySeries:
    """Normalized echo amplitude vs pulse spacing tau, with shot counts."""

    taus_s: np.ndarray
    values: np.ndarray
    shot_counts: np.ndarray

    def __post_init__(self) -> None:
        taus = np.asarray(self.taus_s, dtype=float)
        values = np.asarray(self.values, dtype=float)
        counts = np.asarray(self.shot_counts, dtype=int)
        if not (taus.shape == values.shape == counts.shape) or taus.ndim != 1:
            raise ValueError("taus, values and shot_counts must be 1-d, equal length")
        if not (np.all(np.isfinite(taus)) and np.all(np.isfinite(values))):
            raise ValueError("decay series must be finite")
        if taus.size > 1 and not np.all(np.diff(taus) > 0):
            raise ValueError("taus must be strictly increasing")
        if np.any(counts < 1):
            raise ValueError("shot counts must be >= 1")
        object.__setattr__(self, "taus_s", taus)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shot_counts", counts)


def _rotate(a: complex, b: complex, nx: float, ny: float, nz: float,
            angle: float) -> tuple[complex, complex]:
    """Exact SU(2) rotation of the spinor (a, b) about unit axis n by angle."""
    c = math.cos(angle / 2.0)
    s = math.sin(angle / 2.0)
    u00 = complex(c, -s * nz)
    u01 = complex(-s * ny, -s * nx)
    u10 = complex(s * ny, -s * nx)
    u11 = complex(c, s * nz)
    return u00 * a + u01 * b, u10 * a + u11 * b


def propagate_pulse(state: np.ndarray, pulse: Pulse, params: TwoLevelParams) -> np.ndarray:
    """Apply one finite RF pulse as an exact SU(2) rotation.

    The rotation axis is (Omega cos phi, Omega sin phi, 2 pi detuning) and
    the angle is the generalized Rabi frequency times the pulse duration.
    The duration comes from the pulse itself, or from the nominal angle and
    Omega when the pulse carries none.
    """
    state = np.asarray(state, dtype=complex)
    if state.shape != (2,):
        raise ValueError("state must be a complex 2-vector")
    norm = float(np.linalg.norm(state))
    if not math.isclose(norm, 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"state must be normalized, got |state| = {norm!r}")
    omega = params.omega_rad_per_s
    delta = params.detuning_rad_per_s
    if pulse.duration_s is not None:
        duration = pulse.duration_s
    else:
        if omega == 0.0:
            raise ValueError("cannot derive duration from angle at zero Rabi frequency")
        duration = pulse.angle_rad / omega
    n_eff = math.hypot(omega, delta)
    if n_eff == 0.0 or duration == 0.0:
        return state.copy()
    a, b = _rotate(
        complex(state[0]), complex(state[1]),
        (omega / n_eff) * math.cos(pulse.phase_rad),
        (omega / n_eff) * math.sin(pulse.phase_rad),
        delta / n_eff,
        n_eff * duration,
    )
    return np.array([a, b], dtype=complex)


def run_sequence(
    program: PulseProgram,
    params: TwoLevelParams,
    env: MemberEnvironment | None = None,
    *,
    detuning_during_pulses: bool = False,
) -> tuple[float, float]:
    """Run one bound, cycle-free program from |S> and return (p_S, p_T).

    Delays accumulate z phase from the static detuning (params plus the
    member's frozen offset) and, when the environment carries OU noise, from
    the exact OU phase integral over the delay; the OU state persists across
    the events of one run.  Pulses are ideal nominal rotations by default
    (see module docstring); the environment's shot phase, when nonzero, is
    applied as an extra z rotation just before the final pulse, modelling
    the net uncancelled common-mode phase of one shot.

    Raises UnboundSymbolError for symbolic delays and ValueError for
    unexpanded phase cycles.
    """
    if program.cycles:
        raise ValueError("program still has phase cycles; expand with .shots() first")
    static_khz = params.detuning_offset_khz + (env.static_detuning_khz if env else 0.0)
    delta_ang = 2.0 * math.pi * static_khz * 1e3
    a, b = 1.0 + 0.0j, 0.0 + 0.0j

    ou_sigma = env.ou_sigma_khz if env is not None else 0.0
    ou_x = 0.0
    if env is not None and ou_sigma > 0.0:
        ou_x = ou_sigma * float(env.rng.standard_normal())

    last_pulse_index = max(
        (i for i, ev in enumerate(program.events) if isinstance(ev, Pulse)),
        default=None,
    )
    for index, event in enumerate(program.events):
        if isinstance(event, Delay):
            if event.symbol is not None:
                raise UnboundSymbolError(f"unbound delay symbol {event.symbol!r}")
            tau = event.duration_s
            phase = delta_ang * tau
            if env is not None and ou_sigma > 0.0:
                ou_x, integral = ou_step(ou_x, tau, ou_sigma, env.ou_tau_c_s, env.rng)
                phase += 2.0 * math.pi * 1e3 * integral
            if phase != 0.0:
                a, b = _rotate(a, b, 0.0, 0.0, 1.0, phase)
            continue
        if env is not None and env.shot_phase_rad != 0.0 and index == last_pulse_index:
            a, b = _rotate(a, b, 0.0, 0.0, 1.0, env.shot_phase_rad)
        if detuning_during_pulses:
            member_params = replace(params, detuning_offset_khz=static_khz)
            state = propagate_pulse(np.array([a, b]), event, member_params)
            a, b = complex(state[0]), complex(state[1])
        else:
            a, b = _rotate(
                a, b,
                math.cos(event.phase_rad), math.sin(event.phase_rad), 0.0,
                event.angle_rad,
            )
    p_s = abs(a) ** 2
    p_t = abs(b) ** 2
    total = p_s + p_t
    if abs(total - 1.0) > 1e-10:
        raise RuntimeError(f"propagation lost norm: {total!r}")
    return p_s, p_t


def two_level_params_for(spec: EnsembleSpec, system: SpinSystem) -> TwoLevelParams:
    """Reduce an ensemble spec to driven-line parameters via the level model.

    The line frequency and RF matrix element come from the transition table
    at the nominal field; the coupling is the parallel or perpendicular
    element, chosen by ``spec.b0_orientation``.
    """
    field = FieldVector.along_z(spec.b0_magnitude_ut)
    lines = {t.to_label: t for t in spincore.transition_table(system, field)}
    line = lines[spec.transition]
    coupling = (
        line.element_parallel_mhz_per_mt
        if spec.b0_orientation == "parallel"
        else line.element_perpendicular_mhz_per_mt
    )
    return TwoLevelParams(
        transition_frequency_mhz=line.frequency_mhz,
        rabi_coupling_mhz_per_mt=coupling,
        b1_amplitude_mt=spec.b1_amplitude_mt,
    )


def rabi_experiment(
    spec: EnsembleSpec, system: SpinSystem, lengths_s: np.ndarray
) -> Curve:
    """Ensemble-averaged population transfer vs pulse length.

    Each member sees the drive through its frozen detuning (static disorder
    plus internal-field line shift), so the transfer follows the generalized
    Rabi formula member by member; disorder comparable to the Rabi frequency
    damps the averaged oscillation.
    """
    lengths = np.asarray(lengths_s, dtype=float)
    params = two_level_params_for(spec, system)
    if params.omega_rad_per_s == 0.0:
        raise ValueError(
            f"S -> {spec.transition} is not driven in the {spec.b0_orientation} "
            "geometry (zero matrix element)"
        )
    ground = np.array([1.0 + 0.0j, 0.0 + 0.0j])
    total = np.zeros_like(lengths)
    for index in range(spec.n_members):
        env = noise_mod.draw_member_environment(spec, system, index)
        member = replace(params, detuning_offset_khz=env.static_detuning_khz)
        for k, length in enumerate(lengths):
            if length == 0.0:
                continue  # zero-length pulse transfers nothing
            pulse = Pulse(angle_rad=0.0, phase_rad=0.0, duration_s=float(length))
            state = propagate_pulse(ground, pulse, member)
            total[k] += abs(state[1]) ** 2
    return Curve(x=lengths, values=total / spec.n_members)


def ramsey_experiment(
    spec: EnsembleSpec, system: SpinSystem, taus_s: np.ndarray
) -> Curve:
    """Ensemble-averaged pi/2 : tau : pi/2 fringe (final T population)."""
    taus = np.asarray(taus_s, dtype=float)
    params = two_level_params_for(spec, system)
    program = ramsey_program()
    values = np.zeros_like(taus)
    for index in range(spec.n_members):
        env = noise_mod.draw_member_environment(spec, system, index)
        for k, tau in enumerate(taus):
            bound = program.bind({"tau": float(tau)})
            _, p_t = run_sequence(bound, params, env)
            values[k] += p_t
    return Curve(x=taus, values=values / spec.n_members)


def max_magnitude_estimate(shots: np.ndarray) -> np.ndarray | float:
    """Largest absolute shot value, per tau point.

    Accepts a 1-d array of shots (returns a float) or a 2-d array with one
    row per tau point (returns max |.| along the last axis).  This is the
    detection rule for signals whose sign is randomized shot to shot by
    common-mode field noise: the largest magnitude approaches the underlying
    amplitude from below as the shot count grows.
    """
    arr = np.asarray(shots, dtype=float)
    if arr.size == 0 or arr.shape[-1] == 0:
        raise ValueError("need at least one shot per tau point")
    if not np.all(np.isfinite(arr)):
        raise ValueError("shots must be finite")
    if arr.ndim == 1:
        return float(np.abs(arr).max())
    if arr.ndim == 2:
        return np.abs(arr).max(axis=-1)
    raise ValueError("shots must be 1-d or 2-d")


def hahn_experiment(
    spec: EnsembleSpec,
    system: SpinSystem,
    taus_s: np.ndarray,
    *,
    detection: str = "mean",
    shots_per_point: int | None = None,
    readout_gain: float = 1.0,
    readout_offset: float = 0.0,
    workers: int = 1,
) -> DecaySeries:
    """Phase-cycled Hahn echo decay over an ensemble.

    For every tau the +-pi/2 : tau : pi : tau : pi/2 sequence runs twice per
    member (first pulse phase cycled by 180 deg); the readout signals
    ``gain * p_T + offset`` are subtracted, cancelling the offset, and the
    cycled difference is normalized by its ideal zero-noise, zero-tau
    amplitude so a clean echo reads 1.0.  The optional phenomenological
    envelope multiplies the per-member cycled signal.

    detection="mean" averages one cycled difference per member (one shot
    pair per tau).  detection="max" repeats ``shots_per_point`` (default
    100) shot pairs, each with a fresh common-mode phase drawn uniformly
    from the ensemble-wide stream, and keeps the largest |ensemble-averaged
    cycled signal|; this is the estimator for field-sensitive lines whose
    echo phase is randomized between shots.

    ``workers`` only partitions members into chunks (evaluated in an
    arbitrary order); per-member streams make the result identical for any
    worker count.
    """
    taus = np.asarray(taus_s, dtype=float)
    if np.any(taus <= 0):
        raise ValueError("tau values must be > 0")
    if detection not in ("mean", "max"):
        raise ValueError(f"detection must be 'mean' or 'max', got {detection!r}")
    if readout_gain <= 0:
        raise ValueError("readout_gain must be > 0")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    n_shots = 1 if detection == "mean" else (shots_per_point or 100)
    if n_shots < 1:
        raise ValueError("shots_per_point must be >= 1")

    params = two_level_params_for(spec, system)
    shot_programs = hahn_program().shots()  # [first pulse +pi/2, first pulse -pi/2]
    envelope = np.ones_like(taus)
    pheno = spec.noise.phenomenological_t2_s
    if pheno is not None:
        envelope = stretched_envelope(taus, pheno, spec.noise.stretching_n)

    # Common-mode phases per (tau, shot): zero under mean detection.
    if detection == "max":
        crng = noise_mod.common_rng(spec.seed)
        common_phases = crng.uniform(0.0, 2.0 * math.pi, size=(taus.size, n_shots))
    else:
        common_phases = np.zeros((taus.size, n_shots))

    # Accumulate per-member cycled signals indexed by member, then reduce in
    # index order: the result cannot depend on evaluation schedule.
    cycled = np.zeros((spec.n_members, taus.size, n_shots))
    ideal_amplitude = -readout_gain  # gain * (p_T(+) - p_T(-)) at zero phase error
    member_chunks = np.array_split(np.arange(spec.n_members), workers)
    for chunk in reversed(member_chunks):  # arbitrary schedule, by construction
        for index in chunk:
            env = noise_mod.draw_member_environment(spec, system, int(index))
            for k, tau in enumerate(taus):
                bound = [p.bind({"tau": float(tau)}) for p in shot_programs]
                for j in range(n_shots):
                    env.shot_phase_rad = float(common_phases[k, j])
                    _, p_plus = run_sequence(bound[0], params, env)
                    _, p_minus = run_sequence(bound[1], params, env)
                    r_plus = readout_gain * p_plus + readout_offset
                    r_minus = readout_gain * p_minus + readout_offset
                    cycled[index, k, j] = (r_plus - r_minus) / ideal_amplitude
    per_shot = cycled.mean(axis=0) * envelope[:, None]

    if detection == "mean":
        values = per_shot[:, 0]
    else:
        values = np.asarray(max_magnitude_estimate(per_shot))
    return DecaySeries(
        taus_s=taus, values=values,
        shot_counts=np.full(taus.size, n_shots, dtype=int),
    )


def _cf4_step(psi: np.ndarray, t_us: float, dt_us: float, w_mhz: np.ndarray,
              gaps_mhz: np.ndarray, freq_mhz: float, phase_rad: float) -> np.ndarray:
    """One commutator-free 4th-order Magnus step in the interaction frame."""
    c1 = 0.5 - math.sqrt(3.0) / 6.0
    c2 = 0.5 + math.sqrt(3.0) / 6.0
    alpha1 = 0.25 + math.sqrt(3.0) / 6.0
    alpha2 = 0.25 - math.sqrt(3.0) / 6.0
    two_pi = 2.0 * math.pi

    def coupling(t):
        drive = math.cos(two_pi * freq_mhz * t + phase_rad)
        return drive * np.exp(1j * two_pi * gaps_mhz * t) * w_mhz

    m1 = coupling(t_us + c1 * dt_us)
    m2 = coupling(t_us + c2 * dt_us)
    for mat in ((alpha1 * m1 + alpha2 * m2), (alpha2 * m1 + alpha1 * m2)):
        x = -1j * two_pi * dt_us * mat
        x2 = x @ x
        u = np.eye(4) + x + x2 / 2.0 + (x2 @ x) / 6.0 + (x2 @ x2) / 24.0
        psi = u @ psi
    return psi


def simulate_4level(
    program: PulseProgram,
    system: SpinSystem,
    b0: FieldVector,
    b1_amplitude_mt: float,
    b1_direction,
    rf_frequency_mhz: float,
    *,
    dt_us: float | None = None,
    nominal_coupling_mhz_per_mt: float | None = None,
) -> dict[str, float]:
    """Drive the full 4-level system and return final level populations.

    The state starts in the S eigenlevel of H(b0).  Pulses apply the cosine
    drive b1(t) = b1_amplitude * cos(2 pi f t + phase) along ``b1_direction``
    through the operator gamma_s (e.S) - gamma_i (e.I); integration runs in
    the interaction frame of H(b0) with CF4 Magnus steps, keeping
    counter-rotating terms and every level, so off-resonant (T+-) leakage is
    simulated honestly.  Delays advance the carrier clock, preserving
    pulse-to-pulse phase coherence.

    The step must satisfy dt <= 1/(50 a); with the default step the local
    error per step stays below 1e-8 for drives weak compared to a.  Pulses
    without explicit durations need ``nominal_coupling_mhz_per_mt`` to
    convert nominal angles to durations.
    """
    if program.cycles:
        raise ValueError("expand phase cycles before simulating")
    if not program.is_bound():
        raise UnboundSymbolError(f"unbound delay symbol(s): {program.symbols()}")
    if b1_amplitude_mt < 0 or not math.isfinite(b1_amplitude_mt):
        raise ValueError("b1_amplitude_mt must be finite and >= 0")
    max_dt = 1.0 / (50.0 * system.hyperfine_a)
    if dt_us is None:
        dt_us = max_dt
    if dt_us <= 0 or dt_us > max_dt:
        raise IntegrationStepError(
            f"integration step {dt_us!r} us violates dt <= 1/(50 a) = {max_dt:.3e} us"
        )

    h = spincore.build_hamiltonian(system, b0)
    eig = spincore.eigensystem(h, system, b0)
    basis = np.column_stack([eig.vector(lbl) for lbl in spincore.LABELS])
    energies = np.array([eig.energy(lbl) for lbl in spincore.LABELS])
    gaps = energies[:, None] - energies[None, :]

    direction = np.asarray(b1_direction, dtype=float)
    if np.linalg.norm(direction) == 0:
        raise ValueError("b1_direction must be nonzero")
    direction = direction / np.linalg.norm(direction)
    op = sum(
        c * (system.gamma_s * s - system.gamma_i * i)
        for c, s, i in zip(direction, (spincore.SX, spincore.SY, spincore.SZ),
                           (spincore.IX, spincore.IY, spincore.IZ))
    )
    w = b1_amplitude_mt * (basis.conj().T @ op @ basis)  # MHz in the eigenbasis

    psi = np.zeros(4, dtype=complex)
    psi[0] = 1.0  # S
    t_us = 0.0
    for event in program.events:
        if isinstance(event, Delay):
            t_us += event.duration_s * 1e6
            continue
        if event.duration_s is not None:
            duration_us = event.duration_s * 1e6
        else:
            if not nominal_coupling_mhz_per_mt:
                raise ValueError(
                    "pulse without duration needs nominal_coupling_mhz_per_mt"
                )
            rabi_mhz = nominal_coupling_mhz_per_mt * b1_amplitude_mt
            duration_us = event.angle_rad / (2.0 * math.pi * rabi_mhz)
        n_steps = max(1, int(math.ceil(duration_us / dt_us - 1e-12)))
        step = duration_us / n_steps
        for _ in range(n_steps):
            psi = _cf4_step(psi, t_us, step, w, gaps, rf_frequency_mhz,
                            event.phase_rad)
            t_us += step
    norm = float(np.vdot(psi, psi).real)
    if abs(norm - 1.0) > 1e-10:
        raise RuntimeError(f"4-level propagation lost norm: {norm!r}")
    return {lbl: float(abs(psi[k]) ** 2) for k, lbl in enumerate(spincore.LABELS)}


def rf_spectrum(
    spec: EnsembleSpec,
    system: SpinSystem,
    offsets_khz: np.ndarray,
    *,
    kernel_fwhm_khz: float = 2.0,
) -> Curve:
    """Ensemble RF absorption spectrum around the hyperfine frequency.

    For every member (including its internal field, if drawn) the three
    S -> T* lines are placed at their frequencies with weights equal to the
    squared RF matrix element for the actual drive direction, then smeared
    with a unit-peak Lorentzian of the given FWHM.  The x axis is the RF
    offset from the zero-field hyperfine constant, in kHz.

    Captures the geometry selection rules (S -> T0 needs the drive parallel
    to B0, S -> T+- perpendicular) and the internal-field subpopulation's
    broad T+- sidebands, whose position is set by the internal field
    magnitude rather than the applied field.
    """
    offsets = np.asarray(offsets_khz, dtype=float)
    if kernel_fwhm_khz <= 0:
        raise ValueError("kernel_fwhm_khz must be > 0")
    b1_dir = (
        np.array([0.0, 0.0, 1.0])
        if spec.b0_orientation == "parallel"
        else np.array([1.0, 0.0, 0.0])
    )
    half = kernel_fwhm_khz / 2.0
    total = np.zeros_like(offsets)
    for index in range(spec.n_members):
        env = noise_mod.draw_member_environment(spec, system, index)
        h = spincore.build_hamiltonian(system, env.field)
        eig = spincore.eigensystem(h, system, env.field)
        e_s = eig.energy("S")
        for label in spincore.TRIPLET_LABELS:
            line_khz = (eig.energy(label) - e_s - system.hyperfine_a) * 1e3
            weight = spincore.rf_matrix_element(eig, system, b1_dir, label) ** 2
            if weight == 0.0:
                continue
            u = (offsets - line_khz) / half
            total += weight / (1.0 + u * u)
    return Curve(x=offsets, values=total / spec.n_members)
