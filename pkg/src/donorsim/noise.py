"""Noise processes and ensemble-member environments for pulsed experiments.

Every ensemble member owns a counter-based random stream keyed by
(seed, member index), so results do not depend on how members are
partitioned across workers.  A member's environment freezes its static
detuning and (for a configurable subpopulation) an internal field of fixed
magnitude and isotropic orientation; slow field fluctuations are an
Ornstein-Uhlenbeck process sampled with the exact joint update of the
process value and its time integral, making the statistics independent of
the stepping interval.

Field noise is quoted in detuning units: ``ou_sigma_khz`` is the standard
deviation the process imprints on a maximally field-sensitive line (slope
(gamma_s - gamma_i)/2, the S -> T+- value).  Each member scales it by the
ratio of its own transition's |dnu/dB0| to that reference slope, which is
how a clock transition is protected from the same field noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spincore
from .spincore import FieldVector, SpinSystem

#: Reserved stream index for draws shared by the whole ensemble (e.g. the
#: shot-to-shot common-mode echo phase).  Member indices must stay below it.
COMMON_STREAM_INDEX = 2**63

ORIENTATIONS = ("parallel", "perpendicular")


@dataclass(frozen=True)
class NoiseModel:
    """Noise and decoherence parameters for ensemble experiments.

    Attributes:
        static_detuning_khz: Gaussian sigma of a per-member frozen detuning.
        ou_sigma_khz: OU field-noise amplitude, quoted as the detuning sigma
            it produces on a maximally field-sensitive transition.
        ou_tau_c_s: OU correlation time (s).
        internal_fraction: fraction of members carrying an internal field.
        internal_field_ut: magnitude (uT) of that internal field; orientation
            is isotropic per member.
        phenomenological_t2_s: optional closed-form echo decay time; when set,
            exp(-(2 tau / T2)^n) multiplies the echo signal.
        stretching_n: stretching exponent n of the phenomenological decay.
    """

    static_detuning_khz: float = 0.0
    ou_sigma_khz: float = 0.0
    ou_tau_c_s: float = 1.0
    internal_fraction: float = 0.0
    internal_field_ut: float = 6.0
    phenomenological_t2_s: float | None = None
    stretching_n: float = 1.0

    def __post_init__(self) -> None:
        if self.static_detuning_khz < 0 or not math.isfinite(self.static_detuning_khz):
            raise ValueError("static_detuning_khz must be finite and >= 0")
        if self.ou_sigma_khz < 0 or not math.isfinite(self.ou_sigma_khz):
            raise ValueError("ou_sigma_khz must be finite and >= 0")
        if self.ou_tau_c_s <= 0 or not math.isfinite(self.ou_tau_c_s):
            raise ValueError("ou_tau_c_s must be finite and > 0")
        if not 0.0 <= self.internal_fraction <= 1.0:
            raise ValueError("internal_fraction must lie in [0, 1]")
        if self.internal_field_ut < 0 or not math.isfinite(self.internal_field_ut):
            raise ValueError("internal_field_ut must be finite and >= 0")
        if self.phenomenological_t2_s is not None and self.phenomenological_t2_s <= 0:
            raise ValueError("phenomenological_t2_s must be > 0 when set")
        if self.stretching_n <= 0 or not math.isfinite(self.stretching_n):
            raise ValueError("stretching_n must be finite and > 0")


@dataclass(frozen=True)
class EnsembleSpec:
    """Which transition is driven, at what field, over how many members.

    The static field B0 lies along z; the RF field direction is z for
    ``b0_orientation="parallel"`` and x for "perpendicular".
    """

    n_members: int
    seed: int
    noise: NoiseModel = NoiseModel()
    transition: str = "T0"
    b0_magnitude_ut: float = 0.0
    b0_orientation: str = "parallel"
    b1_amplitude_mt: float = 1e-3

    def __post_init__(self) -> None:
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        if not 0 <= self.seed < COMMON_STREAM_INDEX:
            raise ValueError(f"seed must lie in [0, 2^63), got {self.seed!r}")
        if self.transition not in spincore.TRIPLET_LABELS:
            raise ValueError(
                f"transition must be one of {spincore.TRIPLET_LABELS}, got {self.transition!r}"
            )
        if self.b0_magnitude_ut < 0 or not math.isfinite(self.b0_magnitude_ut):
            raise ValueError("b0_magnitude_ut must be finite and >= 0")
        if self.b0_orientation not in ORIENTATIONS:
            raise ValueError(f"b0_orientation must be one of {ORIENTATIONS}")
        if self.b1_amplitude_mt <= 0 or not math.isfinite(self.b1_amplitude_mt):
            raise ValueError("b1_amplitude_mt must be finite and > 0")


@dataclass
class MemberEnvironment:
    """Frozen per-member disorder plus the member's private random stream."""

    rng: np.random.Generator
    static_detuning_khz: float
    ou_sigma_khz: float
    ou_tau_c_s: float
    field: FieldVector
    shot_phase_rad: float = 0.0


def member_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based (Philox) stream for one member, keyed by (seed, index)."""
    if index < 0:
        raise ValueError("member index must be >= 0")
    return np.random.Generator(np.random.Philox(key=seed + (index << 64)))


def common_rng(seed: int) -> np.random.Generator:
    """Stream for ensemble-wide draws, distinct from every member stream."""
    return member_rng(seed, COMMON_STREAM_INDEX)


def sensitivity_factor(system: SpinSystem, transition: str, b0_ut: float) -> float:
    """|dnu/dB0| of a transition relative to the reference slope (gamma_s-gamma_i)/2."""
    slope, _ = spincore.clock_sensitivity(system, transition, b0_ut)
    reference = (system.gamma_s - system.gamma_i) / 2.0
    return abs(slope) / reference


def draw_member_environment(
    spec: EnsembleSpec, system: SpinSystem, index: int
) -> MemberEnvironment:
    """Draw one member's frozen environment from its private stream.

    Draw order (fixed; later draws in the same stream belong to the pulse
    sequences run on this member): (1) static detuning normal deviate,
    (2) subpopulation uniform, (3) internal-field direction as z-uniform
    and azimuth-uniform deviates.  Members outside the internal-field
    subpopulation still consume the direction draws so that membership of
    other members never shifts anyone's stream.
    """
    rng = member_rng(spec.seed, index)
    noise = spec.noise
    detuning = noise.static_detuning_khz * float(rng.standard_normal())
    in_subpop = float(rng.random()) < noise.internal_fraction
    cos_theta = 2.0 * float(rng.random()) - 1.0
    azimuth = 2.0 * math.pi * float(rng.random())

    b0 = FieldVector.along_z(spec.b0_magnitude_ut)
    field = b0
    if in_subpop and noise.internal_field_ut > 0.0:
        sin_theta = math.sqrt(max(0.0, 1.0 - cos_theta**2))
        internal = np.array(
            [
                sin_theta * math.cos(azimuth),
                sin_theta * math.sin(azimuth),
                cos_theta,
            ]
        ) * noise.internal_field_ut
        field = FieldVector(
            b0.bx + internal[0], b0.by + internal[1], b0.bz + internal[2]
        )
        shifted = spincore.transition_frequency(system, spec.transition, field.magnitude())
        nominal = spincore.transition_frequency(system, spec.transition, b0.magnitude())
        detuning += (shifted - nominal) * 1e3  # MHz -> kHz

    factor = sensitivity_factor(system, spec.transition, spec.b0_magnitude_ut)
    return MemberEnvironment(
        rng=rng,
        static_detuning_khz=detuning,
        ou_sigma_khz=noise.ou_sigma_khz * factor,
        ou_tau_c_s=noise.ou_tau_c_s,
        field=field,
    )


def _integral_variance_factor(eps: float) -> float:
    """2*eps - 3 + 4*exp(-eps) - exp(-2*eps), series-stabilised for small eps."""
    if eps < 0.01:
        return eps**3 * (2.0 / 3.0 - eps / 2.0 + 7.0 * eps**2 / 30.0 - eps**3 / 12.0)
    return 2.0 * eps - 3.0 + 4.0 * math.exp(-eps) - math.exp(-2.0 * eps)


def ou_step(
    x: float, dt_s: float, sigma: float, tau_c_s: float, rng: np.random.Generator
) -> tuple[float, float]:
    """Advance an OU process by dt and return (new value, integral over dt).

    Uses the exact joint Gaussian update of the process and its integral,
    so the distribution of both is independent of how a time interval is
    subdivided.  ``sigma`` is the stationary standard deviation; the
    returned integral has units of sigma * seconds.  A zero-sigma process
    consumes no randomness.
    """
    if dt_s < 0:
        raise ValueError("dt_s must be >= 0")
    if sigma == 0.0 or dt_s == 0.0:
        return (x * math.exp(-dt_s / tau_c_s) if sigma != 0.0 else 0.0, x * 0.0)
    eps = dt_s / tau_c_s
    mu = math.exp(-eps)
    mean_x = x * mu
    mean_i = x * tau_c_s * (1.0 - mu)
    var_x = sigma**2 * (1.0 - mu * mu)
    var_i = sigma**2 * tau_c_s**2 * _integral_variance_factor(eps)
    cov = sigma**2 * tau_c_s * (1.0 - mu) ** 2
    sd_x = math.sqrt(max(var_x, 0.0))
    sd_i = math.sqrt(max(var_i, 0.0))
    rho = 0.0 if sd_x == 0.0 or sd_i == 0.0 else min(max(cov / (sd_x * sd_i), -1.0), 1.0)
    n1 = float(rng.standard_normal())
    n2 = float(rng.standard_normal())
    new_x = mean_x + sd_x * n1
    integral = mean_i + sd_i * (rho * n1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * n2)
    return new_x, integral


@dataclass(frozen=True)
class OuPath:
    """OU detuning samples plus the accumulated phase at each grid point."""

    times_s: np.ndarray
    detuning_khz: np.ndarray
    phase_rad: np.ndarray


def sample_ou_path(
    sigma_khz: float,
    tau_c_s: float,
    duration_s: float,
    dt_s: float,
    rng: np.random.Generator,
) -> OuPath:
    """Sample a stationary OU detuning path and its accumulated phase.

    The path starts from a stationary draw; each step uses the exact joint
    update, and the phase is 2 pi * 1e3 * integral(detuning_khz dt).

    Args:
        sigma_khz: stationary standard deviation (kHz); zero gives zero path.
        tau_c_s: correlation time, > 0.
        duration_s: total time, >= 0.
        dt_s: grid spacing, > 0.
        rng: source stream.
    """
    if tau_c_s <= 0 or dt_s <= 0 or duration_s < 0:
        raise ValueError("need tau_c_s > 0, dt_s > 0, duration_s >= 0")
    n_steps = max(1, int(math.ceil(duration_s / dt_s - 1e-12))) if duration_s > 0 else 0
    times = np.arange(n_steps + 1) * dt_s
    values = np.zeros(n_steps + 1)
    phases = np.zeros(n_steps + 1)
    if sigma_khz > 0.0:
        x = sigma_khz * float(rng.standard_normal())
        values[0] = x
        acc = 0.0
        for k in range(n_steps):
            x, integral = ou_step(x, dt_s, sigma_khz, tau_c_s, rng)
            values[k + 1] = x
            acc += integral
            phases[k + 1] = 2.0 * math.pi * 1e3 * acc
    return OuPath(times_s=times, detuning_khz=values, phase_rad=phases)


def stretched_envelope(tau_s, t2_s: float, n: float):
    """Phenomenological echo envelope exp(-(2 tau / T2)^n)."""
    return np.exp(-((2.0 * np.asarray(tau_s, dtype=float) / t2_s) ** n))
