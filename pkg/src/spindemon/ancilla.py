"""Fidelity budget of the ancilla-based verification chain.

The prepared electron state is mapped onto a nuclear ancilla by a resonant
pi-pulse and read back repetitively in quantum nondemolition mode.  This
module provides the closed-form control and readout fidelities, a binomial
simulator for the repetitive-readout histograms, and the Gaussian-overlap
visibility extracted from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

OVERLAP_GRID_POINTS = 10_000


@dataclass(frozen=True)
class ControlParams:
    """Resonant-drive pulse parameters.

    Exactly one of pulse_duration or rotation_error must be given: either
    the pulse length in seconds, or the rotation-angle error sigma (rad)
    relative to a perfect pi rotation.

    Attributes:
        drive_strength: drive amplitude in Hz (> 0).
        detuning: drive-resonance mismatch in Hz.
        pulse_duration: pulse length in seconds, or None.
        rotation_error: angle error sigma in radians, or None.
    """

    drive_strength: float
    detuning: float = 0.0
    pulse_duration: float | None = None
    rotation_error: float | None = None

    def __post_init__(self):
        if self.drive_strength <= 0.0:
            raise ValueError("drive_strength must be > 0")
        if (self.pulse_duration is None) == (self.rotation_error is None):
            raise ValueError("give exactly one of pulse_duration or rotation_error")

    @property
    def rabi_frequency(self) -> float:
        """Generalized Rabi frequency sqrt(drive^2 + detuning^2) in Hz."""
        return math.hypot(self.drive_strength, self.detuning)


@dataclass(frozen=True)
class QndParams:
    """Repetitive-readout disturbance model.

    Attributes:
        flip_probability: chance a single electron tunneling event flips the
            ancilla (per event).
        shots_per_read: electron readouts averaged per ancilla read (>= 1).
    """

    flip_probability: float
    shots_per_read: int

    def __post_init__(self):
        if not (0.0 <= self.flip_probability <= 1.0):
            raise ValueError("flip_probability must be in [0, 1]")
        if self.shots_per_read < 1:
            raise ValueError("shots_per_read must be >= 1")


@dataclass(frozen=True)
class FidelityBudget:
    """Stage fidelities and their product for the full verification chain."""

    f_init: float
    f_control: float
    f_readout: float
    f_total: float

    def __post_init__(self):
        for value in (self.f_init, self.f_control, self.f_readout, self.f_total):
            if not (0.0 <= value <= 1.0):
                raise ValueError("fidelities must be in [0, 1]")
        if abs(self.f_total - self.f_init * self.f_control * self.f_readout) > 1e-12:
            raise ValueError("f_total must equal the product of the stages")


def control_fidelity(params: ControlParams) -> float:
    """Probability the mapping pulse performs the intended flip.

    Rabi formula: (drive^2 / (drive^2 + detuning^2)) * sin^2(theta / 2),
    where theta is the rotation angle.  With a pulse duration the angle is
    2 * pi * rabi_frequency * t; with a rotation error it is pi + sigma,
    symmetric in the sign of sigma.
    """
    amp = params.drive_strength**2 / (params.drive_strength**2 + params.detuning**2)
    if params.rotation_error is not None:
        theta = math.pi + params.rotation_error
    else:
        theta = 2.0 * math.pi * params.rabi_frequency * params.pulse_duration
    return amp * math.sin(0.5 * theta) ** 2


def qnd_fidelity(params: QndParams) -> float:
    """Probability the ancilla survives one full read undisturbed: (1-p)^n."""
    return (1.0 - params.flip_probability) ** params.shots_per_read


def total_fidelity(f_init: float, f_control: float, f_readout: float) -> FidelityBudget:
    """Combine the three stage fidelities into the experiment total."""
    for value in (f_init, f_control, f_readout):
        if not (0.0 <= value <= 1.0):
            raise ValueError("fidelities must be in [0, 1]")
    return FidelityBudget(
        f_init=f_init,
        f_control=f_control,
        f_readout=f_readout,
        f_total=f_init * f_control * f_readout,
    )


@dataclass
class NuclearHistogram:
    """Simulated repetitive-readout record.

    up_fractions holds the electron-up fraction of each ancilla read;
    nuclear_up the true ancilla state behind each read.
    """

    up_fractions: np.ndarray
    nuclear_up: np.ndarray
    shots_per_read: int

    def histogram(self, bins: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Counts over the fraction axis; default one bin per possible value."""
        if bins is None:
            bins = self.shots_per_read + 1
        counts, edges = np.histogram(self.up_fractions, bins=bins, range=(0.0, 1.0))
        centers = 0.5 * (edges[:-1] + edges[1:])
        return centers, counts


def simulate_nuclear_histogram(
    p_up_given_nuclear_up: float,
    p_up_given_nuclear_down: float,
    shots_per_read: int,
    reads: int,
    seed=None,
) -> NuclearHistogram:
    """Draw repetitive-readout up-fractions for a mixed ancilla ensemble.

    Each read picks an ancilla state (50/50), then draws a binomial
    electron-up count with the matching conditional probability.  The mode
    positions are illustrative defaults; the device values behind the real
    distributions are not published.
    """
    for p in (p_up_given_nuclear_up, p_up_given_nuclear_down):
        if not (0.0 <= p <= 1.0):
            raise ValueError("conditional probabilities must be in [0, 1]")
    if shots_per_read < 1 or reads < 1:
        raise ValueError("shots_per_read and reads must be >= 1")
    rng = np.random.default_rng(seed)
    nuclear_up = rng.random(reads) < 0.5
    p_per_read = np.where(nuclear_up, p_up_given_nuclear_up, p_up_given_nuclear_down)
    counts = rng.binomial(shots_per_read, p_per_read)
    return NuclearHistogram(
        up_fractions=counts / shots_per_read,
        nuclear_up=nuclear_up,
        shots_per_read=shots_per_read,
    )


@dataclass(frozen=True)
class VisibilityResult:
    """Two-mode separation figures extracted from an up-fraction record."""

    visibility: float
    overlap: float
    f_low: float
    f_high: float
    mean_low: float
    mean_high: float
    std_low: float
    std_high: float


def _gauss_pdf(x: np.ndarray, mean: float, std: float) -> np.ndarray:
    return np.exp(-0.5 * ((x - mean) / std) ** 2) / (std * math.sqrt(2.0 * math.pi))


def visibility(data, threshold: float) -> VisibilityResult:
    """Fit one Gaussian per side of the threshold and measure their overlap.

    The two profiles are fit by sample moments, the overlap is the numeric
    integral of min(g_low, g_high) on a fixed grid over the fraction axis,
    and the visibility is 1 minus that overlap.  f_low / f_high are the
    threshold-classification fidelities of each fitted mode.

    Args:
        data: NuclearHistogram or array of up-fractions.
        threshold: classification boundary on the fraction axis.

    Raises:
        ValueError: if either side of the threshold is empty (not bimodal).
    """
    fractions = data.up_fractions if isinstance(data, NuclearHistogram) else np.asarray(data)
    low = fractions[fractions <= threshold]
    high = fractions[fractions > threshold]
    if len(low) == 0 or len(high) == 0:
        raise ValueError("data is not bimodal about the threshold; fit failed")
    mean_low, std_low = float(np.mean(low)), float(np.std(low))
    mean_high, std_high = float(np.mean(high)), float(np.std(high))

    if std_low < 1e-12 or std_high < 1e-12:
        # Degenerate (delta-like) modes on opposite sides of the threshold
        # cannot overlap.
        overlap = 0.0
        f_low = 1.0
        f_high = 1.0
    else:
        grid = np.linspace(0.0, 1.0, OVERLAP_GRID_POINTS)
        g_low = _gauss_pdf(grid, mean_low, std_low)
        g_high = _gauss_pdf(grid, mean_high, std_high)
        overlap = float(np.trapezoid(np.minimum(g_low, g_high), grid))
        f_low = 0.5 * (1.0 + math.erf((threshold - mean_low) / (std_low * math.sqrt(2.0))))
        f_high = 0.5 * (1.0 - math.erf((threshold - mean_high) / (std_high * math.sqrt(2.0))))
    return VisibilityResult(
        visibility=1.0 - overlap,
        overlap=overlap,
        f_low=f_low,
        f_high=f_high,
        mean_low=mean_low,
        mean_high=mean_high,
        std_low=std_low,
        std_high=std_high,
    )
