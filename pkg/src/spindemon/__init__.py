"""Simulator and estimation toolkit for spin-qubit initialization monitored
in real time through spin-dependent tunneling.

The package models the full chain: stochastic donor charge trajectories, the
amplifier/digitizer front end, the silent-sample trigger logic, the Bayesian
posterior it realizes, and the fidelity analysis built on top (sweeps, curve
fits, effective temperature, ancilla verification budget).
"""

__version__ = "0.1.0"

from .ancilla import (
    ControlParams,
    FidelityBudget,
    NuclearHistogram,
    QndParams,
    VisibilityResult,
    control_fidelity,
    qnd_fidelity,
    simulate_nuclear_histogram,
    total_fidelity,
    visibility,
)
from .demon import (
    ConditionalDensity,
    DemonConfig,
    DemonMachine,
    DemonPhase,
    PosteriorState,
    batch_posterior,
    conditional_evolution,
    corrected_posterior,
    demon_tick,
    likelihood_no_blip,
    liouvillian,
    marginal_likelihood,
    measurement_strength,
    optimal_read_time,
    posterior_step,
    sequence_complete,
    unconditioned_evolution,
)
from .fitting import FitConvergenceError, FitResult, fidelity_model, fit_fidelity_curve
from .harness import (
    ExperimentConfig,
    ProjectionScenario,
    ShotRecord,
    SweepResult,
    SweepSpec,
    donor_potential_for_prior,
    extract_chi,
    projection_999,
    run_initialization_shot,
    sweep_bias,
    sweep_tobs,
)
from .physics import (
    RateSet,
    ReservoirParams,
    TunnelModelParams,
    ZeemanParams,
    bare_init_fidelity_from_chi,
    bare_init_fidelity_from_rates,
    build_rates,
    effective_temperature,
    fermi_occupation,
    zeeman_splitting,
)
from .telegraph import (
    AmplifierParams,
    DonorState,
    EventTimeline,
    SampledTrace,
    digitize,
    dump_trace_csv,
    missed_blip_probability,
    render_sensor_trace,
    rise_time,
    sample_trajectory,
)
