"""1D two-species cross-diffusion laboratory: JKO stepping and exact 1D transport."""

from ._core import (  # noqa: F401
    INFINITY_M,
    DensityField,
    DensityPair,
    EnergyReport,
    EquilibriumResult,
    Grid,
    JkoStepResult,
    ModelParams,
    PotentialField,
    PotentialSpec,
    SolverConfig,
    Trajectory,
    build_grid,
    energy_report,
    equilibrium,
    explicit_transport_step,
    jko_step,
    jko_step_incompressible,
    kantorovich_potential,
    mccann_interpolate,
    monotone_map_at,
    ordering_gap,
    overlap_measure,
    patch_deviation,
    pressure_law,
    quantile,
    run_trajectory,
    saturation_tail,
    w2_distance,
    w2_squared,
)

__version__ = getattr(__import__("crossdiff1d._core", fromlist=["__version__"]), "__version__", "dev")
