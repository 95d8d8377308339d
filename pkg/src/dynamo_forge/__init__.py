"""Pseudo-spectral simulator and control synthesis for kinematic dynamos on the 3-torus."""

__version__ = "0.1.0"

from dynamo_forge.analysis import (
    alpha_const,
    analytic_control_eigen,
    analytic_control_matrix,
    analytic_shear_matrix_x,
    analytic_shear_matrix_y,
    averaged_elements,
    beta_const,
    eigen3,
    kappa0_scan,
    matrix_element,
    matrix_row_tensor,
    select_control,
    translation_residual,
    worst_case_projection,
)
from dynamo_forge.config import ConfigError, RunConfig
from dynamo_forge.controller import (
    GROWTH_THRESHOLD,
    GrowthShortfall,
    ScheduleResult,
    TransferFailure,
    energy_certificate,
    run_schedule,
)
from dynamo_forge.flows import (
    TimeFlow,
    concat_flows,
    control_block,
    idle_flow,
    load_flow,
    mode_transfer_flow,
    rotate_flow,
    save_flow,
    shear_flow_x,
    shear_flow_y,
    translate_flow,
)
from dynamo_forge.reports import replay_flow, write_run_reports, write_scan_reports
from dynamo_forge.solver import SolverParams, SolverTrace, adjoint_apply, solve
from dynamo_forge.spectral import (
    E_X,
    E_Y,
    E_Z,
    FourierField,
    SignedPermutation,
    UNIT_WAVEVECTORS,
    WaveVector,
    field_from_modes,
    rotate_field,
    sine_seed,
    single_mode_field,
    translate_field,
)
from dynamo_forge.verification import run_verification

__all__ = [
    "ConfigError",
    "E_X",
    "E_Y",
    "E_Z",
    "FourierField",
    "GROWTH_THRESHOLD",
    "GrowthShortfall",
    "RunConfig",
    "ScheduleResult",
    "SignedPermutation",
    "SolverParams",
    "SolverTrace",
    "TimeFlow",
    "TransferFailure",
    "UNIT_WAVEVECTORS",
    "WaveVector",
    "adjoint_apply",
    "alpha_const",
    "analytic_control_eigen",
    "analytic_control_matrix",
    "analytic_shear_matrix_x",
    "analytic_shear_matrix_y",
    "averaged_elements",
    "beta_const",
    "concat_flows",
    "control_block",
    "eigen3",
    "energy_certificate",
    "field_from_modes",
    "idle_flow",
    "kappa0_scan",
    "load_flow",
    "matrix_element",
    "matrix_row_tensor",
    "mode_transfer_flow",
    "replay_flow",
    "rotate_field",
    "rotate_flow",
    "run_schedule",
    "run_verification",
    "save_flow",
    "select_control",
    "shear_flow_x",
    "shear_flow_y",
    "sine_seed",
    "single_mode_field",
    "solve",
    "translate_field",
    "translate_flow",
    "translation_residual",
    "worst_case_projection",
    "write_run_reports",
    "write_scan_reports",
]
