"""Pseudo-spectral solver for the Eulerian-Lagrangian form of the
incompressible Euler equations on the periodic torus.

The velocity is reconstructed from the back-to-labels displacement and the
transported initial velocity through the divergence-free part of
(grad eta)^T v + v; local solutions come from contraction iterations on
short time windows, cross-validated against a classical vorticity-stream
solver and a catalog of exact flows.

Submodules load lazily so the CLI can pin thread pools before numpy starts.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "WaveGrid": "spectral",
    "SpectralField": "spectral",
    "to_spectral": "spectral",
    "to_physical": "spectral",
    "derivative": "spectral",
    "divergence": "spectral",
    "hs_inner": "spectral",
    "hs_norm": "spectral",
    "l2_norm": "spectral",
    "pointwise_product": "spectral",
    "leray_project": "spectral",
    "truncate": "spectral",
    "dealias": "spectral",
    "eval_at_points": "spectral",
    "FieldSeries": "transport",
    "TransportProblem": "transport",
    "advect": "transport",
    "solve_galerkin": "transport",
    "solve_characteristics": "transport",
    "gronwall_envelope": "transport",
    "ELState": "el",
    "PressurePair": "el",
    "weber_velocity": "el",
    "weber_projected_product": "el",
    "weber_gradient_swap": "el",
    "compose": "el",
    "material_derivative": "el",
    "recover_pressure": "el",
    "classical_residual": "el",
    "weber_residual": "el",
    "jacobian_determinant": "el",
    "IterationState": "fixed_point",
    "TheoremConstants": "fixed_point",
    "ELTrajectory": "fixed_point",
    "s_map": "fixed_point",
    "iterate_u_scheme": "fixed_point",
    "iterate_a_scheme": "fixed_point",
    "advance_windows": "fixed_point",
    "theorem_constant": "fixed_point",
    "VorticityState": "oracle",
    "TrajectoryEnsemble": "oracle",
    "classical_step": "oracle",
    "classical_solve": "oracle",
    "integrate_trajectories": "oracle",
    "back_to_labels_from_trajectories": "oracle",
    "exact_solution": "oracle",
    "ProbeSample": "diagnostics",
    "ConstantsReport": "diagnostics",
    "random_field": "diagnostics",
    "probe_constant": "diagnostics",
    "check_bound": "diagnostics",
    "gronwall_check": "diagnostics",
    "probe_all": "diagnostics",
    "invariant_sweep": "diagnostics",
    "SolverConfig": "config",
    "load_config": "config",
    "Checkpoint": "checkpoint",
    "save_checkpoint": "checkpoint",
    "load_checkpoint": "checkpoint",
    "ELEulerError": "errors",
    "ConfigError": "errors",
    "GridMismatchError": "errors",
    "CFLError": "errors",
    "SolverError": "errors",
    "ConvergenceError": "errors",
    "VolumePreservationWarning": "errors",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(import_module(f".{module}", __name__), name)


def __dir__():
    return __all__
