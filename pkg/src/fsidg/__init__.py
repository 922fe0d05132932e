"""Symmetric interior penalty DG for time-domain acoustic/elastic wave interaction.

Pipeline: :mod:`geometry` (meshes) -> :mod:`fem` (reference elements) ->
:mod:`assembly` (M, N, A and the load) -> :mod:`timestepper` (Newmark) ->
:mod:`diagnostics` (norms, energies, convergence studies).
"""
from .assembly import DofMap, PenaltyParams, PhysicalParams, assemble_system
from .config import SimulationConfig, load_config, parse_config, preset
from .diagnostics import convergence_study, dg_energy_norm
from .geometry import Mesh, build_annulus_mesh, read_msh, refine_uniform
from .timestepper import NewmarkParams, integrate

__version__ = "0.1.0"

__all__ = [
    "DofMap", "Mesh", "NewmarkParams", "PenaltyParams", "PhysicalParams", "SimulationConfig",
    "assemble_system", "build_annulus_mesh", "convergence_study", "dg_energy_norm", "integrate",
    "load_config", "parse_config", "preset", "read_msh", "refine_uniform",
]
