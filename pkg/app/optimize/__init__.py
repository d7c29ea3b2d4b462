from app.optimize.energy import (
    TERMS,
    EnergyBreakdown,
    GraspProblem,
    contact_loss,
    energy_and_gradient,
    energy_gradient,
    erf_loss,
    evaluate_terms,
    spf_loss,
    srf_loss,
    total_energy,
)
from app.optimize.optimizer import (
    GraspCandidate,
    export_trajectory,
    optimize_grasp,
    prepare_robot_contact,
    problem_seeds,
    sample_initial_wrist_poses,
    select_top_k,
    synthesize,
)

__all__ = [
    "TERMS",
    "EnergyBreakdown",
    "GraspCandidate",
    "GraspProblem",
    "contact_loss",
    "energy_and_gradient",
    "energy_gradient",
    "erf_loss",
    "evaluate_terms",
    "export_trajectory",
    "optimize_grasp",
    "prepare_robot_contact",
    "problem_seeds",
    "sample_initial_wrist_poses",
    "select_top_k",
    "spf_loss",
    "srf_loss",
    "synthesize",
    "total_energy",
]
