# Decompose command
import logging
from typing import Any, Dict, List, Optional

from commands.runner import CommandContext
from commands.simulate import load_or_evolve
from exceptions import NotConverged
from schemas import ProjectionParams, ScatteringBlock, ScatteringResult, Trajectory
from services.dynamics_service import dynamics_service
from services.radial_service import radial_service
from services.run_service import run_service
from services.scattering_service import scattering_service
from services.storage_service import storage_service

logger = logging.getLogger(__name__)

ROUTES = {
    "pplus_filtered": ["pplus_filtered"],
    "phase_space_cutoff": ["phase_space_cutoff"],
    "both": ["pplus_filtered", "phase_space_cutoff"],
}


def _consistency(traj: Trajectory, params: ProjectionParams, results: List[ScatteringResult],
                 reversed_traj: Optional[Trajectory], block: ScatteringBlock) -> Dict[str, Any]:
    """Cross-checks stored next to the routes"""
    reference = radial_service.l2_norm(traj.initial)
    scale = reference if reference > 0 else 1.0
    duhamel = dynamics_service.duhamel_psi_D(traj, traj.t_end)
    direct = scattering_service.compute_psi_D(traj, traj.t_end)
    extra: Dict[str, Any] = {
        "duhamel_consistency": radial_service.l2_norm(duhamel - direct) / scale,
        "max_psi_loc_l2": {r.route: max((row["l2"] for row in r.psi_loc_series), default=0.0) for r in results},
        "psi0_l2": reference,
    }
    if len(results) == 2:
        extra["route_agreement"] = radial_service.l2_norm(results[0].psi_free - results[1].psi_free) / scale
        logger.info(f"📊 Routes agree to {extra['route_agreement']:.3g} |psi_0|")

    base = block.base_time or 0.0
    if "pplus_filtered" in [r.route for r in results] and block.s_grid is None:
        later = base + 0.25 * (traj.t_end - base)
        if later - base >= traj.dt:
            extra["base_time_consistency"] = scattering_service.base_time_consistency(
                traj, params, base, later, reversed_traj=reversed_traj)
    return extra


def run(ctx: CommandContext) -> None:
    """Extract psi_free along the configured routes and record psi_loc"""
    config = ctx.config
    block = config.scattering
    traj, evolution = load_or_evolve(ctx)
    params = run_service.projection_params(config)

    reversed_traj = None
    if block.time_reversed:
        if traj.nonlinearity.time_independent:
            reversed_traj = dynamics_service.time_reversed_trajectory(evolution)
        else:
            logger.warning("⚠️ Interaction depends on time; no backward run for the incoming part")

    results = [
        scattering_service.decompose(
            traj, params, route,
            sigma=block.sigma,
            delta=block.delta,
            base_time=block.base_time or 0.0,
            s_grid=block.s_grid,
            alpha=block.alpha,
            reversed_traj=reversed_traj,
            require_convergence=False,
        )
        for route in ROUTES[block.route]
    ]
    storage_service.write_scattering(ctx.out, results, _consistency(traj, params, results, reversed_traj, block))

    if block.strichartz_scales:
        q, r = config.strichartz_pair()
        report = scattering_service.strichartz_sweep(evolution, block.strichartz_scales, q, r)
        storage_service.write_strichartz(ctx.out, report)

    rejected = [result for result in results if not result.accepted]
    if rejected:
        names = ", ".join(result.route for result in rejected)
        raise NotConverged(f"Cauchy criterion failed on: {names}", rejected[0].cauchy_history)
