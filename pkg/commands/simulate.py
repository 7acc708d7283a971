# Simulate command
import logging
from dataclasses import replace
from typing import Tuple

from commands.runner import CommandContext
from schemas import EvolutionConfig, Trajectory
from services.dynamics_service import dynamics_service
from services.run_service import run_service
from services.storage_service import storage_service

logger = logging.getLogger(__name__)

TRAJECTORY_DIR = "trajectory"


def evolve(ctx: CommandContext) -> Tuple[Trajectory, EvolutionConfig]:
    """Run the evolution described by the config and store its snapshots"""
    evolution = run_service.build_evolution(ctx.config)
    traj = dynamics_service.evolve(evolution)
    storage_service.write_trajectory(ctx.out / TRAJECTORY_DIR, traj)
    if not traj.nonlinearity.is_zero:
        report = dynamics_service.check_interaction_assumptions(traj, traj.nonlinearity, ctx.config.scattering.sigma)
        storage_service.write_interaction(ctx.out, report)
    return traj, evolution


def load_or_evolve(ctx: CommandContext) -> Tuple[Trajectory, EvolutionConfig]:
    """Stored trajectory when --trajectory is given, a fresh run otherwise"""
    if ctx.trajectory is None:
        return evolve(ctx)
    spec = run_service.build_nonlinearity(ctx.config)
    traj = storage_service.read_trajectory(ctx.trajectory, spec)
    evolution = run_service.build_evolution(ctx.config, grid=traj.grid, initial=traj.initial)
    evolution = replace(evolution, dt=traj.dt, t_end=traj.t_end)
    logger.info(f"📂 Reusing {len(traj.states)} snapshots up to t = {traj.t_end:g}")
    return traj, evolution


def run(ctx: CommandContext) -> None:
    traj, _ = evolve(ctx)
    last = traj.monitors[-1]
    logger.info(f"📊 Final mass {last['mass']:.12g}, H1 {last['h1']:.6g}")
