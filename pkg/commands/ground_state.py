# Ground-state command
import logging

import numpy as np

from commands.runner import CommandContext
from services.dynamics_service import dynamics_service
from services.radial_service import radial_service
from services.run_service import run_service
from services.storage_service import storage_service

logger = logging.getLogger(__name__)


def run(ctx: CommandContext) -> None:
    """Shoot Q on the configured grid for the first focusing monomial term (lam = 1, p = 0.5 without one)"""
    config = ctx.config
    grid = run_service.build_grid(config)
    focusing = [t for t in config.nonlinearity.terms if t.kind == "monomial" and t.sign == -1]
    lam, p = (focusing[0].lam, focusing[0].p) if focusing else (1.0, 0.5)
    omega = config.initial.omega

    Q = dynamics_service.shoot_ground_state(grid.dimension, omega, lam, p, grid=grid)
    summary = {
        "omega": omega,
        "lam": lam,
        "p": p,
        "peak": float(np.max(Q.values.real)),
        "mass": radial_service.l2_norm(Q) ** 2,
        "residual": dynamics_service.ground_state_residual(Q, omega, lam, p),
        "spectral_tail": dynamics_service.ground_state_resolution(Q, omega),
        "tail_ratio": float(Q.values.real[-1] / Q.values.real[0]),
    }
    storage_service.write_ground_state(ctx.out, Q, summary)
    logger.info(f"📊 peak {summary['peak']:.10g}, mass {summary['mass']:.6g}, residual {summary['residual']:.3g}")
