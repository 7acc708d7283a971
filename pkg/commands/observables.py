# Observables command
import logging

from commands.runner import CommandContext
from commands.simulate import load_or_evolve
from schemas import ObservableSpec
from services.observable_service import observable_service
from services.radial_service import radial_service
from services.storage_service import storage_service

logger = logging.getLogger(__name__)


def run(ctx: CommandContext) -> None:
    """<B>_t series and the relative propagation check for each configured observable"""
    block = ctx.config.observables
    traj, _ = load_or_evolve(ctx)
    budget = block.g_budget
    if budget is None:
        budget = observable_service.default_g_budget(traj)
        logger.info(f"📊 Interaction budget from the run tail: {budget:.4g}")

    series, checks = {}, {}
    for kind in block.kinds:
        spec = ObservableSpec(kind=kind, alpha=block.alpha, threshold=block.threshold, frame=block.frame)
        points = observable_service.observable_series(traj, spec)
        series[spec.label] = points
        checks[spec.label] = observable_service.rpres_check(points, budget)
    storage_service.write_observables(ctx.out, series, checks)
    logger.info(f"✅ {len(series)} observable(s) over mass {radial_service.l2_norm(traj.initial) ** 2:.6g}")
