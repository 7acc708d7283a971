# Verify-estimates command
import logging
from typing import List

from commands.runner import CommandContext
from schemas import BenchBlock, BenchContext, EstimateReport, GridSpec
from services.estimate_service import estimate_service
from services.run_service import run_service
from services.storage_service import storage_service

logger = logging.getLogger(__name__)


def _item_reports(item: str, grid: GridSpec, ctx: BenchContext, block: BenchBlock, sign: int
                  ) -> List[EstimateReport]:
    if item == "high_energy":
        return [estimate_service.verify_high_energy(grid, ctx, block.sigma, block.l, block.c, block.t_grid, sign)]
    if item == "near_threshold":
        return [estimate_service.verify_near_threshold(grid, ctx, block.sigma, block.l, block.epsilon,
                                                       block.t_grid, sign)]
    if item in ("weight_absorption", "weight_absorption_h32"):
        return [estimate_service.verify_weight_absorption(grid, ctx, block.sigma, block.delta, block.t_max, sign,
                                                          smooth_inputs=item.endswith("h32"))]
    if item == "time_smoothing":
        return [estimate_service.verify_time_smoothing(grid, ctx, block.variant, block.sigma, block.l, block.c,
                                                       block.a, block.t_max, sign)]
    return [estimate_service.verify_projection_weight_bound(grid, ctx, float(N), sign)
            for N in block.weight_exponents]


def run(ctx: CommandContext) -> None:
    """One report per (item, sign); every probed t becomes a CSV row"""
    config = ctx.config
    block = config.bench
    grid = run_service.build_grid(config)
    bench = run_service.bench_context(config)

    reports: List[EstimateReport] = []
    for item in block.items:
        for sign in block.signs:
            reports.extend(_item_reports(item, grid, bench, block, sign))
    storage_service.write_estimates(ctx.out, reports)

    tally = {}
    for report in reports:
        tally[report.verdict] = tally.get(report.verdict, 0) + 1
    summary = ", ".join(f"{verdict} {count}" for verdict, count in sorted(tally.items()))
    logger.info(f"📊 {len(reports)} estimate reports: {summary}")
