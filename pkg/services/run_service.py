# Run Service
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from config import settings
from exceptions import InvalidParameter
from schemas import (
    BenchContext,
    EvolutionConfig,
    GridSpec,
    MonomialTerm,
    NonlinearitySpec,
    PotentialTerm,
    ProjectionParams,
    RadialField,
    RunConfig,
    SaturatedTerm,
)
from services.dynamics_service import dynamics_service
from services.radial_service import radial_service
from services.scattering_service import scattering_service
from services.storage_service import storage_service
from utils.cutoff_utils import upper_cutoff

logger = logging.getLogger(__name__)


class RunService:
    """Turns a validated RunConfig into the numerical objects the services consume"""

    def build_grid(self, config: RunConfig) -> GridSpec:
        block = config.grid
        return radial_service.build_grid(block.n, block.r_max, block.N)

    def build_nonlinearity(self, config: RunConfig) -> NonlinearitySpec:
        terms = []
        for term in config.nonlinearity.terms:
            if term.kind == "monomial":
                terms.append(MonomialTerm(sign=term.sign, lam=term.lam, p=term.p))
            elif term.kind == "saturated":
                terms.append(SaturatedTerm(lam=term.lam, p=term.p))
            else:
                terms.append(PotentialTerm(profile=term.profile, amplitude=term.amplitude, width=term.width,
                                           decay=term.decay, temporal=term.temporal, omega=term.omega))
        return NonlinearitySpec(terms=tuple(terms))

    def build_initial(self, config: RunConfig, grid: GridSpec) -> RadialField:
        block = config.initial
        if block.kind == "gaussian":
            return radial_service.gaussian(grid, block.amplitude, block.width, block.center)
        if block.kind == "bump":
            shape = upper_cutoff(np.abs(grid.nodes - block.center), block.width)
            return RadialField(grid, block.amplitude * shape)
        if block.kind == "ground_state":
            focusing = [t for t in config.nonlinearity.terms if t.kind == "monomial" and t.sign == -1]
            if not focusing:
                raise InvalidParameter("ground-state data needs a focusing monomial term")
            term = focusing[0]
            Q = dynamics_service.shoot_ground_state(grid.dimension, block.omega, term.lam, term.p, grid=grid)
            return Q * block.amplitude
        return storage_service.read_snapshot(Path(block.path), grid)

    def build_evolution(self, config: RunConfig, grid: Optional[GridSpec] = None,
                        initial: Optional[RadialField] = None) -> EvolutionConfig:
        grid = grid or self.build_grid(config)
        block = config.evolution
        initial = initial if initial is not None else self.build_initial(config, grid)
        dt = block.dt if block.dt is not None else min(dynamics_service.default_dt(grid), block.t_end)
        steps = int(np.ceil(block.t_end / dt - 1e-9))
        stride = block.stride or max(1, steps // settings.DEFAULT_MIN_SNAPSHOTS)
        h1_ceiling = block.h1_ceiling_factor * dynamics_service.h1_norm(initial)
        return EvolutionConfig(
            grid=grid,
            nonlinearity=self.build_nonlinearity(config),
            initial=initial,
            dt=dt,
            t_end=block.t_end,
            snapshot_stride=stride,
            absorbing_mask=block.mask,
            mask_strength=block.mask_strength,
            h1_ceiling=h1_ceiling if h1_ceiling > 0 else None,
        )

    def projection_params(self, config: RunConfig) -> ProjectionParams:
        block = config.projection
        R = block.R if block.R is not None else ProjectionParams.default_R(block.weight_exponent)
        return ProjectionParams(M=block.M, R=R, y_min=block.y_min, y_max=block.y_max,
                                num_points=block.log_points)

    def bench_context(self, config: RunConfig) -> BenchContext:
        return BenchContext(
            params=self.projection_params(config),
            num_probes=config.bench.num_probes,
            power_iters=config.bench.power_iters,
            seed=config.seed,
            open_ceiling=config.bench.open_ceiling,
        )

    def configure_scattering(self, config: RunConfig) -> None:
        scattering_service.configure(config.scattering.pull_domain, config.scattering.open_ceiling)
        logger.debug(f"🔧 Pulls on the {config.scattering.pull_domain} domain")


run_service = RunService()
