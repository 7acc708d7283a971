# Propagation observables <psi(t), B(t) psi(t)>
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

import numpy as np

from config import settings
from exceptions import DegenerateInput, InvalidAlpha
from schemas import CutoffSpec, ObservableSpec, RadialField, RpresReport, Trajectory
from services.dynamics_service import dynamics_service
from services.radial_service import radial_service
from services.scattering_service import scattering_service
from utils.numeric_utils import trapezoid_weights

logger = logging.getLogger(__name__)


class ObservableService:

    def _multiplier(self, spec: ObservableSpec, t: float, r: np.ndarray) -> np.ndarray:
        if spec.kind == "phase_space_cutoff":
            return radial_service.smooth_cutoff(CutoffSpec.upper(t ** spec.alpha), r)
        if spec.kind == "spatial_cutoff":
            return radial_service.smooth_cutoff(CutoffSpec.lower(spec.threshold), r)
        if spec.kind == "custom":
            return np.asarray(spec.symbol(r), dtype=float)
        return np.ones_like(r)

    def expectation(self, spec: ObservableSpec, psi: RadialField, t: float) -> float:
        """<B>_t; in the free Heisenberg frame B(t) = e^{-itH0} m(|x|) e^{itH0}"""
        if spec.kind == "identity":
            return radial_service.l2_norm(psi) ** 2
        state = psi
        if spec.frame == "heisenberg_free":
            state = scattering_service.flow(psi, -t)
        m = self._multiplier(spec, t, psi.grid.nodes)
        return float(np.sum(psi.grid.measure * m * np.abs(state.values) ** 2))

    def observable_series(self, traj: Trajectory, spec: ObservableSpec) -> List[Tuple[float, float]]:
        """(t, <B>_t) over the snapshots; the phase-space cutoff skips t = 0"""
        if spec.kind == "phase_space_cutoff":
            top = 1.0 - 2.0 / traj.grid.dimension
            if not 0.0 < spec.alpha < top:
                raise InvalidAlpha(f"alpha = {spec.alpha:g} must lie in (0, {top:g}) for n = {traj.grid.dimension}")
        if spec.kind == "custom" and spec.symbol is None:
            raise DegenerateInput("custom observable needs a symbol")
        pairs = [(float(t), s) for t, s in zip(traj.times, traj.states)
                 if spec.kind != "phase_space_cutoff" or t > 0]
        with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
            values = list(pool.map(lambda p: self.expectation(spec, p[1], p[0]), pairs))
        logger.info(f"📊 Observable {spec.label}: {len(values)} points")
        return [(t, v) for (t, _), v in zip(pairs, values)]

    def rpres_check(self, series: Sequence[Tuple[float, float]], g_budget: float) -> RpresReport:
        """
        Split the increments of <B>_t into their positive part and the rest

        PASS when the negative increments sum to at most g_budget and the
        positive ones to at most sup <B> + g_budget.
        """
        if len(series) < 10:
            raise DegenerateInput(f"relative propagation check needs at least 10 points, got {len(series)}")
        if g_budget < 0:
            raise DegenerateInput("g_budget must be nonnegative")
        values = np.array([v for _, v in series], dtype=float)
        steps = np.diff(values)
        positive = float(np.sum(np.maximum(steps, 0.0)))
        remainder = float(np.sum(np.abs(np.minimum(steps, 0.0))))
        sup_value = float(values.max())
        passed = remainder <= g_budget and positive <= sup_value + g_budget
        verdict = "PASS" if passed else "FAIL"
        icon = "✅" if passed else "❌"
        logger.info(f"{icon} RPRES: remainder {remainder:.3g} vs budget {g_budget:.3g} -> {verdict}")
        return RpresReport(verdict=verdict, positive_sum=positive, remainder_abs_sum=remainder,
                           sup_value=sup_value, g_budget=float(g_budget), points=len(series))

    def default_g_budget(self, traj: Trajectory) -> float:
        """int over the second half of the run of ||N psi||_{L^2} dt"""
        start = traj.index_at(0.5 * traj.t_end)
        times = traj.times[start:]
        if times.size < 2:
            return 0.0
        norms = []
        for t, state in zip(times, traj.states[start:]):
            V = dynamics_service.evaluate_nonlinearity(traj.nonlinearity, state, t).values
            norms.append(radial_service.l2_norm(RadialField(traj.grid, V * state.values)))
        return float(np.sum(trapezoid_weights(times) * np.asarray(norms)))


observable_service = ObservableService()
