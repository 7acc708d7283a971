# Channel decomposition psi(t) = e^{-itH0} psi_free + psi_loc(t)
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from exceptions import CoverageGap, InadmissiblePair, InvalidAlpha, InvalidParameter, NotConverged
from schemas import (
    CutoffSpec,
    EvolutionConfig,
    NonlinearitySpec,
    ProjectionParams,
    RadialField,
    ScatteringResult,
    StrichartzSweepReport,
    Trajectory,
)
from services.dilation_service import dilation_service
from services.dynamics_service import dynamics_service
from services.radial_service import radial_service
from utils.numeric_utils import geometric_grid, trapezoid_weights, trend_slope

logger = logging.getLogger(__name__)


def default_delta(sigma: float) -> float:
    """Midpoint of the admissible localization exponents (0, min{sigma/20 - 1/10, 1/40})"""
    top = min(sigma / 20.0 - 0.1, 1.0 / 40.0)
    if top <= 0:
        raise InvalidParameter(f"sigma = {sigma:g} leaves no admissible delta (needs sigma > 2)")
    return 0.5 * top


class ScatteringService:
    """Extraction of psi_free and the localized remainder"""

    def __init__(self, pull_domain: str = "open", open_ceiling: Optional[float] = None):
        self.pull_domain = pull_domain
        self.open_ceiling = open_ceiling

    def configure(self, pull_domain: str, open_ceiling: Optional[float] = None) -> None:
        if pull_domain not in ("open", "box"):
            raise InvalidParameter(f"pull domain must be 'open' or 'box', got '{pull_domain}'")
        self.pull_domain = pull_domain
        self.open_ceiling = open_ceiling

    # Free flow used for pulls

    def flow(self, f: RadialField, t: float, horizon: Optional[float] = None) -> RadialField:
        """e^{-itH0} f on the configured domain"""
        if t == 0:
            return f.copy()
        if self.pull_domain == "box":
            return radial_service.free_propagate(f, t)
        horizon = abs(t) if horizon is None else max(horizon, abs(t))
        ceiling = self.open_ceiling if self.open_ceiling is not None else 0.75 * f.grid.k_max
        return radial_service.open_propagator(f.grid, ceiling, horizon).apply(f, t)

    # Signed-time access to forward and backward runs

    def state_at(self, traj: Trajectory, time: float,
                 reversed_traj: Optional[Trajectory] = None) -> Tuple[RadialField, float]:
        """Nearest snapshot to a signed time, with its exact time"""
        tol = 0.5 * traj.dt
        if time >= 0:
            if time > traj.t_end + tol:
                raise CoverageGap(f"time {time:.4g} beyond the run end {traj.t_end:.4g}")
            i = traj.index_at(time)
            return traj.states[i], float(traj.times[i])
        if reversed_traj is None:
            raise CoverageGap(f"time {time:.4g} needs a time-reversed run")
        if -time > reversed_traj.t_end + tol:
            raise CoverageGap(f"time {time:.4g} before the reversed run start {-reversed_traj.t_end:.4g}")
        j = reversed_traj.index_at(-time)
        return reversed_traj.states[j], -float(reversed_traj.times[j])

    def _snapped_times(self, traj: Trajectory, start: float, stop: float,
                       reversed_traj: Optional[Trajectory]) -> np.ndarray:
        """Snapshot times (signed) lying in [start, stop]"""
        times = list(traj.times)
        if reversed_traj is not None:
            times += [-float(t) for t in reversed_traj.times[1:]]
        times = np.unique(np.asarray(times))
        tol = 0.5 * traj.dt
        return times[(times >= start - tol) & (times <= stop + tol)]

    # psi_D

    def compute_psi_D(self, traj: Trajectory, t: float) -> RadialField:
        """psi(t) - e^{-itH0} psi(0) at the nearest snapshot"""
        i = traj.index_at(t)
        t_k = float(traj.times[i])
        if t_k == 0:
            return radial_service.zeros(traj.grid)
        return traj.states[i] - radial_service.free_propagate(traj.initial, t_k)

    def _psi_D_signed(self, traj: Trajectory, time: float,
                      reversed_traj: Optional[Trajectory]) -> Tuple[RadialField, float]:
        state, t_k = self.state_at(traj, time, reversed_traj)
        if t_k == 0:
            return radial_service.zeros(traj.grid), t_k
        return state - radial_service.free_propagate(traj.initial, t_k), t_k

    # Route 1: P+- filtered limits

    def default_s_grid(self, traj: Trajectory, t: float) -> np.ndarray:
        s_max = 0.5 * (traj.t_end - t)
        if s_max <= 0:
            raise CoverageGap(f"no forward data after t = {t:.4g}")
        start = min(1.0, 0.5 * s_max)
        count = max(2, int(np.floor(np.log(s_max / start) / np.log(1.5))) + 1)
        return geometric_grid(start, s_max, count)

    def _cauchy(self, iterates: List[RadialField]) -> List[float]:
        return [radial_service.l2_norm(b - a) for a, b in zip(iterates[:-1], iterates[1:])]

    def cauchy_accepted(self, history: Sequence[Tuple[float, float]], reference: float) -> bool:
        """Last-quarter increments small and below the first-quarter median"""
        increments = np.array([inc for _, inc in history])
        if increments.size < 4:
            return bool(increments.size and np.all(increments <= 1e-3 * reference))
        quarter = max(1, increments.size // 4)
        head = np.median(increments[:quarter])
        tail = increments[-quarter:]
        small = bool(np.all(tail <= 1e-3 * reference))
        decreasing = bool(np.median(tail) < head) or bool(np.all(increments <= 1e-12 * max(reference, 1.0)))
        return small and decreasing

    def extract_free_pplus(self, traj: Trajectory, t: float, params: ProjectionParams,
                           s_grid: Optional[Sequence[float]] = None,
                           reversed_traj: Optional[Trajectory] = None,
                           require_convergence: bool = True) -> ScatteringResult:
        """
        psi_free from P+ e^{isH0} psi(t+s) and P- e^{-isH0} psi(t-s) as s grows

        The two limits sum to e^{-itH0} psi_free.
        """
        s_values = np.asarray(self.default_s_grid(traj, t) if s_grid is None else s_grid, dtype=float)
        if s_values.size == 0 or np.any(np.diff(s_values) <= 0):
            raise InvalidParameter("s_grid must be a nonempty increasing array")
        state_t, t = self.state_at(traj, t, reversed_traj)
        if t + s_values[-1] > traj.t_end + 0.5 * traj.dt:
            raise CoverageGap(
                f"run ends at {traj.t_end:.4g}, the pull needs t + s up to {t + s_values[-1]:.4g}"
            )
        incoming_available = reversed_traj is not None or t - s_values[-1] >= -0.5 * traj.dt
        horizon = float(s_values[-1] + abs(t))

        def outgoing(s):
            state, t_k = self.state_at(traj, t + s)
            pulled = self.flow(state, -(t_k - t), horizon)
            return dilation_service.apply_halfspace_projection(pulled, params, +1)

        def incoming(s):
            state, t_k = self.state_at(traj, t - s, reversed_traj)
            pulled = self.flow(state, t - t_k, horizon)
            return dilation_service.apply_halfspace_projection(pulled, params, -1)

        with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
            v = list(pool.map(outgoing, s_values))
            w = list(pool.map(incoming, s_values)) if incoming_available else None

        if w is None:
            logger.warning("⚠️ Incoming part unavailable (no backward data); using P- psi(t) as is")
            fixed = dilation_service.apply_halfspace_projection(state_t, params, -1)
            w = [fixed] * len(v)
        iterates = [a + b for a, b in zip(v, w)]
        increments = self._cauchy(iterates)
        history = [(float(s), float(inc)) for s, inc in zip(s_values[1:], increments)]

        psi_free = self.flow(iterates[-1], -t, horizon)
        reference = radial_service.l2_norm(traj.initial)
        accepted = self.cauchy_accepted(history, reference)
        logger.info(
            f"📊 P+- route at t = {t:g}: |psi_free| = {radial_service.l2_norm(psi_free):.6g}, "
            f"last increment {history[-1][1] if history else 0.0:.3g}, accepted = {accepted}"
        )
        result = ScatteringResult(
            psi_free=psi_free,
            route="pplus_filtered",
            cauchy_history=history,
            delta=0.0,
            base_time=t,
            accepted=accepted,
            details={"incoming_available": incoming_available,
                     "outgoing_norm": radial_service.l2_norm(v[-1]),
                     "incoming_norm": radial_service.l2_norm(w[-1])},
        )
        if require_convergence and not accepted:
            raise NotConverged("P+- filtered limit failed the Cauchy criterion", history)
        return result

    # Route 2: phase-space cutoff

    def check_alpha(self, alpha: float, n: int) -> None:
        top = 1.0 - 2.0 / n
        if not 0.0 < alpha < top:
            raise InvalidAlpha(f"alpha = {alpha:g} must lie in (0, {top:g}) for n = {n}")

    def extract_free_phase_space(self, traj: Trajectory, alpha: float,
                                 t_grid: Optional[Sequence[float]] = None,
                                 require_convergence: bool = True) -> ScatteringResult:
        """psi_free as the limit of F(|x| <= t^alpha) e^{itH0} psi(t)"""
        self.check_alpha(alpha, traj.grid.dimension)
        if t_grid is None:
            start = min(1.0, 0.5 * traj.t_end)
            count = max(2, int(np.floor(np.log(traj.t_end / start) / np.log(1.5))) + 1)
            t_grid = geometric_grid(start, traj.t_end, count)
        t_values = np.asarray(t_grid, dtype=float)
        if t_values.size == 0 or np.any(t_values <= 0) or np.any(np.diff(t_values) <= 0):
            raise InvalidParameter("t_grid must be positive and increasing")
        horizon = float(t_values[-1])

        def iterate(t):
            state, t_k = self.state_at(traj, t)
            pulled = self.flow(state, -t_k, horizon)
            cut = CutoffSpec.upper(t_k ** alpha)
            return radial_service.spatial_cutoff_apply(pulled, cut)

        with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
            iterates = list(pool.map(iterate, t_values))
        increments = self._cauchy(iterates)
        history = [(float(t), float(inc)) for t, inc in zip(t_values[1:], increments)]
        reference = radial_service.l2_norm(traj.initial)
        accepted = self.cauchy_accepted(history, reference)
        logger.info(
            f"📊 Phase-space route (alpha = {alpha:g}): |psi_free| = {radial_service.l2_norm(iterates[-1]):.6g}, "
            f"accepted = {accepted}"
        )
        result = ScatteringResult(
            psi_free=iterates[-1],
            route="phase_space_cutoff",
            cauchy_history=history,
            delta=0.0,
            base_time=0.0,
            accepted=accepted,
            details={"alpha": alpha},
        )
        if require_convergence and not accepted:
            raise NotConverged("phase-space cutoff limit failed the Cauchy criterion", history)
        return result

    # Cook integrals

    def _cook_integral(self, traj: Trajectory, t: float, T: float, params: ProjectionParams, sign: int,
                       source, reversed_traj: Optional[Trajectory]) -> RadialField:
        """sign * i int_0^T P^sign e^{sign isH0} source(time) ds, time = t + sign*s"""
        if T < 0:
            raise InvalidParameter(f"integration length T = {T:g} must be nonnegative")
        end = t + sign * T
        self.state_at(traj, end, reversed_traj)
        lo, hi = (t, end) if sign > 0 else (end, t)
        times = self._snapped_times(traj, lo, hi, reversed_traj)
        if sign < 0:
            times = times[::-1]
        s_values = np.abs(times - t)
        weights = trapezoid_weights(s_values)
        total = radial_service.zeros(traj.grid)
        for time, s, w in zip(times, s_values, weights):
            if w == 0:
                continue
            pulled = self.flow(source(time), -sign * s, T)
            total = total + pulled * w
        projected = dilation_service.apply_halfspace_projection(total, params, sign)
        return projected * (sign * 1j)

    def cook_correction(self, traj: Trajectory, t: float, T: float, params: ProjectionParams,
                        spec: NonlinearitySpec, sign: int,
                        reversed_traj: Optional[Trajectory] = None,
                        radius: float = settings.CUTOFF_RADIUS) -> RadialField:
        """
        C_sign(t, T) psi(t) with F = F(|x| >= radius)

        sign * i int_0^T P^sign e^{sign isH0} (F V psi - [H0, F] psi)(t + sign*s) ds
        """
        if sign not in (-1, 1):
            raise InvalidParameter(f"sign must be +1 or -1, got {sign}")
        far = CutoffSpec.lower(radius)

        def source(time):
            state, t_k = self.state_at(traj, time, reversed_traj)
            V = dynamics_service.evaluate_nonlinearity(spec, state, t_k).values
            localized = radial_service.spatial_cutoff_apply(RadialField(traj.grid, V * state.values), far)
            return localized - radial_service.commutator_h0(state, far)

        return self._cook_integral(traj, t, T, params, sign, source, reversed_traj)

    def smooth_correction(self, traj: Trajectory, t: float, T: float, params: ProjectionParams,
                          spec: NonlinearitySpec, sign: int,
                          reversed_traj: Optional[Trajectory] = None) -> RadialField:
        """sign * i int_0^T P^sign e^{sign isH0} V_D psi_D(t + sign*s) ds"""
        if sign not in (-1, 1):
            raise InvalidParameter(f"sign must be +1 or -1, got {sign}")

        def source(time):
            psi_D, t_k = self._psi_D_signed(traj, time, reversed_traj)
            V_D = dynamics_service.evaluate_nonlinearity(spec, psi_D, t_k).values
            return RadialField(traj.grid, V_D * psi_D.values)

        return self._cook_integral(traj, t, T, params, sign, source, reversed_traj)

    def operator_psi_loc(self, traj: Trajectory, t: float, params: ProjectionParams,
                         spec: NonlinearitySpec, reversed_traj: Optional[Trajectory] = None,
                         radius: float = settings.CUTOFF_RADIUS) -> RadialField:
        """C_+(t, T+) psi(t) + C_-(t, T-) psi(t) + F(|x| < radius) psi(t) over the available horizons"""
        state, t = self.state_at(traj, t, reversed_traj)
        near = radial_service.spatial_cutoff_apply(state, CutoffSpec.upper(radius))
        total = near + self.cook_correction(traj, t, traj.t_end - t, params, spec, +1, reversed_traj, radius)
        backward = t + (reversed_traj.t_end if reversed_traj is not None else 0.0)
        if backward > 0:
            total = total + self.cook_correction(traj, t, backward, params, spec, -1, reversed_traj, radius)
        return total

    # psi_loc

    def compute_psi_loc(self, traj: Trajectory, result: ScatteringResult, t: float,
                        params: ProjectionParams) -> Tuple[RadialField, Dict[str, float]]:
        """psi(t) - e^{-itH0} psi_free with its weighted and dilation norms"""
        state, t_k = self.state_at(traj, t)
        psi_loc = state - self.flow(result.psi_free, t_k)
        record = {
            "t": t_k,
            "l2": radial_service.l2_norm(psi_loc),
            "wdelta": radial_service.weighted_norm(psi_loc, result.delta),
            "a1": radial_service.l2_norm(dilation_service.apply_dilation_power(psi_loc, params, 1)),
            "a2": radial_service.l2_norm(dilation_service.apply_dilation_power(psi_loc, params, 2)),
        }
        result.psi_loc_series.append(record)
        return psi_loc, record

    def decompose(self, traj: Trajectory, params: ProjectionParams, route: str = "pplus_filtered",
                  sigma: float = 2.5, delta: Optional[float] = None, base_time: float = 0.0,
                  s_grid: Optional[Sequence[float]] = None, alpha: float = 0.3,
                  reversed_traj: Optional[Trajectory] = None, record_count: int = 40,
                  require_convergence: bool = True) -> ScatteringResult:
        """Extract psi_free along one route and fill the psi_loc and residual series"""
        logger.info(f"🚀 Decomposing along the {route} route")
        if route == "pplus_filtered":
            result = self.extract_free_pplus(traj, base_time, params, s_grid, reversed_traj, require_convergence)
        elif route == "phase_space_cutoff":
            result = self.extract_free_phase_space(traj, alpha, None, require_convergence)
        else:
            raise InvalidParameter(f"unknown route '{route}'")
        result.delta = default_delta(sigma) if delta is None else float(delta)

        indices = np.unique(np.linspace(0, len(traj.times) - 1, min(record_count, len(traj.times))).astype(int))
        spec = traj.nonlinearity
        for i in indices:
            t = float(traj.times[i])
            psi_loc, record = self.compute_psi_loc(traj, result, t, params)
            op_route = self.operator_psi_loc(traj, t, params, spec, reversed_traj)
            residual = radial_service.l2_norm(psi_loc - op_route)
            record["residual"] = residual
            result.residual_series.append((t, residual))

        self._summarize(traj, result)
        return result

    def _summarize(self, traj: Trajectory, result: ScatteringResult) -> None:
        reference = radial_service.l2_norm(traj.initial)
        free_mass = radial_service.l2_norm(result.psi_free) ** 2
        series = result.psi_loc_series
        if series and reference > 0:
            result.details["mass_budget"] = (free_mass + series[-1]["l2"] ** 2) / reference ** 2 - 1.0
            wdelta = np.array([row["wdelta"] for row in series])
            median = float(np.median(wdelta))
            result.details["flatness"] = float(wdelta.max() / median) if median > 0 else 1.0
        if len(result.residual_series) >= 4:
            half = result.residual_series[len(result.residual_series) // 2:]
            result.details["residual_trend"] = trend_slope([t for t, _ in half], [r for _, r in half])
        logger.info(
            f"✅ {result.route}: mass budget {result.details.get('mass_budget', float('nan')):.3g}, "
            f"flatness {result.details.get('flatness', float('nan')):.3g}"
        )

    def base_time_consistency(self, traj: Trajectory, params: ProjectionParams, t1: float, t2: float,
                              s_grid: Optional[Sequence[float]] = None,
                              reversed_traj: Optional[Trajectory] = None) -> float:
        """|psi_free(t1) - psi_free(t2)| / |psi_0| for two base times"""
        if not t1 < t2:
            raise InvalidParameter("base times need t1 < t2")
        first = self.extract_free_pplus(traj, t1, params, s_grid, reversed_traj, require_convergence=False)
        second = self.extract_free_pplus(traj, t2, params, s_grid, reversed_traj, require_convergence=False)
        reference = radial_service.l2_norm(traj.initial)
        gap = radial_service.l2_norm(first.psi_free - second.psi_free)
        return gap / reference if reference > 0 else gap

    # Strichartz

    def check_admissible(self, q: float, r: float, n: int) -> None:
        if q < 2 or r < 2 or abs(2.0 / q + n / r - n / 2.0) > 1e-9:
            raise InadmissiblePair(f"(q, r) = ({q:g}, {r:g}) violates 2/q + {n}/r = {n}/2 with q >= 2")

    def strichartz_norm(self, traj: Trajectory, q: float, r: float) -> float:
        """(int ||psi(t)||_{L^r}^q dt)^{1/q} over the run"""
        self.check_admissible(q, r, traj.grid.dimension)
        values = np.array([radial_service.lp_norm(s, r) for s in traj.states])
        weights = trapezoid_weights(traj.times)
        return float(np.sum(weights * values ** q) ** (1.0 / q))

    def strichartz_sweep(self, config: EvolutionConfig, scales: Sequence[float], q: float, r: float
                         ) -> StrichartzSweepReport:
        """Strichartz norm over data size for rescaled initial data"""
        self.check_admissible(q, r, config.grid.dimension)

        def run(scale):
            scaled = replace(config, initial=config.initial * float(scale))
            traj = dynamics_service.evolve(scaled)
            return radial_service.l2_norm(scaled.initial), self.strichartz_norm(traj, q, r)

        with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
            outcomes = list(pool.map(run, scales))
        data = [d for d, _ in outcomes]
        norms = [s for _, s in outcomes]
        ratios = [s / d if d > 0 else 0.0 for d, s in outcomes]
        mean = float(np.mean(ratios)) if ratios else 0.0
        spread = float((max(ratios) - min(ratios)) / mean) if mean > 0 else 0.0
        logger.info(f"📊 Strichartz sweep over {len(ratios)} scales: spread {spread:.3g}")
        return StrichartzSweepReport(q=q, r=r, scales=[float(s) for s in scales], data_norms=data,
                                     strichartz_norms=norms, ratios=ratios, spread=spread)


scattering_service = ScatteringService()
