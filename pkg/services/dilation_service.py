# Functional calculus of the dilation generator A = (x.P + P.x)/2
import logging
from dataclasses import replace
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy import fft, linalg
from scipy.interpolate import CubicSpline

from config import settings
from exceptions import InvalidParameter, WindowMismatch
from schemas import GridSpec, LogField, ProjectionParams, RadialField
from services.radial_service import _build_grid_cached
from utils.numeric_utils import japanese_bracket, next_power_of_two

logger = logging.getLogger(__name__)

Symbol = Callable[[np.ndarray], np.ndarray]


class LogPlan:
    """
    Resampling between the radial nodes and a uniform grid in y = log r

    In y the generator A is -i d/dy acting on g(y) = e^{ny/2} f(e^y), so
    functions of A are Fourier multipliers there. The spline resampling is
    isometrized (G^{-1/2} with G its Gram matrix) so that moving to the log
    grid and back is exact and m(A) stays self-adjoint for real m.
    """

    def __init__(self, grid: GridSpec, y_min: float, y_max: float, num_points: int):
        self.grid = grid
        self.y = np.linspace(y_min, y_max, num_points)
        self.dy = float(self.y[1] - self.y[0])
        r = grid.nodes
        n = grid.dimension

        # Zero values at r1/2 and at the Dirichlet wall close the spline
        knots = np.concatenate(([np.log(r[0] / 2.0)], np.log(r), [np.log(grid.r_max)]))
        identity = np.vstack([np.zeros(grid.num_points), np.eye(grid.num_points), np.zeros(grid.num_points)])
        spline = CubicSpline(knots, identity, axis=0, bc_type="natural", extrapolate=False)
        sampled = np.nan_to_num(spline(self.y))

        # Act on sqrt(measure)-scaled vectors u = sqrt(mu) f
        scale = r ** (n / 2.0) / grid.sqrt_measure
        resample = np.sqrt(self.dy) * sampled * scale[None, :]
        gram = resample.T @ resample
        eigvals, eigvecs = linalg.eigh(gram)
        floor = 1e-12 * eigvals.max()
        if eigvals.min() < floor:
            logger.warning(f"⚠️ Log grid of {num_points} points barely resolves the radial nodes")
        inv_sqrt = (eigvecs / np.sqrt(np.maximum(eigvals, floor))) @ eigvecs.T
        self.resample = resample @ inv_sqrt
        self.resample.setflags(write=False)

        self.xi = 2.0 * np.pi * fft.fftfreq(2 * num_points, d=self.dy)
        self._top_octave = np.abs(self.xi) > 0.5 * np.abs(self.xi).max()
        logger.debug(f"🔧 Log plan: {num_points} points on [{y_min:.4g}, {y_max:.4g}], dy = {self.dy:.3g}")

    @property
    def num_points(self) -> int:
        return self.y.size

    def to_log(self, u: np.ndarray) -> np.ndarray:
        return self.resample @ u

    def from_log(self, samples: np.ndarray) -> np.ndarray:
        return self.resample.T @ samples

    def multiply(self, samples: np.ndarray, symbol: Symbol, label: str = "") -> np.ndarray:
        """Linear (zero-padded) convolution by the multiplier symbol(xi)"""
        M = self.num_points
        padded = np.zeros(2 * M, dtype=complex)
        padded[:M] = samples
        spectrum = fft.fft(padded)
        power = np.abs(spectrum) ** 2
        total = power.sum()
        if total > 0:
            fraction = power[self._top_octave].sum() / total
            if fraction > settings.ALIASING_THRESHOLD:
                logger.warning(
                    f"⚠️ Aliasing: {fraction:.2e} of the mass sits in the top octave of xi {label}".rstrip()
                )
        return fft.ifft(spectrum * symbol(self.xi))[:M]


@lru_cache(maxsize=8)
def _plan_cached(key: Tuple[int, float, int], y_min: float, y_max: float, num_points: int) -> LogPlan:
    return LogPlan(_build_grid_cached(*key), y_min, y_max, num_points)


def halfspace_symbol(M: float, R: float, sign: int) -> Symbol:
    """(tanh((xi - M)/R) + 1)/2 for sign +1, its complement for sign -1"""
    def symbol(xi):
        outgoing = 0.5 * (np.tanh((xi - M) / R) + 1.0)
        return outgoing if sign > 0 else 1.0 - outgoing
    return symbol


class DilationService:
    """m(A) for real multipliers m, in particular P+-, A and A^2"""

    def resolve_params(self, grid: GridSpec, params: ProjectionParams) -> ProjectionParams:
        """Fill window and sample count from the grid"""
        r = grid.nodes
        y_min = params.y_min if params.y_min is not None else float(np.log(r[0] / 2.0))
        y_max = params.y_max if params.y_max is not None else float(np.log(grid.r_max))
        if y_min >= y_max:
            raise InvalidParameter(f"log window [{y_min:g}, {y_max:g}] is empty")
        num_points = params.num_points
        if num_points is None:
            knots = np.concatenate(([np.log(r[0] / 2.0)], np.log(r), [np.log(grid.r_max)]))
            spacing = float(np.min(np.diff(knots)))
            num_points = next_power_of_two(max(settings.LOG_GRID_MIN_POINTS, 2.0 * (y_max - y_min) / spacing))
        elif num_points < settings.LOG_GRID_MIN_POINTS or num_points & (num_points - 1):
            raise InvalidParameter(f"log grid size {num_points} must be a power of two >= 256")
        if params.R <= 2.0 / np.pi:
            raise InvalidParameter(f"R = {params.R:g} must exceed 2/pi")
        return replace(params, y_min=y_min, y_max=y_max, num_points=int(num_points))

    def plan(self, grid: GridSpec, params: ProjectionParams) -> LogPlan:
        p = self.resolve_params(grid, params)
        r = grid.nodes
        if p.y_min > np.log(r[0]) or p.y_max < np.log(r[-1]):
            raise WindowMismatch(
                f"log window [{p.y_min:.4g}, {p.y_max:.4g}] does not cover the nodes "
                f"[{np.log(r[0]):.4g}, {np.log(r[-1]):.4g}]"
            )
        return _plan_cached(grid.key, p.y_min, p.y_max, p.num_points)

    def to_log_coords(self, f: RadialField, params: ProjectionParams) -> LogField:
        plan = self.plan(f.grid, params)
        samples = plan.to_log(f.grid.sqrt_measure * f.values) / np.sqrt(plan.dy)
        return LogField(
            params=self.resolve_params(f.grid, params),
            samples=samples,
            y=plan.y,
            dimension=f.grid.dimension,
        )

    def from_log_coords(self, g: LogField, grid: GridSpec) -> RadialField:
        if g.dimension != grid.dimension:
            raise WindowMismatch(f"log field of dimension {g.dimension} cannot land on an n = {grid.dimension} grid")
        plan = self.plan(grid, g.params)
        if g.samples.shape != plan.y.shape or not np.allclose(g.y, plan.y):
            raise WindowMismatch("log field samples do not match the log grid of its parameters")
        u = plan.from_log(np.asarray(g.samples, dtype=complex) * np.sqrt(plan.dy))
        return RadialField(grid, u / grid.sqrt_measure)

    def apply_dilation_multiplier(self, f: RadialField, params: ProjectionParams, m: Symbol,
                                  label: str = "") -> RadialField:
        """m(A) f for a real symbol m"""
        plan = self.plan(f.grid, params)
        u = f.grid.sqrt_measure * f.values
        out = plan.from_log(plan.multiply(plan.to_log(u), m, label))
        return RadialField(f.grid, out / f.grid.sqrt_measure)

    def apply_halfspace_projection(self, f: RadialField, params: ProjectionParams, sign: int) -> RadialField:
        """P+ f (sign = +1) or P- f = f - P+ f (sign = -1)"""
        if sign not in (-1, 1):
            raise InvalidParameter(f"projection sign must be +1 or -1, got {sign}")
        symbol = halfspace_symbol(params.M, params.R, sign)
        return self.apply_dilation_multiplier(f, params, symbol, label="(P+)" if sign > 0 else "(P-)")

    def apply_dilation_power(self, f: RadialField, params: ProjectionParams, k: int) -> RadialField:
        if k not in (1, 2):
            raise InvalidParameter(f"dilation power k = {k} must be 1 or 2")
        return self.apply_dilation_multiplier(f, params, lambda xi: xi ** k, label=f"(A^{k})")

    def weighted_projection(self, f: RadialField, params: ProjectionParams, sign: int, N: float,
                            adjoint: bool = False) -> RadialField:
        """<x>^N P+- <x>^{-N} f, or its adjoint <x>^{-N} P+- <x>^N f"""
        if N > 0 and params.R <= 2.0 * N / np.pi:
            logger.warning(f"⚠️ R = {params.R:g} does not exceed 2N/pi for N = {N:g}; the weighted bound may fail")
        weight = japanese_bracket(f.grid.nodes, N)
        inner, outer = (weight, 1.0 / weight) if adjoint else (1.0 / weight, weight)
        projected = self.apply_halfspace_projection(RadialField(f.grid, inner * f.values), params, sign)
        return RadialField(f.grid, outer * projected.values)


dilation_service = DilationService()
