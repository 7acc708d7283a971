# Radial grid and spectral calculus for H0 = -Laplacian
import logging
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg, special

from config import settings
from exceptions import GridMismatch, InvalidParameter
from schemas import CutoffSpec, GridSpec, RadialField, SpectralField
from utils.cutoff_utils import band_cutoff, dyadic_band, lower_cutoff, upper_cutoff
from utils.numeric_utils import bessel_zeros, japanese_bracket

logger = logging.getLogger(__name__)

Symbol = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=16)
def _build_grid_cached(n: int, r_max: float, N: int) -> GridSpec:
    nu = n / 2.0 - 1.0
    zeros = bessel_zeros(nu, N + 1)
    j = zeros[:N]
    j_last = zeros[N]

    nodes = j * r_max / j_last
    wavenumbers = j / r_max
    edge = np.abs(special.jv(nu + 1.0, j))

    # Quadrature for int h(r) r dr, moved to the r^(n-1) dr measure
    omega = 2.0 * r_max ** 2 / (j_last ** 2 * edge ** 2)
    weights = omega / nodes
    measure = omega * nodes ** (n - 2)

    # Sampled orthonormal eigenfunctions scaled by sqrt(measure); symmetric in (node, mode)
    sampled = 2.0 * special.jv(nu, np.outer(j, j) / j_last) / (j_last * np.outer(edge, edge))
    # Nearest orthogonal matrix (symmetric Lowdin step)
    u, _, vt = linalg.svd(sampled)
    transform = u @ vt
    # Keep the sign convention of the sampled modes
    signs = np.sign(np.sum(transform * sampled, axis=0))
    signs[signs == 0] = 1.0
    transform = transform * signs
    basis = transform / np.sqrt(measure)[:, None]

    for array in (nodes, weights, wavenumbers, basis, measure, transform):
        array.setflags(write=False)

    return GridSpec(
        dimension=n,
        r_max=r_max,
        num_points=N,
        nodes=nodes,
        weights=weights,
        eigen_wavenumbers=wavenumbers,
        basis=basis,
        measure=measure,
        transform=transform,
    )


class OpenPropagator:
    """
    Whole-space free flow compressed to the radial nodes

    The continuous Hankel transform is discretized on a uniform wavenumber
    grid below a smooth ceiling; nothing reflects off r_max, mass that leaves
    the domain is simply not sampled.
    """

    def __init__(self, grid: GridSpec, ceiling: float, horizon: float):
        self.grid = grid
        self.ceiling = float(ceiling)
        self.horizon = float(horizon)
        n = grid.dimension
        nu = n / 2.0 - 1.0

        # Aliased copies sit 2*pi/dk apart in r; keep them beyond the farthest travel
        extent = 1.25 * (2.0 * grid.r_max + 2.0 * self.ceiling * self.horizon)
        dk = 2.0 * np.pi / extent
        count = int(np.ceil(self.ceiling / dk))
        self.k = (np.arange(count) + 0.5) * dk
        self.envelope = upper_cutoff(self.k, self.ceiling)

        r = grid.nodes
        self.matrix = (
            np.sqrt(grid.measure)[:, None]
            * r[:, None] ** (-nu)
            * special.jv(nu, np.outer(r, self.k))
            * np.sqrt(self.k * dk)[None, :]
        )
        if self.ceiling > 0.8 * grid.k_max:
            logger.warning(
                f"⚠️ Open-domain ceiling {self.ceiling:.3g} is close to the grid limit {grid.k_max:.3g}"
            )
        logger.debug(f"🔧 Open propagator: {grid.num_points} nodes x {count} wavenumbers, horizon {self.horizon:g}")

    def apply_vector(self, u: np.ndarray, t: float, symbol: Optional[Symbol] = None) -> np.ndarray:
        """Act on sqrt(measure)-scaled samples"""
        spectrum = self.matrix.T @ u
        factor = self.envelope * np.exp(-1j * t * self.k ** 2)
        if symbol is not None:
            factor = factor * symbol(self.k)
        return self.matrix @ (factor * spectrum)

    def apply(self, f: RadialField, t: float, symbol: Optional[Symbol] = None) -> RadialField:
        f.require_grid(self.grid)
        s = self.grid.sqrt_measure
        return RadialField(self.grid, self.apply_vector(s * f.values, t, symbol) / s)


@lru_cache(maxsize=16)
def _derivative_matrix(key: Tuple[int, float, int]) -> np.ndarray:
    # d/dr [r^-nu J_nu(k r)] = -k r^-nu J_{nu+1}(k r)
    grid = _build_grid_cached(*key)
    nu = grid.dimension / 2.0 - 1.0
    r = grid.nodes
    k = grid.eigen_wavenumbers
    j = k * grid.r_max
    norm = np.sqrt(2.0) / (grid.r_max * np.abs(special.jv(nu + 1.0, j)))
    matrix = -(k * norm)[None, :] * r[:, None] ** (-nu) * special.jv(nu + 1.0, np.outer(r, k))
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=settings.OPEN_CACHE_SIZE)
def _open_cached(key: Tuple[int, float, int], ceiling: float, horizon: float) -> OpenPropagator:
    return OpenPropagator(_build_grid_cached(*key), ceiling, horizon)


class RadialService:
    """Spectral calculus on radial functions"""

    def build_grid(self, n: int, r_max: float, N: int) -> GridSpec:
        """
        Build the Fourier-Bessel quadrature grid

        Args:
            n: spatial dimension (>= 3)
            r_max: Dirichlet radius
            N: number of nodes (>= 16)
        """
        problems = []
        if int(n) != n or n < 3:
            problems.append(f"dimension n = {n} must be an integer >= 3")
        if int(N) != N or N < 16:
            problems.append(f"num_points N = {N} must be an integer >= 16")
        if not r_max > 0:
            problems.append(f"r_max = {r_max} must be positive")
        if problems:
            raise InvalidParameter("; ".join(problems))
        cached = _build_grid_cached.cache_info().currsize
        grid = _build_grid_cached(int(n), float(r_max), int(N))
        if _build_grid_cached.cache_info().currsize > cached:
            logger.info(f"📐 Built grid n={n}, r_max={r_max:g}, N={N}, k_max={grid.k_max:.4g}")
        return grid

    # Fields

    def field(self, grid: GridSpec, func: Callable[[np.ndarray], np.ndarray]) -> RadialField:
        return RadialField(grid, func(grid.nodes))

    def zeros(self, grid: GridSpec) -> RadialField:
        return RadialField(grid, np.zeros(grid.num_points, dtype=complex))

    def gaussian(self, grid: GridSpec, amplitude: float = 1.0, width: float = 1.0,
                 center: float = 0.0) -> RadialField:
        r = grid.nodes
        return RadialField(grid, amplitude * np.exp(-((r - center) ** 2) / (2.0 * width ** 2)))

    def ground_truth_gaussian(self, n: int, t: float, r: np.ndarray) -> np.ndarray:
        """Closed form of e^{-itH0} e^{-|x|^2/2} in R^n at radii r"""
        z = 1.0 + 2.0j * t
        return z ** (-n / 2.0) * np.exp(-(np.asarray(r, dtype=float) ** 2) / (2.0 * z))

    def gaussian_free_field(self, grid: GridSpec, t: float) -> RadialField:
        return RadialField(grid, self.ground_truth_gaussian(grid.dimension, t, grid.nodes))

    # Transforms

    def to_spectral(self, f: RadialField, grid: Optional[GridSpec] = None) -> SpectralField:
        if grid is not None:
            f.require_grid(grid)
        g = f.grid
        return SpectralField(g, g.transform.T @ (g.sqrt_measure * f.values))

    def from_spectral(self, F: SpectralField, grid: Optional[GridSpec] = None) -> RadialField:
        g = F.grid
        if grid is not None and g.key != grid.key:
            raise GridMismatch(f"spectral field grid {g.key} differs from requested grid {grid.key}")
        return RadialField(g, (g.transform @ F.coeffs) / g.sqrt_measure)

    def apply_multiplier(self, f: RadialField, m: Symbol) -> RadialField:
        spectral = self.to_spectral(f)
        factor = np.asarray(m(f.grid.eigen_wavenumbers))
        return self.from_spectral(SpectralField(f.grid, spectral.coeffs * factor))

    def free_propagate(self, f: RadialField, t: float) -> RadialField:
        """e^{-itH0} f in the Dirichlet box"""
        if t == 0:
            return f.copy()
        return self.apply_multiplier(f, lambda k: np.exp(-1j * t * k ** 2))

    def open_propagator(self, grid: GridSpec, ceiling: float, horizon: float) -> OpenPropagator:
        # Round the horizon up so nearby requests share one matrix
        horizon = float(2.0 ** np.ceil(np.log2(max(horizon, 1.0))))
        return _open_cached(grid.key, float(ceiling), horizon)

    def apply_h0(self, f: RadialField) -> RadialField:
        return self.apply_multiplier(f, lambda k: k ** 2)

    def commutator_h0(self, f: RadialField, cutoff: CutoffSpec) -> RadialField:
        """[H0, F(|x|)] f"""
        cut = self.spatial_cutoff_apply
        return self.apply_h0(cut(f, cutoff)) - cut(self.apply_h0(f), cutoff)

    def littlewood_paley_project(self, f: RadialField, j: int) -> RadialField:
        if j < 0:
            raise InvalidParameter(f"Littlewood-Paley index j = {j} must be >= 0")
        return self.apply_multiplier(f, lambda k: dyadic_band(k, j))

    def low_frequency_part(self, f: RadialField) -> RadialField:
        """F(|P| <= 1) f, the complement of the dyadic pieces"""
        return self.apply_multiplier(f, lambda k: upper_cutoff(k, 1.0))

    # Cutoffs

    def smooth_cutoff(self, c: CutoffSpec, k):
        if c.kind == "lower":
            return lower_cutoff(k, c.thresholds[0])
        if c.kind == "upper":
            return upper_cutoff(k, c.thresholds[0])
        return band_cutoff(k, c.thresholds[0], c.thresholds[1])

    def spatial_cutoff_apply(self, f: RadialField, c: CutoffSpec) -> RadialField:
        return RadialField(f.grid, f.values * self.smooth_cutoff(c, f.grid.nodes))

    def frequency_cutoff_apply(self, f: RadialField, c: CutoffSpec) -> RadialField:
        return self.apply_multiplier(f, lambda k: self.smooth_cutoff(c, k))

    # Norms

    def inner(self, f: RadialField, g: RadialField) -> complex:
        g.require_grid(f.grid)
        return complex(np.sum(f.grid.measure * np.conj(f.values) * g.values))

    def l2_norm(self, f: RadialField) -> float:
        return float(np.sqrt(np.sum(f.grid.measure * np.abs(f.values) ** 2)))

    def lp_norm(self, f: RadialField, p: float) -> float:
        if np.isinf(p):
            return float(np.max(np.abs(f.values))) if f.values.size else 0.0
        return float(np.sum(f.grid.measure * np.abs(f.values) ** p) ** (1.0 / p))

    def weighted_norm(self, f: RadialField, sigma: float, p: float = 2.0) -> float:
        """||<x>^sigma f||_{L^p} by quadrature"""
        if p < 1:
            raise InvalidParameter(f"p = {p} must lie in [1, inf]")
        weighted = RadialField(f.grid, japanese_bracket(f.grid.nodes, sigma) * f.values)
        return self.lp_norm(weighted, p)

    def sobolev_norm(self, f: RadialField, a: float) -> float:
        """||<P>^a f||_{L^2}"""
        if a < 0 or a > 2:
            raise InvalidParameter(f"Sobolev order a = {a} must lie in [0, 2]")
        coeffs = self.to_spectral(f).coeffs
        k = f.grid.eigen_wavenumbers
        return float(np.linalg.norm((1.0 + k ** 2) ** (a / 2.0) * coeffs))

    def gradient_norm_squared(self, f: RadialField) -> float:
        """int |grad f|^2 = sum k^2 |c_k|^2"""
        coeffs = self.to_spectral(f).coeffs
        return float(np.sum(f.grid.eigen_wavenumbers ** 2 * np.abs(coeffs) ** 2))

    def radial_derivative(self, f: RadialField) -> RadialField:
        """d f / d r by differentiating the eigenfunction expansion"""
        coeffs = self.to_spectral(f).coeffs
        return RadialField(f.grid, _derivative_matrix(f.grid.key) @ coeffs)


radial_service = RadialService()
