# schemas.py
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Annotated, Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, field_validator, model_validator

from exceptions import GridMismatch, NanDetected


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

def _as_list(value):
    if value is None or isinstance(value, list):
        return value
    if isinstance(value, tuple):
        return list(value)
    return [value]


FloatList = Annotated[List[float], BeforeValidator(_as_list)]
IntList = Annotated[List[int], BeforeValidator(_as_list)]
BenchItem = Literal["high_energy", "near_threshold", "weight_absorption", "weight_absorption_h32",
                   "time_smoothing", "projection_weight"]


class StrictBlock(BaseModel):
    # Unknown keys are configuration errors, not silently ignored
    model_config = ConfigDict(extra="forbid")


class GridBlock(StrictBlock):
    n: int = Field(5, ge=3, description="spatial dimension")
    r_max: float = Field(40.0, gt=0)
    N: int = Field(512, ge=16, description="radial nodes")


class EvolutionBlock(StrictBlock):
    dt: Optional[float] = Field(None, gt=0)
    t_end: float = Field(10.0, gt=0)
    stride: Optional[int] = Field(None, ge=1)
    mask: bool = False
    mask_strength: float = Field(2.0, gt=0)
    h1_ceiling_factor: float = Field(10.0, gt=1)


class InitialBlock(StrictBlock):
    kind: Literal["gaussian", "ground_state", "bump", "snapshot"] = "gaussian"
    amplitude: float = 1.0
    width: float = Field(1.0, gt=0)
    center: float = Field(0.0, ge=0)
    omega: float = Field(1.0, gt=0, description="ground-state frequency")
    path: Optional[str] = None


class TermBlock(StrictBlock):
    name: str
    kind: Literal["monomial", "saturated", "potential"]
    sign: int = -1
    lam: float = Field(1.0, gt=0)
    p: float = Field(1.0, gt=0)
    profile: Literal["gaussian", "exp_decay", "inverse_power"] = "gaussian"
    amplitude: float = 1.0
    width: float = Field(1.0, gt=0)
    decay: float = Field(8.0, gt=0, description="exponent of the inverse_power profile")
    temporal: Literal["constant", "sin", "cos"] = "constant"
    omega: float = Field(0.0, ge=0)

    @field_validator("sign")
    @classmethod
    def _unit_sign(cls, value: int) -> int:
        if value not in (-1, 1):
            raise ValueError("sign must be +1 (defocusing) or -1 (focusing)")
        return value


class NonlinearityBlock(StrictBlock):
    terms: List[TermBlock] = []

    @model_validator(mode="before")
    @classmethod
    def _from_flat(cls, data: Any) -> Any:
        # Flat documents give terms = a, b plus one sub-section per term id
        if not isinstance(data, dict):
            return data
        names = data.get("terms")
        if names is None:
            return {"terms": []}
        names = _as_list(names)
        if names and all(isinstance(n, dict) or isinstance(n, TermBlock) for n in names):
            return {"terms": names}
        terms = []
        for name in names:
            body = data.get(str(name), {})
            if not isinstance(body, dict):
                body = {}
            terms.append({"name": str(name), **body})
        return {"terms": terms}


class ProjectionBlock(StrictBlock):
    M: float = 10.0
    R: Optional[float] = Field(None, gt=0)
    weight_exponent: int = Field(2, ge=1)
    y_min: Optional[float] = None
    y_max: Optional[float] = None
    log_points: Optional[int] = Field(None, ge=256)


class ScatteringBlock(StrictBlock):
    route: Literal["pplus_filtered", "phase_space_cutoff", "both"] = "both"
    alpha: float = 0.3
    sigma: float = Field(2.5, gt=2)
    delta: Optional[float] = Field(None, gt=0)
    base_time: Optional[float] = Field(None, ge=0)
    s_grid: Optional[FloatList] = None
    pull_domain: Literal["open", "box"] = "open"
    time_reversed: bool = True
    cutoff_radius: float = Field(10.0, gt=0)
    open_ceiling: Optional[float] = Field(None, gt=0, description="defaults to 0.75 k_max")
    strichartz_scales: Optional[FloatList] = None
    strichartz_q: float = Field(2.0, ge=2)
    strichartz_r: Optional[float] = Field(None, ge=2, description="defaults to the admissible partner of q")


class BenchBlock(StrictBlock):
    num_probes: int = Field(8, ge=8)
    power_iters: int = Field(20, ge=20)
    t_grid: Optional[FloatList] = None
    items: Annotated[List[BenchItem], BeforeValidator(_as_list)] = [
        "high_energy", "near_threshold", "weight_absorption", "time_smoothing", "projection_weight"]
    sigma: float = Field(3.0, gt=1)
    l: float = Field(0.0, ge=0)
    c: float = Field(1.0, gt=0)
    epsilon: float = 0.1
    delta: Optional[float] = Field(None, gt=0)
    weight_exponents: IntList = [1, 2]
    signs: IntList = [1, -1]
    variant: Literal["l1_power", "half_derivative", "high_frequency", "low_frequency"] = "half_derivative"
    a: int = Field(1, ge=0, le=2)
    open_ceiling: float = Field(4.0, gt=0)
    t_max: float = Field(100.0, gt=1)


class ObservablesBlock(StrictBlock):
    kinds: Annotated[List[Literal["phase_space_cutoff", "spatial_cutoff", "identity"]], BeforeValidator(_as_list)] = ["phase_space_cutoff"]
    alpha: float = 0.3
    threshold: float = Field(10.0, gt=0)
    frame: Literal["heisenberg_free", "lab"] = "heisenberg_free"
    g_budget: Optional[float] = Field(None, ge=0)


class RunConfig(StrictBlock):
    grid: GridBlock = Field(default_factory=GridBlock)
    evolution: EvolutionBlock = Field(default_factory=EvolutionBlock)
    initial: InitialBlock = Field(default_factory=InitialBlock)
    nonlinearity: NonlinearityBlock = Field(default_factory=NonlinearityBlock)
    projection: ProjectionBlock = Field(default_factory=ProjectionBlock)
    scattering: ScatteringBlock = Field(default_factory=ScatteringBlock)
    bench: BenchBlock = Field(default_factory=BenchBlock)
    observables: ObservablesBlock = Field(default_factory=ObservablesBlock)
    seed: int = Field(0, ge=0, lt=2 ** 64)

    def cross_field_violations(self) -> List[str]:
        """Invariants spanning several blocks; returns every failure"""
        violations = []
        n = self.grid.n
        alpha_top = Fraction(n - 2, n)
        for label, alpha in (("scattering.alpha", self.scattering.alpha),
                             ("observables.alpha", self.observables.alpha)):
            if not 0.0 < alpha < float(alpha_top):
                violations.append(
                    f"{label} = {alpha:g} must lie in (0, {alpha_top}) for n = {n}"
                )

        R = self.projection.R
        if R is not None:
            if R <= 2.0 / np.pi:
                violations.append(f"projection.R = {R:g} must exceed 2/pi")
            N_w = self.projection.weight_exponent
            if R <= 2.0 * N_w / np.pi:
                violations.append(
                    f"projection.R = {R:g} must exceed 2N/pi = {2.0 * N_w / np.pi:.6g} for weight exponent N = {N_w}"
                )
        if self.projection.y_min is not None and self.projection.y_max is not None:
            if self.projection.y_min >= self.projection.y_max:
                violations.append("projection.y_min must be below projection.y_max")
        points = self.projection.log_points
        if points is not None and points & (points - 1):
            violations.append(f"projection.log_points = {points} must be a power of two")

        dt = self.evolution.dt
        if dt is not None:
            nu = n / 2.0 - 1.0
            k_max = (self.grid.N + nu / 2.0 - 0.25) * np.pi / self.grid.r_max
            if dt * k_max ** 2 >= np.pi:
                violations.append(
                    f"evolution.dt = {dt:g} gives phase dt*k_max^2 = {dt * k_max ** 2:.4g} >= pi"
                )
            if self.evolution.t_end < dt:
                violations.append("evolution.t_end must be at least evolution.dt")

        if not 0.0 < self.bench.epsilon < 0.5:
            violations.append(f"bench.epsilon = {self.bench.epsilon:g} must lie in (0, 1/2)")
        if not self.bench.l < self.bench.sigma:
            violations.append(f"bench.l = {self.bench.l:g} must lie in [0, sigma = {self.bench.sigma:g})")
        for sign in self.bench.signs:
            if sign not in (-1, 1):
                violations.append(f"bench.signs entries must be +1 or -1, got {sign}")
        if self.bench.t_grid is not None:
            t_grid = np.asarray(self.bench.t_grid, dtype=float)
            if np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
                violations.append("bench.t_grid must be positive and strictly increasing")
        if self.scattering.s_grid is not None:
            s_grid = np.asarray(self.scattering.s_grid, dtype=float)
            if np.any(s_grid < 0) or np.any(np.diff(s_grid) <= 0):
                violations.append("scattering.s_grid must be nonnegative and strictly increasing")

        if self.scattering.strichartz_scales is not None:
            if any(s <= 0 for s in self.scattering.strichartz_scales):
                violations.append("scattering.strichartz_scales must be positive")
            q, r = self.strichartz_pair()
            if r < 2 or abs(2.0 / q + n / r - n / 2.0) > 1e-9:
                violations.append(f"scattering (q, r) = ({q:g}, {r:g}) violates 2/q + {n}/r = {n}/2")

        if self.initial.kind == "snapshot" and not self.initial.path:
            violations.append("initial.path is required when initial.kind = snapshot")
        if self.initial.kind == "ground_state":
            focusing = [t for t in self.nonlinearity.terms if t.kind == "monomial" and t.sign == -1]
            if not focusing:
                violations.append("initial.kind = ground_state needs a focusing monomial term")
        names = [t.name for t in self.nonlinearity.terms]
        if len(set(names)) != len(names):
            violations.append("nonlinearity.terms contains duplicate ids")
        return violations

    def strichartz_pair(self) -> Tuple[float, float]:
        """(q, r) with r filled from 2/q + n/r = n/2 when unset"""
        q = self.scattering.strichartz_q
        r = self.scattering.strichartz_r
        if r is None:
            n = self.grid.n
            r = 2.0 * n / (n - 4.0 / q)
        return q, r

    def to_flat_dict(self) -> Dict[str, Any]:
        """Nested plain dict in the shape of the flat document"""
        data = self.model_dump()
        terms = data["nonlinearity"].pop("terms")
        nonlinearity: Dict[str, Any] = {"terms": [t["name"] for t in terms]}
        for term in terms:
            body = dict(term)
            name = body.pop("name")
            nonlinearity[name] = body
        data["nonlinearity"] = nonlinearity
        return data


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class EstimateRow(BaseModel):
    lemma_item: str
    params: str
    t: float
    norm: float
    stderr: float


class EstimateReport(BaseModel):
    lemma_item: str
    sign: int
    params: Dict[str, float]
    rows: List[EstimateRow]
    fit: Dict[str, float] = {}
    predicted_slope: Optional[float] = None
    verdict: Literal["PASS", "FAIL", "OUT_OF_RANGE", "INFO"]
    notes: List[str] = []


class RpresReport(BaseModel):
    verdict: Literal["PASS", "FAIL"]
    positive_sum: float
    remainder_abs_sum: float
    sup_value: float
    g_budget: float
    points: int


class InteractionReport(BaseModel):
    times: List[float]
    series: Dict[str, List[float]]
    flags: List[str] = []


class StrichartzSweepReport(BaseModel):
    q: float
    r: float
    scales: List[float]
    data_norms: List[float]
    strichartz_norms: List[float]
    ratios: List[float]
    spread: float


class Manifest(BaseModel):
    schema_id: str = Field(alias="schema")
    command: str
    config_hash: str
    seed: int
    versions: Dict[str, str]
    wall_time_seconds: float
    started_at: str
    files: List[str]
    exit_code: int = 0

    model_config = {"populate_by_name": True}


# ---------------------------------------------------------------------------
# Numerical state
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridSpec:
    """Fourier-Bessel quadrature grid for radial functions in n dimensions"""

    dimension: int
    r_max: float
    num_points: int
    nodes: np.ndarray
    weights: np.ndarray
    eigen_wavenumbers: np.ndarray
    basis: np.ndarray
    measure: np.ndarray  # weights * r^(n-1)
    transform: np.ndarray  # orthogonal; coeffs = transform.T @ (sqrt(measure) * f)

    @property
    def key(self) -> Tuple[int, float, int]:
        return (self.dimension, self.r_max, self.num_points)

    @property
    def k_max(self) -> float:
        return float(self.eigen_wavenumbers[-1])

    @property
    def sqrt_measure(self) -> np.ndarray:
        return np.sqrt(self.measure)


def _same_grid(a: GridSpec, b: GridSpec) -> bool:
    return a is b or a.key == b.key


@dataclass(eq=False)
class RadialField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.num_points,):
            raise GridMismatch(
                f"field has {self.values.shape} samples, grid has {self.grid.num_points} nodes"
            )

    def check_finite(self, time: float = float("nan")) -> "RadialField":
        if not np.all(np.isfinite(self.values)):
            raise NanDetected(time)
        return self

    def require_grid(self, grid: GridSpec) -> None:
        if not _same_grid(self.grid, grid):
            raise GridMismatch(f"field grid {self.grid.key} differs from requested grid {grid.key}")

    def copy(self) -> "RadialField":
        return RadialField(self.grid, self.values.copy())

    def __add__(self, other: "RadialField") -> "RadialField":
        other.require_grid(self.grid)
        return RadialField(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        other.require_grid(self.grid)
        return RadialField(self.grid, self.values - other.values)

    def __mul__(self, scalar) -> "RadialField":
        return RadialField(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass(eq=False)
class SpectralField:
    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.grid.num_points,):
            raise GridMismatch(
                f"spectral field has {self.coeffs.shape} coefficients, grid has {self.grid.num_points} modes"
            )


@dataclass(frozen=True)
class CutoffSpec:
    kind: Literal["lower", "upper", "band"]
    thresholds: Tuple[float, ...]

    def __post_init__(self):
        expected = 2 if self.kind == "band" else 1
        if len(self.thresholds) != expected:
            raise ValueError(f"{self.kind} cutoff needs {expected} threshold(s)")
        if any(b <= 0 for b in self.thresholds):
            raise ValueError("cutoff thresholds must be positive")
        if self.kind == "band" and self.thresholds[1] <= self.thresholds[0]:
            raise ValueError("band cutoff needs b < c")

    @classmethod
    def lower(cls, b: float) -> "CutoffSpec":
        return cls("lower", (float(b),))

    @classmethod
    def upper(cls, b: float) -> "CutoffSpec":
        return cls("upper", (float(b),))

    @classmethod
    def band(cls, b: float, c: float) -> "CutoffSpec":
        return cls("band", (float(b), float(c)))


@dataclass(frozen=True)
class ProjectionParams:
    """P+- switch (M, R) and the log-coordinate grid; None window fields mean grid defaults"""

    M: float = 10.0
    R: float = 2.0
    y_min: Optional[float] = None
    y_max: Optional[float] = None
    num_points: Optional[int] = None

    @staticmethod
    def default_R(weight_exponent: int) -> float:
        return max(2.0, 1.1 * 2.0 * weight_exponent / np.pi)


@dataclass(eq=False)
class LogField:
    params: ProjectionParams
    samples: np.ndarray  # g(y_j) = e^{n y_j / 2} f(e^{y_j})
    y: np.ndarray
    dimension: int


@dataclass(frozen=True)
class MonomialTerm:
    sign: int
    lam: float
    p: float


@dataclass(frozen=True)
class SaturatedTerm:
    lam: float
    p: float


@dataclass(frozen=True, eq=False)
class PotentialTerm:
    profile: Union[str, np.ndarray]  # named analytic profile or samples on the grid nodes
    amplitude: float = 1.0
    width: float = 1.0
    decay: float = 8.0
    temporal: Literal["constant", "sin", "cos"] = "constant"
    omega: float = 0.0


Term = Union[MonomialTerm, SaturatedTerm, PotentialTerm]


@dataclass(frozen=True)
class NonlinearitySpec:
    terms: Tuple[Term, ...] = ()

    @property
    def is_zero(self) -> bool:
        return len(self.terms) == 0

    @property
    def time_independent(self) -> bool:
        return all(not isinstance(t, PotentialTerm) or t.temporal == "constant" for t in self.terms)

    @property
    def state_dependent(self) -> bool:
        return any(not isinstance(t, PotentialTerm) for t in self.terms)


@dataclass(eq=False)
class EvolutionConfig:
    grid: GridSpec
    nonlinearity: NonlinearitySpec
    initial: RadialField
    dt: float
    t_end: float
    snapshot_stride: int = 1
    absorbing_mask: bool = False
    mask_strength: float = 2.0
    h1_ceiling: Optional[float] = None


@dataclass(eq=False)
class Trajectory:
    grid: GridSpec
    nonlinearity: NonlinearitySpec
    dt: float
    times: np.ndarray
    states: List[RadialField]
    monitors: List[Dict[str, float]] = field(default_factory=list)
    reversed_of: Optional["Trajectory"] = None  # backward-time companion run

    def index_at(self, t: float) -> int:
        """Nearest snapshot index to time t"""
        return int(np.argmin(np.abs(self.times - t)))

    def state_at(self, t: float) -> RadialField:
        return self.states[self.index_at(t)]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def initial(self) -> RadialField:
        return self.states[0]


@dataclass(eq=False)
class ScatteringResult:
    psi_free: RadialField
    route: str
    cauchy_history: List[Tuple[float, float]]
    delta: float
    base_time: float
    psi_loc_series: List[Dict[str, float]] = field(default_factory=list)
    residual_series: List[Tuple[float, float]] = field(default_factory=list)
    accepted: bool = False
    details: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ProbeFactor:
    """One factor of a probed composition, applied right-to-left"""

    kind: Literal["weight", "cutoff", "multiplier", "free_flow", "projection", "dilation"]
    power: float = 0.0  # weight exponent a in <x>^a, dilation power
    cutoff: Optional[CutoffSpec] = None
    spectral: bool = True  # cutoff acts on |P| (True) or |x| (False)
    symbol: Optional[Callable[[np.ndarray], np.ndarray]] = None  # real multiplier m(k)
    time: float = 0.0  # free flow e^{-itH0}
    domain: Literal["box", "open"] = "box"
    ceiling: Optional[float] = None  # open-domain wavenumber ceiling
    sign: int = 1
    label: str = ""


@dataclass(eq=False)
class OperatorProbe:
    factors: List[ProbeFactor]
    in_space: Literal["l2", "weighted_l2", "l1_proxy", "h32_proxy"] = "l2"
    num_probes: int = 8
    power_iters: int = 20
    sigma: float = 0.0  # input weight for weighted/l1 families

    def __post_init__(self):
        if self.num_probes < 8:
            raise ValueError("num_probes must be at least 8")
        if self.power_iters < 20:
            raise ValueError("power_iters must be at least 20")


@dataclass(frozen=True)
class BenchContext:
    """Probe settings shared by every bench item"""

    params: ProjectionParams
    num_probes: int = 8
    power_iters: int = 20
    seed: int = 0
    open_ceiling: float = 4.0


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    kind: Literal["phase_space_cutoff", "spatial_cutoff", "custom", "identity"]
    alpha: float = 0.3
    threshold: float = 10.0
    symbol: Optional[Callable[[np.ndarray], np.ndarray]] = None  # m(r) in [0, 1] for custom
    frame: Literal["heisenberg_free", "lab"] = "heisenberg_free"
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or self.kind
