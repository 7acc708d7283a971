# NLS dynamics: interaction catalog, split-step evolution, ground states
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg, optimize, special
from scipy.integrate import solve_ivp

from config import settings
from exceptions import (
    H1CeilingExceeded,
    InvalidParameter,
    NanDetected,
    NonConvergentIteration,
    NoSignChange,
    NotDecayed,
)
from schemas import (
    EvolutionConfig,
    GridSpec,
    InteractionReport,
    MonomialTerm,
    NonlinearitySpec,
    PotentialTerm,
    RadialField,
    SaturatedTerm,
    Trajectory,
)
from services.radial_service import radial_service
from utils.cutoff_utils import lower_cutoff
from utils.numeric_utils import japanese_bracket, nearly_rational, trapezoid_weights

logger = logging.getLogger(__name__)

# Largest grid the ground-state sizing will try
GROUND_STATE_MAX_POINTS = 4096


def _abs_power(modulus: np.ndarray, p: float) -> np.ndarray:
    # 0^p = 0 for every p > 0
    out = np.zeros_like(modulus)
    positive = modulus > 0
    out[positive] = modulus[positive] ** p
    return out


def potential_profile(term: PotentialTerm, r: np.ndarray) -> np.ndarray:
    if isinstance(term.profile, np.ndarray):
        if term.profile.shape != r.shape:
            raise InvalidParameter(f"potential profile has {term.profile.shape} samples, grid has {r.shape}")
        return term.amplitude * np.asarray(term.profile, dtype=float)
    if term.profile == "gaussian":
        shape = np.exp(-(r ** 2) / (2.0 * term.width ** 2))
    elif term.profile == "exp_decay":
        shape = np.exp(-r / term.width)
    elif term.profile == "inverse_power":
        shape = japanese_bracket(r / term.width, -term.decay)
    else:
        raise InvalidParameter(f"unknown potential profile '{term.profile}'")
    return term.amplitude * shape


def temporal_factor(term: PotentialTerm, t: float) -> float:
    if term.temporal == "sin":
        return float(np.sin(term.omega * t))
    if term.temporal == "cos":
        return float(np.cos(term.omega * t))
    return 1.0


class DynamicsService:
    """Evolution of i d/dt psi = (H0 + N(|psi|, |x|, t)) psi on a radial grid"""

    # Interaction

    def evaluate_nonlinearity(self, spec: NonlinearitySpec, psi: RadialField, t: float) -> RadialField:
        """Real multiplier N(|psi|, |x|, t) sampled on the nodes"""
        modulus = np.abs(psi.values)
        r = psi.grid.nodes
        total = np.zeros(psi.grid.num_points)
        for term in spec.terms:
            if isinstance(term, MonomialTerm):
                total += term.sign * term.lam * _abs_power(modulus, term.p)
            elif isinstance(term, SaturatedTerm):
                power = _abs_power(modulus, term.p)
                with np.errstate(over="ignore", invalid="ignore"):
                    saturated = np.where(np.isinf(power), 1.0, power / (1.0 + power))
                total -= term.lam * saturated
            else:
                total += temporal_factor(term, t) * potential_profile(term, r)
        return RadialField(psi.grid, total)

    def check_frequencies(self, spec: NonlinearitySpec) -> List[str]:
        """Flag pairs of sin (or cos) frequencies that are nearly commensurate"""
        warnings = []
        for family in ("sin", "cos"):
            omegas = [t.omega for t in spec.terms if isinstance(t, PotentialTerm) and t.temporal == family]
            for i in range(len(omegas)):
                for j in range(i + 1, len(omegas)):
                    a, b = omegas[i], omegas[j]
                    if a == 0 or b == 0 or nearly_rational(a / b):
                        message = f"{family} frequencies {a:g} and {b:g} are nearly rationally related"
                        logger.warning(f"⚠️ {message}")
                        warnings.append(message)
        return warnings

    def energy(self, spec: NonlinearitySpec, psi: RadialField) -> Optional[float]:
        """
        Conserved energy int |grad psi|^2 + G(|psi|, |x|)

        Returns None when the interaction depends on time.
        """
        if not spec.time_independent:
            return None
        grid = psi.grid
        density = np.zeros(grid.num_points)
        modulus = np.abs(psi.values)
        rho = modulus ** 2
        for term in spec.terms:
            if isinstance(term, MonomialTerm):
                density += 2.0 * term.sign * term.lam * _abs_power(modulus, term.p + 2.0) / (term.p + 2.0)
            elif isinstance(term, SaturatedTerm):
                power = _abs_power(modulus, term.p)
                hyper = special.hyp2f1(1.0, 2.0 / term.p, 1.0 + 2.0 / term.p, -power)
                density -= term.lam * (rho - rho * hyper)
            else:
                density += potential_profile(term, grid.nodes) * rho
        kinetic = radial_service.gradient_norm_squared(psi)
        return float(kinetic + np.sum(grid.measure * density))

    def h1_norm(self, psi: RadialField) -> float:
        return radial_service.sobolev_norm(psi, 1.0)

    def monitors(self, spec: NonlinearitySpec, psi: RadialField, t: float) -> Dict[str, Optional[float]]:
        mass = radial_service.l2_norm(psi) ** 2
        return {"t": float(t), "mass": mass, "h1": self.h1_norm(psi), "energy": self.energy(spec, psi)}

    # Time stepping

    def strang_step(self, psi: RadialField, t: float, dt: float, spec: NonlinearitySpec) -> RadialField:
        """
        One Strang step: half interaction phase, free flow, half interaction phase

        The second half step re-evaluates N on the freely evolved state at t + dt.
        """
        if spec.is_zero:
            return radial_service.free_propagate(psi, dt)
        half = np.exp(-0.5j * dt * self.evaluate_nonlinearity(spec, psi, t).values)
        moved = radial_service.free_propagate(RadialField(psi.grid, half * psi.values), dt)
        half = np.exp(-0.5j * dt * self.evaluate_nonlinearity(spec, moved, t + dt).values)
        out = RadialField(psi.grid, half * moved.values)
        return out.check_finite(t + dt)

    def default_dt(self, grid: GridSpec) -> float:
        return 0.5 * np.pi / grid.k_max ** 2

    def _mask(self, grid: GridSpec, strength: float, dt: float) -> np.ndarray:
        # Absorbs on the outer tenth of the box
        r = grid.nodes
        s = np.clip((r - 0.9 * grid.r_max) / (0.1 * grid.r_max), 0.0, 1.0)
        return np.exp(-strength * dt * s ** 2)

    def evolve(self, config: EvolutionConfig) -> Trajectory:
        grid = config.grid
        spec = config.nonlinearity
        config.initial.require_grid(grid)
        if config.dt <= 0 or config.t_end < config.dt:
            raise InvalidParameter(f"need 0 < dt <= t_end, got dt = {config.dt:g}, t_end = {config.t_end:g}")
        if config.dt * grid.k_max ** 2 >= np.pi:
            raise InvalidParameter(
                f"dt = {config.dt:g} gives phase dt*k_max^2 = {config.dt * grid.k_max ** 2:.4g} >= pi"
            )
        self.check_frequencies(spec)

        steps = int(np.ceil(config.t_end / config.dt - 1e-9))
        dt = config.t_end / steps
        stride = max(1, int(config.snapshot_stride))
        mask = self._mask(grid, config.mask_strength, dt) if config.absorbing_mask else None

        psi = config.initial.copy().check_finite(0.0)
        first = self.monitors(spec, psi, 0.0)
        ceiling = config.h1_ceiling
        if ceiling is None:
            ceiling = settings.DEFAULT_H1_CEILING_FACTOR * first["h1"]

        times = [0.0]
        states = [psi]
        monitors = [first]
        logger.info(f"🚀 Evolving {steps} steps of dt = {dt:.4g} to t = {config.t_end:g} (stride {stride})")
        report_every = max(1, steps // 10)
        last_safe = 0.0
        for step in range(1, steps + 1):
            t_prev = (step - 1) * dt
            t = step * dt
            psi = self.strang_step(psi, t_prev, dt, spec)
            if mask is not None:
                psi = RadialField(grid, mask * psi.values)
            if not np.all(np.isfinite(psi.values)):
                raise NanDetected(t)
            record = self.monitors(spec, psi, t)
            if record["h1"] > ceiling:
                logger.error(f"❌ H1 norm {record['h1']:.4g} passed the ceiling {ceiling:.4g} at t = {t:.4g}")
                raise H1CeilingExceeded(last_safe, ceiling, record["h1"])
            last_safe = t
            monitors.append(record)
            if step % stride == 0 or step == steps:
                times.append(t)
                states.append(psi)
            if step % report_every == 0:
                logger.info(f"📊 t = {t:.4g}: mass {record['mass']:.10g}, H1 {record['h1']:.6g}")

        logger.info(f"✅ Evolution finished with {len(states)} snapshots")
        return Trajectory(
            grid=grid,
            nonlinearity=spec,
            dt=dt,
            times=np.asarray(times),
            states=states,
            monitors=monitors,
        )

    def time_reversed_trajectory(self, config: EvolutionConfig) -> Trajectory:
        """
        Backward run: states[i] is psi(-times[i])

        For an interaction that does not depend on time, psi(-tau) = conj(phi(tau))
        where phi solves the same equation from conj(psi_0).
        """
        if not config.nonlinearity.time_independent:
            raise InvalidParameter("time reversal needs a time-independent interaction")
        mirrored = EvolutionConfig(
            grid=config.grid,
            nonlinearity=config.nonlinearity,
            initial=RadialField(config.grid, np.conj(config.initial.values)),
            dt=config.dt,
            t_end=config.t_end,
            snapshot_stride=config.snapshot_stride,
            absorbing_mask=config.absorbing_mask,
            mask_strength=config.mask_strength,
            h1_ceiling=config.h1_ceiling,
        )
        logger.info("🔁 Running the time-reversed companion")
        forward = self.evolve(mirrored)
        return Trajectory(
            grid=forward.grid,
            nonlinearity=forward.nonlinearity,
            dt=forward.dt,
            times=forward.times,
            states=[RadialField(s.grid, np.conj(s.values)) for s in forward.states],
            monitors=forward.monitors,
        )

    # Ground state

    def _shoot(self, a: float, n: int, p: float, r_end: float):
        """Shot from q(0) = a for q'' + (n-1)/r q' - q + q^{p+1} = 0; -1 undershoot, +1 overshoot"""
        curvature = (a - a ** (p + 1.0)) / n
        if curvature >= 0:
            return -1, None
        r0 = 1e-6
        start = [a + 0.5 * curvature * r0 ** 2, curvature * r0]

        def rhs(r, y):
            q, dq = y
            return [dq, -(n - 1.0) / r * dq + q - np.sign(q) * abs(q) ** (p + 1.0)]

        def crossing(r, y):
            return y[0]
        crossing.terminal = True
        crossing.direction = -1

        def turning(r, y):
            return y[1]
        turning.terminal = True
        turning.direction = 1

        sol = solve_ivp(rhs, (r0, r_end), start, method="DOP853", rtol=1e-12, atol=1e-14,
                        events=(crossing, turning), dense_output=True)
        if sol.t_events[0].size:
            return 1, sol
        return -1, sol

    def _shot_profile(self, n: int, p: float) -> Tuple[float, Callable[[np.ndarray], np.ndarray], float]:
        """
        Bisected q(0) for omega = lam = 1 and the shot profile q(rho)

        The ODE solution is used until q falls below 1e-4 q(0); beyond that the
        linear tail rho^{-nu} K_nu(rho) is matched in value.

        Returns:
            (q(0), profile, rho_end) with q(rho_end) = 1e-10 q(0) on the tail
        """
        r_end = 40.0
        lo, hi = 1.0, 2.0
        for _ in range(40):
            outcome, _ = self._shoot(hi, n, p, r_end)
            if outcome > 0:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise NoSignChange(f"no overshooting initial value found up to q(0) = {hi:g} (n = {n}, p = {p:g})")

        while hi - lo > 1e-14 * hi:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            outcome, _ = self._shoot(mid, n, p, r_end)
            if outcome > 0:
                hi = mid
            else:
                lo = mid
        a = lo
        logger.info(f"🎯 Ground state q(0) = {a:.15g} (n = {n}, p = {p:g})")

        _, sol = self._shoot(a, n, p, r_end)
        grid_r = np.linspace(sol.t[0], sol.t[-1], 20001)
        q_dense = sol.sol(grid_r)[0]
        below = np.nonzero(q_dense < 1e-4 * a)[0]
        if below.size == 0:
            raise NotDecayed(f"shot profile did not decay below 1e-4 q(0) before r = {sol.t[-1]:.4g}")
        r_cut = grid_r[below[0]]
        nu = n / 2.0 - 1.0
        tail_scale = sol.sol(r_cut)[0] / (r_cut ** (-nu) * special.kv(nu, r_cut))

        def tail(rho):
            return tail_scale * rho ** (-nu) * special.kv(nu, rho)

        def profile(rho: np.ndarray) -> np.ndarray:
            q = np.empty_like(rho)
            inner = rho < r_cut
            q[inner] = sol.sol(np.maximum(rho[inner], sol.t[0]))[0]
            q[~inner] = tail(rho[~inner])
            return q

        rho_end = optimize.brentq(lambda rho: np.log(tail(rho) / (1e-10 * a)), r_cut, r_cut + 100.0)
        return a, profile, float(rho_end)

    def _newton_polish(self, grid: GridSpec, Q: np.ndarray, omega: float, lam: float, p: float,
                       max_iter: int = 30) -> np.ndarray:
        """
        Newton iteration for -H0 Q - omega Q + lam |Q|^p Q = 0 on the grid

        Works in u = sqrt(measure) Q, where H0 is the symmetric matrix
        T diag(k^2) T^T and the Jacobian is symmetric.
        """
        S = grid.sqrt_measure
        T = grid.transform
        H = (T * grid.eigen_wavenumbers ** 2) @ T.T
        u = S * Q
        for iteration in range(1, max_iter + 1):
            weight = lam * _abs_power(np.abs(u / S), p)
            F = -H @ u + (weight - omega) * u
            J = -H + np.diag((p + 1.0) * weight - omega)
            step = linalg.solve(J, -F, assume_a="sym")
            if not np.all(np.isfinite(step)):
                raise NonConvergentIteration(f"Newton step is not finite at iteration {iteration}")
            u = u + step
            change = np.linalg.norm(step) / np.linalg.norm(u)
            if change <= 1e-10:
                logger.debug(f"Newton polish converged in {iteration} iteration(s)")
                return u / S
        raise NonConvergentIteration(f"Newton polish did not settle in {max_iter} iterations (last step {change:.3g})")

    def _settle_ground_state(self, grid: GridSpec, Q: np.ndarray, omega: float, lam: float,
                             p: float) -> RadialField:
        if Q[-1] > 1e-8 * Q[0]:
            raise NotDecayed(
                f"Q(r_max)/Q(0) = {Q[-1] / Q[0]:.3g} exceeds 1e-8; enlarge r_max beyond {grid.r_max:g}"
            )
        where = f"N = {grid.num_points}, r_max = {grid.r_max:g}"
        try:
            polished = self._newton_polish(grid, Q, omega, lam, p)
        except NonConvergentIteration as e:
            raise InvalidParameter(f"ground state does not settle on {where}: {e.message}; raise grid.N") from e
        state = RadialField(grid, polished)
        residual = self.ground_state_residual(state, omega, lam, p)
        resolution = self.ground_state_resolution(state, omega)
        if residual > 1e-6 or resolution > 1e-6:
            raise InvalidParameter(
                f"ground state unresolved on {where}: residual {residual:.3g}, spectral tail {resolution:.3g} "
                f"(both must be <= 1e-6); raise grid.N"
            )
        logger.info(f"✅ Ground state on {where}: residual {residual:.3g}, spectral tail {resolution:.3g}")
        return state

    def shoot_ground_state(self, n: int, omega: float = 1.0, lam: float = 1.0, p: float = 0.5,
                           grid: Optional[GridSpec] = None) -> RadialField:
        """
        Positive decreasing solution of Q'' + (n-1)/r Q' - omega Q + lam Q^{p+1} = 0

        Shooting on Q(0) for omega = lam = 1, then Q(r) = (omega/lam)^{1/p} q(sqrt(omega) r)
        sampled on the grid and Newton-polished against the discrete H0.

        Args:
            n: spatial dimension
            grid: grid to sample on; by default r_max is set by the tail reaching
                1e-10 Q(0) and N doubles from 64 until Q is resolved

        Raises:
            InvalidParameter: bad parameters, or Q is unresolved on the given grid
            NotDecayed: Q(r_max) > 1e-8 Q(0) on the given grid
        """
        if omega <= 0 or lam <= 0 or p <= 0:
            raise InvalidParameter("ground state needs omega, lam, p > 0")
        if n < 3:
            raise InvalidParameter(f"dimension n = {n} must be at least 3")
        if grid is not None and grid.dimension != n:
            raise InvalidParameter(f"grid has dimension {grid.dimension}, ground state asked for n = {n}")

        _, profile, rho_end = self._shot_profile(n, p)
        amplitude = (omega / lam) ** (1.0 / p)

        if grid is not None:
            return self._settle_ground_state(grid, amplitude * profile(np.sqrt(omega) * grid.nodes), omega, lam, p)

        r_max = float(np.ceil(rho_end) / np.sqrt(omega))
        N = 64
        while True:
            candidate = radial_service.build_grid(n, r_max, N)
            try:
                return self._settle_ground_state(
                    candidate, amplitude * profile(np.sqrt(omega) * candidate.nodes), omega, lam, p)
            except InvalidParameter as e:
                if 2 * N > GROUND_STATE_MAX_POINTS:
                    raise InvalidParameter(f"ground state unresolved up to N = {N}: {e.message}") from e
                logger.info(f"🔍 Ground state unresolved at N = {N}; doubling")
                N *= 2

    def ground_state_residual(self, Q: RadialField, omega: float, lam: float, p: float) -> float:
        """max |Delta Q - omega Q + lam Q^{p+1}| over r < 0.9 r_max, relative to omega Q(0)"""
        laplacian = -radial_service.apply_h0(Q).values.real
        q = Q.values.real
        residual = laplacian - omega * q + lam * _abs_power(np.abs(q), p) * q
        interior = Q.grid.nodes < 0.9 * Q.grid.r_max
        return float(np.max(np.abs(residual[interior])) / (omega * np.max(np.abs(q))))

    def ground_state_resolution(self, Q: RadialField, omega: float) -> float:
        """Top-quarter spectral coefficients of Q, scaled by k_max^2 / omega, relative to the largest"""
        coeffs = np.abs(radial_service.to_spectral(Q).coeffs)
        top = coeffs[(3 * coeffs.size) // 4:]
        return float(Q.grid.k_max ** 2 / omega * top.max() / coeffs.max())

    # Diagnostics

    def duhamel_psi_D(self, traj: Trajectory, t: float) -> RadialField:
        """-i int_0^t e^{-i(t-s)H0} N(s) psi(s) ds by trapezoid over the snapshots"""
        index = traj.index_at(t)
        times = traj.times[: index + 1]
        weights = trapezoid_weights(times)
        t_k = float(traj.times[index])
        total = radial_service.zeros(traj.grid)
        for s, w, state in zip(times, weights, traj.states[: index + 1]):
            if w == 0:
                continue
            source = self.evaluate_nonlinearity(traj.nonlinearity, state, s).values * state.values
            total = total + radial_service.free_propagate(RadialField(traj.grid, source), t_k - s) * w
        return total * (-1j)

    def _interaction_row(self, traj: Trajectory, spec: NonlinearitySpec, index: int,
                         sigma: float, q: float) -> Dict[str, float]:
        grid = traj.grid
        r = grid.nodes
        t = float(traj.times[index])
        psi = traj.states[index]
        V = self.evaluate_nonlinearity(spec, psi, t).values
        source = RadialField(grid, V * psi.values)

        free = radial_service.free_propagate(traj.initial, t)
        psi_D = psi - free
        V_D = self.evaluate_nonlinearity(spec, psi_D, t).values
        source_D = RadialField(grid, V_D * psi_D.values)

        exterior = RadialField(grid, lower_cutoff(r, 1.0) * source.values)
        gradient = radial_service.radial_derivative(source)
        free_weighted = radial_service.weighted_norm(free, -sigma)
        denominator = free_weighted + free_weighted ** (2.0 / grid.dimension)
        difference = radial_service.weighted_norm(source - source_D, sigma)
        return {
            "lq": radial_service.lp_norm(source, q),
            "weighted_exterior": radial_service.weighted_norm(exterior, sigma),
            "sup_envelope": float(np.max(np.abs(V) * japanese_bracket(r, sigma))),
            "gradient_weighted": radial_service.weighted_norm(gradient, 2.0),
            "duhamel_ratio": difference / denominator if denominator > 0 else 0.0,
            "smooth_source": radial_service.sobolev_norm(
                RadialField(grid, japanese_bracket(r, 6.0) * source_D.values), 1.5),
            "smooth_dispersive": radial_service.sobolev_norm(
                RadialField(grid, japanese_bracket(r, -2.0) * psi_D.values), 1.5),
        }

    def check_interaction_assumptions(self, traj: Trajectory, spec: NonlinearitySpec, sigma: float,
                                      q: float = 2.0) -> InteractionReport:
        """Time series of the decay norms of N psi; flags values above 10x their median"""
        count = len(traj.states)
        with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
            rows = list(pool.map(lambda i: self._interaction_row(traj, spec, i, sigma, q), range(count)))

        series = {key: [row[key] for row in rows] for key in rows[0]} if rows else {}
        flags = []
        for name, values in series.items():
            values = np.asarray(values)
            median = float(np.median(values))
            if median <= 0:
                continue
            for t, value in zip(traj.times, values):
                if value > 10.0 * median:
                    flag = f"{name}: value {value:.4g} at t = {t:.4g} exceeds 10x the median {median:.4g}"
                    flags.append(flag)
                    logger.warning(f"⚠️ {flag}")
        logger.info(f"📊 Interaction checks over {count} snapshots, {len(flags)} flag(s)")
        return InteractionReport(times=[float(t) for t in traj.times], series=series, flags=flags)


dynamics_service = DynamicsService()
