"""
Discrete versus continuum evolution.

The walk U and exp(-iHt) are both block diagonal over momentum, so every restricted
operator norm is a supremum over momenta of a k x k spectral norm. The ball
|p| <= lambda is sampled on a uniform grid followed by one local refinement
around the grid maximum.
"""
import math
import logging
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .continuum import BMatrices, b_matrices, energies_batch, hamiltonian_symbol, propagator_batch
from .exceptions import (
    BoundRangeError,
    BoundViolationError,
    CutoffError,
    FitUndefinedError,
    PreconditionError,
)
from .utils import spectral_norm, sweep
from .walk import LatticeScale, WalkSpec, mass_decompose, symbol_batch

logger = logging.getLogger(__name__)

# (e - 2): sum_{m >= 2} alpha^m / m! <= (e - 2) alpha^2 for alpha <= 1.
QUADRATIC_BOUND_CONSTANT = math.e - 2
REFINE_FACTOR = 3
# Norms at or below this are rounding noise: the walk is exactly its continuum limit.
EXACT_NORM = 1e-13
CHAIN_SLACK = 1e-12

WalkSource = Union[WalkSpec, Callable[[LatticeScale], WalkSpec]]


def _is_step_multiple(t: float, dt: float) -> bool:
    ratio = t / dt
    n = int(round(ratio))
    return n >= 1 and abs(ratio - n) <= 1e-9 * max(1.0, ratio)


class StudyConfig(BaseModel):
    """
    Operating point of a convergence study.

    Attributes:
        walk (str, optional): Zoo name of the walk under study.
        mass (float): Mass parameter passed to massive zoo builders.
        lam (float): Momentum cutoff (TOML/JSON key ``lambda``).
        grid_per_dim (int): Samples per dimension of the momentum ball.
        t (float, optional): Fixed evolution time; when set, n-step norms are reported too.
        ratio (float): Fixed lattice speed a/dt.
        a_schedule (List[float]): Descending lattice spacings.
    """
    walk : Optional[str] = None
    mass : float = Field(0.0, ge=0)
    lam : float = Field(..., gt=0, alias="lambda")
    grid_per_dim : int = Field(64, ge=16)
    t : Optional[float] = Field(None, gt=0)
    ratio : float = Field(1.0, gt=0)
    a_schedule : List[float] = Field(..., min_length=1)

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    @field_validator("a_schedule")
    @classmethod
    def validate_schedule(cls, value: List[float]):
        if any(a <= 0 for a in value):
            raise ValueError("Lattice spacings must be positive.")
        if any(x <= y for x, y in zip(value, value[1:])):
            raise ValueError("a_schedule must be strictly descending.")
        return value

    @model_validator(mode="after")
    def check_cutoff(self):
        for a in self.a_schedule:
            if self.lam >= math.pi / a:
                raise ValueError(f"Cutoff lambda={self.lam} is outside the Brillouin zone for a={a}.")
            if self.t is not None and not _is_step_multiple(self.t, a / self.ratio):
                raise ValueError(f"t={self.t} is not an integer number of steps for a={a}.")
        return self

    def scales(self) -> List[LatticeScale]:
        return [LatticeScale(a=a, dt=a / self.ratio) for a in self.a_schedule]


class BoundReport(BaseModel):
    """
    Measured restricted one-step norm against an analytic bound.

    Attributes:
        measured (float): sup over the sampled ball of ||exp(-iH dt) - U(p)||.
        analytic (float): Bound value.
        K (int): Number of non-zero coins.
        qmax (float): Largest |q| with A_q != 0.
        satisfied (bool): measured <= analytic.
        kind (str): 'quadratic' for 2(e-2)alpha^2, 'series' for 2(e^alpha - 1 - alpha).
        lam (float): Cutoff.
        a (float): Lattice spacing.
    """
    measured : float
    analytic : float
    K : int
    qmax : float
    satisfied : bool
    kind : str = "quadratic"
    lam : float
    a : float

    def csv_header(self) -> List[str]:
        return ["measured", "analytic", "K", "qmax", "satisfied", "kind", "lambda", "a"]

    def csv_rows(self) -> List[list]:
        return [[self.measured, self.analytic, self.K, self.qmax, self.satisfied, self.kind, self.lam, self.a]]


class MassSplitReport(BaseModel):
    """
    One-step norm of a massive walk against the sum of its mass split terms.

    Attributes:
        measured (float): Restricted one-step norm.
        mixing (float): sup ||exp(-iH dt) - W exp(-iH' dt)||.
        massless (float): sup ||exp(-iH' dt) - U'(p)||.
        satisfied (bool): measured <= mixing + massless.
        lam (float): Cutoff.
        a (float): Lattice spacing.
    """
    measured : float
    mixing : float
    massless : float
    satisfied : bool
    lam : float
    a : float

    def csv_header(self) -> List[str]:
        return ["measured", "mixing", "massless", "satisfied", "lambda", "a"]

    def csv_rows(self) -> List[list]:
        return [[self.measured, self.mixing, self.massless, self.satisfied, self.lam, self.a]]


class ScalingFit(BaseModel):
    """
    Log-log least squares fit of a norm against the lattice spacing.

    Attributes:
        exponent (float): Slope of log(norm) vs log(a).
        r2 (float): Coefficient of determination.
        a_values (List[float]): Lattice spacings.
        norms (List[float]): Measured norms.
        lams (List[float]): Cutoff used at each spacing.
        t (float, optional): Fixed evolution time of the n-step norms.
        n_step_norms (List[float], optional): n_step_norm at time t for each spacing.
    """
    exponent : float
    r2 : float
    a_values : List[float]
    norms : List[float]
    lams : List[float]
    t : Optional[float] = None
    n_step_norms : Optional[List[float]] = None

    def csv_header(self) -> List[str]:
        header = ["a", "lambda", "norm"]
        return header + ["n_step_norm"] if self.n_step_norms is not None else header

    def csv_rows(self) -> List[list]:
        columns = [self.a_values, self.lams, self.norms]
        if self.n_step_norms is not None:
            columns.append(self.n_step_norms)
        return [list(row) for row in zip(*columns)]


class DispersionTable(BaseModel):
    """
    Eigenphases per unit time of U(p) and eigenvalues of H(p) along a momentum path.

    Attributes:
        params (NDArray): Path parameter s in [0, 1], shape (N,).
        momenta (NDArray): Shape (N, d).
        phases (NDArray): Ascending theta_j(p)/dt, shape (N, k).
        energies (NDArray): Ascending eigenvalues of H(p), shape (N, k).
    """
    params : np.ndarray
    momenta : np.ndarray
    phases : np.ndarray
    energies : np.ndarray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def csv_header(self) -> List[str]:
        d, k = self.momenta.shape[1], self.phases.shape[1]
        return (["s"] + [f"p{i + 1}" for i in range(d)]
                + [f"theta{j + 1}_over_dt" for j in range(k)] + [f"energy{j + 1}" for j in range(k)])

    def csv_rows(self) -> List[list]:
        return [[s, *p, *theta, *energy]
                for s, p, theta, energy in zip(self.params, self.momenta, self.phases, self.energies)]


class WavePacket(BaseModel):
    """
    Gaussian packet psi(p) ~ exp(-(p - p0)^2 sigma^2 - i p.x0) chi.

    Attributes:
        x0 (List[float]): Center, length units.
        p0 (List[float]): Mean momentum.
        sigma (float): Position width (|psi(x)|^2 has standard deviation sigma).
        spin (NDArray): Internal state chi, normalised on construction.
    """
    x0 : List[float]
    p0 : List[float]
    sigma : float = Field(..., gt=0)
    spin : np.ndarray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("spin", mode="before")
    @classmethod
    def normalise_spin(cls, value):
        spin = np.asarray(value, dtype=np.complex128).reshape(-1)
        norm = np.linalg.norm(spin)
        if norm == 0:
            raise ValueError("Internal state must be non-zero.")
        spin = spin / norm
        spin.setflags(write=False)
        return spin

    @model_validator(mode="after")
    def check_packet(self):
        if len(self.x0) != len(self.p0):
            raise ValueError("x0 and p0 must have the same dimension.")
        return self


class PacketStep(BaseModel):
    step : int
    time : float
    mean_discrete : List[float]
    spread_discrete : float
    norm_discrete : float
    mean_continuum : List[float]
    spread_continuum : float
    norm_continuum : float


class PacketTrace(BaseModel):
    """
    Per-step observables of a packet under U(p)^n and exp(-iH(p)t).

    Attributes:
        steps (List[PacketStep]): Position mean, spread and norm for both evolutions.
        final_distance (float): L2 distance between the two final states.
        out_of_band_weight (float): Packet weight with |p| > lam.
        one_step_sup (float): max ||exp(-iH dt) - U(p)|| over packet momenta with |p| <= lam.
        bound (float): n * one_step_sup + 2 sqrt(out_of_band_weight).
        lam (float): Cutoff used for the bound.
    """
    steps : List[PacketStep]
    final_distance : float
    out_of_band_weight : float
    one_step_sup : float
    bound : float
    lam : float

    @property
    def satisfied(self) -> bool:
        return self.final_distance <= self.bound

    def velocity(self, kind: str = "discrete") -> NDArray[np.float64]:
        """Least squares slope of the mean position against time."""
        times = np.array([s.time for s in self.steps])
        means = np.array([getattr(s, f"mean_{kind}") for s in self.steps])
        return np.polyfit(times, means, 1)[0]

    def csv_header(self) -> List[str]:
        d = len(self.steps[0].mean_discrete) if self.steps else 0
        return (["step", "time"] + [f"mean_discrete_{i + 1}" for i in range(d)]
                + ["spread_discrete", "norm_discrete"]
                + [f"mean_continuum_{i + 1}" for i in range(d)]
                + ["spread_continuum", "norm_continuum"])

    def csv_rows(self) -> List[list]:
        return [[s.step, s.time, *s.mean_discrete, s.spread_discrete, s.norm_discrete,
                 *s.mean_continuum, s.spread_continuum, s.norm_continuum] for s in self.steps]


def continuum_data(spec: WalkSpec, tol: float = 1e-10) -> BMatrices:
    """Mass decomposition followed by the B matrices."""
    return b_matrices(mass_decompose(spec, tol), spec)


def _check_cutoff(spec: WalkSpec, lam: float) -> None:
    if lam <= 0:
        raise CutoffError(f"Cutoff must be positive, got {lam}.")
    if lam >= math.pi / spec.scale.a:
        raise CutoffError(f"Cutoff lambda={lam} reaches the Brillouin zone edge pi/a={math.pi / spec.scale.a}.")


def ball_grid(d: int, lam: float, grid: int) -> Tuple[NDArray[np.float64], float]:
    """
    Uniform grid over the cube [-lam, lam]^d restricted to the ball |p| <= lam.

    Returns:
        Tuple: Points of shape (N, d) and the grid spacing.
    """
    axis = np.linspace(-lam, lam, grid)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    inside = np.einsum("ni,ni->n", mesh, mesh) <= lam * lam * (1 + 1e-12)
    return mesh[inside], float(axis[1] - axis[0])


def restricted_sup(pointwise: Callable[[NDArray], NDArray], d: int, lam: float, grid: int,
                   threads: Optional[int] = None) -> float:
    """
    Estimates sup over |p| <= lam of a pointwise norm.

    The grid maximum is refined once on a 3x finer local grid spanning the
    neighbouring cells.
    """
    points, spacing = ball_grid(d, lam, grid)
    values = sweep(pointwise, points, threads)
    best = int(np.argmax(values))
    offsets = np.arange(-REFINE_FACTOR, REFINE_FACTOR + 1) * spacing / REFINE_FACTOR
    local = np.stack(np.meshgrid(*([offsets] * d), indexing="ij"), axis=-1).reshape(-1, d) + points[best]
    local = local[np.einsum("ni,ni->n", local, local) <= lam * lam]
    refined = float(np.max(pointwise(local))) if len(local) else 0.0
    grid_max = float(values[best])
    if refined > grid_max:
        logger.debug("Refinement raised the sup from %s to %s", grid_max, refined)
    return max(grid_max, refined)


def one_step_norm(spec: WalkSpec, bm: BMatrices, lam: float, grid: int = 64,
                  threads: Optional[int] = None) -> float:
    """
    sup_{|p| <= lam} ||exp(-iH(p)dt) - U(p)||_2.

    Raises:
        CutoffError: If lam >= pi/a.
    """
    _check_cutoff(spec, lam)
    dt = spec.scale.dt

    def pointwise(momenta: NDArray) -> NDArray:
        return spectral_norm(propagator_batch(bm, momenta, dt) - symbol_batch(spec, momenta))

    return restricted_sup(pointwise, spec.d, lam, grid, threads)


def _require_massless(spec: WalkSpec, tol: float) -> BMatrices:
    bm = continuum_data(spec, tol)
    if not bm.massless:
        raise PreconditionError(f"Walk {spec.name} is massive; the massless bound does not apply.")
    return bm


def appendix_a_bound(spec: WalkSpec, lam: float, grid: int = 64, tol: float = 1e-10,
                     threads: Optional[int] = None) -> BoundReport:
    """
    Compares the one-step norm with 2(e-2)(K qmax lam a)^2.

    Raises:
        BoundRangeError: If lam a > 1/(K qmax), where the quadratic bound is not valid.
        PreconditionError: If the walk is massive.
    """
    bm = _require_massless(spec, tol)
    K, qmax = spec.coin_count, spec.qmax
    alpha = K * qmax * lam * spec.scale.a
    if alpha > 1:
        raise BoundRangeError(
            f"lambda*a={lam * spec.scale.a} exceeds 1/(K qmax)={1 / (K * qmax)} (K={K}, qmax={qmax})."
        )
    measured = one_step_norm(spec, bm, lam, grid, threads)
    analytic = 2 * QUADRATIC_BOUND_CONSTANT * alpha**2
    return BoundReport(measured=measured, analytic=analytic, K=K, qmax=qmax,
                       satisfied=measured <= analytic, kind="quadratic", lam=lam, a=spec.scale.a)


def series_bound(spec: WalkSpec, lam: float, grid: int = 64, tol: float = 1e-10,
                 threads: Optional[int] = None) -> BoundReport:
    """
    Compares the one-step norm with the untruncated chain 2 sum_{m>=2} alpha^m/m!.

    Valid for every alpha = K qmax lam a.
    """
    bm = _require_massless(spec, tol)
    K, qmax = spec.coin_count, spec.qmax
    alpha = K * qmax * lam * spec.scale.a
    measured = one_step_norm(spec, bm, lam, grid, threads)
    analytic = 2 * (math.expm1(alpha) - alpha)
    return BoundReport(measured=measured, analytic=analytic, K=K, qmax=qmax,
                       satisfied=measured <= analytic, kind="series", lam=lam, a=spec.scale.a)


def mass_split_norms(spec: WalkSpec, bm: BMatrices, lam: float, grid: int = 64, tol: float = 1e-10,
                     threads: Optional[int] = None) -> Tuple[float, float]:
    """
    The two terms of the triangle split of a massive one-step norm.

    Returns:
        Tuple: sup ||exp(-iH dt) - W exp(-iH' dt)|| and sup ||exp(-iH' dt) - W^dag U(p)||,
        with H' = H - M.
    """
    _check_cutoff(spec, lam)
    w = mass_decompose(spec, tol).W
    w_dag = w.conj().T
    kinetic = bm.kinetic()
    dt = spec.scale.dt

    def mixing(momenta: NDArray) -> NDArray:
        return spectral_norm(propagator_batch(bm, momenta, dt) - w @ propagator_batch(kinetic, momenta, dt))

    def massless(momenta: NDArray) -> NDArray:
        return spectral_norm(propagator_batch(kinetic, momenta, dt) - w_dag @ symbol_batch(spec, momenta))

    return (restricted_sup(mixing, spec.d, lam, grid, threads),
            restricted_sup(massless, spec.d, lam, grid, threads))


def mass_split_report(spec: WalkSpec, bm: BMatrices, lam: float, grid: int = 64, tol: float = 1e-10,
                      threads: Optional[int] = None) -> MassSplitReport:
    """Measured one-step norm of a massive walk checked against ``mass_split_norms``."""
    measured = one_step_norm(spec, bm, lam, grid, threads)
    mixing, massless = mass_split_norms(spec, bm, lam, grid, tol, threads)
    return MassSplitReport(measured=measured, mixing=mixing, massless=massless,
                           satisfied=measured <= mixing + massless + CHAIN_SLACK, lam=lam, a=spec.scale.a)


def _step_count(spec: WalkSpec, t: float) -> int:
    if not _is_step_multiple(t, spec.scale.dt):
        raise PreconditionError(f"t={t} is not a positive integer multiple of dt={spec.scale.dt}.")
    return int(round(t / spec.scale.dt))


def n_step_norm(spec: WalkSpec, bm: BMatrices, lam: float, t: float, grid: int = 64,
                threads: Optional[int] = None) -> float:
    """
    sup_{|p| <= lam} ||exp(-iH(p)t) - U(p)^n|| with n = t/dt.

    Every sampled momentum is also checked against ||U^n - V^n|| <= n ||U - V||.

    Raises:
        PreconditionError: If t/dt is not a positive integer.
        BoundViolationError: If the telescoping inequality fails numerically.
    """
    _check_cutoff(spec, lam)
    n = _step_count(spec, t)
    dt = spec.scale.dt

    def pointwise(momenta: NDArray) -> NDArray:
        u = symbol_batch(spec, momenta)
        single = spectral_norm(propagator_batch(bm, momenta, dt) - u)
        multi = spectral_norm(propagator_batch(bm, momenta, t) - np.linalg.matrix_power(u, n))
        if np.any(multi > n * single + CHAIN_SLACK):
            raise BoundViolationError("||U^n - V^n|| <= n ||U - V|| failed; the walk is not unitary.")
        return multi

    return restricted_sup(pointwise, spec.d, lam, grid, threads)


def _resolve_walk(walk: WalkSource, scale: LatticeScale) -> WalkSpec:
    if isinstance(walk, WalkSpec):
        return walk.with_scale(scale)
    return walk(scale)


def loglog_fit(a_values: List[float], norms: List[float]) -> Tuple[float, float]:
    """Slope and r^2 of log(norm) against log(a)."""
    x, y = np.log(a_values), np.log(norms)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = y - y.mean()
    r2 = 1.0 - float(residual @ residual) / float(total @ total) if float(total @ total) > 0 else 1.0
    return float(slope), r2


def scaling_fit(walk: WalkSource, lam: Union[float, List[float]], a_schedule: List[float],
                ratio: Optional[float] = None, grid: int = 64, tol: float = 1e-10,
                threads: Optional[int] = None, t: Optional[float] = None) -> ScalingFit:
    """
    Fits one_step_norm ~ a^exponent at fixed lattice speed.

    Args:
        walk (WalkSpec | Callable): Either a scale independent walk, or a builder
            taking a LatticeScale (needed when the coins depend on dt, e.g. mass).
        lam (float | List[float]): Fixed cutoff, or one cutoff per spacing.
        a_schedule (List[float]): At least four descending spacings.
        ratio (float, optional): a/dt. Defaults to the walk's own speed.
        t (float, optional): Also report n_step_norm at this fixed time for every spacing.

    Raises:
        PreconditionError: Fewer than four spacings, or t is not a whole number of steps at some spacing.
        FitUndefinedError: A norm vanishes, the walk is exact.
    """
    if len(a_schedule) < 4:
        raise PreconditionError("A scaling fit needs at least four lattice spacings.")
    if ratio is None:
        if not isinstance(walk, WalkSpec):
            raise PreconditionError("ratio is required when the walk is given as a builder.")
        ratio = walk.scale.speed
    lams = list(lam) if isinstance(lam, (list, tuple)) else [float(lam)] * len(a_schedule)

    norms, n_step_norms = [], []
    for a, cutoff in zip(a_schedule, lams):
        spec = _resolve_walk(walk, LatticeScale(a=a, dt=a / ratio))
        bm = continuum_data(spec, tol)
        norm = one_step_norm(spec, bm, cutoff, grid, threads)
        logger.info("a=%s lambda=%s one-step norm=%s", a, cutoff, norm)
        norms.append(norm)
        if t is not None:
            n_step_norms.append(n_step_norm(spec, bm, cutoff, t, grid, threads))
            logger.info("a=%s t=%s n-step norm=%s", a, t, n_step_norms[-1])

    if min(norms) <= EXACT_NORM:
        raise FitUndefinedError("One-step norm vanishes: the walk is exactly its continuum limit.")
    exponent, r2 = loglog_fit(a_schedule, norms)
    logger.info("Scaling exponent %s (r2=%s)", exponent, r2)
    return ScalingFit(exponent=exponent, r2=r2, a_values=list(a_schedule), norms=norms, lams=lams,
                      t=t, n_step_norms=n_step_norms if t is not None else None)


def cutoff_schedule(a_schedule: List[float], lam0: float, a0: Optional[float] = None) -> List[float]:
    """
    lam(a) = lam0 (a/a0)^(-1/4), so lam -> infinity while lam^2 a -> 0.
    """
    a0 = a0 or a_schedule[0]
    return [lam0 * (a / a0) ** -0.25 for a in a_schedule]


def _eigenphases(u: NDArray) -> NDArray[np.float64]:
    return np.sort(np.angle(np.linalg.eigvals(u)), axis=-1)


def dispersion(spec: WalkSpec, bm: BMatrices, p_start, p_end, samples: int) -> DispersionTable:
    """
    Eigenphases/dt of U(p) and eigenvalues of H(p) along a straight segment.
    """
    p_start = np.asarray(p_start, dtype=float).reshape(spec.d)
    p_end = np.asarray(p_end, dtype=float).reshape(spec.d)
    params = np.linspace(0.0, 1.0, samples) if samples > 1 else np.zeros(max(samples, 0))
    momenta = p_start + params[:, None] * (p_end - p_start)
    if samples <= 0:
        empty = np.zeros((0, spec.k))
        return DispersionTable(params=params, momenta=momenta.reshape(0, spec.d), phases=empty, energies=empty)
    phases = _eigenphases(symbol_batch(spec, momenta)) / spec.scale.dt
    return DispersionTable(params=params, momenta=momenta, phases=phases, energies=energies_batch(bm, momenta))


def dispersion_deviation(spec: WalkSpec, bm: BMatrices, lam: float, grid: int = 64,
                         threads: Optional[int] = None) -> float:
    """sup_{|p| <= lam} max_j |theta_j(p)/dt - E_j(p)| with both spectra sorted."""
    _check_cutoff(spec, lam)

    def pointwise(momenta: NDArray) -> NDArray:
        phases = _eigenphases(symbol_batch(spec, momenta)) / spec.scale.dt
        return np.max(np.abs(phases - energies_batch(bm, momenta)), axis=-1)

    return restricted_sup(pointwise, spec.d, lam, grid, threads)


def positive_energy_state(bm: BMatrices, p) -> NDArray[np.complex128]:
    """Eigenvector of H(p) with the largest eigenvalue."""
    _, vectors = np.linalg.eigh(hamiltonian_symbol(bm, p))
    return vectors[:, -1]


def evolve_packet(spec: WalkSpec, bm: BMatrices, packet: WavePacket, t: float,
                  lam: Optional[float] = None, box_factor: float = 20.0, window: float = 8.0) -> PacketTrace:
    """
    Evolves a Gaussian packet under U(p)^n and exp(-iH(p)t) on a periodic momentum grid.

    The torus has L sites per dimension with L a >= box_factor * sigma plus the
    largest possible travel, so the grid spacing is 2 pi / (L a). Only momenta
    within ``window`` momentum widths of p0 carry weight and are stored.
    Position moments come from momentum derivatives: <x> = sum psi^dag i d_p psi,
    <x^2> = sum |d_p psi|^2, with centered differences of the exactly
    evaluated state at shifted momenta.

    Raises:
        PreconditionError: Packet narrower than ten sites, t not a multiple of dt,
            dimension mismatch, or a momentum window leaving the Brillouin zone.
    """
    d, k = spec.d, spec.k
    a, dt = spec.scale.a, spec.scale.dt
    n = _step_count(spec, t)
    p0 = np.asarray(packet.p0, dtype=float)
    x0 = np.asarray(packet.x0, dtype=float)
    if len(p0) != d or len(packet.spin) != k:
        raise PreconditionError(f"Packet dimensions do not match the walk (d={d}, k={k}).")
    if packet.sigma < 10 * a:
        raise PreconditionError(f"Packet width {packet.sigma} spans fewer than ten lattice sites (a={a}).")

    travel = n * a * spec.qmax
    box = box_factor * packet.sigma + 2 * (travel + float(np.max(np.abs(x0))))
    sites = int(math.ceil(box / a))
    spacing = 2 * math.pi / (sites * a)
    sigma_p = 1.0 / (2 * packet.sigma)
    half = int(math.ceil(window * sigma_p / spacing))
    center = np.round(p0 / spacing) * spacing
    axis = np.arange(-half, half + 1) * spacing
    momenta = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d) + center
    if np.any(np.abs(momenta) >= math.pi / a):
        raise PreconditionError("Packet momentum window leaves the Brillouin zone; use a wider packet or smaller p0.")

    if lam is None:
        lam = min(float(np.linalg.norm(p0)) + 6 * sigma_p, 0.9 * math.pi / a)
    radius = np.linalg.norm(momenta, axis=1)
    in_band = radius <= lam

    def amplitude(points: NDArray) -> NDArray:
        envelope = np.exp(-np.sum((points - p0) ** 2, axis=1) * packet.sigma**2 - 1j * points @ x0)
        return envelope[:, None] * packet.spin[None, :]

    normalisation = math.sqrt(float(np.sum(np.abs(amplitude(momenta)) ** 2)))
    delta = 1e-4 / box
    shifted = [momenta]
    for i in range(d):
        for sign in (1.0, -1.0):
            offset = np.zeros(d)
            offset[i] = sign * delta
            shifted.append(momenta + offset)

    discrete_ops = [symbol_batch(spec, grid) for grid in shifted]
    continuum_ops = [propagator_batch(bm, grid, dt) for grid in shifted]
    discrete = [amplitude(grid) / normalisation for grid in shifted]
    continuum = [state.copy() for state in discrete]

    def moments(states: List[NDArray]) -> Tuple[List[float], float, float]:
        psi = states[0]
        means, second = [], []
        for i in range(d):
            derivative = (states[1 + 2 * i] - states[2 + 2 * i]) / (2 * delta)
            means.append(float(np.real(np.sum(np.conj(psi) * 1j * derivative))))
            second.append(float(np.sum(np.abs(derivative) ** 2)))
        variance = sum(s - m * m for s, m in zip(second, means))
        return means, math.sqrt(max(variance, 0.0)), float(np.sum(np.abs(psi) ** 2))

    steps = []
    for step in range(n + 1):
        if step:
            discrete = [np.einsum("nij,nj->ni", op, psi) for op, psi in zip(discrete_ops, discrete)]
            continuum = [np.einsum("nij,nj->ni", op, psi) for op, psi in zip(continuum_ops, continuum)]
        mean_d, spread_d, norm_d = moments(discrete)
        mean_c, spread_c, norm_c = moments(continuum)
        steps.append(PacketStep(step=step, time=step * dt,
                                mean_discrete=mean_d, spread_discrete=spread_d, norm_discrete=norm_d,
                                mean_continuum=mean_c, spread_continuum=spread_c, norm_continuum=norm_c))

    final_distance = math.sqrt(float(np.sum(np.abs(discrete[0] - continuum[0]) ** 2)))
    initial = amplitude(momenta) / normalisation
    out_of_band = float(np.sum(np.abs(initial[~in_band]) ** 2))
    pointwise = spectral_norm(continuum_ops[0][in_band] - discrete_ops[0][in_band])
    one_step_sup = float(np.max(pointwise)) if len(pointwise) else 0.0
    bound = n * one_step_sup + 2 * math.sqrt(out_of_band)
    logger.info("Packet evolved %s steps on %s momenta; distance %s, bound %s",
                n, len(momenta), final_distance, bound)
    if final_distance > bound + CHAIN_SLACK:
        logger.warning("Packet distance %s exceeds its bound %s", final_distance, bound)

    return PacketTrace(steps=steps, final_distance=final_distance, out_of_band_weight=out_of_band,
                       one_step_sup=one_step_sup, bound=bound, lam=lam)
