"""
Walk core: causal, translation invariant walks U = sum_q A_q S_q.

A walk is stored as its finite coin family {q: A_q} together with the lattice
scale. Everything else (momentum symbol, unitarity residuals, the mass
decomposition U = W sum_q A'_q S_q) is derived from it.
"""
import math
import logging
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import BranchAmbiguityError, PreconditionError, StructuralError
from .utils import dagger, spectral_norm

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10

Displacement = Tuple[int, ...]
# Displacement components must fit the int64 arrays the sweeps use.
MAX_SHIFT = 2**31


class LatticeScale(BaseModel):
    """
    Lattice spacing and timestep.

    Attributes:
        a (float): Lattice spacing.
        dt (float): Timestep.
    """
    a : float = Field(1.0, gt=0, allow_inf_nan=False)
    dt : float = Field(1.0, gt=0, allow_inf_nan=False)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_speed(self):
        if not math.isfinite(self.a / self.dt):
            raise ValueError("Lattice speed a/dt must be finite.")
        return self

    @property
    def speed(self) -> float:
        """The lattice speed a/dt."""
        return self.a / self.dt


class WalkSpec(BaseModel):
    """
    A causal translation invariant walk.

    Attributes:
        d (int): Spatial dimension.
        k (int): Internal dimension.
        coins (Dict[Tuple[int, ...], NDArray]): Displacement q -> coin A_q (k x k).
        scale (LatticeScale): Lattice spacing and timestep.
        name (str, optional): Label, e.g. the zoo entry the walk came from.
    """
    d : int = Field(..., ge=1)
    k : int = Field(..., ge=1)
    coins : Dict[Tuple[int, ...], np.ndarray]
    scale : LatticeScale = LatticeScale()
    name : Optional[str] = None

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="before")
    @classmethod
    def coerce_coins(cls, data):
        if not isinstance(data, dict) or "coins" not in data:
            return data
        coins = {}
        for q, matrix in dict(data["coins"]).items():
            key = tuple(int(x) for x in np.atleast_1d(q))
            if key in coins:
                raise StructuralError(f"Duplicate displacement {key}.")
            array = np.array(matrix, dtype=np.complex128)
            array.setflags(write=False)
            coins[key] = array
        return {**data, "coins": dict(sorted(coins.items()))}

    @model_validator(mode="after")
    def check_structure(self):
        check_structure(self)
        return self

    @property
    def support(self) -> Tuple[Displacement, ...]:
        return tuple(self.coins.keys())

    @property
    def displacements(self) -> NDArray[np.int64]:
        """Support as an integer array of shape (K, d)."""
        return np.array(self.support, dtype=np.int64).reshape(len(self.coins), self.d)

    @property
    def coin_stack(self) -> NDArray[np.complex128]:
        """Coins as an array of shape (K, k, k), ordered like ``support``."""
        return np.stack(list(self.coins.values()))

    @property
    def coin_count(self) -> int:
        """K, the number of non-zero coins."""
        return sum(1 for m in self.coins.values() if np.any(m != 0))

    @property
    def qmax(self) -> float:
        """Largest |q| over the non-zero coins."""
        return max(float(np.linalg.norm(q)) for q, m in self.coins.items() if np.any(m != 0))

    def with_scale(self, scale: LatticeScale) -> "WalkSpec":
        """The same coins embedded with another lattice scale."""
        return self.model_copy(update={"scale": scale})


def check_structure(spec: WalkSpec) -> None:
    """
    Raises StructuralError unless the coin family is finite, nonempty and k x k.
    """
    if not spec.coins:
        raise StructuralError("Coin support is empty.")
    for q, matrix in spec.coins.items():
        if len(q) != spec.d:
            raise StructuralError(f"Displacement {q} has {len(q)} components, expected d={spec.d}.")
        if any(abs(x) > MAX_SHIFT for x in q):
            raise StructuralError(f"Displacement {q} has a component beyond +-{MAX_SHIFT}.")
        if matrix.shape != (spec.k, spec.k):
            raise StructuralError(f"Coin at {q} has shape {matrix.shape}, expected ({spec.k}, {spec.k}).")
        if not np.all(np.isfinite(matrix)):
            raise StructuralError(f"Coin at {q} has non finite entries.")


class ValidationReport(BaseModel):
    """
    Unitarity residuals of a walk.

    Attributes:
        displacement_residuals (Dict): d' -> || sum_q A_q^dag A_{q+d'} || for d' != 0.
        completeness_residual (float): || sum_q A_q^dag A_q - 1 ||.
        tol (float): Tolerance the walk was checked against.
        passed (bool): Every residual is at most ``tol``.
    """
    displacement_residuals : Dict[Tuple[int, ...], float]
    completeness_residual : float
    tol : float
    passed : bool

    @property
    def max_residual(self) -> float:
        return max([self.completeness_residual, *self.displacement_residuals.values()])


def validate_unitarity(spec: WalkSpec, tol: float = DEFAULT_TOL) -> ValidationReport:
    """
    Checks U^dag U = 1 one relative displacement at a time.

    The coefficient of S_{d'} in U^dag U is sum_q A_q^dag A_{q+d'}, so unitarity
    requires it to vanish for every d' != 0 and to equal 1 for d' = 0.

    Args:
        spec (WalkSpec): The walk.
        tol (float): Residual tolerance (spectral norm).

    Returns:
        ValidationReport: Residuals and the pass flag.
    """
    check_structure(spec)
    sums: Dict[Displacement, NDArray] = {}
    identity = np.eye(spec.k, dtype=np.complex128)
    completeness = -identity
    for q, aq in spec.coins.items():
        aq_dag = aq.conj().T
        for p, ap in spec.coins.items():
            if p == q:
                completeness = completeness + aq_dag @ ap
                continue
            shift = tuple(pi - qi for pi, qi in zip(p, q))
            sums[shift] = sums.get(shift, 0) + aq_dag @ ap

    residuals = {shift: float(spectral_norm(m)) for shift, m in sorted(sums.items())}
    completeness_residual = float(spectral_norm(completeness))
    passed = completeness_residual <= tol and all(r <= tol for r in residuals.values())
    if not passed:
        logger.info("Walk %s fails unitarity: max residual %s", spec.name, max([completeness_residual, *residuals.values()]))
    return ValidationReport(
        displacement_residuals=residuals,
        completeness_residual=completeness_residual,
        tol=tol,
        passed=passed,
    )


def symbol_batch(spec: WalkSpec, momenta: NDArray) -> NDArray[np.complex128]:
    """
    Evaluates U(p) = sum_q A_q exp(-i a q.p) for a batch of momenta.

    Args:
        spec (WalkSpec): The walk.
        momenta (NDArray): Shape (N, d).

    Returns:
        NDArray[np.complex128]: Shape (N, k, k).
    """
    momenta = np.asarray(momenta, dtype=float).reshape(-1, spec.d)
    phases = np.exp(-1j * spec.scale.a * (momenta @ spec.displacements.T))
    return np.einsum("nq,qij->nij", phases, spec.coin_stack)


def momentum_symbol(spec: WalkSpec, p) -> NDArray[np.complex128]:
    """The k x k block of the walk at momentum ``p``."""
    return symbol_batch(spec, np.asarray(p, dtype=float).reshape(1, spec.d))[0]


class MassDecomposition(BaseModel):
    """
    U = W sum_q A'_q S_q with W = sum_q A_q and A'_q = W^dag A_q.

    Attributes:
        W (NDArray): Coin sum, unitary.
        coins_prime (Dict): q -> A'_q, summing to the identity.
        M (NDArray, optional): Mass operator with W = exp(-i M dt); None when massless.
        massless (bool): W is a global phase times the identity.
        phase (float): arg W[0, 0], the global phase used for the massless test.
    """
    W : np.ndarray
    coins_prime : Dict[Tuple[int, ...], np.ndarray]
    M : Optional[np.ndarray] = None
    massless : bool
    phase : float = 0.0

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


def principal_log_unitary(w: NDArray, tol: float = DEFAULT_TOL) -> NDArray[np.complex128]:
    """
    Principal logarithm of a unitary, eigenphases in (-pi, pi].

    Uses the complex Schur form, which is diagonal for normal matrices.

    Raises:
        BranchAmbiguityError: If an eigenphase sits on the cut at +-pi.
    """
    t, z = scipy.linalg.schur(w, output="complex")
    eigenvalues = np.diag(t)
    phases = np.angle(eigenvalues)
    if np.any(np.pi - np.abs(phases) <= tol):
        raise BranchAmbiguityError(
            "W has an eigenphase at +-pi; the mass operator is ambiguous. "
            "Perturb the walk or choose the branch explicitly."
        )
    log_diag = np.log(np.abs(eigenvalues)) + 1j * phases
    return z @ np.diag(log_diag) @ z.conj().T


def mass_decompose(spec: WalkSpec, tol: float = DEFAULT_TOL) -> MassDecomposition:
    """
    Splits the walk into its coin sum W and a walk whose coins sum to one.

    Args:
        spec (WalkSpec): A walk passing ``validate_unitarity``.
        tol (float): Tolerance for the massless test ||W - e^{i phi} 1|| <= tol.

    Returns:
        MassDecomposition: W, A'_q, the massless flag and, if massive,
        M = (i/dt) log W.
    """
    w = spec.coin_stack.sum(axis=0)
    w_dag = w.conj().T
    coins_prime = {q: w_dag @ aq for q, aq in spec.coins.items()}
    phase = float(np.angle(w[0, 0]))
    identity = np.eye(spec.k, dtype=np.complex128)
    massless = bool(spectral_norm(w - np.exp(1j * phase) * identity) <= tol)

    mass = None
    if not massless:
        mass = (1j / spec.scale.dt) * principal_log_unitary(w, tol)
        hermiticity = float(spectral_norm(mass - mass.conj().T))
        if hermiticity > math.sqrt(tol):
            logger.warning("Mass operator of %s is not Hermitian (residual %s); is W unitary?", spec.name, hermiticity)

    return MassDecomposition(W=w, coins_prime=coins_prime, M=mass, massless=massless, phase=phase)


def reassemble(decomp: MassDecomposition) -> Dict[Displacement, NDArray[np.complex128]]:
    """Coins W A'_q, the inverse of ``mass_decompose``."""
    return {q: decomp.W @ ap for q, ap in decomp.coins_prime.items()}


def ring_matrix(spec: WalkSpec, sites: int) -> NDArray[np.complex128]:
    """
    Dense matrix of a one dimensional walk on a periodic ring.

    The basis index of |n>|s> is n*k + s and S_q |n> = |n + q mod L>.

    Args:
        spec (WalkSpec): A walk with d = 1.
        sites (int): Ring length L.

    Returns:
        NDArray[np.complex128]: Shape (L*k, L*k).
    """
    if spec.d != 1:
        raise PreconditionError("Ring construction is only defined for d = 1.")
    if sites < 1:
        raise PreconditionError("A ring needs at least one site.")
    total = np.zeros((sites * spec.k, sites * spec.k), dtype=np.complex128)
    for (q,), aq in spec.coins.items():
        shift = np.roll(np.eye(sites), q, axis=0)
        total += np.kron(shift, aq)
    return total


def ring_fourier_blocks(spec: WalkSpec, sites: int) -> NDArray[np.complex128]:
    """
    Conjugates the ring matrix into the momentum basis p_j = 2 pi j / (L a).

    Returns:
        NDArray[np.complex128]: The (L*k, L*k) matrix F^dag U F, block diagonal
        for a translation invariant walk.
    """
    n = np.arange(sites)
    momenta = 2 * np.pi * n / (sites * spec.scale.a)
    fourier = np.exp(1j * np.outer(n, momenta) * spec.scale.a) / math.sqrt(sites)
    f = np.kron(fourier, np.eye(spec.k))
    return dagger(f) @ ring_matrix(spec, sites) @ f
