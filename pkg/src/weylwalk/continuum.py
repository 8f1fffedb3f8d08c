"""
Continuum limit H(p) = sum_i B_i p_i + M of a walk.
"""
import logging
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from .walk import MassDecomposition, WalkSpec, symbol_batch
from .utils import dagger, spectral_norm

logger = logging.getLogger(__name__)

HERMITICITY_TOL = 1e-8


class BMatrices(BaseModel):
    """
    First order momentum coefficients of the continuum Hamiltonian.

    Attributes:
        b (NDArray): Shape (d, k, k), B_i = (a/dt) sum_q A'_q q_i.
        mass (NDArray, optional): Hermitian k x k mass operator M.
        speed (float): The factor a/dt already folded into ``b``.
        hermiticity_residual (float): max_i ||B_i - B_i^dag||.
    """
    b : np.ndarray
    mass : Optional[np.ndarray] = None
    speed : float = 1.0
    hermiticity_residual : float = 0.0

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def d(self) -> int:
        return self.b.shape[0]

    @property
    def k(self) -> int:
        return self.b.shape[1]

    @property
    def massless(self) -> bool:
        return self.mass is None

    def kinetic(self) -> "BMatrices":
        """The same B matrices without the mass term."""
        return self.model_copy(update={"mass": None})


def b_matrices(decomp: MassDecomposition, spec: WalkSpec) -> BMatrices:
    """
    Builds B_i from the mass-free coins A'_q.

    Massless and massive walks share this path; for a massless walk with
    W = e^{i phi} 1, A'_q only differs from A_q by that global phase.
    """
    displacements = spec.displacements.astype(float)
    coins_prime = np.stack([decomp.coins_prime[q] for q in spec.support])
    b = spec.scale.speed * np.einsum("qi,qjk->ijk", displacements, coins_prime)
    residual = float(np.max(spectral_norm(b - dagger(b))))
    if residual > HERMITICITY_TOL:
        logger.warning("B matrices of %s are not Hermitian (residual %s); the walk is probably not unitary.", spec.name, residual)
    return BMatrices(b=b, mass=decomp.M, speed=spec.scale.speed, hermiticity_residual=residual)


def hamiltonian_batch(bm: BMatrices, momenta: NDArray) -> NDArray[np.complex128]:
    """H(p) for a batch of momenta of shape (N, d); returns (N, k, k)."""
    momenta = np.asarray(momenta, dtype=float).reshape(-1, bm.d)
    h = np.einsum("ni,ijk->njk", momenta, bm.b)
    if bm.mass is not None:
        h = h + bm.mass
    return h


def hamiltonian_symbol(bm: BMatrices, p) -> NDArray[np.complex128]:
    """H(p) = sum_i B_i p_i + M at a single momentum."""
    return hamiltonian_batch(bm, np.asarray(p, dtype=float).reshape(1, bm.d))[0]


def propagator_batch(bm: BMatrices, momenta: NDArray, t: float) -> NDArray[np.complex128]:
    """
    exp(-i H(p) t) for a batch of momenta, via the Hermitian eigendecomposition.
    """
    energies, vectors = np.linalg.eigh(hamiltonian_batch(bm, momenta))
    phases = np.exp(-1j * t * energies)
    return np.einsum("nij,nj,nkj->nik", vectors, phases, vectors.conj())


def energies_batch(bm: BMatrices, momenta: NDArray) -> NDArray[np.float64]:
    """Ascending eigenvalues of H(p), shape (N, k)."""
    return np.linalg.eigvalsh(hamiltonian_batch(bm, momenta))


def finite_difference_b(spec: WalkSpec, decomp: MassDecomposition, axis: int, eps: float) -> NDArray[np.complex128]:
    """
    Centered difference estimate of B_axis from the symbol.

    With p = +-(eps/a) e_axis, (i a / (2 eps dt)) W^dag [U(+) - U(-)] = B_axis + O(eps^2).
    """
    step = np.zeros((2, spec.d))
    step[0, axis] = eps / spec.scale.a
    step[1, axis] = -eps / spec.scale.a
    plus, minus = symbol_batch(spec, step)
    return (1j * spec.scale.a / (2 * eps * spec.scale.dt)) * (decomp.W.conj().T @ (plus - minus))
