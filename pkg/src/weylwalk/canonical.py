"""
Canonical Weyl form of two-level continuum Hamiltonians.

B_i = c_i 1 + sum_j N_ij sigma_j. Dropping the drift c.p and taking the real SVD
N = U diag(gamma) V^T gives H - c.p = sum_k gamma_k sigma'_k p'_k with
p' = U^T p and sigma' = V^T sigma.
"""
import logging
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict
from scipy.spatial.transform import Rotation

from .continuum import HERMITICITY_TOL, BMatrices, hamiltonian_batch, hamiltonian_symbol
from .exceptions import PreconditionError, UnsupportedDimensionError
from .utils import IDENTITY2, PAULI, dagger, lexicographic_sign, pad3, spectral_norm

logger = logging.getLogger(__name__)


class Handedness(str, Enum):
    RIGHT = "right"
    LEFT = "left"
    DEGENERATE = "degenerate"


class PauliDecomposition(BaseModel):
    """
    Attributes:
        c (NDArray): Drift coefficients, shape (d,). beta_i = c_i.
        n (NDArray): Spin-momentum coupling, shape (d, 3), N_ij = 1/2 Re tr(sigma_j B_i).
    """
    c : np.ndarray
    n : np.ndarray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def d(self) -> int:
        return self.n.shape[0]

    def reconstruct(self) -> NDArray[np.complex128]:
        """c_i 1 + n_i.sigma for every axis, shape (d, 2, 2)."""
        return self.c[:, None, None] * IDENTITY2 + np.einsum("ij,jkl->ikl", self.n, PAULI)


class CanonicalForm(BaseModel):
    """
    Attributes:
        gamma (NDArray): Singular values of N, descending.
        handedness (Handedness): Chirality read from sign(det N).
        spatial_rotation (NDArray): 3x3 proper rotation, p' = spatial_rotation @ p.
        spin_rotation (NDArray): 3x3 orthogonal, sigma' = spin_rotation @ sigma.
            Its determinant carries the handedness.
        beta (NDArray): Drift velocity, shape (d,).
        effective_dim (int): Number of gamma_i above the degeneracy threshold.
        tol (float): Relative degeneracy threshold used.
    """
    gamma : np.ndarray
    handedness : Handedness
    spatial_rotation : np.ndarray
    spin_rotation : np.ndarray
    beta : np.ndarray
    effective_dim : int
    tol : float

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def coupling(self) -> NDArray[np.float64]:
        """N (padded to 3 rows) rebuilt as spatial_rotation^T diag(gamma) spin_rotation."""
        return self.spatial_rotation.T @ np.diag(self.gamma) @ self.spin_rotation


def _require_two_level(bm: BMatrices) -> None:
    if bm.k != 2:
        raise UnsupportedDimensionError(
            f"Pauli canonicalization needs a two-level internal space, got k={bm.k}."
        )


def pauli_decompose(bm: BMatrices, tol: float = HERMITICITY_TOL) -> PauliDecomposition:
    """
    Expands each B_i in the Pauli basis.

    Raises:
        UnsupportedDimensionError: If k != 2.
        PreconditionError: If some B_i is not Hermitian within tol.
    """
    _require_two_level(bm)
    residual = float(np.max(spectral_norm(bm.b - dagger(bm.b)))) if bm.d else 0.0
    if residual > tol:
        raise PreconditionError(
            f"B matrices are not Hermitian (residual {residual:.3g}); the walk is not unitary."
        )
    c = 0.5 * np.real(np.trace(bm.b, axis1=1, axis2=2))
    n = 0.5 * np.real(np.einsum("jkl,ilk->ij", PAULI, bm.b))
    return PauliDecomposition(c=c, n=n)


def coupling_rank(pd: PauliDecomposition, tol: float = 1e-10) -> int:
    """Numerical rank of N relative to its largest singular value."""
    gamma = np.linalg.svd(pd.n, compute_uv=False)
    if len(gamma) == 0 or gamma[0] == 0:
        return 0
    return int(np.sum(gamma > tol * gamma[0]))


def canonicalize(pd: PauliDecomposition, tol: float = 1e-10) -> CanonicalForm:
    """
    Real SVD of the coupling matrix with a deterministic sign convention.

    Columns of U are flipped (together with the matching rows of V^T) so their
    first non-zero entry is positive; if U is then improper its last column is
    flipped. The spatial rotation is therefore always proper and sign(det N)
    shows up as det(spin_rotation).

    Args:
        pd (PauliDecomposition): Output of ``pauli_decompose``.
        tol (float): Relative threshold, gamma_i <= tol * gamma_1 is degenerate.

    Raises:
        UnsupportedDimensionError: For d > 3; only the rank is reported.
    """
    if pd.d > 3:
        raise UnsupportedDimensionError(
            f"Canonical form is only implemented for d <= 3; coupling rank is {coupling_rank(pd, tol)}."
        )
    n3 = np.zeros((3, 3))
    n3[: pd.d] = pd.n
    u, gamma, vt = np.linalg.svd(n3)

    signs = np.array(lexicographic_sign(u.T))
    u = u * signs[None, :]
    vt = vt * signs[:, None]
    if np.linalg.det(u) < 0:
        u[:, 2] *= -1
        vt[2, :] *= -1

    gamma1 = gamma[0]
    effective_dim = 0 if gamma1 == 0 else int(np.sum(gamma > tol * gamma1))
    if effective_dim < 3:
        handedness = Handedness.DEGENERATE
    elif np.linalg.det(vt) > 0:
        handedness = Handedness.RIGHT
    else:
        handedness = Handedness.LEFT
    logger.info("Canonical form: gamma=%s handedness=%s", gamma, handedness.value)

    return CanonicalForm(
        gamma=gamma,
        handedness=handedness,
        spatial_rotation=u.T,
        spin_rotation=vt,
        beta=pd.c.copy(),
        effective_dim=effective_dim,
        tol=tol,
    )


def weyl_residual(cf: CanonicalForm, bm: BMatrices, samples: Sequence) -> float:
    """
    Distance of the kinetic Hamiltonian from canonical Weyl form.

    max_p ||(H(p) - (beta.p) 1)^2 - sum_i gamma_i^2 p'_i^2 1||, where only the
    non-degenerate gamma_i enter the sum. The mass term is not part of the check.

    Raises:
        UnsupportedDimensionError: If k != 2.
    """
    _require_two_level(bm)
    momenta = np.asarray(samples, dtype=float).reshape(-1, bm.d)
    if len(momenta) == 0:
        return 0.0
    shifted = hamiltonian_batch(bm.kinetic(), momenta) - (momenta @ cf.beta)[:, None, None] * IDENTITY2
    squared = shifted @ shifted
    rotated = pad3(momenta) @ cf.spatial_rotation.T
    weights = np.where(np.arange(3) < cf.effective_dim, cf.gamma**2, 0.0)
    target = (rotated**2 @ weights)[:, None, None] * IDENTITY2
    return float(np.max(spectral_norm(squared - target)))


def lorentz_trace_test(bm: BMatrices, p) -> float:
    """
    tr(H(p)^2) - k |p|^2 for the kinetic Hamiltonian.

    Zero for any canonical two-level Weyl Hamiltonian; -|p|^2 for H = J.p.
    """
    h = hamiltonian_symbol(bm.kinetic(), p)
    p = np.asarray(p, dtype=float)
    return float(np.real(np.trace(h @ h)) - bm.k * float(p @ p))


def rotational_covariance(bm: BMatrices, generators: NDArray, axis, angle: float, p) -> float:
    """
    ||R H(p) R^dag - H(Rp)|| with R = exp(-i angle axis.J) on the internal space.

    Args:
        bm (BMatrices): Continuum data with d = 3.
        generators (NDArray): (3, k, k) Hermitian generators J.
        axis: Rotation axis, normalised internally.
        angle (float): Rotation angle.
        p: Momentum (3,).
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    spin = scipy.linalg.expm(-1j * angle * np.einsum("i,ijk->jk", axis, generators))
    space = Rotation.from_rotvec(angle * axis).as_matrix()
    kinetic = bm.kinetic()
    lhs = spin @ hamiltonian_symbol(kinetic, p) @ spin.conj().T
    rhs = hamiltonian_symbol(kinetic, space @ np.asarray(p, dtype=float))
    return float(spectral_norm(lhs - rhs))
