"""
Named walk constructions.

Products of conditional shifts are expanded over the displacement lattice:
if T_j = sum_q A^(j)_q S_q then T_1 T_2 ... has coin sum_{q_1 + q_2 + ... = q}
A^(1)_{q_1} A^(2)_{q_2} ... at displacement q. Projectors are built from exact
matrix identities, so coins that cancel come out exactly zero and are dropped.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from .exceptions import PreconditionError
from .utils import IDENTITY2, PAULI, spin1_generators
from .walk import LatticeScale, WalkSpec

logger = logging.getLogger(__name__)

Factor = Dict[tuple, NDArray[np.complex128]]

AXES = {"x": 0, "y": 1, "z": 2}


def unit(axis: int, d: int = 3, length: int = 1) -> tuple:
    q = [0] * d
    q[axis] = length
    return tuple(q)


def expand_product(factors: Sequence[Factor]) -> Factor:
    """
    Coins of the operator product factors[0] factors[1] ... factors[-1].

    Exactly vanishing products are dropped from the support.
    """
    coins: Factor = dict(factors[0])
    for factor in factors[1:]:
        product: Factor = {}
        for q1, a1 in coins.items():
            for q2, a2 in factor.items():
                q = tuple(x + y for x, y in zip(q1, q2))
                product[q] = product.get(q, 0) + a1 @ a2
        coins = product
    return {q: m for q, m in coins.items() if np.any(m != 0)}


def conditional_shift(axis: int, projector: NDArray, d: int = 3, complement_shift: int = -1) -> Factor:
    """S_axis P + S_axis^{complement_shift} (1 - P)."""
    identity = np.eye(projector.shape[0], dtype=np.complex128)
    factor = {unit(axis, d): projector}
    rest = unit(axis, d, complement_shift)
    factor[rest] = factor.get(rest, 0) + (identity - projector)
    return factor


def _order(order: str) -> List[int]:
    if sorted(order) != ["x", "y", "z"]:
        raise PreconditionError(f"Operator order must be a permutation of 'xyz', got '{order}'.")
    return [AXES[b] for b in order]


def massless_1d(scale: Optional[LatticeScale] = None) -> WalkSpec:
    """U = S |r><r| + S^dag |l><l|."""
    right = np.diag([1, 0]).astype(np.complex128)
    left = np.diag([0, 1]).astype(np.complex128)
    return WalkSpec(d=1, k=2, coins={(1,): right, (-1,): left}, scale=scale or LatticeScale(), name="massless_1d")


def massive_1d(m: float = 0.0, scale: Optional[LatticeScale] = None) -> WalkSpec:
    """U = exp(-i m dt sigma_x) (S |r><r| + S^dag |l><l|)."""
    if m < 0:
        raise PreconditionError(f"Mass must be non-negative, got {m}.")
    scale = scale or LatticeScale()
    w = scipy.linalg.expm(-1j * m * scale.dt * PAULI[0])
    base = massless_1d(scale)
    return WalkSpec(d=1, k=2, coins={q: w @ a for q, a in base.coins.items()}, scale=scale, name="massive_1d")


def weyl_factors(handedness: str = "right", order: str = "xyz") -> List[Factor]:
    """
    T_b = S_b |up_b><up_b| + S_b^dag |down_b><down_b| (right handed), with up and
    down exchanged for the left handed partner.
    """
    sign = {"right": 1, "left": -1}[handedness]
    factors = []
    for axis in _order(order):
        up = 0.5 * (IDENTITY2 + sign * PAULI[axis])
        factors.append(conditional_shift(axis, up))
    return factors


def bb_weyl_3d(scale: Optional[LatticeScale] = None, order: str = "xyz", handedness: str = "right") -> WalkSpec:
    """U = T_x T_y T_z on the body centred cubic neighbourhood {+-1}^3."""
    coins = expand_product(weyl_factors(handedness, order))
    return WalkSpec(d=3, k=2, coins=coins, scale=scale or LatticeScale(), name="bb_weyl_3d")


def spin1_3d(scale: Optional[LatticeScale] = None, order: str = "xyz") -> WalkSpec:
    """
    U = T_x T_y T_z with T_b = exp(-i a P_b J_b), i.e.
    S_b |+1_b><+1_b| + |0_b><0_b| + S_b^dag |-1_b><-1_b|.
    """
    generators = spin1_generators()
    factors = []
    for axis in _order(order):
        j = generators[axis]
        j2 = j @ j
        factors.append({
            unit(axis): 0.5 * (j2 + j),
            (0, 0, 0): np.eye(3, dtype=np.complex128) - j2,
            unit(axis, length=-1): 0.5 * (j2 - j),
        })
    coins = expand_product(factors)
    return WalkSpec(d=3, k=3, coins=coins, scale=scale or LatticeScale(), name="spin1_3d")


def chirality_mixer() -> NDArray[np.complex128]:
    """The block swap [[0, 1], [1, 0]] between right and left handed components."""
    return np.kron(PAULI[0], IDENTITY2)


def dirac_3d(m: float = 0.0, scale: Optional[LatticeScale] = None) -> WalkSpec:
    """
    Right handed BCC walk (+) left handed BCC walk, premultiplied by exp(-i m dt beta).
    """
    if m < 0:
        raise PreconditionError(f"Mass must be non-negative, got {m}.")
    scale = scale or LatticeScale()
    right = expand_product(weyl_factors("right"))
    left = expand_product(weyl_factors("left"))
    w = scipy.linalg.expm(-1j * m * scale.dt * chirality_mixer())
    coins = {q: w @ scipy.linalg.block_diag(right[q], left[q]) for q in right}
    return WalkSpec(d=3, k=4, coins=coins, scale=scale, name="dirac_3d")


def random_massless_2level(rng: np.random.Generator, scale: Optional[LatticeScale] = None) -> WalkSpec:
    """
    Random massless two-level walk with support in {-1, 0, 1}^3.

    Product of one conditional shift per axis, in random order, each with a
    random rank one projector and its complement shifted by -1 or not at all.
    """
    factors = []
    for axis in rng.permutation(3):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        projector = 0.5 * (IDENTITY2 + np.einsum("i,ijk->jk", direction, PAULI))
        factors.append(conditional_shift(int(axis), projector, complement_shift=int(rng.choice([0, -1]))))
    coins = expand_product(factors)
    return WalkSpec(d=3, k=2, coins=coins, scale=scale or LatticeScale(), name="random_massless_2level")


def permute_axes(spec: WalkSpec, perm: Sequence[int]) -> WalkSpec:
    """Relabels spatial axes: new q_i = old q_{perm[i]}."""
    if sorted(perm) != list(range(spec.d)):
        raise PreconditionError(f"{perm} is not a permutation of {spec.d} axes.")
    coins = {tuple(q[p] for p in perm): a for q, a in spec.coins.items()}
    return WalkSpec(d=spec.d, k=spec.k, coins=coins, scale=spec.scale, name=spec.name)


class ZooEntry(BaseModel):
    """
    Attributes:
        name (str): Registry name.
        description (str): One line summary.
        massive (bool): Builder takes a mass parameter.
        builder (Callable): Builds the walk from (m, scale).
    """
    name : str
    description : str
    massive : bool = False
    builder : Callable[..., WalkSpec]

    model_config = ConfigDict(frozen=True)

    def build(self, m: float = 0.0, scale: Optional[LatticeScale] = None) -> WalkSpec:
        if self.massive:
            return self.builder(m, scale)
        if m:
            logger.warning("Zoo walk '%s' is massless; ignoring m=%s", self.name, m)
        return self.builder(scale)


ZOO: Dict[str, ZooEntry] = {
    entry.name: entry for entry in [
        ZooEntry(name="massless_1d", description="1D Weyl walk S|r><r| + S^dag|l><l|", builder=massless_1d),
        ZooEntry(name="massive_1d", description="1D Dirac walk exp(-i m dt sigma_x) times the massless walk",
                 massive=True, builder=massive_1d),
        ZooEntry(name="bb_weyl_3d", description="3D Weyl walk T_x T_y T_z on the BCC neighbourhood",
                 builder=bb_weyl_3d),
        ZooEntry(name="spin1_3d", description="3D spin-1 walk with continuum limit H = J.P",
                 builder=spin1_3d),
        ZooEntry(name="dirac_3d", description="3D Dirac walk, right (+) left BCC walks mixed by a mass term",
                 massive=True, builder=dirac_3d),
    ]
}


def build(name: str, m: float = 0.0, scale: Optional[LatticeScale] = None) -> WalkSpec:
    """
    Builds a zoo walk by name.

    Raises:
        KeyError: Unknown name.
    """
    if name not in ZOO:
        raise KeyError(f"Unknown zoo walk '{name}'. Available: {', '.join(ZOO)}")
    return ZOO[name].build(m, scale)


def zoo_builder(name: str, m: float = 0.0) -> Callable[[LatticeScale], WalkSpec]:
    """A scale -> walk builder, as taken by ``evolve.scaling_fit``."""
    return lambda scale: build(name, m, scale)
