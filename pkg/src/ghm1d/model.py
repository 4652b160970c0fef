"""Local Hilbert space, fermionic sign bookkeeping and bond operators.

The lattice model lives on a chain of four-state sites
(empty, up, down, updown).  A basis configuration is identified with the
ordered product of creation operators acting on the vacuum, site-major
with the up mode before the down mode within each site:

    |s_0 s_1 ...> = (adag_{0,up})^{u_0} (adag_{0,down})^{d_0}
                    (adag_{1,up})^{u_1} ... |vac>

Every fermionic sign in the package flows from `fock_apply`, which
applies a product of creation/annihilation operators to such a
configuration and tracks the anticommutation signs through the mode
ordering.  Two-site bond Hamiltonians and their imaginary-time gates are
assembled on top of it.

Hamiltonian per bond <i, j> (i left, j right), with w_l/w_r weighting the
on-site pieces so that summing bonds over a chain counts each site once:

    h = w_l * v_i + w_r * v_j
        - sum_sigma [ t + g (n_{i,sbar} + n_{j,sbar}) + gt n_{i,sbar} n_{j,sbar} ]
          (adag_{i,sigma} a_{j,sigma} + h.c.)

    v_i = U n_{i,up} n_{i,down} - mu_up n_{i,up} - mu_down n_{i,down}

where sbar is the opposite spin, g the one-particle assisted-hopping
shift and gt the pair-assisted shift.  The density factors commute with
the opposite-spin hop, so the coefficient is evaluated on the occupations
of the hopping state.
"""

from __future__ import annotations

import dataclasses
import itertools
from enum import IntEnum

import numpy as np

from .tensor import hermitian_exp

__all__ = [
    "LocalState",
    "ModelParams",
    "fock_apply",
    "local_operator",
    "bond_hamiltonian",
    "bond_gate",
    "BondOperator",
    "two_site_sectors",
    "LOCAL_OP_KINDS",
]


class LocalState(IntEnum):
    EMPTY = 0
    UP = 1
    DOWN = 2
    UPDOWN = 3


# occupation tables indexed by LocalState
OCC_UP = (0, 1, 0, 1)
OCC_DOWN = (0, 0, 1, 1)
PARITY = (1, -1, -1, 1)

_STATE_NAMES = {
    "empty": LocalState.EMPTY,
    "up": LocalState.UP,
    "down": LocalState.DOWN,
    "updown": LocalState.UPDOWN,
}


def as_local_state(value) -> LocalState:
    """Coerce ints or names like 'updown' to a LocalState."""
    if isinstance(value, str):
        try:
            return _STATE_NAMES[value.lower()]
        except KeyError:
            raise ValueError(f"unknown local state name: {value!r}") from None
    state = int(value)
    if not 0 <= state <= 3:
        raise ValueError(f"local state index out of range: {value!r}")
    return LocalState(state)


@dataclasses.dataclass(frozen=True)
class ModelParams:
    """Couplings of the chain Hamiltonian.

    mu_up/mu_down are the species chemical potentials; the symmetric and
    antisymmetric combinations are exposed as `mu` and `delta_mu` with

        mu_up = mu + delta_mu,   mu_down = mu - delta_mu

    so a positive delta_mu favours the up species and gives positive
    polarization p = (N_up - N_down) / (N_up + N_down).
    """

    t: float = 1.0
    delta_g: float = 0.0
    delta_t: float = 0.0
    U: float = -8.0
    mu_up: float = -4.0
    mu_down: float = -4.0

    def __post_init__(self):
        for name in ("t", "delta_g", "delta_t", "U", "mu_up", "mu_down"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"ModelParams.{name} must be finite, got {value!r}")
        if self.t < 0:
            raise ValueError(f"ModelParams.t must be >= 0, got {self.t!r}")

    @classmethod
    def from_mu(cls, t=1.0, delta_g=0.0, delta_t=0.0, U=-8.0, mu=-4.0, delta_mu=0.0):
        return cls(t=t, delta_g=delta_g, delta_t=delta_t, U=U,
                   mu_up=mu + delta_mu, mu_down=mu - delta_mu)

    @property
    def mu(self) -> float:
        return 0.5 * (self.mu_up + self.mu_down)

    @property
    def delta_mu(self) -> float:
        return 0.5 * (self.mu_up - self.mu_down)

    def with_mu(self, mu: float, delta_mu: float) -> "ModelParams":
        return dataclasses.replace(self, mu_up=mu + delta_mu, mu_down=mu - delta_mu)

    def spin_flipped(self) -> "ModelParams":
        return dataclasses.replace(self, mu_up=self.mu_down, mu_down=self.mu_up)


def _mode_index(site: int, spin: str, down_first: bool = False) -> int:
    if spin not in ("up", "down"):
        raise ValueError(f"spin must be 'up' or 'down', got {spin!r}")
    low = (spin == "down") ^ down_first
    return 2 * site + (1 if low else 0)


def _occ_bits(state_list, down_first: bool = False):
    """Mode occupation list (index = mode) for a configuration."""
    bits = [0] * (2 * len(state_list))
    for site, s in enumerate(state_list):
        bits[_mode_index(site, "up", down_first)] = OCC_UP[s]
        bits[_mode_index(site, "down", down_first)] = OCC_DOWN[s]
    return bits


def fock_apply(ops, state, down_first: bool = False):
    """Apply a product of ladder operators to a basis configuration.

    ops is a sequence of (site, kind, spin) with kind in {'a', 'adag'};
    the product is applied right-to-left, i.e. ops[-1] acts first.
    Returns (sign, new_state_tuple) or None when the product annihilates
    the configuration (Pauli violation).
    """
    states = [as_local_state(s) for s in state]
    n_sites = len(states)
    bits = _occ_bits(states, down_first)
    sign = 1
    for site, kind, spin in reversed(list(ops)):
        if not 0 <= site < n_sites:
            raise ValueError(f"site {site} outside chain of length {n_sites}")
        if kind not in ("a", "adag"):
            raise ValueError(f"operator kind must be 'a' or 'adag', got {kind!r}")
        mode = _mode_index(site, spin, down_first)
        occupied = bits[mode]
        if kind == "a" and not occupied:
            return None
        if kind == "adag" and occupied:
            return None
        if sum(bits[:mode]) % 2:
            sign = -sign
        bits[mode] = 1 - occupied
    new_state = []
    for site in range(n_sites):
        u = bits[_mode_index(site, "up", down_first)]
        d = bits[_mode_index(site, "down", down_first)]
        new_state.append(LocalState(u + 2 * d))
    return sign, tuple(new_state)


def _ladder_matrix(spin: str, down_first: bool = False) -> np.ndarray:
    """4x4 matrix of the single-site annihilator, signs via fock_apply."""
    m = np.zeros((4, 4))
    for s in range(4):
        res = fock_apply([(0, "a", spin)], (s,), down_first)
        if res is not None:
            sign, (s_new,) = res
            m[s_new, s] = sign
    return m


LOCAL_OP_KINDS = (
    "annihilate_up",
    "annihilate_down",
    "number_up",
    "number_down",
    "number_total",
    "parity",
    "sz",
    "sx",
    "sy_imagpart",
    "pair_annihilate",
)


def local_operator(kind: str, down_first: bool = False) -> np.ndarray:
    """Real 4x4 matrix of a named single-site operator.

    All matrices are real.  The y spin component is purely imaginary,
    s^y = i * W with W real antisymmetric; 'sy_imagpart' returns W so
    correlation code can stay in real arithmetic
    (s^y_i s^y_j = -W_i W_j for i != j).
    """
    if kind == "annihilate_up":
        return _ladder_matrix("up", down_first)
    if kind == "annihilate_down":
        return _ladder_matrix("down", down_first)
    if kind == "number_up":
        return np.diag(np.array(OCC_UP, dtype=float))
    if kind == "number_down":
        return np.diag(np.array(OCC_DOWN, dtype=float))
    if kind == "number_total":
        return np.diag(np.array(OCC_UP, dtype=float) + np.array(OCC_DOWN, dtype=float))
    if kind == "parity":
        return np.diag(np.array(PARITY, dtype=float))
    if kind == "sz":
        return np.diag(0.5 * (np.array(OCC_UP, dtype=float) - np.array(OCC_DOWN, dtype=float)))
    if kind == "sx":
        au = _ladder_matrix("up", down_first)
        ad = _ladder_matrix("down", down_first)
        return 0.5 * (au.T @ ad + ad.T @ au)
    if kind == "sy_imagpart":
        au = _ladder_matrix("up", down_first)
        ad = _ladder_matrix("down", down_first)
        return 0.5 * (ad.T @ au - au.T @ ad)
    if kind == "pair_annihilate":
        m = np.zeros((4, 4))
        for s in range(4):
            res = fock_apply([(0, "a", "up"), (0, "a", "down")], (s,), down_first)
            if res is not None:
                sign, (s_new,) = res
                m[s_new, s] = sign
        return m
    raise ValueError(f"unknown local operator kind: {kind!r}")


@dataclasses.dataclass(frozen=True)
class BondOperator:
    """16x16 two-site operator, basis index I = 4*s_left + s_right.

    flavor is 'hamiltonian' or 'gate'; gates carry the imaginary-time
    step dtau they were built with.
    """

    matrix: np.ndarray
    flavor: str
    dtau: float | None = None

    def __post_init__(self):
        if self.flavor not in ("hamiltonian", "gate"):
            raise ValueError(f"flavor must be 'hamiltonian' or 'gate', got {self.flavor!r}")
        m = np.asarray(self.matrix)
        if m.shape != (16, 16):
            raise ValueError(f"bond operator must be 16x16, got {m.shape}")

    def as_tensor(self) -> np.ndarray:
        """(s_l', s_r', s_l, s_r) view of the matrix."""
        return np.asarray(self.matrix).reshape(4, 4, 4, 4)


def two_site_sectors():
    """Indices of the 16-dim two-site basis grouped by (N_up, N_down)."""
    groups: dict[tuple[int, int], list[int]] = {}
    for idx, (s1, s2) in enumerate(itertools.product(range(4), range(4))):
        key = (OCC_UP[s1] + OCC_UP[s2], OCC_DOWN[s1] + OCC_DOWN[s2])
        groups.setdefault(key, []).append(idx)
    return groups


def _onsite_energy(params: ModelParams, s: int) -> float:
    u, d = OCC_UP[s], OCC_DOWN[s]
    return params.U * u * d - params.mu_up * u - params.mu_down * d


def bond_hamiltonian(params: ModelParams, left_weight: float = 0.5,
                     right_weight: float = 0.5, down_first: bool = False) -> BondOperator:
    """Two-site Hamiltonian with weighted on-site terms.

    Bulk bonds use the default 1/2, 1/2 split; chain edges pass 1 for the
    boundary site so that the bond sum reproduces the full Hamiltonian.
    """
    for name, w in (("left_weight", left_weight), ("right_weight", right_weight)):
        if not (0.0 <= w <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {w!r}")
    occ = {"up": OCC_UP, "down": OCC_DOWN}
    h = np.zeros((16, 16))
    for s1, s2 in itertools.product(range(4), range(4)):
        col = 4 * s1 + s2
        h[col, col] += left_weight * _onsite_energy(params, s1)
        h[col, col] += right_weight * _onsite_energy(params, s2)
        state = (s1, s2)
        for spin, sbar in (("up", "down"), ("down", "up")):
            for src, dst in ((1, 0), (0, 1)):
                if not occ[spin][state[src]] or occ[spin][state[dst]]:
                    continue
                n_src = occ[sbar][state[src]]
                n_dst = occ[sbar][state[dst]]
                coeff = params.t + params.delta_g * (n_src + n_dst) \
                    + params.delta_t * n_src * n_dst
                res = fock_apply([(dst, "adag", spin), (src, "a", spin)],
                                 state, down_first)
                sign, new_state = res
                row = 4 * new_state[0] + new_state[1]
                h[row, col] += -coeff * sign
    return BondOperator(matrix=h, flavor="hamiltonian")


def bond_gate(h: BondOperator, dtau: float) -> BondOperator:
    """exp(-dtau * h), exponentiated block-by-block per (N_up, N_down).

    Sector-wise exponentiation keeps matrix elements between different
    particle-number sectors exactly zero.
    """
    if h.flavor != "hamiltonian":
        raise ValueError("bond_gate needs a 'hamiltonian' flavor BondOperator")
    if not (dtau > 0 and np.isfinite(dtau)):
        raise ValueError(f"dtau must be a positive real number, got {dtau!r}")
    m = np.asarray(h.matrix, dtype=float)
    gate = np.zeros_like(m)
    for idx in two_site_sectors().values():
        ix = np.ix_(idx, idx)
        gate[ix] = hermitian_exp(m[ix], -dtau)
    return BondOperator(matrix=gate, flavor="gate", dtau=dtau)
