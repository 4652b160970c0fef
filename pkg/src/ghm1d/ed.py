"""Exact diagonalization on small chains (the oracle side of the suite).

Configurations are stored as base-4 codes, site 0 in the most
significant digit, so ascending code order is lexicographic order on
occupation tuples.  Within a digit, value-1 is the up bit and value-2
the down bit.

Fermion signs: a hop c+_p c_q picks up the parity of the occupied modes
whose position in the global mode order lies strictly between p and q.
Mode order is site-major with up before down by default (down_first
flips it); the periodic wrap bond needs no special casing because the
between-modes rule already encodes the boundary-crossing sign.

Two assembly methods are kept deliberately: 'bitwise' (vectorized,
default) and 'fock' (one matrix element at a time through fock_apply,
the reference for the sign convention).  Their equality on small chains
is part of the test suite.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegeneracyError, SolverError
from .model import (OCC_DOWN, OCC_UP, ModelParams, fock_apply, local_operator)
from .observables import CorrelationSet

__all__ = [
    "SectorBasis",
    "EdResult",
    "GrandEdResult",
    "build_hamiltonian",
    "ground_state_ed",
    "ground_state_grand",
    "ed_correlation_set",
    "nearest_sector",
]

MAX_SITES = 12
DEGENERACY_TOL = 1e-9
RESIDUAL_FACTOR = 1e-10
DENSE_CUTOFF = 2000


def _digit_shift(site: int, length: int) -> int:
    return 2 * (length - 1 - site)


def _storage_bit(site: int, spin: str, length: int) -> int:
    return _digit_shift(site, length) + (0 if spin == "up" else 1)


def _mode_rank(site: int, spin: str, down_first: bool) -> int:
    return 2 * site + (1 if (spin == "down") != down_first else 0)


def _between_mask(length: int, down_first: bool, mode_p, mode_q) -> int:
    lo = _mode_rank(*mode_p, down_first)
    hi = _mode_rank(*mode_q, down_first)
    if lo > hi:
        lo, hi = hi, lo
    mask = 0
    for site in range(length):
        for spin in ("up", "down"):
            if lo < _mode_rank(site, spin, down_first) < hi:
                mask |= 1 << _storage_bit(site, spin, length)
    return mask


class SectorBasis:
    """Ordered configuration list for one (N_up, N_down) sector.

    sector=None spans the whole Fock space (used by convention checks
    and by operators that change particle number).
    """

    def __init__(self, length: int, sector=None):
        if not 1 <= length <= MAX_SITES:
            raise ValueError(f"length must be in [1, {MAX_SITES}], got {length}")
        self.length = length
        if sector is None:
            self.sector = None
            self.codes = np.arange(4 ** length, dtype=np.int64)
            return
        n_up, n_down = sector
        if not (0 <= n_up <= length and 0 <= n_down <= length):
            raise ValueError(f"sector {sector!r} is empty for {length} sites")
        self.sector = (int(n_up), int(n_down))
        up_codes = np.array(
            [sum(1 << _storage_bit(s, "up", length) for s in combo)
             for combo in itertools.combinations(range(length), n_up)],
            dtype=np.int64)
        down_codes = np.array(
            [sum(1 << _storage_bit(s, "down", length) for s in combo)
             for combo in itertools.combinations(range(length), n_down)],
            dtype=np.int64)
        self.codes = np.sort((up_codes[:, None] + down_codes[None, :]).ravel())

    @property
    def size(self) -> int:
        return len(self.codes)

    def index(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        idx = np.searchsorted(self.codes, codes)
        if np.any(idx >= self.size) or np.any(self.codes[idx] != codes):
            raise ValueError("configuration not in this sector")
        return idx

    def occupation(self, site: int, spin: str) -> np.ndarray:
        return ((self.codes >> _storage_bit(site, spin, self.length)) & 1
                ).astype(np.int64)

    def digits(self, site: int) -> np.ndarray:
        return ((self.codes >> _digit_shift(site, self.length)) & 3
                ).astype(np.int64)


def _bonds(length: int, boundary: str) -> list:
    if boundary not in ("open", "periodic"):
        raise ValueError(f"boundary must be 'open' or 'periodic', "
                         f"got {boundary!r}")
    if length == 1:
        return []
    bonds = [(i, i + 1) for i in range(length - 1)]
    if boundary == "periodic":
        if length < 3:
            raise ValueError("periodic boundaries need at least 3 sites")
        bonds.append((length - 1, 0))
    return bonds


def _diagonal(params: ModelParams, basis: SectorBasis) -> np.ndarray:
    diag = np.zeros(basis.size)
    for site in range(basis.length):
        u = basis.occupation(site, "up")
        d = basis.occupation(site, "down")
        diag += params.U * u * d - params.mu_up * u - params.mu_down * d
    return diag


def _assemble_bitwise(params, basis, bonds, down_first):
    length = basis.length
    codes = basis.codes
    rows = [np.arange(basis.size)]
    cols = [np.arange(basis.size)]
    vals = [_diagonal(params, basis)]
    for si, sj in bonds:
        for spin in ("up", "down"):
            other = "down" if spin == "up" else "up"
            nbar_i = (codes >> _storage_bit(si, other, length)) & 1
            nbar_j = (codes >> _storage_bit(sj, other, length)) & 1
            coeff_all = (params.t + params.delta_g * (nbar_i + nbar_j)
                         + params.delta_t * nbar_i * nbar_j)
            mask = _between_mask(length, down_first, (si, spin), (sj, spin))
            for src, dst in ((si, sj), (sj, si)):
                src_bit = 1 << _storage_bit(src, spin, length)
                dst_bit = 1 << _storage_bit(dst, spin, length)
                sel = ((codes & src_bit) != 0) & ((codes & dst_bit) == 0)
                if not np.any(sel):
                    continue
                sub = codes[sel]
                parity = (np.bitwise_count(
                    (sub & mask).astype(np.uint64)) & 1).astype(np.int64)
                sign = 1 - 2 * parity
                rows.append(basis.index(sub ^ (src_bit | dst_bit)))
                cols.append(np.nonzero(sel)[0])
                vals.append(-coeff_all[sel] * sign)
    mat = sp.coo_matrix(
        (np.concatenate([np.asarray(v, dtype=float) for v in vals]),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.size, basis.size))
    return mat.tocsr()


def _assemble_fock(params, basis, bonds, down_first):
    length = basis.length
    rows, cols, vals = [], [], []
    states = [tuple(int((code >> _digit_shift(s, length)) & 3)
                    for s in range(length))
              for code in basis.codes]
    for col, state in enumerate(states):
        diag = 0.0
        for site in range(length):
            u, d = OCC_UP[state[site]], OCC_DOWN[state[site]]
            diag += params.U * u * d - params.mu_up * u - params.mu_down * d
        rows.append(col)
        cols.append(col)
        vals.append(diag)
        for si, sj in bonds:
            for spin in ("up", "down"):
                occ_bar = OCC_DOWN if spin == "up" else OCC_UP
                coeff = (params.t
                         + params.delta_g * (occ_bar[state[si]]
                                             + occ_bar[state[sj]])
                         + params.delta_t * occ_bar[state[si]]
                         * occ_bar[state[sj]])
                for src, dst in ((si, sj), (sj, si)):
                    hop = fock_apply([(dst, "adag", spin), (src, "a", spin)],
                                     state, down_first=down_first)
                    if hop is None:
                        continue
                    sign, new_state = hop
                    new_code = sum(new_state[s] << _digit_shift(s, length)
                                   for s in range(length))
                    rows.append(int(basis.index([new_code])[0]))
                    cols.append(col)
                    vals.append(-coeff * sign)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(basis.size, basis.size))
    return mat.tocsr()


def build_hamiltonian(params: ModelParams, length: int,
                      boundary: str = "open", sector=None,
                      down_first: bool = False, method: str = "bitwise",
                      basis: SectorBasis | None = None):
    """Sparse real-symmetric Hamiltonian on `length` sites."""
    if basis is None:
        basis = SectorBasis(length, sector)
    elif basis.length != length:
        raise ValueError("basis length does not match")
    bonds = _bonds(length, boundary)
    if method == "bitwise":
        return _assemble_bitwise(params, basis, bonds, down_first)
    if method == "fock":
        return _assemble_fock(params, basis, bonds, down_first)
    raise ValueError(f"unknown assembly method {method!r}")


@dataclasses.dataclass
class EdResult:
    params: ModelParams
    length: int
    boundary: str
    sector: tuple | None
    basis: SectorBasis
    energy: float
    energies: np.ndarray
    vectors: np.ndarray
    degenerate: bool
    multiplicity: int
    residual: float
    dimension: int
    density_up: np.ndarray
    density_down: np.ndarray
    down_first: bool = False

    def correlations(self, averaging: str = "central-site",
                     resolve_degeneracy: bool = False) -> CorrelationSet:
        return ed_correlation_set(self, averaging,
                                  resolve_degeneracy=resolve_degeneracy)


def _density_profiles(basis: SectorBasis, vector: np.ndarray):
    w2 = vector ** 2
    up = np.array([float(w2 @ basis.occupation(s, "up"))
                   for s in range(basis.length)])
    down = np.array([float(w2 @ basis.occupation(s, "down"))
                     for s in range(basis.length)])
    return up, down


def ground_state_ed(params: ModelParams, length: int, sector=None,
                    boundary: str = "open", down_first: bool = False,
                    method: str = "bitwise") -> EdResult:
    """Lowest eigenpair(s); a multiplet within 1e-9 is returned whole."""
    basis = SectorBasis(length, sector)
    ham = build_hamiltonian(params, length, boundary, sector,
                            down_first=down_first, method=method, basis=basis)
    dim = basis.size
    if dim == 1:
        energies = np.array([ham[0, 0]])
        vectors = np.ones((1, 1))
    elif dim < DENSE_CUTOFF:
        w, v = np.linalg.eigh(ham.toarray())
        count = int(np.sum(w - w[0] < DEGENERACY_TOL))
        energies = w[:count]
        vectors = v[:, :count]
    else:
        k = 8
        while True:
            k_try = min(k, dim - 1)
            v0 = np.ones(dim) / np.sqrt(dim)
            try:
                w, v = spla.eigsh(ham, k=k_try, which="SA", v0=v0)
            except spla.ArpackNoConvergence as exc:
                raise SolverError(f"eigensolver failed to converge "
                                  f"(dim={dim}, k={k_try}): {exc}") from exc
            order = np.argsort(w)
            w, v = w[order], v[:, order]
            count = int(np.sum(w - w[0] < DEGENERACY_TOL))
            if count < k_try or k_try == dim - 1:
                energies = w[:count]
                vectors = v[:, :count]
                break
            if k >= 64:
                raise SolverError(f"ground multiplet not resolved within "
                                  f"k={k} eigenpairs (dim={dim})")
            k *= 2
    norm = spla.norm(ham, np.inf) if dim > 1 else abs(float(energies[0]))
    residual = 0.0
    for i in range(vectors.shape[1]):
        vec = vectors[:, i]
        residual = max(residual, float(np.linalg.norm(
            ham @ vec - energies[i] * vec)))
    if residual > RESIDUAL_FACTOR * max(norm, 1e-300):
        raise SolverError(f"eigenpair residual {residual:.3e} exceeds "
                          f"{RESIDUAL_FACTOR:.0e}*|H| = "
                          f"{RESIDUAL_FACTOR * norm:.3e}")
    density_up, density_down = _density_profiles(basis, vectors[:, 0])
    return EdResult(params=params, length=length, boundary=boundary,
                    sector=basis.sector, basis=basis,
                    energy=float(energies[0]), energies=np.asarray(energies),
                    vectors=vectors, degenerate=len(energies) > 1,
                    multiplicity=len(energies), residual=residual,
                    dimension=dim, density_up=density_up,
                    density_down=density_down, down_first=down_first)


@dataclasses.dataclass
class GrandEdResult:
    best: EdResult
    sector: tuple
    energies: dict
    degenerate_sectors: list

    @property
    def energy(self) -> float:
        return self.best.energy


def ground_state_grand(params: ModelParams, length: int,
                       boundary: str = "open",
                       down_first: bool = False) -> GrandEdResult:
    """Scan every (N_up, N_down) sector; mu terms are inside H already.

    Ties within 1e-9 are reported in degenerate_sectors (the
    lexicographically smallest sector is returned), never hidden.
    """
    energies = {}
    results = {}
    for n_up in range(length + 1):
        for n_down in range(length + 1):
            res = ground_state_ed(params, length, (n_up, n_down), boundary,
                                  down_first=down_first)
            energies[(n_up, n_down)] = res.energy
            results[(n_up, n_down)] = res
    best_energy = min(energies.values())
    tied = sorted(s for s, e in energies.items()
                  if e - best_energy < DEGENERACY_TOL)
    sector = tied[0]
    return GrandEdResult(best=results[sector], sector=sector,
                         energies=energies,
                         degenerate_sectors=tied if len(tied) > 1 else [])


def nearest_sector(n_up: float, n_down: float, length: int) -> tuple:
    sector = (int(round(n_up * length)), int(round(n_down * length)))
    if not (0 <= sector[0] <= length and 0 <= sector[1] <= length):
        raise ValueError(f"densities ({n_up}, {n_down}) give no valid "
                         f"sector on {length} sites")
    return sector


def _apply_site_operator(basis: SectorBasis, vector: np.ndarray, site: int,
                         op4: np.ndarray, target: SectorBasis) -> np.ndarray:
    out = np.zeros(target.size)
    digits = basis.digits(site)
    shift_src = _digit_shift(site, basis.length)
    for d_new in range(4):
        for d_old in range(4):
            amp = op4[d_new, d_old]
            if amp == 0.0:
                continue
            sel = digits == d_old
            if not np.any(sel):
                continue
            new_codes = basis.codes[sel] + (d_new - d_old) * (1 << shift_src)
            out[target.index(new_codes)] += amp * vector[sel]
    return out


def _ladder_vectors(result: EdResult, op4: np.ndarray, d_up: int, d_down: int):
    """apply op4 (which shifts the sector by (d_up, d_down)) at every site."""
    n_up, n_down = result.sector
    t_up, t_down = n_up + d_up, n_down + d_down
    if not (0 <= t_up <= result.length and 0 <= t_down <= result.length):
        return None, None
    target = SectorBasis(result.length, (t_up, t_down))
    vecs = [_apply_site_operator(result.basis, result.vectors[:, 0], site,
                                 op4, target)
            for site in range(result.length)]
    return target, vecs


def ed_correlation_set(result: EdResult, averaging: str = "central-site",
                       resolve_degeneracy: bool = False) -> CorrelationSet:
    """Exact connected correlators on the ED ground state.

    Channels sx and sy coincide identically in a fixed (N_up, N_down)
    sector, and the single-site means of the sx/sy/pair insertions
    vanish there, so only sz and density need the disconnected
    subtraction.
    """
    if averaging not in ("central-site", "all-site"):
        raise ValueError(f"unknown averaging {averaging!r}")
    if result.sector is None:
        raise ValueError("correlations need a sector-resolved result")
    if result.degenerate and not resolve_degeneracy:
        raise DegeneracyError(
            f"ground multiplet in sector {result.sector} has "
            f"{result.multiplicity} members (energies {result.energies}); "
            f"pass resolve_degeneracy=True to use the lowest-index member")
    length = result.length
    periodic = result.boundary == "periodic"
    basis = result.basis
    v = result.vectors[:, 0]
    w2 = v ** 2
    down_first = result.down_first

    a_up = local_operator("annihilate_up", down_first)
    a_down = local_operator("annihilate_down", down_first)
    s_plus = a_up.T @ a_down
    s_minus = a_down.T @ a_up
    pair = local_operator("pair_annihilate", down_first)
    sz = local_operator("sz", down_first)
    n_tot = local_operator("number_total", down_first)

    digits = np.stack([basis.digits(s) for s in range(length)])
    sz_site = np.diag(sz)[digits]
    n_site = np.diag(n_tot)[digits]
    sz_mean = sz_site @ w2
    n_mean = n_site @ w2
    sx0_site = np.diag(0.25 * (s_plus @ s_minus + s_minus @ s_plus))[digits]
    pair0_site = np.diag(pair @ pair.T)[digits]

    _, sm_vecs = _ladder_vectors(result, s_minus, -1, +1)
    _, sp_vecs = _ladder_vectors(result, s_plus, +1, -1)
    _, pd_vecs = _ladder_vectors(result, pair.T, +1, +1)

    def corr(channel: str, i: int, j: int) -> float:
        if i == j:
            if channel in ("sx", "sy"):
                return float(sx0_site[i] @ w2)
            if channel == "sz":
                return float(sz_site[i] ** 2 @ w2) - sz_mean[i] ** 2
            if channel == "density":
                return float(n_site[i] ** 2 @ w2) - n_mean[i] ** 2
            return float(pair0_site[i] @ w2)
        if channel in ("sx", "sy"):
            total = 0.0
            if sm_vecs is not None:
                total += float(sm_vecs[i] @ sm_vecs[j])
            if sp_vecs is not None:
                total += float(sp_vecs[i] @ sp_vecs[j])
            return 0.25 * total
        if channel == "sz":
            return float((sz_site[i] * sz_site[j]) @ w2) \
                - sz_mean[i] * sz_mean[j]
        if channel == "density":
            return float((n_site[i] * n_site[j]) @ w2) - n_mean[i] * n_mean[j]
        if pd_vecs is None:
            return 0.0
        return float(pd_vecs[i] @ pd_vecs[j])

    ref = (length - 1) // 2
    if periodic:
        r_max = length - 1
    elif averaging == "central-site":
        r_max = length - 1 - ref
    else:
        r_max = length - 1

    arrays = {}
    for channel in ("sx", "sz", "density", "pair"):
        xs = np.empty(r_max + 1)
        for r in range(r_max + 1):
            if averaging == "central-site":
                xs[r] = corr(channel, ref, (ref + r) % length if periodic
                             else ref + r)
            else:
                pairs = [(i, (i + r) % length) for i in range(length)] \
                    if periodic else [(i, i + r) for i in range(length - r)]
                xs[r] = float(np.mean([corr(channel, i, j)
                                       for i, j in pairs]))
        arrays[channel] = xs
    # sy equals sx in a fixed sector: s^y s^y and s^x s^x share the same
    # sector-diagonal part (S+S- + S-S+)/4.
    arrays["sy"] = arrays["sx"].copy()

    total_up = float(np.sum(result.density_up))
    total_down = float(np.sum(result.density_down))
    total = total_up + total_down
    meta = {"source": "ed", "averaging": averaging,
            "boundary": result.boundary, "sector": str(result.sector),
            "reference_site": ref if averaging == "central-site" else "all"}
    if result.degenerate:
        meta["degeneracy_tie_break"] = (
            f"multiplet size {result.multiplicity}, lowest-index member used")
    cset = CorrelationSet(
        m=r_max + 1, s_x=arrays["sx"], s_y=arrays["sy"], s_z=arrays["sz"],
        density=arrays["density"], pair=arrays["pair"],
        n_up_a=float(np.mean(result.density_up[0::2])),
        n_down_a=float(np.mean(result.density_down[0::2])),
        n_up_b=float(np.mean(result.density_up[1::2])),
        n_down_b=float(np.mean(result.density_down[1::2])),
        p=0.0 if total <= 0 else (total_up - total_down) / total,
        meta=meta)
    cset.validate()
    return cset
