"""Infinite matrix-product states with a two-site unit cell.

The state is stored in Vidal form

    ... L_ba G_a L_ab G_b L_ba G_a ...

with G_a, G_b rank-3 tensors (left bond, physical, right bond) and
positive Schmidt vectors L_ab, L_ba normalized to unit 2-norm.  The
physical dimension is 4 (four-state sites).

Expectation values never assume the tensors are canonical: environments
are the dominant left/right eigenvectors of the unit-cell transfer
operator, which makes every reported observable invariant under gauge
transformations on the virtual bonds.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np
import scipy.sparse.linalg as spla

from .errors import InvalidStateError, SolverError
from .model import as_local_state

__all__ = [
    "CanonicalMps",
    "init_state",
    "Environments",
    "environments",
    "state_norm_eigenvalue",
    "save_state",
    "load_state",
]

PHYS_DIM = 4


@dataclasses.dataclass
class CanonicalMps:
    """Two-site unit cell [a b] in Vidal form.

    gamma_a: (chi_ba, 4, chi_ab)   gamma_b: (chi_ab, 4, chi_ba)
    lambda_ab sits on the a-b bond, lambda_ba on the b-a bond.
    """

    gamma_a: np.ndarray
    gamma_b: np.ndarray
    lambda_ab: np.ndarray
    lambda_ba: np.ndarray
    seed: int | None = None

    @property
    def chi_ab(self) -> int:
        return len(self.lambda_ab)

    @property
    def chi_ba(self) -> int:
        return len(self.lambda_ba)

    @property
    def chi(self) -> int:
        return max(self.chi_ab, self.chi_ba)

    def copy(self) -> "CanonicalMps":
        return CanonicalMps(self.gamma_a.copy(), self.gamma_b.copy(),
                            self.lambda_ab.copy(), self.lambda_ba.copy(),
                            seed=self.seed)

    def validate(self, lam_tol: float = 1e-8) -> None:
        ga, gb = self.gamma_a, self.gamma_b
        lab, lba = self.lambda_ab, self.lambda_ba
        if ga.shape != (len(lba), PHYS_DIM, len(lab)):
            raise InvalidStateError(f"gamma_a shape {ga.shape} inconsistent with "
                                    f"bond dims ({len(lba)}, {len(lab)})")
        if gb.shape != (len(lab), PHYS_DIM, len(lba)):
            raise InvalidStateError(f"gamma_b shape {gb.shape} inconsistent with "
                                    f"bond dims ({len(lab)}, {len(lba)})")
        for name, lam in (("lambda_ab", lab), ("lambda_ba", lba)):
            if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
                raise InvalidStateError(f"{name} must be positive and finite")
            if np.any(np.diff(lam) > 0):
                raise InvalidStateError(f"{name} must be non-increasing")
            norm = float(np.sum(lam ** 2))
            if abs(norm - 1.0) > lam_tol:
                raise InvalidStateError(f"{name} squared sum {norm!r} != 1")
        if np.any(~np.isfinite(ga)) or np.any(~np.isfinite(gb)):
            raise InvalidStateError("gamma tensors contain non-finite entries")


def init_state(kind: str, occupations=None, chi0: int = 1,
               seed: int | None = None) -> CanonicalMps:
    """Build an initial CanonicalMps.

    kind='product' places the two given site states (unit cell a, b) as a
    chi=1 product state; kind='random' draws gamma entries from a seeded
    generator at bond dimension chi0.
    """
    if kind == "product":
        if occupations is None or len(occupations) != 2:
            raise ValueError("product init needs a 2-element occupation list")
        sa, sb = (as_local_state(s) for s in occupations)
        ga = np.zeros((1, PHYS_DIM, 1))
        gb = np.zeros((1, PHYS_DIM, 1))
        ga[0, sa, 0] = 1.0
        gb[0, sb, 0] = 1.0
        return CanonicalMps(ga, gb, np.ones(1), np.ones(1), seed=seed)
    if kind == "random":
        if chi0 < 1:
            raise ValueError(f"chi0 must be >= 1, got {chi0}")
        rng = np.random.default_rng(seed)
        ga = rng.standard_normal((chi0, PHYS_DIM, chi0))
        gb = rng.standard_normal((chi0, PHYS_DIM, chi0))
        lam = np.sort(rng.uniform(0.2, 1.0, chi0))[::-1]
        lam = lam / np.linalg.norm(lam)
        return CanonicalMps(ga, gb, lam.copy(), lam.copy(), seed=seed)
    raise ValueError(f"unknown init kind: {kind!r}")


def site_tensor(state: CanonicalMps, which: str) -> np.ndarray:
    """Gamma with the right-hand Schmidt vector absorbed."""
    if which == "a":
        return state.gamma_a * state.lambda_ab[None, None, :]
    if which == "b":
        return state.gamma_b * state.lambda_ba[None, None, :]
    raise ValueError(f"which must be 'a' or 'b', got {which!r}")


def left_step(env: np.ndarray, m: np.ndarray, op: np.ndarray | None = None) -> np.ndarray:
    """Move a left environment (ket, bra) through one site tensor."""
    tmp = np.tensordot(env, m, axes=(0, 0))        # (bra, s, right_ket)
    if op is None:
        return np.tensordot(tmp, m, axes=([0, 1], [0, 1]))
    tmp = np.tensordot(tmp, op, axes=(1, 1))       # (bra, right_ket, sbar)
    return np.tensordot(tmp, m, axes=([0, 2], [0, 1]))


def right_step(env: np.ndarray, m: np.ndarray, op: np.ndarray | None = None) -> np.ndarray:
    """Move a right environment (ket, bra) leftward through one site tensor."""
    tmp = np.tensordot(m, env, axes=(2, 0))        # (left_ket, s, bra)
    if op is None:
        return np.tensordot(tmp, m, axes=([1, 2], [1, 2]))
    tmp = np.tensordot(op, tmp, axes=(1, 1))       # (sbar, left_ket, bra)
    return np.tensordot(tmp, m, axes=([0, 2], [1, 2]))


def env_dot(left: np.ndarray, right: np.ndarray) -> float:
    return float(np.sum(left * right))


def _pick_perron(w: np.ndarray, v: np.ndarray):
    """Real eigenvalue attaining the spectral radius, and its vector.

    The transfer operator is a completely positive map, so its spectral
    radius is always attained by a real eigenvalue; a degenerate ring of
    complex partners (broken translation symmetry) may come out of the
    solver first and must be skipped, not fatal.
    """
    radius = float(np.max(np.abs(w)))
    near = np.abs(w) >= (1.0 - 1e-6) * radius
    candidates = np.nonzero(near)[0]
    # smallest imaginary part first, then largest real part, so a
    # coexisting -radius eigenvalue (period-2 structure) never wins
    order = sorted(candidates,
                   key=lambda i: (abs(np.imag(w[i])), -np.real(w[i])))
    k = order[0]
    return w[k], v[:, k]


# Eigenvalues this close (relative) to the dominant one are treated as a
# single degenerate multiplet; broken-symmetry states produce exact ties.
_DEGENERACY_WINDOW = 1e-9
# Below this size the transfer operator is diagonalized densely, which
# resolves degenerate multiplets reliably; Arnoldi may under-resolve them.
_DENSE_DIM = 256


def _dominant_fixed_space(apply_map, dim: int):
    """Dominant real eigenvalue of a real linear map and an orthonormal
    basis of its (possibly degenerate) eigenspace."""
    if dim == 1:
        eta = float(apply_map(np.ones(1))[0])
        return eta, np.ones((1, 1))
    if dim <= _DENSE_DIM:
        full = np.empty((dim, dim))
        basis = np.eye(dim)
        for j in range(dim):
            full[:, j] = apply_map(basis[j])
        w, v = np.linalg.eig(full)
    else:
        op = spla.LinearOperator((dim, dim), matvec=apply_map, dtype=float)
        v0 = np.full(dim, 1.0 / np.sqrt(dim))
        try:
            w, v = spla.eigs(op, k=min(8, dim - 2), which="LM", v0=v0,
                             ncv=min(dim, 48), maxiter=100000)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"transfer-operator eigensolve failed: {exc}") from exc
    radius = float(np.max(np.abs(w)))
    if radius == 0:
        raise SolverError("transfer operator has zero dominant eigenvalue")
    real = np.abs(np.imag(w)) <= 1e-9 * radius
    if not np.any(real & (np.real(w) > 0)):
        raise SolverError(f"dominant transfer eigenvalue is complex: "
                          f"{w[np.argmax(np.abs(w))]!r}")
    eta = float(np.max(np.real(w[real])))
    if eta < (1.0 - 1e-6) * radius:
        raise SolverError(f"dominant transfer eigenvalue is complex: "
                          f"{w[np.argmax(np.abs(w))]!r}")
    keep = real & (np.real(w) >= (1.0 - _DEGENERACY_WINDOW) * eta)
    cols = []
    for i in np.nonzero(keep)[0]:
        vec = v[:, i]
        phase = vec[np.argmax(np.abs(vec))]
        vec = vec * np.conj(phase / abs(phase))
        if np.max(np.abs(np.imag(vec))) > 1e-8 * np.max(np.abs(np.real(vec))):
            raise SolverError("transfer eigenvector stayed complex after "
                              "phase rotation")
        cols.append(np.real(vec))
    q, r = np.linalg.qr(np.column_stack(cols))
    q = q[:, np.abs(np.diag(r)) > 1e-8]
    if q.shape[1] == 0:
        raise SolverError("transfer-operator eigenvector collapsed to zero")
    for j in range(q.shape[1]):
        resid = np.linalg.norm(apply_map(q[:, j]) - eta * q[:, j])
        if resid > 1e-6 * max(1.0, abs(eta)):
            raise SolverError(f"transfer fixed point residual too large: "
                              f"{resid:.3e}")
    return eta, q


def _dominant_fixed_point(apply_map, dim: int):
    """Dominant eigenpair of a real linear map on dim-size vectors."""
    eta, space = _dominant_fixed_space(apply_map, dim)
    return eta, space[:, 0]


def _fix_env_matrix(vec: np.ndarray, dim: int) -> np.ndarray:
    mat = vec.reshape(dim, dim)
    mat = 0.5 * (mat + mat.T)
    if np.trace(mat) < 0:
        mat = -mat
    return mat


def _orthonormal_sym_basis(mats) -> list[np.ndarray]:
    """Orthonormal basis of the span of the symmetric parts of mats,
    ordered by decreasing weight; directions below noise are dropped."""
    k = mats[0].shape[0]
    flat = np.array([(0.5 * (m + m.T)).reshape(-1) for m in mats])
    _, s, vt = np.linalg.svd(flat, full_matrices=False)
    out = []
    for j, sv in enumerate(s):
        if sv <= 1e-7 * max(1.0, s[0]):
            break
        m = vt[j].reshape(k, k)
        m = 0.5 * (m + m.T)
        out.append(m / np.linalg.norm(m))
    return out


def _signature_split(candidate: np.ndarray):
    """Split a bond space by the eigenvalue signs of a symmetric fixed
    element.  Congruence preserves signature (Sylvester), so the split is
    gauge-covariant.  Returns (pos_basis, neg_basis) or None if the
    element is close to definite."""
    w, q = np.linalg.eigh(candidate)
    top = float(np.max(np.abs(w)))
    if top == 0:
        return None
    neg = w < -1e-10 * top
    pos = ~neg          # near-zero directions carry no weight; park them here
    mass_pos = float(np.sum(np.abs(w[pos])))
    mass_neg = float(np.sum(np.abs(w[neg])))
    if min(mass_pos, mass_neg) < 0.02 * (mass_pos + mass_neg):
        return None
    return q[:, pos], q[:, neg]


def _invariant_supports(dirs: list[np.ndarray], chi: int) -> list[np.ndarray]:
    """Partition the bond space into invariant block supports by
    recursively signature-splitting the symmetric fixed subspace."""
    out = []
    stack = [(np.eye(chi), dirs)]
    while stack:
        support, sdirs = stack.pop()
        if len(sdirs) <= 1:
            out.append(support)
            continue
        candidates = list(sdirs[1:])
        for extra in sdirs[1:]:
            candidates.append(sdirs[0] - extra)
            candidates.append(sdirs[0] + extra)
        candidates.append(sdirs[0])
        split = None
        for cand in candidates:
            split = _signature_split(cand)
            if split is not None:
                break
        if split is None:
            # unsplittable multiplet: keep the whole support as one block
            out.append(support)
            continue
        for sub in split:
            restricted = [sub.T @ s @ sub for s in sdirs]
            stack.append((support @ sub, _orthonormal_sym_basis(restricted)))
    return out


def _leaf_element(dirs: list[np.ndarray], support: np.ndarray):
    """Fixed-point matrix of one block: any global symmetric fixed element
    restricted to an invariant support is proportional to the block's own
    fixed point.  Returns a trace-one PSD matrix, or None when the
    restriction is degenerate."""
    cores = [support.T @ s @ support for s in dirs]
    norms = [np.linalg.norm(c) for c in cores]
    core = cores[int(np.argmax(norms))]
    if np.linalg.norm(core) <= 1e-10:
        return None
    mat = support @ core @ support.T
    if np.trace(mat) < 0:
        mat = -mat
    w = np.linalg.eigvalsh(mat)
    if w[0] < -1e-6 * max(w[-1], 1e-300) or w[-1] <= 0:
        return None
    trace = float(np.trace(mat))
    if trace <= 1e-12:
        return None
    return mat / trace


def _canonical_fixed_pair(lmap, rmap, eta: float, lspace: np.ndarray,
                          rspace: np.ndarray, chi: int):
    """Matched left/right fixed-point matrices with degeneracy resolved.

    Eigensolvers return an arbitrary basis inside a degenerate multiplet,
    and that arbitrariness is not gauge-covariant.  Everything used here
    instead transforms covariantly under bond-gauge congruence: matrix
    symmetry, signature splits of the block supports, and the spectra of
    the per-block density matrices.  Observables built from the returned
    pair therefore do not depend on the gauge or on solver noise.
    """
    ldirs = _orthonormal_sym_basis([m.reshape(chi, chi) for m in lspace.T])
    rdirs = _orthonormal_sym_basis([m.reshape(chi, chi) for m in rspace.T])
    if not ldirs or not rdirs:
        raise SolverError("transfer fixed space has no symmetric element")
    l0 = _fix_env_matrix(ldirs[0], chi)
    r0 = _fix_env_matrix(rdirs[0], chi)
    if len(ldirs) == 1 and len(rdirs) == 1:
        return l0, r0
    if len(ldirs) != len(rdirs):
        return l0, r0
    lsup = _invariant_supports(ldirs, chi)
    rsup = _invariant_supports(rdirs, chi)
    if len(lsup) != len(rsup) or len(rsup) == 1:
        return l0, r0
    rho = [_leaf_element(rdirs, v) for v in rsup]
    sig = [_leaf_element(ldirs, v) for v in lsup]
    if any(x is None for x in rho) or any(x is None for x in sig):
        return l0, r0
    pairing = np.array([[env_dot(s, r) for r in rho] for s in sig])
    if not np.all(np.isfinite(pairing)) or np.linalg.cond(pairing) > 1e10:
        return l0, r0
    # sigma[k] pairs to rho[k] alone, so cross-block terms never leak in
    sigma = []
    for k in range(len(rho)):
        unit = np.zeros(len(rho))
        unit[k] = 1.0
        coef = np.linalg.solve(pairing.T, unit)
        sigma.append(sum(c * s for c, s in zip(coef, sig)))
    keys = [np.sort(np.real(np.linalg.eigvals(r @ s)))[::-1]
            for r, s in zip(rho, sigma)]
    best = [0]
    for k in range(1, len(keys)):
        diff = keys[k] - keys[best[0]]
        lead = np.nonzero(np.abs(diff) > 1e-9)[0]
        if lead.size == 0:
            best.append(k)          # symmetry partners: keep the even mixture
        elif diff[lead[0]] > 0:
            best = [k]
    r_sel = sum(rho[k] for k in best)
    l_sel = sum(sigma[k] for k in best)
    for mat, amap in ((l_sel, lmap), (r_sel, rmap)):
        resid = np.linalg.norm(amap(mat.reshape(-1)) - eta * mat.reshape(-1))
        if resid > 1e-6 * max(1.0, abs(eta)) * np.linalg.norm(mat):
            return l0, r0           # supports were not truly invariant
    return l_sel, r_sel


@dataclasses.dataclass
class Environments:
    """Normalized unit-cell tensors plus boundary fixed points.

    m_a/m_b are rescaled so the cell transfer operator has dominant
    eigenvalue 1; l_*/r_* are left/right fixed points at the two bonds
    with (l | r) = 1 on each bond.  eta_raw is the eigenvalue before
    rescaling (the state norm per unit cell).
    """

    m_a: np.ndarray
    m_b: np.ndarray
    l_ba: np.ndarray
    l_ab: np.ndarray
    r_ba: np.ndarray
    r_ab: np.ndarray
    eta_raw: float


def environments(state: CanonicalMps, validate: bool = True) -> Environments:
    if validate:
        state.validate()
    m_a = site_tensor(state, "a")
    m_b = site_tensor(state, "b")
    dim = state.chi_ba ** 2

    def lmap(v):
        env = v.reshape(state.chi_ba, state.chi_ba)
        return left_step(left_step(env, m_a), m_b).reshape(-1)

    def rmap(v):
        env = v.reshape(state.chi_ba, state.chi_ba)
        return right_step(right_step(env, m_b), m_a).reshape(-1)

    eta, lspace = _dominant_fixed_space(lmap, dim)
    if eta <= 0:
        raise SolverError(f"state norm eigenvalue is not positive: {eta!r}")
    eta_r, rspace = _dominant_fixed_space(rmap, dim)
    if abs(eta_r - eta) > 1e-6 * max(1.0, abs(eta)):
        raise SolverError(f"left/right transfer eigenvalues disagree: "
                          f"{eta!r} vs {eta_r!r}")
    l_ba, r_ba = _canonical_fixed_pair(lmap, rmap, eta, lspace, rspace,
                                       state.chi_ba)
    scale = eta ** -0.25
    m_a = m_a * scale
    m_b = m_b * scale
    overlap = env_dot(l_ba, r_ba)
    if abs(overlap) < 1e-12:
        raise SolverError("left/right fixed points are orthogonal; "
                          "transfer spectrum looks degenerate")
    l_ba = l_ba / overlap
    l_ab = left_step(l_ba, m_a)
    r_ab = right_step(r_ba, m_b)
    overlap_ab = env_dot(l_ab, r_ab)
    if not np.isfinite(overlap_ab) or abs(overlap_ab - 1.0) > 1e-6:
        raise SolverError(f"mid-cell environment normalization drifted: "
                          f"{overlap_ab!r}")
    r_ab = r_ab / overlap_ab
    return Environments(m_a=m_a, m_b=m_b, l_ba=l_ba, l_ab=l_ab,
                        r_ba=r_ba, r_ab=r_ab, eta_raw=eta)


def state_norm_eigenvalue(state: CanonicalMps) -> float:
    """Dominant eigenvalue of the unit-cell transfer operator."""
    return environments(state).eta_raw


def save_state(path, state: CanonicalMps, meta: dict | None = None) -> None:
    """Write a self-describing checkpoint (npz container, bit-exact)."""
    meta = dict(meta or {})
    meta.setdefault("format", "ghm1d-canonical-mps")
    meta.setdefault("version", 1)
    if state.seed is not None:
        meta.setdefault("seed", state.seed)
    blob = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"),
                         dtype=np.uint8)
    np.savez(path, gamma_a=state.gamma_a, gamma_b=state.gamma_b,
             lambda_ab=state.lambda_ab, lambda_ba=state.lambda_ba,
             meta=blob)


def load_state(path) -> tuple[CanonicalMps, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        state = CanonicalMps(gamma_a=data["gamma_a"], gamma_b=data["gamma_b"],
                             lambda_ab=data["lambda_ab"],
                             lambda_ba=data["lambda_ba"],
                             seed=meta.get("seed"))
    return state, meta
