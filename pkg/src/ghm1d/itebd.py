"""Imaginary-time evolution of the two-site unit cell (infinite chain).

Ground-state search runs a staged second-order Trotter scheme: per step
the a-b bond gets exp(-dtau/2 h), the b-a bond exp(-dtau h), then the
a-b bond exp(-dtau/2 h) again, with dtau stepped down through a
schedule.  A stage ends when the energy estimate moves less than its
tolerance per step, or at its step budget.

Bond updates are plain Vidal updates: contract the two-site wave
function with the surrounding Schmidt vectors, apply the gate, split by
truncated SVD, and strip the outer Schmidt vectors with a
pseudo-inverse (relative cutoff 1e-12).
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from .errors import DegenerateStateError, DivergenceError
from .model import BondOperator, ModelParams, bond_gate, bond_hamiltonian
from .mps import CanonicalMps, environments, env_dot, init_state, left_step
from .tensor import svd_truncate

__all__ = [
    "ScheduleStage",
    "StageReport",
    "ConvergenceReport",
    "default_schedule",
    "warm_schedule",
    "itebd_sweep",
    "ground_state_itebd",
    "energy_per_site",
]

PINV_RELATIVE_CUTOFF = 1e-12
DEFAULT_SEED = 7


@dataclasses.dataclass(frozen=True)
class ScheduleStage:
    dtau: float
    max_steps: int
    energy_tol: float

    def __post_init__(self):
        if not (self.dtau > 0 and np.isfinite(self.dtau)):
            raise ValueError(f"stage dtau must be positive, got {self.dtau!r}")
        if self.max_steps < 1:
            raise ValueError(f"stage max_steps must be >= 1, got {self.max_steps!r}")
        if self.energy_tol < 0:
            raise ValueError(f"stage energy_tol must be >= 0, got {self.energy_tol!r}")


def default_schedule() -> list[ScheduleStage]:
    """Staged dtau ramp; per-step tolerance scales with dtau."""
    return [ScheduleStage(dtau, 20000, 1e-9 * dtau)
            for dtau in (0.1, 0.05, 0.02, 0.01, 0.005, 0.001)]


def warm_schedule(schedule=None, dtau_max: float = 0.05) -> list[ScheduleStage]:
    """Tail of a schedule for restarts from an already-converged state."""
    schedule = list(schedule) if schedule is not None else default_schedule()
    tail = [s for s in schedule if s.dtau <= dtau_max]
    return tail if tail else [schedule[-1]]


def validate_schedule(schedule) -> list[ScheduleStage]:
    stages = [s if isinstance(s, ScheduleStage) else ScheduleStage(*s)
              for s in schedule]
    if not stages:
        raise ValueError("schedule must contain at least one stage")
    dtaus = [s.dtau for s in stages]
    if any(b >= a for a, b in zip(dtaus, dtaus[1:])):
        raise ValueError(f"schedule dtau values must strictly decrease: {dtaus}")
    return stages


@dataclasses.dataclass
class StageReport:
    dtau: float
    steps: int
    stop_reason: str
    final_delta_e: float
    max_discarded_weight: float


@dataclasses.dataclass
class ConvergenceReport:
    energy_trace: list
    stages: list
    total_steps: int
    wall_time_s: float
    final_energy_per_site: float
    converged: bool
    chi_max: int
    cutoff: float
    seed: int | None
    schedule: list

    def as_dict(self) -> dict:
        return {
            "stages": [dataclasses.asdict(s) for s in self.stages],
            "total_steps": self.total_steps,
            "wall_time_s": self.wall_time_s,
            "final_energy_per_site": self.final_energy_per_site,
            "converged": self.converged,
            "chi_max": self.chi_max,
            "cutoff": self.cutoff,
            "seed": self.seed,
            "schedule": [dataclasses.asdict(s) for s in self.schedule],
            "energy_trace_tail": self.energy_trace[-5:],
        }


def _pinv_vector(lam: np.ndarray) -> np.ndarray:
    top = lam[0] if len(lam) else 0.0
    with np.errstate(divide="ignore"):
        inv = np.where(lam > PINV_RELATIVE_CUTOFF * top, 1.0 / lam, 0.0)
    return inv


def _theta(gl, gr, lam_mid, lam_left, lam_right):
    theta = gl * lam_left[:, None, None]
    theta = theta * lam_mid[None, None, :]
    theta = np.tensordot(theta, gr, axes=(2, 0))
    theta = theta * lam_right[None, None, None, :]
    return theta


def _apply_gate(theta, gate44):
    out = np.tensordot(theta, gate44, axes=([1, 2], [2, 3]))
    return out.transpose(0, 2, 3, 1)


def _split_theta(theta, chi_max, cutoff, inv_left, inv_right):
    dim_l, dim_r = theta.shape[0], theta.shape[3]
    res = svd_truncate(theta.reshape(dim_l * 4, 4 * dim_r), chi_max, cutoff)
    s = res.singular_values
    if not np.all(np.isfinite(s)) or s[0] <= 0:
        raise DegenerateStateError("bond update produced no usable singular values")
    lam_new = s / np.linalg.norm(s)
    gl_new = res.left.reshape(dim_l, 4, len(s)) * inv_left[:, None, None]
    gr_new = res.right.reshape(len(s), 4, dim_r) * inv_right[None, None, :]
    return gl_new, gr_new, lam_new, res.discarded_weight


def _update_bond(state: CanonicalMps, gate44, bond: str, chi_max, cutoff) -> float:
    if bond == "ab":
        gl, gr = state.gamma_a, state.gamma_b
        lam_mid, lam_out = state.lambda_ab, state.lambda_ba
    else:
        gl, gr = state.gamma_b, state.gamma_a
        lam_mid, lam_out = state.lambda_ba, state.lambda_ab
    theta = _theta(gl, gr, lam_mid, lam_out, lam_out)
    if gate44 is not None:
        theta = _apply_gate(theta, gate44)
    inv_out = _pinv_vector(lam_out)
    gl_new, gr_new, lam_new, weight = _split_theta(theta, chi_max, cutoff,
                                                   inv_out, inv_out)
    if bond == "ab":
        state.gamma_a, state.gamma_b, state.lambda_ab = gl_new, gr_new, lam_new
    else:
        state.gamma_b, state.gamma_a, state.lambda_ba = gl_new, gr_new, lam_new
    return weight


def itebd_sweep(state: CanonicalMps, gate: BondOperator, chi_max: int,
                cutoff: float = 1e-12) -> tuple[CanonicalMps, dict]:
    """One first-order sweep: gate on the a-b bond, then on the b-a bond."""
    if gate.flavor != "gate":
        raise ValueError("itebd_sweep needs a 'gate' flavor BondOperator")
    if chi_max < 1:
        raise ValueError(f"chi_max must be >= 1, got {chi_max}")
    state = state.copy()
    g44 = gate.as_tensor()
    w_ab = _update_bond(state, g44, "ab", chi_max, cutoff)
    w_ba = _update_bond(state, g44, "ba", chi_max, cutoff)
    return state, {"discarded_weight_ab": w_ab, "discarded_weight_ba": w_ba,
                   "max_discarded_weight": max(w_ab, w_ba)}


def _bond_energy_fast(state: CanonicalMps, h44, bond: str) -> float:
    """<theta|h|theta>/<theta|theta> on one bond; assumes near-canonical form.

    Used only to steer convergence; reported energies go through the
    gauge-robust environment contraction in energy_per_site.
    """
    if bond == "ab":
        gl, gr = state.gamma_a, state.gamma_b
        lam_mid, lam_out = state.lambda_ab, state.lambda_ba
    else:
        gl, gr = state.gamma_b, state.gamma_a
        lam_mid, lam_out = state.lambda_ba, state.lambda_ab
    theta = _theta(gl, gr, lam_mid, lam_out, lam_out)
    h_theta = _apply_gate(theta, h44)
    den = float(np.sum(theta * theta))
    if den <= 0 or not np.isfinite(den):
        raise DivergenceError(f"state norm collapsed on bond {bond}")
    return float(np.sum(theta * h_theta)) / den


def energy_per_site(state: CanonicalMps, params: ModelParams, envs=None) -> float:
    """Environment-contracted mean bond energy (1/2-1/2 on-site split)."""
    if envs is None:
        envs = environments(state)
    h = np.asarray(bond_hamiltonian(params).matrix)
    m_ab = np.tensordot(envs.m_a, envs.m_b, axes=(2, 0))
    m_ab = m_ab.reshape(m_ab.shape[0], 16, m_ab.shape[3])
    e_ab = env_dot(left_step(envs.l_ba, m_ab, h), envs.r_ba)
    m_ba = np.tensordot(envs.m_b, envs.m_a, axes=(2, 0))
    m_ba = m_ba.reshape(m_ba.shape[0], 16, m_ba.shape[3])
    e_ba = env_dot(left_step(envs.l_ab, m_ba, h), envs.r_ab)
    return 0.5 * (e_ab + e_ba)


def ground_state_itebd(params: ModelParams, schedule=None, chi_max: int = 80,
                       cutoff: float = 1e-12, init: CanonicalMps | None = None,
                       seed: int | None = None, check_every: int = 10,
                       ) -> tuple[CanonicalMps, ConvergenceReport]:
    """Staged imaginary-time ground-state search on the infinite chain."""
    if params.t <= 0:
        raise ValueError("ground_state_itebd needs t > 0")
    if chi_max < 1:
        raise ValueError(f"chi_max must be >= 1, got {chi_max}")
    if check_every < 1:
        raise ValueError(f"check_every must be >= 1, got {check_every}")
    stages = validate_schedule(schedule if schedule is not None
                               else default_schedule())
    if init is not None:
        state = init.copy()
        used_seed = init.seed
    else:
        used_seed = DEFAULT_SEED if seed is None else seed
        state = init_state("random", chi0=2, seed=used_seed)

    h_bond = bond_hamiltonian(params)
    h44 = h_bond.as_tensor()
    trace: list = []
    reports: list = []
    total_steps = 0
    started = time.perf_counter()
    for stage in stages:
        g_half = bond_gate(h_bond, 0.5 * stage.dtau).as_tensor()
        g_full = bond_gate(h_bond, stage.dtau).as_tensor()
        e_prev = None
        steps_at_prev = 0
        max_weight = 0.0
        reason = "max_steps"
        delta = float("nan")
        step = 0
        while step < stage.max_steps:
            step += 1
            w1 = _update_bond(state, g_half, "ab", chi_max, cutoff)
            w2 = _update_bond(state, g_full, "ba", chi_max, cutoff)
            w3 = _update_bond(state, g_half, "ab", chi_max, cutoff)
            max_weight = max(max_weight, w1, w2, w3)
            if step % check_every == 0 or step == stage.max_steps:
                energy = 0.5 * (_bond_energy_fast(state, h44, "ab")
                                + _bond_energy_fast(state, h44, "ba"))
                if not np.isfinite(energy):
                    raise DivergenceError(
                        f"energy became non-finite at dtau={stage.dtau}")
                trace.append((total_steps + step, energy))
                if e_prev is not None:
                    delta = abs(energy - e_prev) / (step - steps_at_prev)
                    if delta < stage.energy_tol:
                        reason = "energy_tol"
                        e_prev = energy
                        break
                e_prev = energy
                steps_at_prev = step
        total_steps += step
        reports.append(StageReport(dtau=stage.dtau, steps=step, stop_reason=reason,
                                   final_delta_e=delta,
                                   max_discarded_weight=max_weight))
    final_energy = energy_per_site(state, params)
    report = ConvergenceReport(
        energy_trace=trace, stages=reports, total_steps=total_steps,
        wall_time_s=time.perf_counter() - started,
        final_energy_per_site=final_energy,
        converged=all(r.stop_reason == "energy_tol" for r in reports),
        chi_max=chi_max, cutoff=cutoff, seed=used_seed, schedule=stages)
    if state.seed is None:
        state.seed = used_seed
    return state, report
