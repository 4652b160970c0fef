"""Chemical-potential sweeps, phase classification, and (n, p) tuning.

A harmonic trap enters only through the local-density approximation:
moving outward from the trap center lowers the local mean chemical
potential, so a sweep over descending mu at fixed delta_mu traces the
center-to-edge sequence of phases.  Each point is classified from the
peak structure of its spin/density/pair spectra.

Classification precedence (first rule that fires wins):
  1. vacuum / band-insulator density cuts,
  2. SDW when the best spin peak out-prominences the best pair peak by
     ratio_threshold,
  3. FFLO when the dominant pair peak sits at k > k_min,
  4. BCS when the dominant pair peak sits at k <= k_min and |p| < p_min,
  5. fall-through: PolarizedNormal, flagged ambiguous.
The SDW-before-FFLO order is deliberate: strong spin order coexists
with residual finite-k pair weight, and the prominence ratio is the
discriminator the thresholds encode.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math

import numpy as np

from .errors import Ghm1dError, RootFindError
from .itebd import default_schedule, ground_state_itebd, warm_schedule
from .model import ModelParams
from .observables import (correlation_set, detect_peaks, fourier_transform,
                          site_expectations)

__all__ = [
    "Phase",
    "ClassifierThresholds",
    "PhaseLabel",
    "classify_phase",
    "SweepRecord",
    "lda_sweep",
    "TuneResult",
    "tune_to_filling",
    "harmonic_trap_profile",
]

logger = logging.getLogger("ghm1d.trap")

SPECTRUM_CHANNELS = {"S": "s_z", "D": "density", "P": "pair"}


class Phase(enum.Enum):
    FFLO = "FFLO"
    BCS = "BCS"
    SDW = "SDW"
    POLARIZED_NORMAL = "PolarizedNormal"
    VACUUM = "Vacuum"
    BAND_INSULATOR = "BandInsulator"


@dataclasses.dataclass(frozen=True)
class ClassifierThresholds:
    k_min: float = 3.0 * math.pi / 100.0
    p_min: float = 0.02
    ratio_threshold: float = 1.5
    n_vacuum: float = 0.02
    n_band: float = 1.98

    def __post_init__(self):
        if self.k_min <= 0 or self.p_min <= 0 or self.ratio_threshold <= 0:
            raise ValueError("classifier thresholds must be positive")
        if not 0 < self.n_vacuum < self.n_band < 2:
            raise ValueError("need 0 < n_vacuum < n_band < 2")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class PhaseLabel:
    phase: Phase
    evidence: dict
    ambiguous: bool = False

    @property
    def name(self) -> str:
        return self.phase.value


def _best(peaks) -> tuple:
    """(location, prominence) of the tallest peak, or (nan, 0.0)."""
    if peaks is None or len(peaks) == 0:
        return float("nan"), 0.0
    top = peaks.peaks[0]
    return top.location, top.prominence


def classify_phase(n: float, p: float, peak_lists: dict,
                   thresholds: ClassifierThresholds | None = None,
                   ) -> PhaseLabel:
    """Deterministic label from density, polarization, and peak evidence.

    peak_lists maps 'S', 'D', 'P' to PeakList objects (missing or empty
    entries count as featureless spectra).
    """
    if not (-1e-6 <= n <= 2 + 1e-6):
        raise ValueError(f"density {n} outside [0, 2]")
    th = thresholds or ClassifierThresholds()
    s_loc, s_prom = _best(peak_lists.get("S"))
    d_loc, d_prom = _best(peak_lists.get("D"))
    p_loc, p_prom = _best(peak_lists.get("P"))
    evidence = {
        "n": float(n), "p": float(p),
        "spin_peak_k": s_loc, "spin_prominence": s_prom,
        "density_peak_k": d_loc, "density_prominence": d_prom,
        "pair_peak_k": p_loc, "pair_prominence": p_prom,
        "spin_to_pair_ratio": (s_prom / p_prom if p_prom > 0
                               else float("inf") if s_prom > 0 else 0.0),
        "thresholds": th.as_dict(),
    }
    if n < th.n_vacuum:
        return PhaseLabel(Phase.VACUUM, evidence)
    if n > th.n_band:
        return PhaseLabel(Phase.BAND_INSULATOR, evidence)
    if s_prom > th.ratio_threshold * p_prom and s_prom > 0:
        return PhaseLabel(Phase.SDW, evidence)
    if p_prom > 0 and p_loc > th.k_min:
        return PhaseLabel(Phase.FFLO, evidence)
    if p_prom > 0 and p_loc <= th.k_min and abs(p) < th.p_min:
        return PhaseLabel(Phase.BCS, evidence)
    return PhaseLabel(Phase.POLARIZED_NORMAL, evidence, ambiguous=True)


@dataclasses.dataclass
class SweepRecord:
    mu: float
    delta_mu: float
    n: float = float("nan")
    p: float = float("nan")
    energy_per_site: float = float("nan")
    label: PhaseLabel | None = None
    top_peaks: dict = dataclasses.field(default_factory=dict)
    converged: bool = False
    warm_started: bool = False
    failed: bool = False
    error: str | None = None
    manifest_ref: str | None = None

    @property
    def phase_name(self) -> str:
        if self.failed or self.label is None:
            return "failed"
        return self.label.name


def _spectra_and_peaks(cset, k_grid=None):
    spectra = {}
    peaks = {}
    for tag, field in SPECTRUM_CHANNELS.items():
        series = getattr(cset, field)
        spectra[tag] = fourier_transform(series, k_grid, channel=tag)
        peaks[tag] = detect_peaks(spectra[tag])
    return spectra, peaks


def lda_sweep(base: ModelParams, delta_mu: float, mu_list,
              schedule=None, chi_max: int = 80, cutoff: float = 1e-12,
              m: int = 100, k_grid=None,
              thresholds: ClassifierThresholds | None = None,
              seed: int = 7, warm_start: bool = True,
              on_point=None) -> list:
    """One record per mu, descending, warm-starting along the sweep.

    A failed point is recorded (failed=True, error set) and the next
    point restarts cold.  on_point(record, state, cset, spectra) runs
    after each successful point, for persistence hooks.
    """
    mu_values = [float(mu) for mu in mu_list]
    if not mu_values:
        raise ValueError("mu_list must be non-empty")
    if any(b >= a for a, b in zip(mu_values, mu_values[1:])):
        raise ValueError("mu_list must be strictly descending "
                         "(trap center first)")
    schedule0 = list(schedule) if schedule is not None else default_schedule()
    records = []
    prev_state = None
    for mu in mu_values:
        params = ModelParams.from_mu(t=base.t, delta_g=base.delta_g,
                                     delta_t=base.delta_t, U=base.U,
                                     mu=mu, delta_mu=delta_mu)
        warm = warm_start and prev_state is not None
        record = SweepRecord(mu=mu, delta_mu=delta_mu, warm_started=warm)
        try:
            state, report = ground_state_itebd(
                params,
                schedule=warm_schedule(schedule0) if warm else schedule0,
                chi_max=chi_max, cutoff=cutoff,
                init=prev_state if warm else None, seed=seed)
            cset = correlation_set(state, m)
            spectra, peaks = _spectra_and_peaks(cset, k_grid)
            record.n = cset.filling
            record.p = cset.p
            record.energy_per_site = report.final_energy_per_site
            record.converged = report.converged
            record.label = classify_phase(record.n, record.p, peaks,
                                          thresholds)
            record.top_peaks = {tag: list(pk.peaks[:3])
                                for tag, pk in peaks.items()}
            prev_state = state
            logger.info("sweep point mu=%.4f dmu=%.4f -> n=%.4f p=%.4f %s",
                        mu, delta_mu, record.n, record.p, record.phase_name)
            if on_point is not None:
                on_point(record, state, cset, spectra)
        except Ghm1dError as exc:
            record.failed = True
            record.error = f"{type(exc).__name__}: {exc}"
            prev_state = None
            logger.warning("sweep point mu=%.4f failed: %s", mu, record.error)
        records.append(record)
    return records


@dataclasses.dataclass(frozen=True)
class TuneResult:
    mu: float
    delta_mu: float
    n: float
    p: float
    evaluations: int
    trace: tuple

    def __iter__(self):
        return iter((self.mu, self.delta_mu))


def _illinois(f, a, fa, b, fb, tol, max_iter, what):
    """Regula falsi with the Illinois stall fix; f monotone-ish.

    Returns (x, fx, extras) with |fx| <= tol, or raises RootFindError.
    """
    best = None
    for _ in range(max_iter):
        x = b - fb * (a - b) / (fa - fb) if fa != fb else 0.5 * (a + b)
        if not (min(a, b) < x < max(a, b)):
            x = 0.5 * (a + b)
        fx, extras = f(x)
        if best is None or abs(fx) < abs(best[1]):
            best = (x, fx, extras)
        if abs(fx) <= tol:
            return x, fx, extras
        if (fx > 0) == (fb > 0):
            b, fb = x, fx
            fa *= 0.5
        else:
            a, fa = b, fb
            b, fb = x, fx
    raise RootFindError(f"{what}: no convergence within {max_iter} "
                        f"refinements (best residual {best[1]:+.4f})",
                        best=best)


def tune_to_filling(base: ModelParams, n_target: float, p_target: float,
                    tol_n: float = 0.005, tol_p: float = 0.005,
                    schedule=None, chi_max: int = 32, cutoff: float = 1e-12,
                    seed: int = 7, max_inner: int = 20, max_outer: int = 24,
                    delta_mu_max: float = 8.0, max_runs: int = 150,
                    ) -> TuneResult:
    """Find (mu, delta_mu) hitting target filling and polarization.

    Nested one-dimensional root finds: the inner loop tunes mu to the
    target filling at fixed delta_mu (filling is monotone in mu), the
    outer loop tunes delta_mu to the target polarization.  Runs within
    one inner solve warm-start from the previous evaluation's state;
    each new delta_mu starts cold so the outer objective is a
    history-free function of delta_mu.
    """
    if not 0 < n_target < 2:
        raise ValueError(f"n_target must be in (0, 2), got {n_target}")
    if not -1 < p_target < 1:
        raise ValueError(f"p_target must be in (-1, 1), got {p_target}")
    schedule0 = list(schedule) if schedule is not None else default_schedule()
    trace: list = []
    state_box = {"state": None, "runs": 0}

    def evaluate(mu: float, dmu: float):
        if state_box["runs"] >= max_runs:
            raise RootFindError(
                f"tune_to_filling exceeded {max_runs} engine runs",
                best=trace[-1] if trace else None, trace=tuple(trace))
        params = ModelParams.from_mu(t=base.t, delta_g=base.delta_g,
                                     delta_t=base.delta_t, U=base.U,
                                     mu=mu, delta_mu=dmu)
        warm = state_box["state"] is not None
        state, _ = ground_state_itebd(
            params, schedule=warm_schedule(schedule0) if warm else schedule0,
            chi_max=chi_max, cutoff=cutoff,
            init=state_box["state"] if warm else None, seed=seed)
        state_box["state"] = state
        state_box["runs"] += 1
        exps = site_expectations(state)
        point = {"mu": mu, "delta_mu": dmu, "n": exps.filling,
                 "p": exps.polarization}
        trace.append(point)
        logger.debug("tune eval mu=%.5f dmu=%.5f -> n=%.5f p=%.5f",
                     mu, dmu, exps.filling, exps.polarization)
        return exps.filling, exps.polarization

    def solve_mu(dmu: float):
        """Inner solve: mu such that n(mu; dmu) = n_target.

        Anchors cold: a state warm-started across delta_mu values drags
        hysteresis over phase boundaries and makes the outer objective
        history-dependent, which stalls the root find.  Within one
        delta_mu the mu walk warm-starts as usual.
        """
        center = 0.5 * base.U
        a = b = center
        state_box["state"] = None
        na, pa = evaluate(a, dmu)
        fa = na - n_target
        if abs(fa) <= tol_n:
            return a, na, pa
        step = 1.0
        nb, pb, fb = na, pa, fa
        for _ in range(12):
            if fa < 0:
                b = a + step
            else:
                b = a - step
            nb, pb = evaluate(b, dmu)
            fb = nb - n_target
            if abs(fb) <= tol_n:
                return b, nb, pb
            if (fb > 0) != (fa > 0):
                break
            a, fa, na, pa = b, fb, nb, pb
            step *= 2.0
        else:
            raise RootFindError(
                f"no mu bracket for n={n_target} at delta_mu={dmu}",
                best=trace[-1], trace=tuple(trace))

        def f(mu):
            n, p = evaluate(mu, dmu)
            return n - n_target, (n, p)

        mu, _, extras = _illinois(f, a, fa, b, fb, tol_n, max_inner,
                                  f"mu solve at delta_mu={dmu}")
        return mu, extras[0], extras[1]

    sign = 1.0 if p_target >= 0 else -1.0
    p_abs = abs(p_target)
    if p_abs <= tol_p:
        mu, n, p = solve_mu(0.0)
        return TuneResult(mu=mu, delta_mu=0.0, n=n, p=p,
                          evaluations=state_box["runs"], trace=tuple(trace))

    # Outer bracket on delta_mu: p vanishes at 0 and grows monotonically.
    a, ga = 0.0, -p_abs
    hi = 1.0
    solved = {}
    while True:
        mu_hi, n_hi, p_hi = solve_mu(sign * hi)
        solved[hi] = (mu_hi, n_hi, p_hi)
        g_hi = sign * p_hi - p_abs
        if g_hi > 0:
            break
        a, ga = hi, g_hi
        hi *= 2.0
        if hi > delta_mu_max:
            raise RootFindError(
                f"polarization {p_target} unreachable below "
                f"delta_mu={delta_mu_max}", best=trace[-1],
                trace=tuple(trace))
    if abs(g_hi) <= tol_p:
        mu, n, p = solved[hi]
        return TuneResult(mu=mu, delta_mu=sign * hi, n=n, p=p,
                          evaluations=state_box["runs"], trace=tuple(trace))

    def g(dmu_abs):
        mu, n, p = solve_mu(sign * dmu_abs)
        return sign * p - p_abs, (mu, n, p)

    dmu_abs, _, extras = _illinois(g, a, ga, hi, g_hi, tol_p, max_outer,
                                   f"delta_mu solve for p={p_target}")
    mu, n, p = extras
    return TuneResult(mu=mu, delta_mu=sign * dmu_abs, n=n, p=p,
                      evaluations=state_box["runs"], trace=tuple(trace))


def harmonic_trap_profile(mu_center: float, kappa: float, radii) -> list:
    """LDA map of a harmonic trap: (r, mu_center - kappa r^2 / 2) rows."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    return [(float(r), mu_center - 0.5 * kappa * float(r) ** 2)
            for r in radii]
