"""End-to-end acceptance gate.

Eight criteria, one test (one pass/fail line under -v) each.  The
figure pipelines run through the real CLI at production settings
(chi = 80, correlator reach 100, 512-point spectra), so the full gate
takes on the order of an hour; criteria 1-3 and 8 are minutes.  Session
fixtures share the expensive runs between criteria.

Criterion 3 is expected to fail on its energy bound: at the gapless
non-interacting point a chi = 40 state has a finite-entanglement energy
floor of 1.38e-3 above the exact value, above the 1e-3 the check
demands.  The test runs the prescribed procedure and reports the real
number; see README ("Known limitation") and
scripts/bond_dimension_scan.py.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from ghm1d import cli
from ghm1d.ed import ground_state_ed, ground_state_grand, ed_correlation_set
from ghm1d.finite import ground_state_finite
from ghm1d.itebd import ScheduleStage, default_schedule, \
    ground_state_itebd, energy_per_site
from ghm1d.model import ModelParams
from ghm1d.observables import correlation_set, detect_peaks, Spectrum
from ghm1d.trap import ClassifierThresholds, Phase, classify_phase

pytestmark = pytest.mark.acceptance

THRESHOLDS = ClassifierThresholds()


def load_table(path):
    """CSV -> (column names, dict of float arrays); '#' lines skipped."""
    with open(path) as fh:
        rows = [ln for ln in fh.read().splitlines()
                if ln and not ln.startswith("#")]
    names = rows[0].split(",")
    columns = {name: [] for name in names}
    cells = [row.split(",") for row in rows[1:]]
    for row in cells:
        for name, cell in zip(names, row):
            columns[name].append(cell)
    return names, columns


def spectrum_from_csv(path, channel):
    names, columns = load_table(path)
    assert channel in names, f"{path} lacks channel {channel}"
    return Spectrum(k_grid=np.array([float(x) for x in columns["k"]]),
                    values=np.array([float(x) for x in columns[channel]]),
                    channel=channel)


def sweep_rows(path):
    names, columns = load_table(path)
    rows = []
    for idx in range(len(columns["mu"])):
        rows.append({name: columns[name][idx] for name in names})
    for row in rows:
        assert row["failed"] == "False", f"failed sweep point in {path}: {row}"
    return rows


def reproduce(tmp_path_factory, figure):
    out = str(tmp_path_factory.mktemp(f"accept_{figure}"))
    start = time.perf_counter()
    rc = cli.main(["reproduce", "--out", out, figure])
    wall = time.perf_counter() - start
    assert rc == 0, f"reproduce {figure} failed (see {out})"
    with open(os.path.join(out, "manifest.json")) as fh:
        manifest = json.load(fh)
    on_disk = sorted(n for n in os.listdir(out) if n != "manifest.json")
    assert sorted(manifest["files"]) == on_disk
    print(f"[{figure}] {len(on_disk)} artifact files, wall {wall:.0f}s")
    return out, manifest


@pytest.fixture(scope="session")
def fig1_artifacts(tmp_path_factory):
    out, manifest = reproduce(tmp_path_factory, "fig1")
    spectra = [n for n in manifest["files"] if n.startswith("spectrum_")]
    corrs = [n for n in manifest["files"] if n.startswith("correlations_")]
    # Contract: six tuned curves, four spectrum channels each.
    assert len(spectra) == 24, f"expected 24 spectrum files, got {spectra}"
    assert len(corrs) == 6
    for tag in ("U-8_dg0", "U-8_dg-0.5", "U-2_dg1"):
        for channel in ("Sx", "Sz", "D", "P"):
            assert f"spectrum_{tag}_{channel}.csv" in manifest["files"]
    return out, manifest


@pytest.fixture(scope="session")
def fig2_artifacts(tmp_path_factory):
    return reproduce(tmp_path_factory, "fig2")


@pytest.fixture(scope="session")
def fig3_artifacts(tmp_path_factory):
    return reproduce(tmp_path_factory, "fig3")


# Moderate-dtau imaginary time drains the soft pair center-of-mass
# modes that per-step energy tolerances barely see; the staircase then
# removes the Trotter bias.  Calibrated on this exact comparison.
FINITE_SCHEDULE = [
    ScheduleStage(0.1, 300, 1e-9), ScheduleStage(0.05, 600, 0.0),
    ScheduleStage(0.02, 5000, 0.0), ScheduleStage(0.01, 1200, 0.0),
    ScheduleStage(0.005, 1200, 0.0), ScheduleStage(0.002, 1500, 0.0),
    ScheduleStage(0.001, 1500, 0.0),
]


@pytest.fixture(scope="session")
def finite_vs_ed_bundle():
    params = ModelParams.from_mu(t=1.0, delta_g=0.0, delta_t=0.0, U=-8.0,
                                 mu=-4.0, delta_mu=0.0)
    start = time.perf_counter()
    state, report = ground_state_finite(params, length=6,
                                        schedule=FINITE_SCHEDULE,
                                        chi_max=64, seed=7)
    wall_tebd = time.perf_counter() - start
    grand = ground_state_grand(params, length=6)
    return {"params": params, "state": state, "report": report,
            "grand": grand, "wall_tebd": wall_tebd}


def test_criterion_1_two_site_closed_forms():
    start = time.perf_counter()
    worst = 0.0
    for u in np.linspace(-8.0, 8.0, 5):
        for dg in np.linspace(-1.0, 1.0, 5):
            params = ModelParams.from_mu(t=1.0, delta_g=dg,
                                         delta_t=-2.0 * dg, U=u,
                                         mu=0.0, delta_mu=0.0)
            half = 0.5 * u
            expected_11 = half - math.sqrt(half ** 2 + 4.0 * (1.0 + dg) ** 2)
            expected_21 = u - abs(1.0 + 2.0 * dg - 2.0 * dg)
            got_11 = ground_state_ed(params, 2, sector=(1, 1)).energy
            got_21 = ground_state_ed(params, 2, sector=(2, 1)).energy
            worst = max(worst, abs(got_11 - expected_11),
                        abs(got_21 - expected_21))
    wall = time.perf_counter() - start
    print(f"[criterion 1] worst |E_ed - E_analytic| = {worst:.2e} "
          f"over 5x5 grid, wall {wall:.2f}s")
    assert worst <= 1e-10
    assert wall < 1.0


def test_criterion_2_finite_chain_matches_ed(finite_vs_ed_bundle):
    bundle = finite_vs_ed_bundle
    e_tebd = bundle["report"].final_energy_per_site * 6
    e_ed = bundle["grand"].energy
    rel = abs(e_tebd - e_ed) / abs(e_ed)
    cset_tebd = correlation_set(bundle["state"], m=4)
    cset_ed = ed_correlation_set(bundle["grand"].best)
    worst = {name: float(np.max(np.abs(
        series - cset_ed.channels()[name][:series.size])))
        for name, series in cset_tebd.channels().items()}
    print(f"[criterion 2] relative energy error {rel:.2e}, worst "
          f"correlator errors {worst}, wall {bundle['wall_tebd']:.0f}s")
    assert rel <= 1e-6
    for name, err in worst.items():
        assert err <= 1e-5, f"channel {name}: {err:.2e}"
    assert bundle["wall_tebd"] < 120.0


def test_criterion_3_free_point_at_chi_40():
    params = ModelParams.from_mu(t=1.0, delta_g=0.0, delta_t=0.0, U=0.0,
                                 mu=0.0, delta_mu=0.0)
    start = time.perf_counter()
    state, report = ground_state_itebd(params, schedule=default_schedule(),
                                       chi_max=40, seed=7)
    wall = time.perf_counter() - start
    exact = -4.0 / math.pi
    cset = correlation_set(state, m=4)
    energy_err = abs(report.final_energy_per_site - exact)
    filling_err = abs(cset.filling - 1.0)
    print(f"[criterion 3] energy/site {report.final_energy_per_site:.8f} "
          f"(error {energy_err:.3e} vs -4/pi), n error {filling_err:.1e}, "
          f"wall {wall:.0f}s")
    assert filling_err <= 1e-3
    assert energy_err <= 1e-3, (
        f"energy error {energy_err:.3e} > 1e-3: chi = 40 sits above its "
        f"finite-entanglement floor at this gapless point (the error "
        f"scales as chi**-1.74; chi = 48 reaches 9.7e-4). The engine is "
        f"at its variational optimum; see README 'Known limitation' and "
        f"scripts/bond_dimension_scan.py.")
    assert wall < 300.0


def fig1_peaks(out_dir, manifest, tag):
    conv = manifest["convergence"][tag]
    peaks = {}
    for short, channel in (("S", "Sz"), ("D", "D"), ("P", "P")):
        spec = spectrum_from_csv(
            os.path.join(out_dir, f"spectrum_{tag}_{channel}.csv"), channel)
        peaks[short] = detect_peaks(spec)
    return conv, peaks


def test_criterion_4_pair_peak_at_fermi_mismatch(fig1_artifacts):
    out, manifest = fig1_artifacts
    conv, peaks = fig1_peaks(out, manifest, "U-8_dg0")
    n, p = conv["n"], conv["p"]
    expected_k = math.pi * n * p          # pi (n_up - n_down)
    dominant = peaks["P"].dominant_nonzero(THRESHOLDS.k_min)
    assert dominant is not None, "no nonzero-k pair peak found"
    print(f"[criterion 4] n = {n:.4f}, p = {p:.4f}: pair peak at "
          f"k = {dominant.location:.4f} vs pi(n_up-n_down) = "
          f"{expected_k:.4f} (delta {abs(dominant.location - expected_k):.3f})")
    assert abs(n - 1.0) <= 0.02, f"tuning missed n = 1: {n}"
    assert abs(p - 0.4) <= 0.02, f"tuning missed p = 0.4: {p}"
    assert abs(dominant.location - expected_k) <= 0.1


def test_criterion_5_assisted_hopping_orderings(fig1_artifacts):
    out, manifest = fig1_artifacts
    _, peaks_base = fig1_peaks(out, manifest, "U-8_dg0")
    _, peaks_sharp = fig1_peaks(out, manifest, "U-8_dg-0.5")
    base = peaks_base["P"].dominant_nonzero(THRESHOLDS.k_min)
    sharp = peaks_sharp["P"].dominant_nonzero(THRESHOLDS.k_min)
    assert base is not None and sharp is not None
    print(f"[criterion 5a] nonzero-k pair peak prominence "
          f"{sharp.prominence:.4f} (assisted hopping -0.5) vs "
          f"{base.prominence:.4f} (conventional)")
    assert sharp.prominence > base.prominence

    conv, peaks_sdw = fig1_peaks(out, manifest, "U-2_dg1")
    s_top = max((pk.prominence for pk in peaks_sdw["S"].peaks), default=0.0)
    p_top = max((pk.prominence for pk in peaks_sdw["P"].peaks), default=0.0)
    label = classify_phase(conv["n"], conv["p"], peaks_sdw, THRESHOLDS)
    print(f"[criterion 5b] max spin prominence {s_top:.4f} vs max pair "
          f"prominence {p_top:.4f}; classified {label.phase.name}")
    assert s_top > p_top
    assert label.phase is Phase.SDW


def test_criterion_6_attractive_trap_trends(fig2_artifacts):
    out, _ = fig2_artifacts
    rows_24 = sweep_rows(os.path.join(out, "dmu2.4_sweep.csv"))
    rows_25 = sweep_rows(os.path.join(out, "dmu2.5_sweep.csv"))
    rows_30 = sweep_rows(os.path.join(out, "dmu3_sweep.csv"))
    p_24 = [float(r["p"]) for r in rows_24]
    p_25 = [float(r["p"]) for r in rows_25]
    p_30 = [float(r["p"]) for r in rows_30]
    phases_24 = [r["phase"] for r in rows_24]
    phases_25 = [r["phase"] for r in rows_25]
    print(f"[criterion 6] dmu=2.4: p = {p_24} phases {phases_24}; "
          f"dmu=2.5: p = {p_25} phases {phases_25}; dmu=3: p = {p_30}")
    # Center-to-edge polarization falls at dmu = 2.4 and the edge pairs.
    assert p_24[0] > p_24[1]
    assert "BCS" in phases_24
    # At dmu = 2.5 polarization rises outward and pairing never closes.
    assert p_25[0] < p_25[1] < p_25[2]
    assert "BCS" not in phases_25
    # At dmu = 3 the cloud is already strongly polarized at the center.
    assert abs(p_30[0] - 0.2) <= 0.1
    assert p_30[0] < p_30[1] < p_30[2]


def test_criterion_7_correlated_trap_labels(fig3_artifacts):
    out, _ = fig3_artifacts
    rows_12 = sweep_rows(os.path.join(out, "dmu1.2_sweep.csv"))
    rows_24 = sweep_rows(os.path.join(out, "dmu2.4_sweep.csv"))
    by_mu_12 = {float(r["mu"]): r for r in rows_12}
    by_mu_24 = {float(r["mu"]): r for r in rows_24}
    center = by_mu_12[-1.0]
    edge = by_mu_12[-3.3]
    print(f"[criterion 7] dmu=1.2: mu=-1 -> {center['phase']} "
          f"(p={center['p']}), mu=-3.3 -> {edge['phase']} "
          f"(p={edge['p']}); dmu=2.4: mu=-3.3 -> "
          f"{by_mu_24[-3.3]['phase']}")
    assert center["phase"] == "SDW"
    assert edge["phase"] == "BCS"
    assert abs(float(edge["p"])) < 0.02
    ref = edge["point_ref"]
    pair = spectrum_from_csv(os.path.join(out, f"dmu1.2_spectra_{ref}.csv"),
                             "P")
    top = detect_peaks(pair).peaks[0]
    assert top.location <= THRESHOLDS.k_min, (
        f"edge pair peak at k = {top.location:.3f}, expected ~0")
    assert by_mu_24[-3.3]["phase"] == "PolarizedNormal"


LIGHT_SCHEDULE = [
    ScheduleStage(0.1, 2000, 1e-9), ScheduleStage(0.05, 2000, 1e-9),
    ScheduleStage(0.02, 3000, 1e-9), ScheduleStage(0.01, 3000, 1e-9),
]


def test_criterion_8_invariants_and_determinism(finite_vs_ed_bundle):
    # Spin flip: reversing the chemical-potential imbalance mirrors the
    # polarization.  delta_mu = 3 sits in the partially polarized
    # regime, so p is genuinely nonzero and the check has teeth.
    def polarized(delta_mu):
        params = ModelParams.from_mu(t=1.0, delta_g=0.0, delta_t=0.0,
                                     U=-8.0, mu=-4.0, delta_mu=delta_mu)
        state, _ = ground_state_itebd(params, LIGHT_SCHEDULE, chi_max=12,
                                      seed=7)
        return params, state

    _, state_up = polarized(+3.0)
    _, state_dn = polarized(-3.0)
    p_up = correlation_set(state_up, m=4).p
    p_dn = correlation_set(state_dn, m=4).p
    flip_err = abs(p_up + p_dn)
    assert flip_err <= 1e-5, f"spin-flip asymmetry {flip_err:.2e}"

    # SU(2) at zero imbalance: transverse and longitudinal spin
    # correlators coincide.
    params0, state0 = polarized(0.0)
    cset0 = correlation_set(state0, m=20)
    su2_err = float(np.max(np.abs(cset0.s_x - cset0.s_z)))
    assert su2_err <= 1e-5, f"S^x vs S^z mismatch {su2_err:.2e}"

    # ED is variational: it never sits above a finite-TEBD energy.
    bundle = finite_vs_ed_bundle
    assert bundle["grand"].energy \
        <= bundle["report"].final_energy_per_site * 6 + 1e-9
    params4 = bundle["params"]
    state4, report4 = ground_state_finite(params4, length=4,
                                          schedule=FINITE_SCHEDULE[:3],
                                          chi_max=32, seed=7)
    grand4 = ground_state_grand(params4, length=4)
    assert grand4.energy <= report4.final_energy_per_site * 4 + 1e-9

    # Gauge perturbation: diagonal twists on a virtual bond leave every
    # observable unchanged.
    rng = np.random.default_rng(11)
    twist = rng.uniform(0.5, 2.0, state0.lambda_ab.size)
    twisted = state0.copy()
    twisted.gamma_a = twisted.gamma_a * twist[None, None, :]
    twisted.gamma_b = twisted.gamma_b / twist[:, None, None]
    gauge_energy = abs(energy_per_site(state0, params0)
                       - energy_per_site(twisted, params0))
    cset_twisted = correlation_set(twisted, m=20)
    gauge_corr = max(float(np.max(np.abs(a - cset_twisted.channels()[k])))
                     for k, a in cset0.channels().items())
    assert gauge_energy <= 1e-8
    assert gauge_corr <= 1e-8
    assert abs(cset0.filling - cset_twisted.filling) <= 1e-8

    # Same seed, same bytes.
    repeat = polarized(+3.0)[1]
    assert np.array_equal(state_up.gamma_a, repeat.gamma_a)
    assert np.array_equal(state_up.gamma_b, repeat.gamma_b)
    assert np.array_equal(state_up.lambda_ab, repeat.lambda_ab)
    assert np.array_equal(state_up.lambda_ba, repeat.lambda_ba)

    print(f"[criterion 8] spin-flip {flip_err:.1e}, SU(2) {su2_err:.1e}, "
          f"ED below TEBD on both chains, gauge {gauge_energy:.1e}/"
          f"{gauge_corr:.1e}, seeded reruns bitwise equal")
