"""Correlation functions, cosine spectra, and peak detection.

Connected correlators run over the channels sx, sy, sz, density, pair.
Every inserted operator has even fermion parity, so no string factors
appear between the two insertion points; this is cross-checked against
the exact-diagonalization oracle, which needs no strings for these
channels either.

The sy channel stays in real arithmetic: with W = (a+_dn a_up -
a+_up a_dn)/2, the spin component is s^y = i W, so <s^y_i s^y_j>
connected equals minus the connected W-W correlator.

Infinite states average the two sublattice reference choices, which
restores one-site translation invariance and (by Cauchy-Schwarz plus
AM-GM) guarantees |X_r| <= X_0 per channel.  Finite chains use a
central reference site instead; there the bound is only approximate, so
validation applies a loose envelope check for those.
"""

from __future__ import annotations

import dataclasses
import io

import numpy as np

from .errors import InvalidStateError
from .finite import FiniteMps, finite_expectation
from .model import ModelParams, local_operator
from .mps import CanonicalMps, env_dot, environments, left_step

__all__ = [
    "CHANNELS",
    "SiteExpectations",
    "CorrelationSet",
    "Spectrum",
    "Peak",
    "PeakList",
    "channel_operators",
    "site_expectations",
    "connected_correlator",
    "correlation_set",
    "fourier_transform",
    "detect_peaks",
    "write_correlation_csv",
    "write_spectrum_csv",
    "format_float",
]

CHANNELS = ("sx", "sy", "sz", "density", "pair")
DEFAULT_M = 100
DEFAULT_K_POINTS = 512


def channel_operators(channel: str, down_first: bool = False):
    """(left insertion, right insertion, overall sign) for one channel."""
    if channel == "sx":
        op = local_operator("sx", down_first)
        return op, op, 1.0
    if channel == "sy":
        op = local_operator("sy_imagpart", down_first)
        return op, op, -1.0
    if channel == "sz":
        op = local_operator("sz", down_first)
        return op, op, 1.0
    if channel == "density":
        op = local_operator("number_total", down_first)
        return op, op, 1.0
    if channel == "pair":
        op = local_operator("pair_annihilate", down_first)
        return op, op.T.copy(), 1.0
    raise ValueError(f"unknown channel {channel!r}; expected one of {CHANNELS}")


@dataclasses.dataclass(frozen=True)
class SiteExpectations:
    n_up_a: float
    n_down_a: float
    n_up_b: float
    n_down_b: float
    sz_a: float
    sz_b: float

    @property
    def n_up(self) -> float:
        return 0.5 * (self.n_up_a + self.n_up_b)

    @property
    def n_down(self) -> float:
        return 0.5 * (self.n_down_a + self.n_down_b)

    @property
    def filling(self) -> float:
        return self.n_up + self.n_down

    @property
    def polarization(self) -> float:
        total = self.filling
        if total <= 0:
            return 0.0
        return (self.n_up - self.n_down) / total


def _site_value(envs, op, sublattice: str) -> float:
    if sublattice == "a":
        left, m, right = envs.l_ba, envs.m_a, envs.r_ab
    else:
        left, m, right = envs.l_ab, envs.m_b, envs.r_ba
    norm = env_dot(left_step(left, m), right)
    if norm <= 0 or not np.isfinite(norm):
        raise InvalidStateError("transfer normalization collapsed")
    return env_dot(left_step(left, m, op), right) / norm


def site_expectations(state: CanonicalMps, envs=None) -> SiteExpectations:
    state.validate()
    if envs is None:
        envs = environments(state, validate=False)
    n_up = local_operator("number_up")
    n_down = local_operator("number_down")
    sz = local_operator("sz")
    return SiteExpectations(
        n_up_a=_site_value(envs, n_up, "a"),
        n_down_a=_site_value(envs, n_down, "a"),
        n_up_b=_site_value(envs, n_up, "b"),
        n_down_b=_site_value(envs, n_down, "b"),
        sz_a=_site_value(envs, sz, "a"),
        sz_b=_site_value(envs, sz, "b"),
    )


def _infinite_raw_correlator(envs, op1, op2, r_max: int,
                             start: str) -> np.ndarray:
    """<O1_0 O2_r> for r = 0..r_max from reference sublattice `start`.

    One left-to-right walk; each distance closes against the fixed
    right environment of the bond it lands on.
    """
    if start == "a":
        left0 = envs.l_ba
        tensors = (envs.m_a, envs.m_b)
        rights = (envs.r_ab, envs.r_ba)
    else:
        left0 = envs.l_ab
        tensors = (envs.m_b, envs.m_a)
        rights = (envs.r_ba, envs.r_ab)

    values = np.empty(r_max + 1)
    norm_env = left_step(left0, tensors[0])
    norm = env_dot(norm_env, rights[0])
    if norm <= 0 or not np.isfinite(norm):
        raise InvalidStateError("transfer normalization collapsed")
    values[0] = env_dot(left_step(left0, tensors[0], op1 @ op2),
                        rights[0]) / norm
    op_env = left_step(left0, tensors[0], op1)
    for r in range(1, r_max + 1):
        m = tensors[r % 2]
        close = rights[r % 2]
        norm_env_next = left_step(norm_env, m)
        norm = env_dot(norm_env_next, close)
        if norm <= 0 or not np.isfinite(norm):
            raise InvalidStateError("transfer normalization collapsed")
        values[r] = env_dot(left_step(op_env, m, op2), close) / norm
        op_env = left_step(op_env, m)
        norm_env = norm_env_next
    return values


def _infinite_connected(state, channel, r_max, envs=None) -> np.ndarray:
    if envs is None:
        envs = environments(state)
    op1, op2, sign = channel_operators(channel)
    means1 = {"a": _site_value(envs, op1, "a"), "b": _site_value(envs, op1, "b")}
    means2 = {"a": _site_value(envs, op2, "a"), "b": _site_value(envs, op2, "b")}
    out = np.zeros(r_max + 1)
    for start, other in (("a", "b"), ("b", "a")):
        raw = _infinite_raw_correlator(envs, op1, op2, r_max, start)
        subl = [start if r % 2 == 0 else other for r in range(r_max + 1)]
        disconnected = means1[start] * np.array([means2[s] for s in subl])
        out += 0.5 * (raw - disconnected)
    return sign * out


def _finite_connected(state: FiniteMps, channel, r_max) -> np.ndarray:
    ref = (state.length - 1) // 2
    reach = min(r_max, state.length - 1 - ref)
    op1, op2, sign = channel_operators(channel)
    out = np.empty(reach + 1)
    mean1 = finite_expectation(state, {ref: op1})
    for r in range(reach + 1):
        if r == 0:
            raw = finite_expectation(state, {ref: op1 @ op2})
        else:
            raw = finite_expectation(state, {ref: op1, ref + r: op2})
        mean2 = finite_expectation(state, {ref + r: op2})
        out[r] = raw - mean1 * mean2
    return sign * out


def connected_correlator(state, channel: str, r_max: int) -> np.ndarray:
    """Connected two-point function for r = 0..r_max.

    Finite chains measure from the central site and may return a
    shorter array when r_max runs past the chain end.
    """
    if r_max < 1:
        raise ValueError(f"r_max must be >= 1, got {r_max}")
    if isinstance(state, CanonicalMps):
        return _infinite_connected(state, channel, r_max)
    if isinstance(state, FiniteMps):
        return _finite_connected(state, channel, r_max)
    raise TypeError(f"unsupported state type {type(state).__name__}")


@dataclasses.dataclass
class CorrelationSet:
    m: int
    s_x: np.ndarray
    s_y: np.ndarray
    s_z: np.ndarray
    density: np.ndarray
    pair: np.ndarray
    n_up_a: float
    n_down_a: float
    n_up_b: float
    n_down_b: float
    p: float
    meta: dict = dataclasses.field(default_factory=dict)

    def channels(self) -> dict:
        return {"sx": self.s_x, "sy": self.s_y, "sz": self.s_z,
                "density": self.density, "pair": self.pair}

    @property
    def n_up(self) -> float:
        return 0.5 * (self.n_up_a + self.n_up_b)

    @property
    def n_down(self) -> float:
        return 0.5 * (self.n_down_a + self.n_down_b)

    @property
    def filling(self) -> float:
        return self.n_up + self.n_down

    def validate(self) -> None:
        if not -1.0 <= self.p <= 1.0:
            raise InvalidStateError(f"polarization {self.p} outside [-1, 1]")
        # The strict |X_r| <= X_0 envelope is guaranteed only for
        # sublattice-averaged infinite states (Cauchy-Schwarz + AM-GM);
        # single-reference or open-chain averages get a loose check.
        loose = self.meta.get("averaging", "sublattice") != "sublattice"
        for name, arr in self.channels().items():
            if len(arr) != self.m:
                raise InvalidStateError(f"channel {name}: length {len(arr)} "
                                        f"does not match m={self.m}")
            if not np.all(np.isfinite(arr)):
                raise InvalidStateError(f"channel {name}: non-finite entries")
            anchor = abs(float(arr[0]))
            slack = 0.5 * anchor + 1e-6 if loose else 1e-9 * anchor + 1e-12
            worst = float(np.max(np.abs(arr[1:]), initial=0.0))
            if worst > anchor + slack:
                raise InvalidStateError(
                    f"channel {name}: |X_r| max {worst} exceeds r=0 "
                    f"anchor {anchor}")


def correlation_set(state, m: int = DEFAULT_M, meta: dict | None = None,
                    ) -> CorrelationSet:
    """All five connected channels out to distance m-1, plus densities."""
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    base_meta = dict(meta or {})
    if isinstance(state, CanonicalMps):
        envs = environments(state)
        arrays = {ch: _infinite_connected(state, ch, m - 1, envs)
                  for ch in CHANNELS}
        exps = site_expectations(state, envs)
        fields = dict(n_up_a=exps.n_up_a, n_down_a=exps.n_down_a,
                      n_up_b=exps.n_up_b, n_down_b=exps.n_down_b,
                      p=exps.polarization)
        base_meta.setdefault("averaging", "sublattice")
        base_meta.setdefault("source", "itebd")
        base_meta.setdefault("chi", state.chi)
    elif isinstance(state, FiniteMps):
        arrays = {ch: _finite_connected(state, ch, m - 1) for ch in CHANNELS}
        n_up = np.array([finite_expectation(
            state, {j: local_operator("number_up")})
            for j in range(state.length)])
        n_down = np.array([finite_expectation(
            state, {j: local_operator("number_down")})
            for j in range(state.length)])
        total = float(np.sum(n_up) + np.sum(n_down))
        fields = dict(
            n_up_a=float(np.mean(n_up[0::2])),
            n_down_a=float(np.mean(n_down[0::2])),
            n_up_b=float(np.mean(n_up[1::2])),
            n_down_b=float(np.mean(n_down[1::2])),
            p=0.0 if total <= 0 else float(
                (np.sum(n_up) - np.sum(n_down)) / total))
        base_meta.setdefault("averaging", "central-site")
        base_meta.setdefault("source", "finite")
        base_meta.setdefault("reference_site", (state.length - 1) // 2)
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")
    m_actual = len(arrays["sz"])
    cset = CorrelationSet(m=m_actual, s_x=arrays["sx"], s_y=arrays["sy"],
                          s_z=arrays["sz"], density=arrays["density"],
                          pair=arrays["pair"], meta=base_meta, **fields)
    cset.validate()
    return cset


@dataclasses.dataclass
class Spectrum:
    k_grid: np.ndarray
    values: np.ndarray
    channel: str = ""
    m: int = 0

    def validate(self) -> None:
        if self.k_grid.shape != self.values.shape or self.k_grid.ndim != 1:
            raise InvalidStateError("spectrum grids must be matching vectors")
        if not np.all(np.isfinite(self.values)):
            raise InvalidStateError("spectrum has non-finite values")
        if np.any(np.diff(self.k_grid) <= 0):
            raise InvalidStateError("k_grid must be strictly increasing")


def default_k_grid(points: int = DEFAULT_K_POINTS) -> np.ndarray:
    return np.linspace(0.0, np.pi, points)


def fourier_transform(series: np.ndarray, k_grid: np.ndarray | None = None,
                      channel: str = "") -> Spectrum:
    """Cosine transform X_k = M^{-1/2} sum_{r=0}^{M-1} X_r cos(k r)."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 1 or len(series) == 0:
        raise ValueError("series must be a nonempty vector")
    if not np.all(np.isfinite(series)):
        raise ValueError("series must be finite")
    if k_grid is None:
        k_grid = default_k_grid()
    k_grid = np.asarray(k_grid, dtype=float)
    m = len(series)
    r = np.arange(m)
    values = np.cos(np.outer(k_grid, r)) @ series / np.sqrt(m)
    spec = Spectrum(k_grid=k_grid, values=values, channel=channel, m=m)
    spec.validate()
    return spec


@dataclasses.dataclass(frozen=True)
class Peak:
    location: float
    height: float
    prominence: float
    width: float


@dataclasses.dataclass
class PeakList:
    peaks: list
    min_prominence: float
    channel: str = ""

    def __len__(self) -> int:
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    def dominant_nonzero(self, k_min: float):
        """Highest peak located at k >= k_min, or None."""
        for peak in self.peaks:
            if peak.location >= k_min:
                return peak
        return None


def _half_level_width(k, v, idx, level) -> float:
    lo = k[0]
    for j in range(idx - 1, -1, -1):
        if v[j] < level:
            frac = (v[j + 1] - level) / (v[j + 1] - v[j])
            lo = k[j + 1] + frac * (k[j] - k[j + 1])
            break
    hi = k[-1]
    for j in range(idx + 1, len(v)):
        if v[j] < level:
            frac = (v[j - 1] - level) / (v[j - 1] - v[j])
            hi = k[j - 1] + frac * (k[j] - k[j - 1])
            break
    return hi - lo


def detect_peaks(spectrum: Spectrum, min_prominence: float | None = None,
                 ) -> PeakList:
    """Local maxima with prominence above threshold; endpoints eligible.

    Prominence is height minus the higher of the two flanking valley
    minima (a missing flank does not limit it).  Default threshold is
    2% of the spectrum maximum.
    """
    spectrum.validate()
    v = spectrum.values
    k = spectrum.k_grid
    if min_prominence is None:
        min_prominence = max(0.0, 0.02 * float(np.max(v)))
    n = len(v)
    candidates = [i for i in range(n)
                  if (i == 0 or v[i] > v[i - 1])
                  and (i == n - 1 or v[i] > v[i + 1])]
    peaks = []
    for pos, idx in enumerate(candidates):
        left_edge = candidates[pos - 1] if pos > 0 else 0
        right_edge = candidates[pos + 1] if pos + 1 < len(candidates) else n - 1
        flanks = []
        if idx > left_edge:
            flanks.append(float(np.min(v[left_edge:idx])))
        if right_edge > idx:
            flanks.append(float(np.min(v[idx + 1:right_edge + 1])))
        prominence = float(v[idx]) - (max(flanks) if flanks else float(v[idx]))
        if prominence < min_prominence:
            continue
        width = _half_level_width(k, v, idx, float(v[idx]) - 0.5 * prominence)
        peaks.append(Peak(location=float(k[idx]), height=float(v[idx]),
                          prominence=prominence, width=width))
    peaks.sort(key=lambda p: (-p.height, p.location))
    return PeakList(peaks=peaks, min_prominence=float(min_prominence),
                    channel=spectrum.channel)


def format_float(x) -> str:
    """Shortest repr that round-trips float64; stable across runs."""
    return "%.17g" % float(x)


def _header_lines(params: ModelParams | None, extra: dict | None) -> list:
    lines = []
    if params is not None:
        for key in ("t", "delta_g", "delta_t", "U", "mu_up", "mu_down"):
            lines.append(f"# {key}={format_float(getattr(params, key))}")
    for key in sorted(extra or {}):
        value = (extra or {})[key]
        if isinstance(value, float):
            value = format_float(value)
        lines.append(f"# {key}={value}")
    return lines


def write_correlation_csv(path, cset: CorrelationSet,
                          params: ModelParams | None = None,
                          extra: dict | None = None) -> None:
    """Columns (r, Sx, Sy, Sz, D, P); '#' header carries params and meta."""
    meta = dict(extra or {})
    meta.setdefault("m", cset.m)
    meta.setdefault("n_up", format_float(cset.n_up))
    meta.setdefault("n_down", format_float(cset.n_down))
    meta.setdefault("p", format_float(cset.p))
    for key, value in cset.meta.items():
        meta.setdefault(key, value)
    buf = io.StringIO()
    for line in _header_lines(params, meta):
        buf.write(line + "\n")
    buf.write("r,Sx,Sy,Sz,D,P\n")
    for r in range(cset.m):
        row = [str(r)] + [format_float(arr[r]) for arr in
                          (cset.s_x, cset.s_y, cset.s_z,
                           cset.density, cset.pair)]
        buf.write(",".join(row) + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def write_spectrum_csv(path, spectra: dict,
                       params: ModelParams | None = None,
                       extra: dict | None = None) -> None:
    """Columns (k, <tag>...) over a shared k grid."""
    if not spectra:
        raise ValueError("need at least one spectrum column")
    tags = list(spectra)
    grids = [spectra[tag].k_grid for tag in tags]
    for grid in grids[1:]:
        if grid.shape != grids[0].shape or not np.allclose(
                grid, grids[0], rtol=0, atol=0):
            raise ValueError("spectra must share one k grid")
    buf = io.StringIO()
    for line in _header_lines(params, extra):
        buf.write(line + "\n")
    buf.write("k," + ",".join(tags) + "\n")
    for i, k in enumerate(grids[0]):
        row = [format_float(k)] + [format_float(spectra[tag].values[i])
                                   for tag in tags]
        buf.write(",".join(row) + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
