"""Second-order correlation functions of the output field and their spectra.

Two independent routes to g2(tau) are provided:

* ``g2_conditional`` applies the quantum regression theorem to the
  stationary state, ``Tr[f^dag f e^{L tau}(f rho f^dag)] / <f^dag f>^2``.
* ``g2_from_jumps`` histograms the delays between pairs of emission jumps
  in a quantum-trajectory ensemble.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.integrate
import scipy.linalg
from numpy.typing import NDArray

from .dynamics import (
    LindbladGenerator,
    TrajectoryConfig,
    emission_unraveling,
    jump_log,
    liouvillian,
    spectral_gap,
    steady_state,
    vec,
)
from .models import OpenSystem

CONDITIONAL = "conditional-deterministic"
JUMP_PAIRS = "jump-pair-stochastic"

ZERO_FLUX = 1e-12
DEFAULT_N_TAU = 2048
DEFAULT_FLOOR = 1e-3
TAIL_FRACTION = 0.1


class ZeroFluxError(ArithmeticError):
    """The field has (numerically) no stationary photon flux."""


class UnderSamplingError(ArithmeticError):
    """Too few emission events for a jump-pair estimate."""


@dataclass(frozen=True, eq=False)
class CorrelationSeries:
    tau: NDArray[np.float64]
    g2: NDArray[np.float64]
    stderr: NDArray[np.float64]
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        g2 = np.asarray(self.g2, dtype=float)
        err = np.asarray(self.stderr, dtype=float)
        if not (tau.shape == g2.shape == err.shape) or tau.ndim != 1:
            raise ValueError("tau, g2 and stderr must be 1-D arrays of equal length")
        if tau.size and (tau[0] != 0.0 or np.any(np.diff(tau) <= 0)):
            raise ValueError("tau must start at 0 and increase strictly")
        if np.any(g2 < -1e-9):
            raise ValueError(f"negative g2 value {g2.min():.3e}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "g2", g2)
        object.__setattr__(self, "stderr", err)

    @property
    def g2_zero(self) -> float:
        return float(self.g2[0])

    def tail_mean(self, fraction: float = TAIL_FRACTION) -> float:
        k = max(1, int(round(fraction * self.g2.size)))
        return float(self.g2[-k:].mean())

    def recovery_time(self, level: float = 0.5) -> float:
        """First ``tau`` at which g2 reaches ``level`` (linear interpolation); ``inf`` if never."""
        above = np.flatnonzero(self.g2 >= level)
        if above.size == 0:
            return math.inf
        k = above[0]
        if k == 0:
            return 0.0
        t0, t1, y0, y1 = self.tau[k - 1], self.tau[k], self.g2[k - 1], self.g2[k]
        return float(t0 + (level - y0) * (t1 - t0) / (y1 - y0))


def stationary_flux(system: OpenSystem, gen: LindbladGenerator | None = None):
    gen = gen or liouvillian(system)
    rho = steady_state(gen)
    f = system.field_op.matrix
    n_bar = float(np.real(np.trace(f.conj().T @ f @ rho.matrix)))
    return gen, rho, n_bar


def default_tau_max(system: OpenSystem, gen: LindbladGenerator | None = None) -> float:
    """Ten times the slowest relaxation time of the model."""
    gen = gen or liouvillian(system)
    return 10.0 / spectral_gap(gen)


def g2_conditional(
    system: OpenSystem,
    tau_max: float | None = None,
    n_tau: int = DEFAULT_N_TAU,
    gen: LindbladGenerator | None = None,
) -> CorrelationSeries:
    gen, rho, n_bar = stationary_flux(system, gen)
    if n_bar < ZERO_FLUX:
        raise ZeroFluxError(f"{system.label}: stationary photon number {n_bar:.3e} is zero; g2 undefined")
    if tau_max is None:
        tau_max = default_tau_max(system, gen)
    if n_tau < 2 or not tau_max > 0:
        raise ValueError("need n_tau >= 2 and tau_max > 0")
    tau = np.linspace(0.0, tau_max, n_tau)
    f = system.field_op.matrix
    nop = f.conj().T @ f
    row = vec(nop.T)
    x = vec(f @ rho.matrix @ f.conj().T)
    step = scipy.linalg.expm(gen.supermatrix * (tau[1] - tau[0]))
    g2 = np.empty(n_tau)
    for k in range(n_tau):
        g2[k] = np.real(row @ x)
        x = step @ x
    g2 /= n_bar**2
    g2[np.abs(g2) < 1e-15] = 0.0
    meta = {"model": system.label, "n_bar": n_bar, "tau_max": float(tau_max), "n_tau": int(n_tau)}
    return CorrelationSeries(tau, g2, np.zeros(n_tau), CONDITIONAL, meta)


def bin_average(series: CorrelationSeries, edges: NDArray) -> NDArray[np.float64]:
    """Average of a finely sampled series over each ``[edges[k], edges[k+1])``."""
    out = np.empty(len(edges) - 1)
    for k in range(out.size):
        lo, hi = edges[k], edges[k + 1]
        inside = (series.tau > lo) & (series.tau < hi)
        t = np.concatenate([[lo], series.tau[inside], [hi]])
        y = np.interp(t, series.tau, series.g2)
        out[k] = scipy.integrate.trapezoid(y, t) / (hi - lo)
    return out


def g2_from_jumps(
    system: OpenSystem,
    cfg: TrajectoryConfig,
    tau_max: float,
    n_bins: int,
    t_burn: float = 10.0,
    workers: int = 1,
) -> CorrelationSeries:
    """Emission-pair histogram estimate of g2 from a trajectory ensemble.

    Trajectories start in the ground state and run for ``cfg.t_max``;
    emissions before ``t_burn`` are discarded.  Bins are an integer number of
    trajectory steps wide, so the realised ``tau_max`` may differ slightly
    from the request (see ``meta["bin_width"]``).  ``tau`` holds the left
    bin edges.
    """
    if not 0 <= t_burn < cfg.t_max - tau_max:
        raise ValueError("need 0 <= t_burn < t_max - tau_max")
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    emitter = emission_unraveling(system)
    log = jump_log(emitter, emitter.ground_state(), replace(cfg, n_out=2), workers=workers)
    dt = log.dt
    keep = (log.channels == emitter.emission_channel) & (log.times >= t_burn - 0.5 * dt)
    traj = log.traj[keep]
    steps = np.rint(log.times[keep] / dt).astype(np.int64)

    t_obs = log.t_max - t_burn
    n_emit = steps.size
    flux = n_emit / (log.n_traj * t_obs)
    per_bin = max(1, int(round(tau_max / n_bins / dt)))
    max_lag = per_bin * n_bins
    last_start = int(np.floor((log.t_max - max_lag * dt) / dt + 1e-9))
    is_start = steps <= last_start
    n_start = int(is_start.sum())
    if n_emit == 0 or n_start == 0:
        raise UnderSamplingError(
            f"{system.label}: {n_emit} emissions in {log.n_traj} x {t_obs:g}/kappa (flux {flux:.3e}); "
            "increase n_traj or t_max"
        )

    counts = np.zeros(n_bins, dtype=np.int64)
    m = 1
    while True:
        a = np.flatnonzero(is_start[: steps.size - m])
        if a.size == 0:
            break
        b = a + m
        lag = steps[b] - steps[a]
        ok = (traj[b] == traj[a]) & (lag < max_lag)
        if not ok.any():
            break
        counts += np.bincount(lag[ok] // per_bin, minlength=n_bins)[:n_bins]
        m += 1

    width = per_bin * dt
    norm = n_start * flux * width
    g2 = counts / norm
    err = np.sqrt(counts) / norm
    tau = np.arange(n_bins) * width
    meta = {
        "model": system.label,
        "seed": int(cfg.seed),
        "n_traj": int(cfg.n_traj),
        "t_max": float(log.t_max),
        "t_burn": float(t_burn),
        "dt": float(dt),
        "jump_method": cfg.jump_method,
        "bin_width": float(width),
        "flux": float(flux),
        "n_emissions": int(n_emit),
        "n_starts": n_start,
        "pair_counts": counts.tolist(),
    }
    return CorrelationSeries(tau, g2, err, JUMP_PAIRS, meta)


# ---------------------------------------------------------------------------
# Spectral analysis


@dataclass(frozen=True)
class Peak:
    frequency: float
    amplitude: float
    width: float


@dataclass(frozen=True)
class FrequencyReport:
    peaks: list[Peak]
    dc_removed: bool
    floor: float
    nyquist: float
    resolution: float

    @property
    def dominant(self) -> Peak | None:
        return self.peaks[0] if self.peaks else None

    def nearest(self, target: float) -> Peak | None:
        if not self.peaks:
            return None
        return min(self.peaks, key=lambda p: abs(p.frequency - target))

    def has_peak_near(self, target: float, rel_tol: float = 0.05) -> bool:
        p = self.nearest(target)
        return p is not None and abs(p.frequency - target) <= rel_tol * abs(target)

    def as_dict(self) -> dict:
        return asdict(self)


def _half_width(omega: NDArray, amp: NDArray, i: int) -> float:
    half = 0.5 * amp[i]
    lo = i
    while lo > 0 and amp[lo] > half and amp[lo - 1] <= amp[lo]:
        lo -= 1
    hi = i
    while hi < amp.size - 1 and amp[hi] > half and amp[hi + 1] <= amp[hi]:
        hi += 1

    def cross(j, k):
        if amp[j] > half or amp[k] == amp[j]:
            return omega[j]
        return omega[j] + (half - amp[j]) * (omega[k] - omega[j]) / (amp[k] - amp[j])

    return float(cross(hi, hi - 1) - cross(lo, lo + 1)) if hi > lo else 0.0


def extract_frequencies(
    series: CorrelationSeries, floor: float = DEFAULT_FLOOR, pad: int = 16, taper: float = 0.25
) -> FrequencyReport:
    """Angular frequencies of the oscillations in ``g2(tau) - g2(inf)``.

    The tail mean is subtracted, the last ``taper`` fraction of the record is
    rolled off with a half-cosine, and the zero-padded transform is searched
    for local maxima above ``floor``.  Peak positions are refined by parabolic
    interpolation; amplitudes are those of an equivalent cosine.
    """
    y = series.g2
    n = y.size
    if n < 64:
        raise ValueError(f"need at least 64 samples, got {n}")
    dtau = np.diff(series.tau)
    if np.ptp(dtau) > 1e-9 * dtau.mean():
        raise ValueError("frequency extraction needs a uniform tau grid")
    dt = float(dtau.mean())
    x = y - series.tail_mean()
    w = np.ones(n)
    k = int(taper * n)
    if k > 0:
        w[-k:] = 0.5 * (1.0 + np.cos(np.pi * np.arange(1, k + 1) / k))
    n_fft = 1 << int(math.ceil(math.log2(pad * n)))
    spec = 2.0 * np.abs(np.fft.rfft(x * w, n_fft)) / w.sum()
    omega = 2.0 * np.pi * np.fft.rfftfreq(n_fft, dt)
    step = omega[1]

    peaks = []
    for i in range(1, spec.size - 1):
        a, b, c = spec[i - 1], spec[i], spec[i + 1]
        if b > a and b >= c and b >= floor:
            denom = a - 2 * b + c
            shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
            peaks.append(Peak(float(omega[i] + shift * step), float(b - 0.25 * (a - c) * shift),
                              _half_width(omega, spec, i)))
    peaks.sort(key=lambda p: -p.amplitude)
    return FrequencyReport(peaks, True, floor, float(np.pi / dt), float(2 * np.pi / (n * dt)))


# ---------------------------------------------------------------------------
# Comparison


@dataclass(frozen=True)
class SeriesComparison:
    tau_range: tuple[float, float]
    max_abs: float
    rms: float
    g2_zero_diff: float
    dominant_a: float | None
    dominant_b: float | None
    dominant_rel_diff: float | None
    peak_diffs: list[dict]

    def as_dict(self) -> dict:
        return asdict(self)


def compare_series(
    a: CorrelationSeries, b: CorrelationSeries, floor: float = DEFAULT_FLOOR, n_peaks: int = 4
) -> SeriesComparison:
    lo = max(a.tau[0], b.tau[0])
    hi = min(a.tau[-1], b.tau[-1])
    if not hi > lo:
        raise ValueError("series have disjoint tau ranges")

    def grid(s):
        return s.tau[(s.tau >= lo) & (s.tau <= hi)]

    t = grid(a) if len(grid(a)) >= len(grid(b)) else grid(b)
    ya = np.interp(t, a.tau, a.g2)
    yb = np.interp(t, b.tau, b.g2)
    diff = ya - yb

    fa = fb = None
    if a.g2.size >= 64 and b.g2.size >= 64:
        fa, fb = extract_frequencies(a, floor), extract_frequencies(b, floor)
    peak_diffs = []
    dom_a = dom_b = rel = None
    if fa is not None and fa.peaks and fb.peaks:
        dom_a, dom_b = fa.dominant.frequency, fb.dominant.frequency
        rel = abs(dom_a - dom_b) / abs(dom_a) if dom_a else 0.0
        for p in fa.peaks[:n_peaks]:
            q = fb.nearest(p.frequency)
            peak_diffs.append({
                "frequency_a": p.frequency,
                "frequency_b": q.frequency,
                "rel_diff": abs(p.frequency - q.frequency) / p.frequency if p.frequency else 0.0,
            })
    return SeriesComparison(
        tau_range=(float(lo), float(hi)),
        max_abs=float(np.max(np.abs(diff))),
        rms=float(np.sqrt(np.mean(diff**2))),
        g2_zero_diff=float(a.g2[0] - b.g2[0]),
        dominant_a=dom_a,
        dominant_b=dom_b,
        dominant_rel_diff=rel,
        peak_diffs=peak_diffs,
    )

