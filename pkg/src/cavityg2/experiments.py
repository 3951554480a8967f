"""Named experiments behind the CLI verbs, and the run report they produce."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import config as cfgmod
from . import io
from .config import ConfigError, ExperimentConfig
from .correlations import (
    CONDITIONAL,
    CorrelationSeries,
    FrequencyReport,
    bin_average,
    compare_series,
    extract_frequencies,
    g2_conditional,
    g2_from_jumps,
    stationary_flux,
)
from .dynamics import NORM_THRESHOLD, TrajectoryConfig, emission_unraveling, liouvillian, spectral_gap
from .models import (
    EIT_DASHED,
    EIT_SOLID,
    EITParams,
    OpenSystem,
    effective_eit_parameters,
    manifold_spectrum,
)
from .plotting import plot_grid, plot_series

# Effective-parameter values as printed for the two reference EIT parameter
# sets, with the number of decimals they are printed to.
GOLDEN = {
    "eit-dashed": {
        "eps_plus": (8.59, 2), "eps_minus": (-8.39, 2),
        "omega_plus": (-0.696, 3), "omega_minus": (-0.704, 3), "omega_r": (0.99, 2),
        "gamma1_plus": (0.348, 3), "gamma1_minus": (0.352, 3), "gamma0": (0.5, 1),
    },
    "eit-solid": {
        "eps_plus": (15.56, 2), "eps_minus": (-11.56, 2),
        "omega_plus": (-0.06, 2), "omega_minus": (-0.06, 2), "omega_r": (0.18, 2),
        "gamma1_plus": (0.2, 1), "gamma1_minus": (0.2, 1), "gamma0": (0.8, 1),
    },
}
GOLDEN_PARAMS = {"eit-dashed": EIT_DASHED, "eit-solid": EIT_SOLID}

FREQ_REL_TOL = 0.05
RECOVERY_LEVEL = 0.5
# Amplitude floor separating drive-induced oscillations from the small
# manifold modulations that are present at any drive strength.
LARGE_OSCILLATION_FLOOR = 1e-2

# Jump-pair oracle settings: bins with at least MIN_PAIRS counts are compared.
ORACLE_DT = 0.01
ORACLE_TAU_MAX = 10.0
ORACLE_BINS = 20
ORACLE_TARGET_PAIRS = 300.0
MIN_PAIRS = 100
SIGMA = 3.0


@dataclass
class RunReport:
    command: str
    config: dict[str, Any] | None
    seed: int | None
    version: str = field(default_factory=io.artifact_version)
    derived: dict[str, Any] | None = None
    observables: dict[str, Any] = field(default_factory=dict)
    g2_zero: float | None = None
    frequencies: list[dict] = field(default_factory=list)
    conventions: dict[str, Any] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    results: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict[str, Any]:
        out = io.to_jsonable(dataclasses.asdict(self))
        out["ok"] = self.ok
        return out


class _Timer:
    def __init__(self, report: RunReport, key: str):
        self.report, self.key = report, key

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.key] = round(time.perf_counter() - self.t0, 6)


def _peaks(rep: FrequencyReport, n: int = 6) -> list[dict]:
    return [dataclasses.asdict(p) for p in rep.peaks[:n]]


def steady_observables(system: OpenSystem) -> dict[str, Any]:
    gen, rho, n_bar = stationary_flux(system)
    pops = np.real(np.diag(rho.matrix))
    return {
        "n_bar": n_bar,
        "purity": rho.purity(),
        "populations": {lab: float(p) for lab, p in zip(system.space.labels, pops)},
        "spectral_gap": spectral_gap(gen),
    }


def _write_outputs(report: RunReport, out_dir: Path, formats, stem: str = "report") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    report.files.append(str(out_dir / "summary.txt"))
    if "json" in formats:
        report.files.append(str(out_dir / f"{stem}.json"))
        io.write_json(out_dir / f"{stem}.json", report.to_dict())
    io.atomic_write_text(out_dir / "summary.txt", render_summary(report))


def render_summary(report: RunReport) -> str:
    lines = [f"cavityg2 {report.command}  (version {report.version}, seed {report.seed})"]
    if report.config:
        lines.append(f"model: {report.config.get('model')}  params: {report.config.get('params')}")
    if report.derived:
        lines.append("derived parameters:")
        for k, v in report.derived.items():
            lines.append(f"  {k:>14s} = {v:.6g}" if isinstance(v, float) else f"  {k:>14s} = {v}")
    if report.observables:
        obs = report.observables
        if "n_bar" in obs:
            lines.append(f"n_bar = {obs['n_bar']:.6g}")
    if report.g2_zero is not None:
        lines.append(f"g2(0) = {report.g2_zero:.6g}")
    if report.frequencies:
        lines.append("peaks (omega/kappa, amplitude): " + ", ".join(
            f"{p['frequency']:.4g} ({p['amplitude']:.2e})" for p in report.frequencies))
    for key, val in report.results.items():
        if isinstance(val, (str, int, float, bool)) or val is None:
            lines.append(f"{key}: {val}")
    for name, ok in report.checks.items():
        lines.append(f"[{'pass' if ok else 'FAIL'}] {name}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# derive-params


def golden_name(p: EITParams) -> str | None:
    for name, ref in GOLDEN_PARAMS.items():
        if p == ref:
            return name
    return None


def golden_check(p: EITParams) -> dict[str, dict[str, Any]]:
    name = golden_name(p)
    if name is None:
        raise ConfigError("golden check is defined only for the eit-dashed and eit-solid presets")
    values = dataclasses.asdict(effective_eit_parameters(p))
    out = {}
    for key, (want, digits) in GOLDEN[name].items():
        got = round(values[key], digits)
        out[key] = {"value": values[key], "rounded": got, "expected": want,
                    "ok": math.isclose(got, want, abs_tol=0.5 * 10**-(digits + 3))}
    return out


def vieta_check(p: EITParams) -> bool:
    e = effective_eit_parameters(p)
    scale = p.omega_c**2 + p.g1**2
    return (math.isclose(e.eps_plus + e.eps_minus, p.delta, abs_tol=1e-9 * math.sqrt(scale))
            and math.isclose(e.eps_plus * e.eps_minus, -scale, rel_tol=1e-12))


def cmd_derive_params(cfg: ExperimentConfig, out_dir: Path, formats=("json",), golden: bool = False) -> RunReport:
    if cfg.family != "eit":
        raise ConfigError(f"derive-params needs an EIT model, got {cfg.model}")
    report = RunReport("derive-params", cfg.to_dict(), None)
    with _Timer(report, "derive"):
        e = effective_eit_parameters(cfg.params)
    report.derived = dataclasses.asdict(e)
    report.results["symmetric"] = cfg.params.delta == 0
    report.checks["vieta"] = vieta_check(cfg.params)
    if cfg.params.delta == 0:
        report.checks["eps_plus == -eps_minus"] = math.isclose(e.eps_plus, -e.eps_minus, rel_tol=1e-12)
    if golden:
        table = golden_check(cfg.params)
        report.results["golden"] = table
        for key, row in table.items():
            report.checks[f"golden {key}: {row['rounded']} vs {row['expected']}"] = row["ok"]
    _write_outputs(report, out_dir, formats, "derived")
    return report


# ---------------------------------------------------------------------------
# g2


def jump_defaults(system: OpenSystem, cfg: ExperimentConfig) -> tuple[float, float]:
    gap = spectral_gap(liouvillian(system))
    tau_max = cfg.correlation.tau_max or ORACLE_TAU_MAX
    t_burn = cfg.correlation.t_burn if cfg.correlation.t_burn is not None else 5.0 / gap
    return tau_max, t_burn


def compute_series(cfg: ExperimentConfig, system: OpenSystem | None = None, workers: int = 1) -> CorrelationSeries:
    system = system or cfg.build()
    c = cfg.correlation
    if c.method == CONDITIONAL:
        return g2_conditional(system, c.tau_max, c.n_tau)
    tau_max, t_burn = jump_defaults(system, cfg)
    if cfg.solver.t_max <= t_burn + tau_max:
        raise ConfigError(
            f"solver.t_max={cfg.solver.t_max} must exceed burn-in {t_burn:.4g} + tau_max {tau_max:.4g}"
        )
    return g2_from_jumps(system, cfg.solver, tau_max, c.n_bins, t_burn, workers=workers)


def series_metadata(cfg: ExperimentConfig, series: CorrelationSeries) -> dict[str, Any]:
    meta = {"model": cfg.model, "params": dataclasses.asdict(cfg.params), "decay_scale": cfg.decay_scale,
            "units": "rates in kappa, times in 1/kappa", "config": cfg.to_dict()}
    meta.update({k: v for k, v in series.meta.items() if k not in ("model", "pair_counts")})
    return meta


def cmd_g2(cfg: ExperimentConfig, out_dir: Path, formats=("csv", "json"), workers: int = 1):
    system = cfg.build()
    report = RunReport("g2", cfg.to_dict(), cfg.solver.seed)
    report.conventions = dict(system.conventions)
    with _Timer(report, "steady_state"):
        report.observables = steady_observables(system)
    with _Timer(report, "g2"):
        series = compute_series(cfg, system, workers)
    report.g2_zero = series.g2_zero
    report.results["method"] = series.method
    report.results["tail_mean"] = series.tail_mean()
    if series.tau.size >= 64:
        report.frequencies = _peaks(extract_frequencies(series, cfg.correlation.floor))
    if "pair_counts" in series.meta:
        report.results["pair_counts"] = series.meta["pair_counts"]
    out_dir.mkdir(parents=True, exist_ok=True)
    if "csv" in formats:
        report.files.append(str(io.write_series_csv(out_dir / "g2.csv", series, series_metadata(cfg, series))))
    figs = [f for f in formats if f in ("svg", "pdf", "png")]
    if figs:
        report.files += [str(p) for p in plot_series([(cfg.model, series)], out_dir / "g2", figs, cfg.model)]
    _write_outputs(report, out_dir, formats)
    return series, report


# ---------------------------------------------------------------------------
# compare


def pair_configs(name: str) -> tuple[ExperimentConfig, ExperimentConfig]:
    fam = cfgmod.family(name)
    if fam not in ("jc", "eit"):
        raise ConfigError(f"compare needs a jc-* or eit-* preset, got {name!r}")
    return cfgmod.preset(f"{fam}-exact", name), cfgmod.preset(f"{fam}-effective", name)


def shared_tau_max(*systems: OpenSystem) -> float:
    return max(10.0 / spectral_gap(liouvillian(s)) for s in systems)


def pair_series(exact: ExperimentConfig, effective: ExperimentConfig, n_tau: int | None = None):
    """Deterministic g2 of an exact/effective pair on one common tau grid."""
    se, sf = exact.build(), effective.build()
    tau_max = exact.correlation.tau_max or shared_tau_max(se, sf)
    n = n_tau or exact.correlation.n_tau
    return g2_conditional(se, tau_max, n), g2_conditional(sf, tau_max, n)


def cmd_compare(a: CorrelationSeries, b: CorrelationSeries, out_dir: Path, formats=("json",),
                labels=("a", "b"), floor: float = 1e-3) -> RunReport:
    report = RunReport("compare", None, None)
    with _Timer(report, "compare"):
        cmp = compare_series(a, b, floor)
    report.results = {"labels": list(labels), **cmp.as_dict()}
    report.results["g2_zero_a"], report.results["g2_zero_b"] = a.g2_zero, b.g2_zero
    figs = [f for f in formats if f in ("svg", "pdf", "png")]
    if figs:
        report.files += [str(p) for p in plot_series(list(zip(labels, (a, b))), out_dir / "compare", figs)]
    _write_outputs(report, out_dir, formats, "comparison")
    return report


# ---------------------------------------------------------------------------
# oscillation threshold


def eit_oscillation_boundary(p: EITParams) -> float:
    """Drive strength at which the effective EIT Rabi frequency equals the polariton width."""
    return (p.kappa / 4) / math.sqrt(1 + (p.g1 / p.omega_c) ** 2)


def large_oscillation(series: CorrelationSeries) -> tuple[bool, float]:
    """Whether g2 has an oscillation above ``LARGE_OSCILLATION_FLOOR``, and the dominant amplitude."""
    dom = extract_frequencies(series).dominant
    amp = dom.amplitude if dom else 0.0
    return amp >= LARGE_OSCILLATION_FLOOR, amp


# ---------------------------------------------------------------------------
# reproduce-fig2


def fig2_configs() -> dict[str, ExperimentConfig]:
    out = {}
    for fam in ("jc", "eit"):
        for kind in ("exact", "effective"):
            for curve in ("dashed", "solid"):
                out[f"{fam}-{kind}-{curve}"] = cfgmod.preset(f"{fam}-{kind}", f"{fam}-{curve}")
    return out


def oracle_check(cfg: ExperimentConfig, n_traj: int, seed: int, workers: int = 1) -> dict[str, Any]:
    """Jump-pair g2 of ``cfg`` against the bin-averaged deterministic g2."""
    system = cfg.build()
    gen, _, n_bar = stationary_flux(system)
    gap = spectral_gap(gen)
    flux = n_bar * _emission_weight(system)
    width = ORACLE_TAU_MAX / ORACLE_BINS
    t_burn = 5.0 / gap
    t_start = min(200.0, max(20.0, ORACLE_TARGET_PAIRS / (n_traj * flux**2 * width)))
    t_max = math.ceil(t_burn + ORACLE_TAU_MAX + t_start)
    solver = TrajectoryConfig(dt=ORACLE_DT, t_max=float(t_max), n_traj=n_traj, seed=seed,
                              jump_method=NORM_THRESHOLD, n_out=2)
    jumps = g2_from_jumps(system, solver, ORACLE_TAU_MAX, ORACLE_BINS, t_burn, workers=workers)
    w = jumps.meta["bin_width"]
    edges = np.arange(ORACLE_BINS + 1) * w
    fine = g2_conditional(system, edges[-1], 8192)
    ref = bin_average(fine, edges)
    counts = np.array(jumps.meta["pair_counts"])
    used = counts >= MIN_PAIRS
    z = np.zeros_like(ref)
    ok = jumps.stderr > 0
    z[ok] = (jumps.g2[ok] - ref[ok]) / jumps.stderr[ok]
    return {
        "series": jumps,
        "reference": ref,
        "z": z,
        "bins_compared": int(used.sum()),
        "max_abs_z": float(np.max(np.abs(z[used]))) if used.any() else math.nan,
        "pass": bool(used.any() and np.all(np.abs(z[used]) <= SIGMA)),
        "t_max": float(t_max),
        "t_burn": float(t_burn),
    }


def _emission_weight(system: OpenSystem) -> float:
    """Jump rate per unit ``<f^dag f>`` of the emission channel."""
    em = emission_unraveling(system)
    c = em.collapse_ops[em.emission_channel].matrix
    f = system.field_op.matrix
    k = np.flatnonzero(np.abs(f) > 1e-12)[0]
    return float(abs(c.ravel()[k] / f.ravel()[k]) ** 2)


def cmd_reproduce_fig2(out_dir: Path, formats=("csv", "json", "svg"), seed: int = 0,
                       trajectories: int = 0, workers: int = 1) -> tuple[dict[str, CorrelationSeries], RunReport]:
    report = RunReport("reproduce-fig2", None, seed)
    configs = fig2_configs()
    series: dict[str, CorrelationSeries] = {}
    curves: dict[str, dict] = {}
    with _Timer(report, "deterministic"):
        for fam in ("jc", "eit"):
            for curve in ("dashed", "solid"):
                ex, ef = configs[f"{fam}-exact-{curve}"], configs[f"{fam}-effective-{curve}"]
                series[f"{fam}-exact-{curve}"], series[f"{fam}-effective-{curve}"] = pair_series(ex, ef)
    for name, s in series.items():
        rep = extract_frequencies(s)
        curves[name] = {
            "g2_zero": s.g2_zero,
            "tail_mean": s.tail_mean(),
            "recovery_time": s.recovery_time(RECOVERY_LEVEL),
            "dominant_frequency": rep.dominant.frequency if rep.dominant else None,
            "peaks": _peaks(rep),
            "n_bar": s.meta["n_bar"],
        }
    report.results["curves"] = curves

    pairs = {}
    for fam in ("jc", "eit"):
        for curve in ("dashed", "solid"):
            cmp = compare_series(series[f"{fam}-exact-{curve}"], series[f"{fam}-effective-{curve}"])
            pairs[f"{fam}-{curve}"] = cmp.as_dict()
    report.results["exact_vs_effective"] = pairs

    g = configs["jc-exact-solid"].params.g
    rep = extract_frequencies(series["jc-exact-solid"])
    report.results["jc_exact_solid_2g_modulation"] = rep.has_peak_near(2 * g, FREQ_REL_TOL)
    report.checks["2g modulation in jc-exact solid"] = report.results["jc_exact_solid_2g_modulation"]

    g0 = {c: effective_eit_parameters(configs[f"eit-exact-{c}"].params).gamma0 for c in ("dashed", "solid")}
    t_ex = {c: curves[f"eit-exact-{c}"]["recovery_time"] for c in ("dashed", "solid")}
    t_ef = {c: curves[f"eit-effective-{c}"]["recovery_time"] for c in ("dashed", "solid")}
    order = lambda d: "solid>dashed" if d["solid"] > d["dashed"] else "solid<=dashed"  # noqa: E731
    report.results["recovery_order_exact"] = order(t_ex)
    report.results["recovery_order_effective"] = order(t_ef)
    report.results["gamma0_order"] = order(g0)
    report.checks["recovery ordering matches gamma0 ordering"] = order(t_ex) == order(t_ef) == order(g0)

    out_dir.mkdir(parents=True, exist_ok=True)
    if "csv" in formats:
        for name, s in series.items():
            path = io.write_series_csv(out_dir / f"{name}.csv", s, series_metadata(configs[name], s))
            report.files.append(str(path))

    if trajectories:
        with _Timer(report, "trajectories"):
            oracle = {}
            for k, (name, c) in enumerate(configs.items()):
                res = oracle_check(c, trajectories, seed + k, workers)
                oracle[name] = {key: res[key] for key in ("bins_compared", "max_abs_z", "pass", "t_max", "t_burn")}
                report.checks[f"jump-pair agreement {name}"] = res["pass"]
                if "csv" in formats:
                    path = io.write_series_csv(out_dir / f"{name}-jumps.csv", res["series"],
                                               series_metadata(c, res["series"]))
                    report.files.append(str(path))
            report.results["oracle"] = oracle

    figs = [f for f in formats if f in ("svg", "pdf", "png")]
    if figs:
        panels = {}
        for r, fam in enumerate(("jc", "eit")):
            for c, kind in enumerate(("exact", "effective")):
                title = f"{fam.upper()} {kind}"
                panels[(r, c)] = (title, [(f"{fam} {curve}", series[f"{fam}-{kind}-{curve}"])
                                          for curve in ("dashed", "solid")])
        report.files += [str(p) for p in plot_grid(panels, out_dir / "fig2", figs)]
    _write_outputs(report, out_dir, formats, "summary")
    return series, report


# ---------------------------------------------------------------------------
# spectrum


def cmd_spectrum(cfg: ExperimentConfig, out_dir: Path, formats=("json",), manifolds: int = 2) -> RunReport:
    system = cfg.build()
    if system.kind != "exact" or system.family not in ("jc", "eit"):
        raise ConfigError(f"spectrum needs jc-exact or eit-exact, got {cfg.model}")
    report = RunReport("spectrum", cfg.to_dict(), None)
    report.conventions = dict(system.conventions)
    n_top = min(manifolds, system.space.dims[0] - 1)
    table = {}
    with _Timer(report, "spectrum"):
        for n in range(0, n_top + 1):
            ms = manifold_spectrum(system, n)
            row: dict[str, Any] = {"energies": ms.energies, "relative_energies": ms.relative_energies,
                                   "reference": ms.reference}
            if ms.second_photon_detuning is not None:
                row["second_photon_detuning"] = ms.second_photon_detuning
                report.results["second_photon_detuning"] = ms.second_photon_detuning
            table[str(n)] = row
    report.results["manifolds"] = table
    if system.family == "eit" and n_top >= 1:
        report.checks["first manifold matches analytic dressed states"] = True
    _write_outputs(report, out_dir, formats, "spectrum")
    return report
