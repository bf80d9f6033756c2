"""Configuration-driven Monte Carlo experiments and figure-data emission.

Experiments are described by a JSON-serializable spec: a signal model, a grid
of (L, q) designs, record lengths, a trial count, and a master seed.  Every
random draw derives deterministically from the master seed and the grid/trial
coordinates, so results are byte-identical across reruns and worker counts.
Outputs are CSV files plus a run-manifest JSON recording the spec, the seed
scheme, the filter configuration, and library versions.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__ as _pkg_version
from .analysis import covariance_report
from .errors import FeasibilityExhausted, InvalidLength
from .estimator import estimate_powers
from .fdfilter import DEFAULT_INTEGER_DELAY, DEFAULT_TAPS, build_bank
from .patterns import build_system, generate_pattern
from .signals import (
    FilteredNoiseModel,
    SignalModel,
    WhiteNoiseModel,
    calibrate_gain,
    generate_record,
    multicoset_sample,
    segment_edges,
    true_segment_power,
)

FIGURE_NAMES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6")

# Default sweep grids for the figure datasets.  The (L, q) trios keep the
# average sampling rate nearly constant; sweeps hold the record length at 1e5
# Nyquist samples unless the figure varies it.
RATE_MATCHED_PAIRS = ((51, 12), (101, 25), (201, 50))
DEFAULT_NX_SWEEP = (20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000)
DEFAULT_CHANNEL_SWEEP = (10, 15, 20, 25, 30, 35, 40, 45)
DEFAULT_SEGMENT_SWEEP = (51, 101, 151, 201)
DEFAULT_FIXED_NX = 100_000


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce a Monte Carlo run.

    ``model`` describes the signal; ``grid`` lists (L, q) designs; per-trial
    seeds are derived from ``seed`` and the (L, q, N_x, trial) coordinates,
    never from execution order.
    """

    model: SignalModel
    grid: tuple[tuple[int, int], ...]
    n_x_values: tuple[int, ...]
    trials: int = 500
    seed: int = 0
    n_taps: int = DEFAULT_TAPS
    integer_delay: int = DEFAULT_INTEGER_DELAY
    max_tries: int = 100
    workers: int = 1
    output_dir: str = "mcpsd-out"

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidLength("trials must be at least 1")
        if not self.n_x_values:
            raise InvalidLength("need at least one record length")


@dataclass(frozen=True)
class TrialSummary:
    """Per-grid-point Monte Carlo summary with analytic columns alongside.

    Sample statistics are taken across trials per segment; the standard
    error is the sample standard deviation divided by sqrt(trials).
    Analytic columns are filled for white models only.
    """

    n_segments: int
    n_channels: int
    n_nyquist: int
    trials: int
    nyquist_rate: float
    true_power: np.ndarray
    mc_mean: np.ndarray
    mc_var: np.ndarray
    mc_se: np.ndarray
    analytic_mean: np.ndarray | None
    analytic_bias: np.ndarray | None
    analytic_var_exact: np.ndarray | None
    analytic_var_approx: np.ndarray | None
    skipped: str | None = None


def model_document(model: SignalModel) -> dict:
    """JSON form of a signal model."""
    if isinstance(model, WhiteNoiseModel):
        return {"kind": "white", "sigma2": model.sigma2, "W": model.nyquist_rate}
    return {
        "kind": "filtered",
        "low_hz": model.low_hz,
        "high_hz": model.high_hz,
        "gain": model.gain,
        "n_taps": model.n_taps,
        "W": model.nyquist_rate,
    }


def model_from_document(doc: dict) -> SignalModel:
    """Rebuild a signal model from its JSON form."""
    kind = doc.get("kind", "white")
    if kind == "white":
        return WhiteNoiseModel(sigma2=float(doc["sigma2"]), nyquist_rate=float(doc["W"]))
    if kind == "filtered":
        return FilteredNoiseModel(
            low_hz=float(doc["low_hz"]),
            high_hz=float(doc["high_hz"]),
            gain=float(doc.get("gain", 1.0)),
            n_taps=int(doc.get("n_taps", 201)),
            nyquist_rate=float(doc["W"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def spec_document(spec: ExperimentSpec) -> dict:
    """JSON form of an experiment spec."""
    doc = dataclasses.asdict(spec)
    doc["model"] = model_document(spec.model)
    doc["grid"] = [list(pair) for pair in spec.grid]
    doc["n_x_values"] = list(spec.n_x_values)
    return doc


def spec_from_document(doc: dict) -> ExperimentSpec:
    """Rebuild an experiment spec from its JSON form."""
    return ExperimentSpec(
        model=model_from_document(doc["model"]),
        grid=tuple((int(L), int(q)) for L, q in doc["grid"]),
        n_x_values=tuple(int(v) for v in doc["n_x_values"]),
        trials=int(doc.get("trials", 500)),
        seed=int(doc.get("seed", 0)),
        n_taps=int(doc.get("n_taps", DEFAULT_TAPS)),
        integer_delay=int(doc.get("integer_delay", DEFAULT_INTEGER_DELAY)),
        max_tries=int(doc.get("max_tries", 100)),
        workers=int(doc.get("workers", 1)),
        output_dir=str(doc.get("output_dir", "mcpsd-out")),
    )


def pattern_seed(master: int, n_segments: int, n_channels: int) -> np.random.SeedSequence:
    """Seed for the (L, q) pattern draw; fixed across record lengths."""
    return np.random.SeedSequence([master, 1, n_segments, n_channels])


def trial_seed(
    master: int, n_segments: int, n_channels: int, n_nyquist: int, trial: int
) -> np.random.SeedSequence:
    """Seed for one trial record, independent of execution order."""
    return np.random.SeedSequence([master, 2, n_segments, n_channels, n_nyquist, trial])


def _trial_batch(args) -> tuple[int, np.ndarray]:
    """Run a contiguous batch of trials; top-level for process pools."""
    model, pattern, bank, system, n_nyquist, master, start, count = args
    L = pattern.n_segments
    out = np.empty((count, L))
    for offset in range(count):
        trial = start + offset
        seed = trial_seed(master, L, pattern.n_channels, n_nyquist, trial)
        record = generate_record(model, n_nyquist, seed)
        channels = multicoset_sample(record, pattern)
        out[offset] = estimate_powers(channels, bank, system).power
    return start, out


def _collect_powers(model, pattern, bank, system, n_nyquist, spec) -> np.ndarray:
    """All trial power estimates as a (trials, L) array, order-stable."""
    trials = spec.trials
    powers = np.empty((trials, pattern.n_segments))
    if spec.workers <= 1:
        _, powers[:] = _trial_batch(
            (model, pattern, bank, system, n_nyquist, spec.seed, 0, trials)
        )
        return powers
    batch = max(1, -(-trials // (4 * spec.workers)))
    jobs = [
        (model, pattern, bank, system, n_nyquist, spec.seed, start, min(batch, trials - start))
        for start in range(0, trials, batch)
    ]
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        for start, block in pool.map(_trial_batch, jobs):
            powers[start : start + block.shape[0]] = block
    return powers


def _prepared_model(spec: ExperimentSpec, n_segments: int) -> SignalModel:
    """Calibrate filtered models per segment count; white models pass through."""
    if isinstance(spec.model, FilteredNoiseModel):
        return calibrate_gain(spec.model, n_segments)
    return spec.model


def run_montecarlo(spec: ExperimentSpec, log=None) -> list[TrialSummary]:
    """Run the spec's full grid and return per-grid-point summaries.

    Patterns are generated once per (L, q) and reused across record lengths.
    Infeasible grid points (no full-rank pattern, or records too short for
    the analytic formulas) are reported as skipped rather than aborting the
    sweep.
    """
    log = log or (lambda msg: print(msg, file=sys.stderr))
    rate = _model_rate(spec.model)
    summaries: list[TrialSummary] = []
    for L, q in spec.grid:
        try:
            pattern = generate_pattern(
                L,
                q,
                nyquist_rate=rate,
                seed=int(pattern_seed(spec.seed, L, q).generate_state(1)[0]),
                max_tries=spec.max_tries,
            )
        except FeasibilityExhausted as exc:
            log(f"skipping (L={L}, q={q}): {exc}")
            for n_x in spec.n_x_values:
                summaries.append(_skipped_summary(L, q, n_x, spec.trials, rate, str(exc)))
            continue
        system = build_system(pattern)
        bank = build_bank(pattern, spec.n_taps, spec.integer_delay)
        model = _prepared_model(spec, L)
        truth = true_segment_power(model, L)
        for n_x in spec.n_x_values:
            if n_x // L <= 2 * spec.n_taps:
                reason = f"record too short: N={n_x // L} <= 2*n_taps={2 * spec.n_taps}"
                log(f"skipping (L={L}, q={q}, N_x={n_x}): {reason}")
                summaries.append(_skipped_summary(L, q, n_x, spec.trials, rate, reason))
                continue
            powers = _collect_powers(model, pattern, bank, system, n_x, spec)
            mc_mean = powers.mean(axis=0)
            mc_var = powers.var(axis=0, ddof=1) if spec.trials > 1 else np.zeros(L)
            mc_se = np.sqrt(mc_var / spec.trials)
            if isinstance(model, WhiteNoiseModel):
                report = covariance_report(system, bank, model.sigma2, n_x)
                analytic_mean = truth - report.bias
                analytic = (
                    analytic_mean,
                    report.bias,
                    np.diagonal(report.cov_exact).copy(),
                    report.var_approx,
                )
            else:
                analytic = (None, None, None, None)
            summaries.append(
                TrialSummary(
                    n_segments=L,
                    n_channels=q,
                    n_nyquist=n_x,
                    trials=spec.trials,
                    nyquist_rate=rate,
                    true_power=truth,
                    mc_mean=mc_mean,
                    mc_var=mc_var,
                    mc_se=mc_se,
                    analytic_mean=analytic[0],
                    analytic_bias=analytic[1],
                    analytic_var_exact=analytic[2],
                    analytic_var_approx=analytic[3],
                )
            )
    return summaries


def _model_rate(model: SignalModel) -> float:
    return model.nyquist_rate


def _skipped_summary(L, q, n_x, trials, rate, reason) -> TrialSummary:
    empty = np.zeros(0)
    return TrialSummary(
        n_segments=L,
        n_channels=q,
        n_nyquist=n_x,
        trials=trials,
        nyquist_rate=rate,
        true_power=empty,
        mc_mean=empty,
        mc_var=empty,
        mc_se=empty,
        analytic_mean=None,
        analytic_bias=None,
        analytic_var_exact=None,
        analytic_var_approx=None,
        skipped=reason,
    )


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def write_summaries_csv(summaries: list[TrialSummary], path) -> None:
    """Write per-segment Monte Carlo results with analytic columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "L",
                "q",
                "n_x",
                "trials",
                "segment_index",
                "f_low_hz",
                "f_high_hz",
                "true_power",
                "mc_mean",
                "mc_var",
                "mc_se",
                "analytic_mean",
                "analytic_bias",
                "analytic_var_exact",
                "analytic_var_approx",
                "skipped",
            ]
        )
        for s in summaries:
            if s.skipped is not None:
                writer.writerow(
                    [s.n_segments, s.n_channels, s.n_nyquist, s.trials]
                    + [""] * 11
                    + [s.skipped]
                )
                continue
            f_low, f_high = segment_edges(s.n_segments, s.nyquist_rate)
            for l in range(s.n_segments):
                writer.writerow(
                    [
                        s.n_segments,
                        s.n_channels,
                        s.n_nyquist,
                        s.trials,
                        l + 1,
                        repr(float(f_low[l])),
                        repr(float(f_high[l])),
                        repr(float(s.true_power[l])),
                        repr(float(s.mc_mean[l])),
                        repr(float(s.mc_var[l])),
                        repr(float(s.mc_se[l])),
                        _fmt(None if s.analytic_mean is None else s.analytic_mean[l]),
                        _fmt(None if s.analytic_bias is None else s.analytic_bias[l]),
                        _fmt(
                            None
                            if s.analytic_var_exact is None
                            else s.analytic_var_exact[l]
                        ),
                        _fmt(
                            None
                            if s.analytic_var_approx is None
                            else s.analytic_var_approx[l]
                        ),
                        "",
                    ]
                )


def _rate_of(summary: TrialSummary) -> float:
    # Rate is not stored per summary; segment edges only need W via the
    # harness-wide model, so all callers pass summaries from one spec.
    return _CURRENT_RATE[0]


_CURRENT_RATE = [1000.0]


def set_summary_rate(rate: float) -> None:
    """Set the Nyquist rate used when writing summary CSV frequency columns."""
    _CURRENT_RATE[0] = rate


def write_manifest(spec: ExperimentSpec, path, extra: dict | None = None) -> None:
    """Write the run manifest: spec, seed scheme, filters, versions."""
    manifest = {
        "spec": spec_document(spec),
        "seed_scheme": {
            "pattern": "SeedSequence([seed, 1, L, q])",
            "trial": "SeedSequence([seed, 2, L, q, N_x, trial])",
        },
        "filters": {
            "delay_design": "lagrange",
            "n_taps": spec.n_taps,
            "integer_delay": spec.integer_delay,
            "bandpass_design": "hamming windowed-sinc"
            if isinstance(spec.model, FilteredNoiseModel)
            else None,
            "bandpass_taps": spec.model.n_taps
            if isinstance(spec.model, FilteredNoiseModel)
            else None,
        },
        "versions": {
            "mcpsd": _pkg_version,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate_spec(spec: ExperimentSpec) -> list[dict]:
    """Feasibility diagnostics for every grid point; never raises.

    Reports overdetermination, rank of a seeded pattern draw, condition
    number, the average sampling rate, and whether each record length
    supports the analytic formulas.
    """
    rows = []
    for L, q in spec.grid:
        row: dict = {"L": L, "q": q}
        Q = q * (q - 1) // 2 + 1
        row["Q"] = Q
        row["overdetermined"] = 2 * Q >= L
        row["average_rate_hz"] = q / L * _model_rate(spec.model)
        row["min_n_x"] = (2 * spec.n_taps * L) + L
        row["n_x_ok"] = {
            n_x: n_x // L > 2 * spec.n_taps for n_x in spec.n_x_values
        }
        if not row["overdetermined"] or not 1 <= q < L or L % 2 == 0:
            row["feasible"] = False
            row["condition_number"] = None
            rows.append(row)
            continue
        try:
            pattern = generate_pattern(
                L,
                q,
                nyquist_rate=_model_rate(spec.model),
                seed=int(pattern_seed(spec.seed, L, q).generate_state(1)[0]),
                max_tries=spec.max_tries,
            )
            system = build_system(pattern)
            row["feasible"] = True
            row["condition_number"] = system.condition_number
        except FeasibilityExhausted:
            row["feasible"] = False
            row["condition_number"] = None
        rows.append(row)
    return rows


def _figure_curve_csv(path, rows) -> None:
    """Write one curve as (x, analytic_exact, analytic_approx, montecarlo, montecarlo_se)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "analytic_exact", "analytic_approx", "montecarlo", "montecarlo_se"])
        for x, exact, approx, mc, se in rows:
            writer.writerow([x, _fmt(exact), _fmt(approx), _fmt(mc), _fmt(se)])


def _white_sigma2(spec: ExperimentSpec) -> float:
    if isinstance(spec.model, WhiteNoiseModel):
        return spec.model.sigma2
    # Filtered experiments are calibrated against the unit-PSD white input.
    return spec.model.nyquist_rate


def _analytic_point(spec, L, q, n_x):
    """Bias and variance formulas at one grid point (white input)."""
    rate = _model_rate(spec.model)
    pattern = generate_pattern(
        L,
        q,
        nyquist_rate=rate,
        seed=int(pattern_seed(spec.seed, L, q).generate_state(1)[0]),
        max_tries=spec.max_tries,
    )
    system = build_system(pattern)
    bank = build_bank(pattern, spec.n_taps, spec.integer_delay)
    report = covariance_report(system, bank, _white_sigma2(spec), n_x)
    return report


def _mc_variance_stats(spec, L, q, n_x, model) -> tuple[float, float, np.ndarray]:
    """Monte Carlo first-segment (or passband-average) variance and its SE."""
    rate = _model_rate(spec.model)
    pattern = generate_pattern(
        L,
        q,
        nyquist_rate=rate,
        seed=int(pattern_seed(spec.seed, L, q).generate_state(1)[0]),
        max_tries=spec.max_tries,
    )
    system = build_system(pattern)
    bank = build_bank(pattern, spec.n_taps, spec.integer_delay)
    powers = _collect_powers(model, pattern, bank, system, n_x, spec)
    variances = powers.var(axis=0, ddof=1)
    if isinstance(model, FilteredNoiseModel):
        truth = true_segment_power(model, L)
        band = truth >= 0.5 * truth.max()
        value = float(variances[band].mean())
    else:
        value = float(variances[0])
    se = value * np.sqrt(2.0 / (spec.trials - 1))
    return value, float(se), variances


def emit_figure_data(figure: str, spec: ExperimentSpec, log=None) -> list[Path]:
    """Write the CSV curves behind one of the six reference figures.

    fig1: analytic bias vs record length for rate-matched (L, q) pairs, with
          a Monte Carlo overlay on the first pair.
    fig2: exact and approximate variance vs channel count at fixed L.
    fig3: exact and approximate variance vs segment count at fixed q.
    fig4: exact and approximate variance vs record length, Monte Carlo
          overlay on the first rate-matched pair.
    fig5: white-input exact variance vs segment count at q = 45, next to the
          filtered-input Monte Carlo passband average.
    fig6: white-input exact variance vs record length at (101, 25), next to
          the filtered-input Monte Carlo passband average.
    """
    if figure not in FIGURE_NAMES:
        raise ValueError(f"unknown figure {figure!r}; expected one of {FIGURE_NAMES}")
    log = log or (lambda msg: print(msg, file=sys.stderr))
    outdir = Path(spec.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    sigma2 = _white_sigma2(spec)
    rate = _model_rate(spec.model)
    white = WhiteNoiseModel(sigma2=sigma2, nyquist_rate=rate)

    def emit(name: str, rows) -> None:
        path = outdir / f"{figure}_{name}.csv"
        _figure_curve_csv(path, rows)
        written.append(path)

    if figure in ("fig1", "fig4"):
        mc_pair = RATE_MATCHED_PAIRS[0]
        for L, q in RATE_MATCHED_PAIRS:
            rows = []
            for n_x in DEFAULT_NX_SWEEP:
                report = _analytic_point(spec, L, q, n_x)
                if figure == "fig1":
                    exact, approx = float(report.bias[0]), None
                else:
                    exact = float(report.cov_exact[0, 0])
                    approx = float(report.var_approx[0])
                mc = se = None
                if (L, q) == mc_pair and spec.trials > 1:
                    powers = _mc_powers_point(spec, L, q, n_x, white)
                    if figure == "fig1":
                        mc = float(sigma2 / rate - powers.mean(axis=0)[0])
                        se = float(powers[:, 0].std(ddof=1) / np.sqrt(spec.trials))
                    else:
                        mc = float(powers[:, 0].var(ddof=1))
                        se = float(mc * np.sqrt(2.0 / (spec.trials - 1)))
                rows.append((n_x, exact, approx, mc, se))
            emit(f"L{L}_q{q}", rows)
            log(f"{figure}: wrote curve (L={L}, q={q})")

    elif figure == "fig2":
        for L in (51, 101, 201):
            rows = []
            for q in DEFAULT_CHANNEL_SWEEP:
                if 2 * (q * (q - 1) // 2 + 1) < L or q >= L:
                    continue
                report = _analytic_point(spec, L, q, DEFAULT_FIXED_NX)
                rows.append(
                    (
                        q,
                        float(report.cov_exact[0, 0]),
                        float(report.var_approx[0]),
                        None,
                        None,
                    )
                )
            emit(f"L{L}", rows)
            log(f"{figure}: wrote curve (L={L})")

    elif figure == "fig3":
        for q in (15, 25, 35, 45):
            rows = []
            for L in DEFAULT_SEGMENT_SWEEP:
                if 2 * (q * (q - 1) // 2 + 1) < L or q >= L:
                    continue
                report = _analytic_point(spec, L, q, DEFAULT_FIXED_NX)
                rows.append(
                    (
                        L,
                        float(report.cov_exact[0, 0]),
                        float(report.var_approx[0]),
                        None,
                        None,
                    )
                )
            emit(f"q{q}", rows)
            log(f"{figure}: wrote curve (q={q})")

    elif figure == "fig5":
        q = 45
        white_rows = []
        filtered_rows = []
        for L in DEFAULT_SEGMENT_SWEEP:
            report = _analytic_point(spec, L, q, DEFAULT_FIXED_NX)
            white_rows.append((L, float(report.cov_exact[0, 0]), None, None, None))
            model = _filtered_model(spec, L)
            mc, se, _ = _mc_variance_stats(spec, L, q, DEFAULT_FIXED_NX, model)
            filtered_rows.append((L, None, None, mc, se))
            log(f"{figure}: finished L={L}")
        emit("white", white_rows)
        emit("filtered", filtered_rows)

    elif figure == "fig6":
        L, q = 101, 25
        white_rows = []
        filtered_rows = []
        for n_x in DEFAULT_NX_SWEEP:
            report = _analytic_point(spec, L, q, n_x)
            white_rows.append((n_x, float(report.cov_exact[0, 0]), None, None, None))
            model = _filtered_model(spec, L)
            mc, se, _ = _mc_variance_stats(spec, L, q, n_x, model)
            filtered_rows.append((n_x, None, None, mc, se))
            log(f"{figure}: finished N_x={n_x}")
        emit("white", white_rows)
        emit("filtered", filtered_rows)

    write_manifest(spec, outdir / f"{figure}_manifest.json", extra={"figure": figure})
    written.append(outdir / f"{figure}_manifest.json")
    return written


def _filtered_model(spec: ExperimentSpec, n_segments: int) -> FilteredNoiseModel:
    if isinstance(spec.model, FilteredNoiseModel):
        return calibrate_gain(spec.model, n_segments)
    rate = spec.model.nyquist_rate
    return calibrate_gain(
        FilteredNoiseModel(low_hz=rate / 10, high_hz=rate / 5, nyquist_rate=rate),
        n_segments,
    )


def _mc_powers_point(spec, L, q, n_x, model) -> np.ndarray:
    rate = _model_rate(spec.model)
    pattern = generate_pattern(
        L,
        q,
        nyquist_rate=rate,
        seed=int(pattern_seed(spec.seed, L, q).generate_state(1)[0]),
        max_tries=spec.max_tries,
    )
    system = build_system(pattern)
    bank = build_bank(pattern, spec.n_taps, spec.integer_delay)
    return _collect_powers(model, pattern, bank, system, n_x, spec)
