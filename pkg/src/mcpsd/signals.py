"""Test-signal generation: white and filtered Gaussian processes.

A discrete white Gaussian process with flat power spectral density sigma2/W
over [-W/2, W/2] has i.i.d. Nyquist-rate samples of variance sigma2, so white
records are drawn directly.  Colored records are produced by passing a
unit-PSD white record through a causal linear-phase FIR bandpass; the filter
gain can be calibrated so that the mean square of the per-segment powers
matches the unit-PSD white reference, which makes white and filtered
experiments comparable at equal quadratic signal power.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.signal import fftconvolve, firwin

from .errors import InvalidDimensions, InvalidLength, RecordTooShort
from .patterns import SamplingPattern

DEFAULT_BANDPASS_TAPS = 201


@dataclass(frozen=True)
class WhiteNoiseModel:
    """Zero-mean white Gaussian process with PSD sigma2 / nyquist_rate."""

    sigma2: float
    nyquist_rate: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise InvalidDimensions("sigma2 must be nonnegative")
        if self.nyquist_rate <= 0:
            raise InvalidDimensions("nyquist_rate must be positive")


@dataclass(frozen=True)
class FilteredNoiseModel:
    """Unit-PSD white Gaussian noise shaped by a FIR bandpass.

    The driving white process has PSD 1 (sigma2 equal to the Nyquist rate);
    ``gain`` scales the filter coefficients.  The bandpass is a Hamming
    windowed-sinc design with ``n_taps`` coefficients and cutoff frequencies
    ``low_hz`` and ``high_hz``.
    """

    low_hz: float
    high_hz: float
    gain: float = 1.0
    n_taps: int = DEFAULT_BANDPASS_TAPS
    nyquist_rate: float = 1000.0

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz <= self.nyquist_rate / 2:
            raise InvalidDimensions(
                "cutoffs must satisfy 0 < low < high <= nyquist_rate / 2"
            )
        if self.n_taps < 3 or self.n_taps % 2 == 0:
            raise InvalidDimensions("bandpass length must be an odd integer >= 3")


SignalModel = Union[WhiteNoiseModel, FilteredNoiseModel]


@dataclass(frozen=True)
class NyquistRecord:
    """A finite record of Nyquist-rate samples."""

    samples: np.ndarray
    nyquist_rate: float
    seed: int | None = None


@dataclass(frozen=True)
class ChannelData:
    """Per-channel sub-streams produced by multi-coset sampling."""

    streams: np.ndarray  # shape (q, N)
    pattern: SamplingPattern

    @property
    def samples_per_channel(self) -> int:
        return self.streams.shape[1]


def white_record(
    n_samples: int, sigma2: float, nyquist_rate: float, seed=None
) -> NyquistRecord:
    """Draw an i.i.d. zero-mean Gaussian record with sample variance sigma2."""
    if n_samples < 1:
        raise InvalidLength("need at least one sample")
    if sigma2 < 0:
        raise InvalidDimensions("sigma2 must be nonnegative")
    rng = np.random.default_rng(seed)
    samples = rng.normal(0.0, np.sqrt(sigma2), size=n_samples)
    samples.setflags(write=False)
    return NyquistRecord(
        samples=samples,
        nyquist_rate=nyquist_rate,
        seed=seed if isinstance(seed, int) else None,
    )


def bandpass_taps(model: FilteredNoiseModel) -> np.ndarray:
    """Gain-scaled coefficients of the model's windowed-sinc bandpass."""
    taps = firwin(
        model.n_taps,
        [model.low_hz, model.high_hz],
        pass_zero=False,
        window="hamming",
        fs=model.nyquist_rate,
    )
    return model.gain * taps


def filtered_record(n_samples: int, model: FilteredNoiseModel, seed=None) -> NyquistRecord:
    """Generate a colored record by causal FIR filtering of unit-PSD noise.

    The convolution's startup transient is kept inside the record; its
    length is n_taps - 1 samples, negligible for the record lengths used in
    Monte Carlo experiments.
    """
    if n_samples < 1:
        raise InvalidLength("need at least one sample")
    rng = np.random.default_rng(seed)
    driving = rng.normal(0.0, np.sqrt(model.nyquist_rate), size=n_samples)
    samples = fftconvolve(driving, bandpass_taps(model))[:n_samples]
    samples.setflags(write=False)
    return NyquistRecord(
        samples=samples,
        nyquist_rate=model.nyquist_rate,
        seed=seed if isinstance(seed, int) else None,
    )


def generate_record(model: SignalModel, n_samples: int, seed=None) -> NyquistRecord:
    """Generate a record for either signal model."""
    if isinstance(model, WhiteNoiseModel):
        return white_record(n_samples, model.sigma2, model.nyquist_rate, seed)
    return filtered_record(n_samples, model, seed)


def segment_edges(n_segments: int, nyquist_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Frequency bounds of each segment: segment l covers [W/2 - (W/L)l, W/2 - (W/L)(l-1))."""
    L, W = n_segments, nyquist_rate
    idx = np.arange(1, L + 1)
    f_low = W / 2 - (W / L) * idx
    f_high = W / 2 - (W / L) * (idx - 1)
    return f_low, f_high


def _band_energy(taps: np.ndarray, f_low: float, f_high: float, rate: float) -> float:
    """Integral of |H(e^{j 2 pi f / rate})|^2 over [f_low, f_high], exactly.

    Uses |H|^2 = sum_k rho(k) e^{-j 2 pi f k / rate} with rho the tap
    autocorrelation, so each lag integrates in closed form.
    """
    full = np.correlate(taps, taps, mode="full")
    mid = len(taps) - 1
    rho = full[mid:]
    total = rho[0] * (f_high - f_low)
    k = np.arange(1, len(rho))
    if k.size:
        total += np.sum(
            rho[1:]
            * rate
            / (np.pi * k)
            * (np.sin(2 * np.pi * f_high * k / rate) - np.sin(2 * np.pi * f_low * k / rate))
        )
    return float(total)


def true_segment_power(model: SignalModel, n_segments: int) -> np.ndarray:
    """Average model PSD within each spectral segment.

    Element l equals (L/W) times the integral of the model PSD over segment
    l.  For a white model this is sigma2/W in every segment; for a filtered
    model the PSD is the squared magnitude response of the gain-scaled
    bandpass (the driving noise has unit PSD).
    """
    if n_segments < 1 or n_segments % 2 == 0:
        raise InvalidDimensions("segment count must be a positive odd integer")
    L = n_segments
    if isinstance(model, WhiteNoiseModel):
        return np.full(L, model.sigma2 / model.nyquist_rate)
    W = model.nyquist_rate
    taps = bandpass_taps(model)
    f_low, f_high = segment_edges(L, W)
    return np.array(
        [L / W * _band_energy(taps, lo, hi, W) for lo, hi in zip(f_low, f_high)]
    )


def calibrate_gain(model: FilteredNoiseModel, n_segments: int) -> FilteredNoiseModel:
    """Rescale the filter gain to match the white reference's quadratic power.

    Sets the gain so that the mean square of the per-segment powers equals
    that of the unit-PSD white reference, i.e. (1/L) * sum_l p_l^2 = 1.
    """
    unit = dataclasses.replace(model, gain=1.0)
    p = true_segment_power(unit, n_segments)
    ms = float(np.mean(p**2))
    if ms == 0:
        raise InvalidDimensions("bandpass has no in-band energy; cannot calibrate")
    return dataclasses.replace(model, gain=ms**-0.25)


def multicoset_sample(record: NyquistRecord, pattern: SamplingPattern) -> ChannelData:
    """Split a Nyquist record into the pattern's channel streams.

    Channel i keeps samples x[n*L + c_i] for n = 0..N-1 with N = floor(N_x/L);
    leftover samples beyond N*L are discarded.
    """
    x = np.asarray(record.samples)
    L = pattern.n_segments
    n_per_channel = x.shape[0] // L
    if n_per_channel < 1:
        raise RecordTooShort(
            f"record of {x.shape[0]} samples is shorter than one period L={L}"
        )
    streams = np.stack([x[c :: L][:n_per_channel] for c in pattern.offsets])
    streams.setflags(write=False)
    return ChannelData(streams=streams, pattern=pattern)


def record_to_csv(record: NyquistRecord, path) -> None:
    """Write a record as single-column CSV with header ``sample``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample"])
        for value in record.samples:
            writer.writerow([repr(float(value))])


def record_from_csv(path, nyquist_rate: float) -> NyquistRecord:
    """Read a single-column CSV record written by :func:`record_to_csv`."""
    data = np.loadtxt(path, skiprows=1, dtype=float)
    samples = np.atleast_1d(data)
    samples.setflags(write=False)
    return NyquistRecord(samples=samples, nyquist_rate=nyquist_rate)
