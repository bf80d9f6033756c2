"""The segment-power estimation pipeline.

Given multi-coset channel streams, each channel is passed through its
fractional-delay filter (windowed to the finite record), the zero-lag
correlation matrix of the aligned streams is averaged over N samples, the
distinct entries are stacked into a real measurement vector, and the
overdetermined linear system is solved for the per-segment average powers.

All operations are quadratic in the signal, so scaling a record by alpha
scales the power estimate by alpha**2 exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensions, InvalidLength
from .fdfilter import FdFilter, FilterBank
from .patterns import MeasurementSystem, PairIndexMap, solve_least_squares
from .signals import ChannelData, segment_edges


@dataclass(frozen=True)
class CorrelationEstimate:
    """Finite-sample estimate of the aligned-channel correlation matrix.

    ``matrix`` is Hermitian with a real diagonal; for real input streams it
    is real symmetric but kept complex so the measurement stacking below
    stays uniform.
    """

    matrix: np.ndarray  # complex, q x q
    n_samples: int


@dataclass(frozen=True)
class SegmentPowerEstimate:
    """Recovered average power per spectral segment.

    Attributes
    ----------
    power : np.ndarray
        Length-L vector of average power per segment (PSD units); equals
        (L/W) times ``integrated``.
    integrated : np.ndarray
        Length-L vector of integrated PSD per segment.
    measurements : np.ndarray
        The stacked real measurement vector of length 2Q the recovery was
        run on; entry Q+1 is identically zero.
    """

    power: np.ndarray
    integrated: np.ndarray
    measurements: np.ndarray


def delayed_channel(stream: np.ndarray, filt: FdFilter, n_out: int) -> np.ndarray:
    """Apply a delay filter to the first ``n_out`` samples of a stream.

    Output index n is sum_{r=n-n_taps+1..n} h(n-r) * stream[r] with samples
    outside [0, n_out-1] treated as zero: the full convolution truncated to
    the record, startup transient included.

    Raises
    ------
    InvalidLength
        If ``n_out`` does not exceed the filter length or the stream is
        shorter than ``n_out``.
    """
    y = np.asarray(stream, dtype=float)
    if n_out <= filt.n_taps:
        raise InvalidLength(f"need more than {filt.n_taps} samples, got {n_out}")
    if y.shape[0] < n_out:
        raise InvalidLength(f"stream holds {y.shape[0]} samples, need {n_out}")
    return np.convolve(filt.coeffs, y[:n_out])[:n_out]


def estimate_correlation(
    channels: ChannelData, bank: FilterBank, n_samples: int | None = None
) -> CorrelationEstimate:
    """Zero-lag correlation matrix of the delay-aligned channel streams.

    Entry (a, b) is (1/N) * sum_n d_a(n) * conj(d_b(n)) where d_i is the
    delayed channel output; Hermitian by construction.

    Parameters
    ----------
    channels : ChannelData
    bank : FilterBank
        One filter per channel, aligned with the pattern's offsets.
    n_samples : int, optional
        Samples per channel to use; defaults to the full stream length.
    """
    streams = channels.streams
    if bank.n_channels != streams.shape[0]:
        raise InvalidDimensions(
            f"bank has {bank.n_channels} filters, data has {streams.shape[0]} channels"
        )
    if n_samples is None:
        n_samples = streams.shape[1]
    if streams.shape[1] < n_samples:
        raise InvalidLength(
            f"streams hold {streams.shape[1]} samples, need {n_samples}"
        )
    aligned = np.stack(
        [delayed_channel(streams[i], bank.filters[i], n_samples) for i in range(bank.n_channels)]
    )
    matrix = (aligned @ aligned.T).astype(complex) / n_samples
    return CorrelationEstimate(matrix=matrix, n_samples=n_samples)


def stack_measurements(corr: CorrelationEstimate, pairs: PairIndexMap) -> np.ndarray:
    """Stack the mapped correlation entries into a real vector of length 2Q.

    Entries 1..Q are the real parts of the mapped matrix elements, entries
    Q+1..2Q the imaginary parts; the (Q+1)-th entry is the imaginary part of
    a real diagonal element and therefore zero.
    """
    q = corr.matrix.shape[0]
    for a, b in pairs.entries:
        if not (1 <= a <= q and 1 <= b <= q):
            raise InvalidDimensions(f"pair ({a},{b}) outside channel range 1..{q}")
    u = np.array([corr.matrix[a - 1, b - 1] for a, b in pairs.entries])
    return np.concatenate([u.real, u.imag])


def estimate_powers(
    channels: ChannelData,
    bank: FilterBank,
    system: MeasurementSystem,
    n_samples: int | None = None,
) -> SegmentPowerEstimate:
    """Run the full pipeline: align, correlate, stack, and solve.

    Deterministic given its inputs; safe to run concurrently on disjoint
    inputs.
    """
    corr = estimate_correlation(channels, bank, n_samples)
    u = stack_measurements(corr, system.pairs)
    integrated = solve_least_squares(system, u)
    pattern = system.pattern
    power = pattern.n_segments / pattern.nyquist_rate * integrated
    return SegmentPowerEstimate(power=power, integrated=integrated, measurements=u)


def estimate_to_csv(
    estimate: SegmentPowerEstimate, n_segments: int, nyquist_rate: float, path
) -> None:
    """Write per-segment estimates as CSV rows (index, band bounds, power)."""
    f_low, f_high = segment_edges(n_segments, nyquist_rate)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["segment_index", "f_low_hz", "f_high_hz", "p_hat"])
        for l in range(n_segments):
            writer.writerow(
                [l + 1, repr(float(f_low[l])), repr(float(f_high[l])), repr(float(estimate.power[l]))]
            )
