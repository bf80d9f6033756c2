"""Closed-form finite-length bias and covariance of the estimator.

For white Gaussian input the estimator's statistics have exact finite-sample
expressions driven by three families of filter scalars:

* the windowed energy of each channel filter, which sets the (downward)
  multiplicative bias of every segment estimate;
* an interior overlap value per channel pair, the squared (or cross) energy
  of each filter's self-convolution with its own reversal;
* an edge correction per channel pair summing the record-boundary terms,
  independent of the record length once the record exceeds twice the filter
  length.

From these, the second-moment matrix of the stacked measurement vector is
diagonal, and the estimate covariance follows by sandwiching it between the
recovery operator and its transpose.  A scalar approximation of the diagonal
shows the variance scaling as (L^3/Q + L) / N_x.

A brute-force evaluator of the defining fourth-moment sums is provided as an
independent ground truth for the closed forms on small instances, and the
expected correlation matrix is available for arbitrary wide-sense-stationary
channel correlations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InstanceTooLarge, InvalidLength, RankDeficient
from .fdfilter import FilterBank, windowed_energy
from .patterns import MeasurementSystem, PairIndexMap

# Size guards for the brute-force moment evaluation.
BRUTEFORCE_MAX_SAMPLES = 128
BRUTEFORCE_MAX_TAPS = 9
BRUTEFORCE_MAX_CHANNELS = 3


@dataclass(frozen=True)
class FilterMoments:
    """Filter-derived scalars behind the white-input bias/covariance forms.

    Attributes
    ----------
    window_energy : np.ndarray
        Per-channel windowed energies, length q.
    interior : np.ndarray
        Interior overlap value per measurement index, length 2Q (entries
        1..Q for the real parts, Q+2..2Q repeating the pair values for the
        imaginary parts; the Q+1 slot is unused and zero).
    edge : np.ndarray
        Record-boundary corrections, laid out like ``interior``.
    n_samples : int
        Samples per channel N the windowed energies refer to.
    n_taps : int
        Shared filter length.
    """

    window_energy: np.ndarray
    interior: np.ndarray
    edge: np.ndarray
    n_samples: int
    n_taps: int


def _self_convolution(taps: np.ndarray) -> np.ndarray:
    """Convolution of a filter with its own reversal; palindromic, length 2*n_taps - 1."""
    return np.convolve(taps, taps[::-1])


def _left_edge_convolutions(taps: np.ndarray) -> list[np.ndarray]:
    """Truncated self-convolutions (first factor cut to indices 0..n) for n = 0..n_taps-2."""
    rev = taps[::-1]
    return [np.convolve(taps[: n + 1], rev) for n in range(len(taps) - 1)]


def overlap_profile(bank: FilterBank, pair: tuple[int, int], n_samples: int) -> np.ndarray:
    """Per-time overlap values S(n), n = 0..N-1, for one channel pair.

    S(n) sums, over all output times u, the product of the two channels'
    windowed kernel overlaps between output times n and u.  It is constant in
    the record interior and attenuates over the first and last n_taps - 1
    samples; the closed forms per regime are

    * interior (n_taps-1 <= n <= N-n_taps): the full product of the two
      self-convolutions summed over all lags;
    * left edge (n < n_taps-1): the same with the non-reversed factor
      truncated to its first n+1 taps;
    * right edge (n > N-n_taps): the full product summed only over the first
      N-n+n_taps-1 lags.
    """
    N = n_samples
    n_taps = bank.n_taps
    if N <= 2 * n_taps:
        raise InvalidLength(f"need more than {2 * n_taps} samples, got {N}")
    a, b = pair
    taps_a = bank.filters[a - 1].coeffs
    taps_b = bank.filters[b - 1].coeffs
    full_a = _self_convolution(taps_a)
    full_b = _self_convolution(taps_b)
    product = full_a * full_b
    cumulative = np.cumsum(product)

    out = np.empty(N)
    left_a = _left_edge_convolutions(taps_a)
    left_b = _left_edge_convolutions(taps_b)
    for n in range(n_taps - 1):
        out[n] = float(np.dot(left_a[n], left_b[n]))
    out[n_taps - 1 : N - n_taps + 1] = float(np.sum(product))
    for n in range(N - n_taps + 1, N):
        out[n] = float(cumulative[N - n + n_taps - 2])
    return out


def filter_moments(bank: FilterBank, pairs: PairIndexMap, n_samples: int) -> FilterMoments:
    """Compute all filter scalars needed by the white-input closed forms.

    Raises
    ------
    InvalidLength
        If ``n_samples`` does not exceed twice the filter length (the edge
        regimes would overlap and the closed forms do not apply).
    """
    N = n_samples
    n_taps = bank.n_taps
    if N <= 2 * n_taps:
        raise InvalidLength(f"need more than {2 * n_taps} samples, got {N}")
    n_pairs = pairs.pair_count

    energies = np.array([windowed_energy(f, N) for f in bank.filters])
    full = [_self_convolution(f.coeffs) for f in bank.filters]
    left = [_left_edge_convolutions(f.coeffs) for f in bank.filters]

    interior = np.zeros(2 * n_pairs)
    edge = np.zeros(2 * n_pairs)
    for k, (a, b) in enumerate(pairs.entries):
        product = full[a - 1] * full[b - 1]
        interior_value = float(np.sum(product))
        left_sum = sum(
            float(np.dot(left[a - 1][n], left[b - 1][n])) for n in range(n_taps - 1)
        )
        cumulative = np.cumsum(product)
        right_sum = sum(
            float(cumulative[j + n_taps - 2]) for j in range(1, n_taps)
        )
        edge_value = left_sum + right_sum
        interior[k] = interior_value
        edge[k] = edge_value
        if k > 0:
            interior[n_pairs + k] = interior_value
            edge[n_pairs + k] = edge_value
    # The (Q+1)-th slot belongs to the identically-zero imaginary part of the
    # diagonal measurement and stays zero.
    for arr in (energies, interior, edge):
        arr.setflags(write=False)
    return FilterMoments(
        window_energy=energies,
        interior=interior,
        edge=edge,
        n_samples=N,
        n_taps=n_taps,
    )


def measurement_moments_white(moments: FilterMoments, sigma2: float) -> np.ndarray:
    """Diagonal of the second-moment matrix of the stacked measurements.

    For white Gaussian input of variance sigma2 the matrix is diagonal:
    entry 1 is (sigma2^2/N^2) * (N^2 * E1^2 + (N - 2*n_taps + 2) * g_1 + s_1)
    with E1 the channel-1 windowed energy, entry Q+1 is zero, and every other
    entry k is (sigma2^2 / (2 N^2)) * ((N - 2*n_taps + 2) * g_k + s_k).
    """
    N = moments.n_samples
    core = (N - 2 * moments.n_taps + 2) * moments.interior + moments.edge
    diag = sigma2**2 / (2.0 * N**2) * core
    n_pairs = len(diag) // 2
    first_energy = moments.window_energy[0]
    diag[0] = sigma2**2 / N**2 * (N**2 * first_energy**2 + core[0])
    diag[n_pairs] = 0.0
    return diag


def bias_white(
    n_segments: int, nyquist_rate: float, sigma2: float, window_energy_ch1: float
) -> np.ndarray:
    """Per-segment estimation shortfall for white input of variance sigma2.

    The estimate's mean is window_energy_ch1 times the true per-segment
    power sigma2/W, so the shortfall (true minus expected) is the constant
    (1 - window_energy_ch1) * sigma2 / W in every segment.  It vanishes as
    the record grows when the filters have unit energy.
    """
    if not 0 < window_energy_ch1 <= 1 + 1e-12:
        raise ValueError("window energy must lie in (0, 1]")
    return np.full(n_segments, (1.0 - window_energy_ch1) * sigma2 / nyquist_rate)


def expected_correlation(
    bank: FilterBank,
    correlation_fn: Callable[[int, int, int], float],
    n_samples: int,
) -> np.ndarray:
    """Expected aligned-channel correlation matrix for a finite record.

    Parameters
    ----------
    bank : FilterBank
    correlation_fn : callable
        ``correlation_fn(a, b, lag)`` returning the cross-correlation of
        channel streams a and b (1-based) at integer ``lag``; needed for
        |lag| < n_taps.
    n_samples : int
        Samples per channel N.

    Returns
    -------
    np.ndarray
        Complex q x q matrix: the infinite-record correlation minus the
        startup-window correction, which decays as 1/N.
    """
    n_taps = bank.n_taps
    if n_samples <= n_taps:
        raise InvalidLength(f"need more than {n_taps} samples, got {n_samples}")
    q = bank.n_channels
    idx = np.arange(n_taps)
    lag = idx[None, :] - idx[:, None]  # p - r
    weight = 1.0 - np.maximum.outer(idx, idx) / n_samples
    out = np.zeros((q, q), dtype=complex)
    for a in range(1, q + 1):
        for b in range(1, q + 1):
            values = {k: correlation_fn(a, b, k) for k in range(-(n_taps - 1), n_taps)}
            rmat = np.vectorize(values.__getitem__)(lag)
            kernel = np.outer(bank.filters[a - 1].coeffs, bank.filters[b - 1].coeffs)
            out[a - 1, b - 1] = np.sum(kernel * rmat * weight)
    return out


def covariance_exact(
    system: MeasurementSystem,
    moment_diag: np.ndarray,
    sigma2: float,
    window_energy_ch1: float,
) -> np.ndarray:
    """Exact covariance matrix of the segment-power estimate, white input.

    Sandwiches the diagonal measurement second-moment matrix between the
    recovery operator and its transpose, scaled by (L/W)^2, then subtracts
    the outer product of the expected estimate (a constant vector for white
    input).

    Raises
    ------
    RankDeficient
        If the system is not full rank.
    """
    if not system.rank_ok:
        raise RankDeficient("measurement system is rank deficient")
    pattern = system.pattern
    L = pattern.n_segments
    W = pattern.nyquist_rate
    recovery = system.recovery
    second = (L / W) ** 2 * ((recovery * moment_diag) @ recovery.T)
    mean = window_energy_ch1 * sigma2 / W
    cov = second - mean**2
    return (cov + cov.T) / 2.0


def variance_approx(
    n_segments: int,
    pair_count: int,
    n_nyquist: int,
    n_taps: int,
    interior_ch1: float,
    edge_ch1: float,
    sigma2: float,
    nyquist_rate: float,
) -> float:
    """Closed-form approximation of the per-segment estimation variance.

    Approximates every pair's overlap scalars by the channel-1 values and
    the stacked Gram matrix by Q times the identity, giving

        sigma2^2 / (2 W^2 N_x^2) * (L^3/Q + L)
            * ((N_x - 2*n_taps*L + 2L) * g_1 + L * s_1)

    the same for every segment.  Valid for records longer than 2*n_taps*L
    Nyquist samples.
    """
    if n_nyquist <= 2 * n_taps * n_segments:
        raise InvalidLength(
            f"need more than {2 * n_taps * n_segments} Nyquist samples, got {n_nyquist}"
        )
    L = n_segments
    scale = sigma2**2 / (2.0 * nyquist_rate**2 * n_nyquist**2)
    shape = L**3 / pair_count + L
    length_term = (n_nyquist - 2 * n_taps * L + 2 * L) * interior_ch1 + L * edge_ch1
    return float(scale * shape * length_term)


def gram_inverse_diag(system: MeasurementSystem) -> np.ndarray:
    """Diagonal of the inverse Gram matrix of the stacked system.

    Element l is the squared Euclidean norm of row l of the recovery
    operator; for patterns with well-spread pair frequencies each element is
    close to 1/Q.

    Raises
    ------
    RankDeficient
        If the system is not full rank.
    """
    if not system.rank_ok:
        raise RankDeficient("measurement system is rank deficient")
    gram = system.stacked.T @ system.stacked
    return np.diagonal(np.linalg.inv(gram)).copy()


def _banded_kernel(taps: np.ndarray, n_samples: int) -> np.ndarray:
    """Matrix K with K[n, r] = h(n-r) for max(0, n-n_taps+1) <= r <= n, else 0."""
    N = n_samples
    n_taps = len(taps)
    kernel = np.zeros((N, N))
    for n in range(N):
        lo = max(0, n - n_taps + 1)
        kernel[n, lo : n + 1] = taps[: n - lo + 1][::-1]
    return kernel


def measurement_moments_bruteforce(
    bank: FilterBank, pairs: PairIndexMap, sigma2: float, n_samples: int
) -> np.ndarray:
    """Full second-moment matrix of the stacked measurements, by direct sums.

    Evaluates the defining fourth-moment expansions of every product of
    measurement entries for white Gaussian channel streams (channel
    cross-correlation sigma2 at lag zero on the same channel, zero
    otherwise), then combines real and imaginary parts through the complex
    product identities

        Re(x)Re(y) =  (Re(xy) + Re(x conj(y))) / 2
        Im(x)Im(y) = -(Re(xy) - Re(x conj(y))) / 2
        Re(x)Im(y) =  (Im(xy) - Im(x conj(y))) / 2.

    Cost scales with n_samples^2 * n_taps^4 per pair, so the instance size
    is capped; this is the independent ground truth for
    :func:`measurement_moments_white`.

    Raises
    ------
    InstanceTooLarge
        If the instance exceeds the allowed size.
    """
    N = n_samples
    if (
        N > BRUTEFORCE_MAX_SAMPLES
        or bank.n_taps > BRUTEFORCE_MAX_TAPS
        or bank.n_channels > BRUTEFORCE_MAX_CHANNELS
    ):
        raise InstanceTooLarge(
            f"brute force limited to N<={BRUTEFORCE_MAX_SAMPLES}, "
            f"n_taps<={BRUTEFORCE_MAX_TAPS}, q<={BRUTEFORCE_MAX_CHANNELS}"
        )
    if N <= bank.n_taps:
        raise InvalidLength(f"need more than {bank.n_taps} samples, got {N}")
    q = bank.n_channels
    kernels = [_banded_kernel(f.coeffs, N) for f in bank.filters]
    # White-noise correlation matrices between channel sample streams.
    eye = np.eye(N)
    zero = np.zeros((N, N))

    def corr(x: int, y: int) -> np.ndarray:
        return sigma2 * eye if x == y else zero

    overlap = {}
    for x in range(1, q + 1):
        for y in range(1, q + 1):
            overlap[x, y] = kernels[x - 1] @ corr(x, y) @ kernels[y - 1].T
    diag_sum = {key: float(np.trace(val)) for key, val in overlap.items()}

    n_pairs = pairs.pair_count
    moments = np.zeros((2 * n_pairs, 2 * n_pairs))
    for i, (a, b) in enumerate(pairs.entries):
        for j, (c, d) in enumerate(pairs.entries):
            plain = (
                diag_sum[a, b] * diag_sum[c, d]
                + float(np.sum(overlap[a, d] * overlap[c, b].T))
            ) / N**2
            conjugated = (
                diag_sum[a, b] * diag_sum[d, c]
                + float(np.sum(overlap[a, c] * overlap[d, b].T))
            ) / N**2
            m1 = complex(plain)
            m2 = complex(conjugated)
            moments[i, j] = 0.5 * (m1 + m2).real
            moments[i + n_pairs, j + n_pairs] = -0.5 * (m1 - m2).real
            moments[i, j + n_pairs] = 0.5 * (m1 - m2).imag
            moments[i + n_pairs, j] = 0.5 * (m1 + m2).imag
    return moments


@dataclass(frozen=True)
class CovarianceReport:
    """Analytic bias/covariance summary for a white-input experiment.

    Attributes
    ----------
    bias : np.ndarray
        Per-segment shortfall (true minus expected), length L.
    cov_exact : np.ndarray
        Exact covariance matrix, L x L.
    var_approx : np.ndarray
        Scalar variance approximation replicated per segment, length L.
    moment_diag : np.ndarray
        Diagonal of the measurement second-moment matrix, length 2Q.
    meta : dict
        Experiment dimensions: L, q, Q, N, N_x, N_h, sigma2, W.
    """

    bias: np.ndarray
    cov_exact: np.ndarray
    var_approx: np.ndarray
    moment_diag: np.ndarray
    meta: dict


def covariance_report(
    system: MeasurementSystem, bank: FilterBank, sigma2: float, n_nyquist: int
) -> CovarianceReport:
    """Assemble bias, exact covariance, and the diagonal approximation."""
    pattern = system.pattern
    L = pattern.n_segments
    n_per_channel = n_nyquist // L
    moments = filter_moments(bank, system.pairs, n_per_channel)
    diag = measurement_moments_white(moments, sigma2)
    first_energy = float(moments.window_energy[0])
    return CovarianceReport(
        bias=bias_white(L, pattern.nyquist_rate, sigma2, first_energy),
        cov_exact=covariance_exact(system, diag, sigma2, first_energy),
        var_approx=np.full(
            L,
            variance_approx(
                L,
                pattern.pair_count,
                n_per_channel * L,
                bank.n_taps,
                float(moments.interior[0]),
                float(moments.edge[0]),
                sigma2,
                pattern.nyquist_rate,
            ),
        ),
        moment_diag=diag,
        meta={
            "L": L,
            "q": pattern.n_channels,
            "Q": pattern.pair_count,
            "N": n_per_channel,
            "N_x": n_nyquist,
            "N_h": bank.n_taps,
            "sigma2": sigma2,
            "W": pattern.nyquist_rate,
        },
    )


def report_to_json(report: CovarianceReport) -> dict:
    """JSON-serializable form of a covariance report."""
    return {
        "meta": dict(report.meta),
        "bias": [float(v) for v in report.bias],
        "var_exact": [float(v) for v in np.diagonal(report.cov_exact)],
        "var_approx": [float(v) for v in report.var_approx],
        "moment_diag": [float(v) for v in report.moment_diag],
        "cov_exact": [[float(v) for v in row] for row in report.cov_exact],
    }


def report_to_csv(report: CovarianceReport, path) -> None:
    """Write per-segment bias and variances as CSV."""
    var_exact = np.diagonal(report.cov_exact)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["segment_index", "bias", "var_exact", "var_approx"])
        for l in range(len(report.bias)):
            writer.writerow(
                [
                    l + 1,
                    repr(float(report.bias[l])),
                    repr(float(var_exact[l])),
                    repr(float(report.var_approx[l])),
                ]
            )
