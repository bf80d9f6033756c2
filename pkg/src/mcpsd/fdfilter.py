"""Causal FIR fractional-delay filters.

Undoing the multi-coset time shifts requires delaying channel a by the
fraction c_a/L of a channel-rate sample.  FIR delay filters behave poorly for
delays near zero, so a shared integer delay D close to half the filter order
is added; the correlation estimate is formed from the uniformly shifted
streams, which leaves zero-lag correlations unchanged.  The designs here are
Lagrange interpolators: maximally flat at DC, exact for constants, and a pure
shift whenever the total delay is an integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DelayOutOfRange, InvalidDimensions, InvalidLength
from .patterns import SamplingPattern

DEFAULT_TAPS = 25
DEFAULT_INTEGER_DELAY = 12


@dataclass(frozen=True)
class FdFilter:
    """A causal FIR filter realizing a (possibly fractional) delay.

    Attributes
    ----------
    coeffs : np.ndarray
        Impulse response h(0..n_taps-1).
    total_delay : float
        Delay in samples, integer part plus fractional part.
    fractional : float
        Fractional part of the delay, in [0, 1).
    n_taps : int
        Filter length.
    """

    coeffs: np.ndarray
    total_delay: float
    fractional: float
    n_taps: int

    @property
    def energy(self) -> float:
        """Sum of squared coefficients."""
        return float(np.dot(self.coeffs, self.coeffs))


def design_lagrange(total_delay: float, n_taps: int) -> FdFilter:
    """Design a Lagrange-interpolation fractional-delay filter.

    The coefficients are the classical product form

        h(n) = prod_{k != n} (d - k) / (n - k),   n, k in [0, n_taps - 1]

    with d the total delay.  The coefficient sum is exactly 1 (constants are
    reproduced), and an integer d degenerates to a unit impulse at index d.

    Parameters
    ----------
    total_delay : float
        Desired delay d in samples; must satisfy 0 <= d <= n_taps - 1.
    n_taps : int
        Filter length, at least 2.

    Raises
    ------
    DelayOutOfRange
        If the delay falls outside [0, n_taps - 1].
    """
    if n_taps < 2:
        raise InvalidDimensions(f"need at least 2 taps, got {n_taps}")
    if not 0.0 <= total_delay <= n_taps - 1:
        raise DelayOutOfRange(
            f"delay {total_delay} outside [0, {n_taps - 1}] for {n_taps} taps"
        )
    coeffs = np.empty(n_taps)
    for n in range(n_taps):
        acc = 1.0
        for k in range(n_taps):
            if k != n:
                acc *= (total_delay - k) / (n - k)
        coeffs[n] = acc
    coeffs.setflags(write=False)
    return FdFilter(
        coeffs=coeffs,
        total_delay=float(total_delay),
        fractional=float(total_delay - math.floor(total_delay)),
        n_taps=n_taps,
    )


@dataclass(frozen=True)
class FilterBank:
    """One delay filter per sampling channel, sharing length and integer delay.

    Filter a realizes the delay integer_delay + c_a / L, where c_a is the
    channel's time offset and L the segment count.
    """

    filters: tuple[FdFilter, ...]
    integer_delay: int
    n_taps: int

    @property
    def n_channels(self) -> int:
        return len(self.filters)


def build_bank(
    pattern: SamplingPattern,
    n_taps: int = DEFAULT_TAPS,
    integer_delay: int = DEFAULT_INTEGER_DELAY,
) -> FilterBank:
    """Design the per-channel delay filters for a sampling pattern.

    Parameters
    ----------
    pattern : SamplingPattern
    n_taps : int
        Shared filter length.
    integer_delay : int
        Shared integer delay D added to every fractional part; the largest
        total delay D + (L-1)/L must not exceed n_taps - 1.

    Raises
    ------
    DelayOutOfRange
        If the largest channel delay cannot be realized.
    """
    L = pattern.n_segments
    if integer_delay < 0:
        raise DelayOutOfRange("integer delay must be nonnegative")
    if integer_delay + (L - 1) / L > n_taps - 1:
        raise DelayOutOfRange(
            f"delay {integer_delay} + (L-1)/L exceeds n_taps - 1 = {n_taps - 1}"
        )
    filters = tuple(
        design_lagrange(integer_delay + c / L, n_taps) for c in pattern.offsets
    )
    return FilterBank(filters=filters, integer_delay=integer_delay, n_taps=n_taps)


def windowed_energy(filt: FdFilter, n_samples: int) -> float:
    """Energy of the filter as seen through an n-sample rectangular record.

    Returns (1/N) * sum_r (N - r) * h(r)^2, the factor by which the startup
    transient shrinks the expected zero-lag autocorrelation of a filtered
    white stream.  Lies in (0, energy] and tends to the filter energy as the
    record grows.

    Raises
    ------
    InvalidLength
        If ``n_samples`` does not exceed the filter length.
    """
    if n_samples <= filt.n_taps:
        raise InvalidLength(
            f"need more than {filt.n_taps} samples, got {n_samples}"
        )
    r = np.arange(filt.n_taps)
    return float(np.sum((n_samples - r) * filt.coeffs**2) / n_samples)


def bank_document(bank: FilterBank) -> dict:
    """JSON-serializable description of a filter bank."""
    return {
        "N_h": bank.n_taps,
        "D": bank.integer_delay,
        "coeffs": [list(f.coeffs) for f in bank.filters],
    }


def bank_from_document(doc: dict) -> FilterBank:
    """Rebuild a :class:`FilterBank` from its JSON document."""
    n_taps = int(doc["N_h"])
    integer_delay = int(doc["D"])
    filters = []
    for taps in doc["coeffs"]:
        arr = np.asarray(taps, dtype=float)
        if arr.shape != (n_taps,):
            raise InvalidDimensions("per-channel coefficient list has wrong length")
        arr.setflags(write=False)
        # Delay metadata is recovered from the first-moment of the taps.
        delay = float(np.dot(np.arange(n_taps), arr))
        filters.append(
            FdFilter(
                coeffs=arr,
                total_delay=delay,
                fractional=delay - math.floor(delay + 1e-9),
                n_taps=n_taps,
            )
        )
    return FilterBank(filters=tuple(filters), integer_delay=integer_delay, n_taps=n_taps)
