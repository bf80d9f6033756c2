"""Multi-coset sampling patterns and the segment-power measurement system.

A multi-coset acquisition keeps q interleaved sub-streams of the Nyquist-rate
samples of a signal bandlimited to W/2 Hz: channel i retains every L-th sample
starting at an integer offset c_i, so the average rate is (q/L)*W.  After the
per-channel time shifts are undone, the zero-lag cross-correlation of any two
channels is a linear combination of the average powers of the L equal spectral
segments partitioning [-W/2, W/2].  Collecting one equation per distinct
channel pair (plus one diagonal element) gives Q = q(q-1)/2 + 1 complex
equations; stacking real and imaginary parts yields an overdetermined real
system whenever 2Q >= L, which is solved in the least-squares sense.

This module owns the pattern and pair bookkeeping, the construction of the
complex measurement matrix and its real stacked form, and the least-squares
recovery operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FeasibilityExhausted, InvalidDimensions, RankDeficient

DEFAULT_NYQUIST_RATE = 1000.0


@dataclass(frozen=True)
class SamplingPattern:
    """A multi-coset sampling design.

    Parameters
    ----------
    n_segments : int
        Number of spectral segments L.  Must be odd.
    n_channels : int
        Number of sampling channels q, with 1 <= q < L.
    offsets : tuple of int
        Distinct channel time offsets, each in [0, L-1].  The first entry is
        channel 1 by convention.
    nyquist_rate : float
        Nyquist rate W in Hz.
    seed : int or None
        Seed the pattern was drawn from, if it was generated randomly.
        Kept for reproducibility audits only.
    """

    n_segments: int
    n_channels: int
    offsets: tuple[int, ...]
    nyquist_rate: float = DEFAULT_NYQUIST_RATE
    seed: int | None = None

    def __post_init__(self):
        L, q = self.n_segments, self.n_channels
        if L < 1 or L % 2 == 0:
            raise InvalidDimensions(f"segment count must be a positive odd integer, got {L}")
        if not 1 <= q < L:
            raise InvalidDimensions(f"channel count must satisfy 1 <= q < L, got q={q}, L={L}")
        if len(self.offsets) != q:
            raise InvalidDimensions(
                f"expected {q} offsets, got {len(self.offsets)}"
            )
        if len(set(self.offsets)) != q:
            raise InvalidDimensions("offsets must be pairwise distinct")
        if any(not 0 <= c < L for c in self.offsets):
            raise InvalidDimensions(f"offsets must lie in [0, {L - 1}]")
        if 2 * self.pair_count < L:
            raise InvalidDimensions(
                f"overdetermination requires 2Q >= L; got Q={self.pair_count}, L={L}"
            )
        if self.nyquist_rate <= 0:
            raise InvalidDimensions("nyquist_rate must be positive")

    @property
    def pair_count(self) -> int:
        """Number of distinct correlation equations Q = q(q-1)/2 + 1."""
        q = self.n_channels
        return q * (q - 1) // 2 + 1

    @property
    def nyquist_period(self) -> float:
        """Sampling period 1/W of the underlying Nyquist grid, in seconds."""
        return 1.0 / self.nyquist_rate

    @property
    def average_rate(self) -> float:
        """Aggregate sampling rate (q/L)*W of all channels, in Hz."""
        return self.n_channels / self.n_segments * self.nyquist_rate


@dataclass(frozen=True)
class PairIndexMap:
    """Ordered list of the channel pairs that index the measurement vector.

    Entry 1 is a diagonal pair (same channel twice); the remaining entries
    are distinct unordered channel pairs.  The canonical map produced by
    :func:`build_pair_map` starts with (1, 1) and walks the upper triangle
    row by row, but relabeled maps (consistent channel permutations) are
    also valid.
    """

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.entries:
            raise InvalidDimensions("pair map must have at least one entry")
        a0, b0 = self.entries[0]
        if a0 != b0:
            raise InvalidDimensions("first pair-map entry must be a diagonal pair")
        seen = set()
        for a, b in self.entries[1:]:
            if a == b:
                raise InvalidDimensions("only the first pair-map entry may be diagonal")
            key = frozenset((a, b))
            if key in seen:
                raise InvalidDimensions(f"duplicate channel pair {{{a},{b}}}")
            seen.add(key)

    @property
    def pair_count(self) -> int:
        return len(self.entries)


def build_pair_map(n_channels: int) -> PairIndexMap:
    """Canonical pair ordering: (1,1) first, then the row-major upper triangle.

    Parameters
    ----------
    n_channels : int
        Number of channels q >= 1.

    Returns
    -------
    PairIndexMap
        Map with exactly q(q-1)/2 + 1 entries, channel indices 1-based.
    """
    if n_channels < 1:
        raise InvalidDimensions("need at least one channel")
    entries = [(1, 1)]
    for a in range(1, n_channels + 1):
        for b in range(a + 1, n_channels + 1):
            entries.append((a, b))
    return PairIndexMap(entries=tuple(entries))


@dataclass(frozen=True)
class MeasurementSystem:
    """The linear system mapping segment powers to correlation measurements.

    Attributes
    ----------
    matrix : np.ndarray
        Complex Q x L matrix with entries exp(-1j * w_k * m_l), where
        w_k = (2*pi/L) * (c_a - c_b) for the k-th channel pair and
        m_l = -(L+1)/2 + l indexes the segment centers.
    stacked : np.ndarray
        Real 2Q x L matrix: real part of `matrix` stacked over its
        imaginary part.
    recovery : np.ndarray
        Real L x 2Q least-squares recovery operator, equal to
        (S^T S)^{-1} S^T for S = `stacked` when the system is full rank.
    rank_ok : bool
        True when `stacked` has numerical rank L.
    condition_number : float
        Ratio of extreme singular values of `stacked`.
    pattern : SamplingPattern
    pairs : PairIndexMap
    """

    matrix: np.ndarray
    stacked: np.ndarray
    recovery: np.ndarray
    rank_ok: bool
    condition_number: float
    pattern: SamplingPattern
    pairs: PairIndexMap


def segment_centers(n_segments: int) -> np.ndarray:
    """Integer segment indices m_l = -(L+1)/2 + l for l = 1..L."""
    L = n_segments
    return np.arange(1, L + 1) - (L + 1) / 2.0


def build_system(pattern: SamplingPattern, pairs: PairIndexMap | None = None) -> MeasurementSystem:
    """Construct the measurement system for a sampling pattern.

    Rank deficiency is reported through ``rank_ok``, never raised; the
    recovery operator is always the SVD pseudoinverse of the stacked matrix,
    which coincides with the normal-equation form at full rank.

    Parameters
    ----------
    pattern : SamplingPattern
    pairs : PairIndexMap, optional
        Pair ordering; defaults to the canonical map for the pattern's
        channel count.

    Returns
    -------
    MeasurementSystem
    """
    if pairs is None:
        pairs = build_pair_map(pattern.n_channels)
    if pairs.pair_count != pattern.pair_count:
        raise InvalidDimensions(
            f"pair map has {pairs.pair_count} entries, pattern requires {pattern.pair_count}"
        )
    L = pattern.n_segments
    offs = np.asarray(pattern.offsets, dtype=float)
    m = segment_centers(L)
    omega = np.array(
        [2.0 * np.pi / L * (offs[a - 1] - offs[b - 1]) for a, b in pairs.entries]
    )
    matrix = np.exp(-1j * np.outer(omega, m))
    stacked = np.vstack([matrix.real, matrix.imag])

    sv = np.linalg.svd(stacked, compute_uv=False)
    # Numerical rank threshold: max(2Q, L) * eps * sigma_max.
    tol = max(stacked.shape) * np.finfo(float).eps * sv[0]
    rank = int(np.count_nonzero(sv > tol))
    rank_ok = rank == L
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    recovery = np.linalg.pinv(stacked, rcond=max(stacked.shape) * np.finfo(float).eps)

    for arr in (matrix, stacked, recovery):
        arr.setflags(write=False)
    return MeasurementSystem(
        matrix=matrix,
        stacked=stacked,
        recovery=recovery,
        rank_ok=rank_ok,
        condition_number=cond,
        pattern=pattern,
        pairs=pairs,
    )


def generate_pattern(
    n_segments: int,
    n_channels: int,
    nyquist_rate: float = DEFAULT_NYQUIST_RATE,
    seed: int | None = None,
    max_tries: int = 100,
) -> SamplingPattern:
    """Draw random offset sets until the measurement system is full rank.

    Parameters
    ----------
    n_segments, n_channels : int
        Dimensions L (odd) and q of the design; 2Q >= L is required.
    nyquist_rate : float
        Nyquist rate W in Hz.
    seed : int or None
        RNG seed; equal seeds reproduce the same pattern.
    max_tries : int
        Number of rank-deficient draws tolerated before giving up.

    Returns
    -------
    SamplingPattern
        Pattern whose stacked measurement matrix has numerical rank L.

    Raises
    ------
    InvalidDimensions
        If the (L, q) combination violates the preconditions.
    FeasibilityExhausted
        If every draw within ``max_tries`` was rank deficient.
    """
    if max_tries < 1:
        raise InvalidDimensions("max_tries must be at least 1")
    rng = np.random.default_rng(seed)
    pattern = None
    for _ in range(max_tries):
        offsets = tuple(
            int(c) for c in rng.choice(n_segments, size=n_channels, replace=False)
        )
        pattern = SamplingPattern(
            n_segments=n_segments,
            n_channels=n_channels,
            offsets=offsets,
            nyquist_rate=nyquist_rate,
            seed=seed,
        )
        if build_system(pattern).rank_ok:
            return pattern
    raise FeasibilityExhausted(
        f"no full-rank system for (L={n_segments}, q={n_channels}) in {max_tries} tries"
    )


def solve_least_squares(system: MeasurementSystem, measurements: Sequence[float]) -> np.ndarray:
    """Least-squares recovery of the L segment values from stacked measurements.

    Parameters
    ----------
    system : MeasurementSystem
        Must be full rank.
    measurements : array_like
        Real vector of length 2Q (real parts followed by imaginary parts).

    Returns
    -------
    np.ndarray
        Length-L solution of the overdetermined system, identical at full
        rank to the normal-equation pseudoinverse applied to the input.

    Raises
    ------
    RankDeficient
        If the system is not full rank.
    """
    if not system.rank_ok:
        raise RankDeficient("measurement system is rank deficient")
    u = np.asarray(measurements, dtype=float)
    if u.shape != (2 * system.pairs.pair_count,):
        raise InvalidDimensions(
            f"expected {2 * system.pairs.pair_count} measurements, got {u.shape}"
        )
    solution, *_ = np.linalg.lstsq(system.stacked, u, rcond=None)
    return solution


def pattern_document(pattern: SamplingPattern, system: MeasurementSystem | None = None) -> dict:
    """JSON-serializable document describing a pattern (and its conditioning)."""
    if system is None:
        system = build_system(pattern)
    return {
        "W": pattern.nyquist_rate,
        "L": pattern.n_segments,
        "q": pattern.n_channels,
        "offsets": list(pattern.offsets),
        "seed": pattern.seed,
        "conditionNumber": system.condition_number,
    }


def pattern_from_document(doc: dict) -> SamplingPattern:
    """Rebuild a :class:`SamplingPattern` from its JSON document."""
    return SamplingPattern(
        n_segments=int(doc["L"]),
        n_channels=int(doc["q"]),
        offsets=tuple(int(c) for c in doc["offsets"]),
        nyquist_rate=float(doc["W"]),
        seed=doc.get("seed"),
    )
