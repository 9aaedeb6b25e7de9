"""Window feature extraction: Haar DWT and FFT magnitudes per channel,
plus scalar summaries, concatenated into a fixed-length vector and
reshaped into the 2-D network input.

Channels may have unequal lengths across windows; each is zero-padded or
truncated to its configured power-of-two length before transforming, so
the feature vector length is fully determined by the config.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from harlab.errors import ConfigError, DataError
from harlab.nncore.layers import TensorShape

SUMMARY_KINDS = ("min", "max", "duration")


@dataclass(frozen=True)
class ActivityWindow:
    """One labeled, user-attributed segment of multichannel samples."""

    user_id: str
    window_id: str
    activity_label: str
    channels: tuple
    duration: float

    def __post_init__(self):
        object.__setattr__(
            self, "channels", tuple(np.asarray(c, dtype=np.float64) for c in self.channels)
        )
        if len(self.channels) < 1:
            raise DataError(f"window {self.window_id}: needs at least one channel")
        for i, c in enumerate(self.channels):
            if c.ndim != 1 or len(c) == 0:
                raise DataError(f"window {self.window_id}: channel {i} is empty")
        if not self.duration > 0:
            raise DataError(f"window {self.window_id}: duration must be > 0")


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    provenance: tuple  # ((tag, block_length), ...)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if not np.all(np.isfinite(v)):
            raise DataError("feature vector contains non-finite values")


@dataclass(frozen=True)
class FeatureImage:
    grid: np.ndarray  # (H, W, 1)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ChannelSpec:
    """Per-channel transform: kind ("dwt" or "fft"), pad/truncate length,
    DWT levels, and an optional prefix truncation of the block."""

    transform: str
    length: int
    levels: int = 1
    keep: int | None = None

    def __post_init__(self):
        if self.transform not in ("dwt", "fft"):
            raise ConfigError(f"channel transform must be dwt or fft, got {self.transform!r}")
        if not _is_pow2(self.length):
            raise ConfigError(f"channel length must be a power of two, got {self.length}")
        if self.transform == "dwt":
            max_levels = int(np.log2(self.length))
            if not 1 <= self.levels <= max_levels:
                raise ConfigError(
                    f"dwt levels must be in [1, {max_levels}] for length {self.length}, "
                    f"got {self.levels}"
                )
        full = self.full_length()
        if self.keep is not None and not 1 <= self.keep <= full:
            raise ConfigError(f"keep must be in [1, {full}], got {self.keep}")

    def full_length(self) -> int:
        return self.length if self.transform == "dwt" else self.length // 2 + 1

    def block_length(self) -> int:
        return self.keep if self.keep is not None else self.full_length()


@dataclass(frozen=True)
class FeatureConfig:
    channels: tuple
    summaries: tuple = ()
    summary_channel: int = -1

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "summaries", tuple(self.summaries))
        if not self.channels:
            raise ConfigError("feature config needs at least one channel")
        for s in self.summaries:
            if s not in SUMMARY_KINDS:
                raise ConfigError(f"unknown summary {s!r}; allowed: {SUMMARY_KINDS}")

    def block_lengths(self):
        blocks = [
            (f"{c.transform}(ch{i})", c.block_length()) for i, c in enumerate(self.channels)
        ]
        if self.summaries:
            blocks.append(("summaries", len(self.summaries)))
        return blocks

    def feature_count(self) -> int:
        return sum(n for _, n in self.block_lengths())

    def arithmetic(self) -> str:
        parts = " + ".join(f"{tag}={n}" for tag, n in self.block_lengths())
        return f"{parts} = {self.feature_count()}"

    def validate_count(self, expected: int):
        if self.feature_count() != expected:
            raise ConfigError(
                f"feature blocks sum to {self.feature_count()}, expected {expected}: "
                f"{self.arithmetic()}"
            )


def pad_to_length(signal, length: int) -> np.ndarray:
    """Zero-pad on the right, or truncate, to exactly ``length`` samples."""
    x = np.asarray(signal, dtype=np.float64)
    if len(x) >= length:
        return x[:length]
    return np.concatenate([x, np.zeros(length - len(x))])


def haar_dwt(signal, levels: int = 1):
    """Orthonormal Haar transform, recursing ``levels`` times on the
    approximation. Returns (approximation, [details level 1..levels]),
    where level 1 is the finest. Energy is conserved at every level.
    """
    x = np.asarray(signal, dtype=np.float64)
    if not _is_pow2(len(x)):
        raise ConfigError(f"haar_dwt needs a power-of-two length, got {len(x)}")
    if not 1 <= levels <= int(np.log2(len(x))):
        raise ConfigError(f"levels must be in [1, {int(np.log2(len(x)))}], got {levels}")
    details = []
    a = x
    for _ in range(levels):
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) / np.sqrt(2.0))
        a = (even + odd) / np.sqrt(2.0)
    return a, details


def dwt_block(signal, levels: int) -> np.ndarray:
    """DWT coefficients as one vector: approximation, then details from
    coarsest to finest. Same total length as the input."""
    a, details = haar_dwt(signal, levels)
    return np.concatenate([a] + details[::-1])


def fft_magnitude(signal) -> np.ndarray:
    """Magnitudes of DFT bins 0..L/2 of a power-of-two length signal."""
    x = np.asarray(signal, dtype=np.float64)
    if not _is_pow2(len(x)):
        raise ConfigError(f"fft_magnitude needs a power-of-two length, got {len(x)}")
    return np.abs(np.fft.rfft(x))


def build_features(window: ActivityWindow, cfg: FeatureConfig) -> FeatureVector:
    """Concatenate per-channel transform blocks in channel order, scalar
    summaries last. Pure: same window + cfg -> identical vector."""
    if len(window.channels) != len(cfg.channels):
        raise ConfigError(
            f"config declares {len(cfg.channels)} channels but window "
            f"{window.window_id} has {len(window.channels)}"
        )
    blocks = []
    provenance = []
    for i, cspec in enumerate(cfg.channels):
        x = pad_to_length(window.channels[i], cspec.length)
        if cspec.transform == "dwt":
            block = dwt_block(x, cspec.levels)
        else:
            block = fft_magnitude(x)
        if cspec.keep is not None:
            block = block[: cspec.keep]
        blocks.append(block)
        provenance.append((f"{cspec.transform}(ch{i})", len(block)))
    if cfg.summaries:
        ref = window.channels[cfg.summary_channel]
        scalars = {
            "min": float(ref.min()),
            "max": float(ref.max()),
            "duration": float(window.duration),
        }
        blocks.append(np.array([scalars[s] for s in cfg.summaries]))
        provenance.append(("summaries", len(cfg.summaries)))
    return FeatureVector(values=np.concatenate(blocks), provenance=tuple(provenance))


def reshape_to_image(fv, dims: TensorShape) -> FeatureImage:
    """Row-major reshape of a feature vector into an (H, W, 1) grid."""
    values = fv.values if isinstance(fv, FeatureVector) else np.asarray(fv, dtype=np.float64)
    if not dims.is_image:
        raise ConfigError(f"image dims must be (H, W, C), got {dims}")
    h, w, c = dims.dims
    if c != 1:
        raise ConfigError(f"feature images are single-channel, got {dims}")
    if values.size != h * w:
        raise DataError(f"cannot reshape {values.size} features into {h}x{w}")
    return FeatureImage(grid=values.reshape(h, w, 1))
