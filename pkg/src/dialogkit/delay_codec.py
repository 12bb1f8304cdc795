"""Multi-head delay pattern over RVQ token grids, plus frame/bitrate accounting.

A token grid is a K x T matrix of codebook indices (K codebooks, T frames).
The delay transform shifts row k right by k frames and pads the exposed
positions, so one autoregressive step can emit one token per codebook. The
transform is exactly invertible.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

DEFAULT_FRAME_RATE_HZ = 12.5
# Inferred so that 16 codebooks at 12.5 Hz meet a 2 kbps budget; configurable.
DEFAULT_VOCAB_SIZE = 1024

_MAGIC = b"TGRD"
_HEADER = struct.Struct("<4sIIId")


class DelayCodecError(ValueError):
    pass


class PadInVocab(DelayCodecError):
    pass


class MalformedDelay(DelayCodecError):
    pass


class LayerCountExceeded(DelayCodecError):
    pass


class MalformedGridFile(DelayCodecError):
    pass


def _as_token_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 2:
        raise DelayCodecError(f"token grid must be 2-D, got shape {arr.shape}")
    return arr


@dataclass
class TokenGrid:
    """K x T grid of codebook indices in [0, vocab_size)."""

    values: np.ndarray
    vocab_size: int = DEFAULT_VOCAB_SIZE
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ

    def __post_init__(self):
        self.values = _as_token_matrix(self.values)
        if self.codebooks < 1:
            raise DelayCodecError("grid needs at least one codebook row")
        if self.values.size and (
            self.values.min() < 0 or self.values.max() >= self.vocab_size
        ):
            raise DelayCodecError(
                f"token values must lie in [0, {self.vocab_size})"
            )

    @property
    def codebooks(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TokenGrid)
            and self.vocab_size == other.vocab_size
            and self.frame_rate_hz == other.frame_rate_hz
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )


@dataclass
class DelayedGrid:
    """Delay-pattern view of a grid: row k carries k leading pads."""

    values: np.ndarray
    vocab_size: int
    pad_token: int
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ

    def __post_init__(self):
        self.values = _as_token_matrix(self.values)

    @property
    def codebooks(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def apply_delay(grid: TokenGrid, pad_token: int | None = None) -> DelayedGrid:
    """Shift row k right by k frames; output width is T + K - 1.

    ``pad_token`` defaults to ``vocab_size`` (one past the valid range) and
    must not collide with the vocabulary.
    """
    pad = grid.vocab_size if pad_token is None else pad_token
    if 0 <= pad < grid.vocab_size:
        raise PadInVocab(f"pad token {pad} collides with vocab [0, {grid.vocab_size})")
    k_n, t_n = grid.codebooks, grid.frames
    out = np.full((k_n, t_n + k_n - 1), pad, dtype=np.int64)
    for k in range(k_n):
        out[k, k : k + t_n] = grid.values[k]
    return DelayedGrid(out, grid.vocab_size, pad, grid.frame_rate_hz)


def revert_delay(delayed: DelayedGrid) -> TokenGrid:
    """Exact inverse of :func:`apply_delay`.

    Raises MalformedDelay when pads appear off the expected triangle or data
    positions hold the pad token.
    """
    k_n, width = delayed.codebooks, delayed.width
    t_n = width - k_n + 1
    if t_n < 0:
        raise MalformedDelay(f"width {width} too small for {k_n} codebooks")
    pad = delayed.pad_token
    out = np.empty((k_n, t_n), dtype=np.int64)
    for k in range(k_n):
        row = delayed.values[k]
        head, body, tail = row[:k], row[k : k + t_n], row[k + t_n :]
        if head.size and not (head == pad).all():
            raise MalformedDelay(f"row {k}: non-pad token in leading pad region")
        if tail.size and not (tail == pad).all():
            raise MalformedDelay(f"row {k}: non-pad token in trailing pad region")
        if body.size and (body == pad).any():
            raise MalformedDelay(f"row {k}: pad token in data region")
        out[k] = body
    return TokenGrid(out, delayed.vocab_size, delayed.frame_rate_hz)


def select_layers(grid: TokenGrid, n: int) -> TokenGrid:
    """Keep the first ``n`` codebook rows (the coarsest quantizer layers)."""
    if n < 1:
        raise DelayCodecError("layer count must be >= 1")
    if n > grid.codebooks:
        raise LayerCountExceeded(f"requested {n} layers, grid has {grid.codebooks}")
    return TokenGrid(grid.values[:n].copy(), grid.vocab_size, grid.frame_rate_hz)


@dataclass(frozen=True)
class FrameStats:
    duration_s: float
    bits_per_second: float


def token_bits(vocab_size: int) -> int:
    """Bits per token: log2(V) for powers of two, else ceil(log2(V))."""
    if vocab_size < 2:
        raise DelayCodecError("vocab size must be >= 2")
    return (vocab_size - 1).bit_length()


def frame_accounting(
    frames: int,
    codebooks: int,
    vocab_size: int = DEFAULT_VOCAB_SIZE,
    rate_hz: float = DEFAULT_FRAME_RATE_HZ,
) -> FrameStats:
    """Duration and bitrate implied by a grid geometry."""
    return FrameStats(
        duration_s=frames / rate_hz,
        bits_per_second=codebooks * rate_hz * token_bits(vocab_size),
    )


def write_grid_file(path, grid: TokenGrid | DelayedGrid) -> None:
    """Write binary grid format: TGRD header + row-major little-endian u32."""
    values = grid.values
    if values.size and (values.min() < 0 or values.max() > 0xFFFFFFFF):
        raise MalformedGridFile("token values do not fit u32")
    header = _HEADER.pack(
        _MAGIC,
        values.shape[0],
        values.shape[1],
        grid.vocab_size,
        grid.frame_rate_hz,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values, dtype="<u4").tobytes())


def _read_grid_raw(path) -> tuple[np.ndarray, int, float]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise MalformedGridFile(f"{path}: truncated header")
        magic, k_n, width, vocab, rate = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise MalformedGridFile(f"{path}: bad magic {magic!r}")
        payload = fh.read()
    expected = 4 * k_n * width
    if len(payload) != expected:
        raise MalformedGridFile(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<u4").astype(np.int64)
    return values.reshape(k_n, width), vocab, rate


def read_grid_file(path) -> TokenGrid:
    values, vocab, rate = _read_grid_raw(path)
    return TokenGrid(values, vocab, rate)


def read_delayed_file(path, pad_token: int | None = None) -> DelayedGrid:
    """Read a stored delayed grid; pad defaults to the vocab size."""
    values, vocab, rate = _read_grid_raw(path)
    pad = vocab if pad_token is None else pad_token
    return DelayedGrid(values, vocab, pad, rate)


def grid_to_json(grid: TokenGrid) -> str:
    return json.dumps(
        {
            "codebooks": grid.codebooks,
            "frames": grid.frames,
            "vocab_size": grid.vocab_size,
            "frame_rate_hz": grid.frame_rate_hz,
            "values": grid.values.tolist(),
        }
    )


def grid_from_json(payload: str) -> TokenGrid:
    doc = json.loads(payload)
    grid = TokenGrid(doc["values"], doc["vocab_size"], doc["frame_rate_hz"])
    if grid.codebooks != doc["codebooks"] or grid.frames != doc["frames"]:
        raise MalformedGridFile("JSON grid header disagrees with values shape")
    return grid
