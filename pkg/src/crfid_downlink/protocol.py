"""Message construction, sequencing and frame-length throttling.

Two message flavors exist.  The single-word ("basic") flavor packs a one
byte header and one byte payload into each Write; the extended flavor
carries a four byte header (checksum, length, destination address) plus up
to 2*S_max payload bytes in one BlockWrite.  The throttle ladder holds the
admissible payload sizes for a row and the throttle walks it by index
steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .ihex import Chunk, RecordMatrix, Row

# Basic header bytes.  0x00-0x20 are data-byte offsets relative to the
# row base address; the two address bytes and the reprogram-init marker
# live above the offset range.
HDR_ADDR_FIRST = 0xFD
HDR_ADDR_SECOND = 0xFE
HDR_REPROGRAM_INIT = 0xFF
MAX_BASIC_OFFSET = 0x20

EPC_LENGTH = 12

DEFAULT_S_MAX = 16


class RowTooLong(ValueError):
    pass


class PayloadTooLarge(ValueError):
    pass


def ex_checksum(data: bytes) -> int:
    """Single-byte message checksum: two's complement of the LSB of the sum.

    Applied over every message byte except the checksum field itself, the
    same rule used for Intel Hex record checksums.
    """
    return (-sum(data)) & 0xFF


@dataclass(frozen=True)
class BasicMessage:
    """One Write: header byte plus payload byte."""

    header: int
    payload: int

    def __post_init__(self):
        ok = self.header <= MAX_BASIC_OFFSET or self.header in (
            HDR_ADDR_FIRST,
            HDR_ADDR_SECOND,
            HDR_REPROGRAM_INIT,
        )
        if not ok:
            raise ValueError(f"invalid basic header {self.header:#04x}")

    @property
    def word(self) -> int:
        return (self.header << 8) | self.payload

    def expected_epc(self) -> bytes:
        """The echo is a copy of the message itself, zero-padded."""
        return bytes([self.header, self.payload]).ljust(EPC_LENGTH, b"\x00")


@dataclass(frozen=True)
class ExMessage:
    """One BlockWrite: (checksum, length, address) header plus payload."""

    checksum: int
    length: int
    address: int
    data: bytes

    def header_bytes(self) -> bytes:
        return bytes(
            [self.checksum, self.length, (self.address >> 8) & 0xFF, self.address & 0xFF]
        )

    def expected_epc(self) -> bytes:
        return self.header_bytes().ljust(EPC_LENGTH, b"\x00")

    def to_words(self) -> list[int]:
        """Word sequence as issued on air: header words then payload words.

        An odd payload byte count pads the final word's low byte with zero;
        the length field tells the receiver how many bytes are valid.
        """
        raw = self.header_bytes() + self.data
        if len(raw) % 2:
            raw += b"\x00"
        return [(raw[i] << 8) | raw[i + 1] for i in range(0, len(raw), 2)]


def build_basic_messages(row: Row) -> list[BasicMessage]:
    """Messages for one row: two address messages, then one per data byte.

    The first message carries the first printed address byte (high byte)
    under header 0xFD, the second carries the low byte under 0xFE, and
    each data byte follows under its offset header.
    """
    if len(row.data) > MAX_BASIC_OFFSET + 1:
        raise RowTooLong(
            f"row has {len(row.data)} data bytes; offset headers stop at "
            f"{MAX_BASIC_OFFSET:#04x}"
        )
    messages = [
        BasicMessage(HDR_ADDR_FIRST, (row.address >> 8) & 0xFF),
        BasicMessage(HDR_ADDR_SECOND, row.address & 0xFF),
    ]
    messages.extend(BasicMessage(off, b) for off, b in enumerate(row.data))
    return messages


def build_ex_message(chunk: bytes, address: int, s_max: int = DEFAULT_S_MAX) -> ExMessage:
    """Assemble an extended message around one chunk."""
    if not 1 <= len(chunk) <= 2 * s_max:
        raise PayloadTooLarge(
            f"chunk of {len(chunk)} bytes exceeds 2*S_max = {2 * s_max}"
        )
    body = bytes([len(chunk), (address >> 8) & 0xFF, address & 0xFF]) + chunk
    return ExMessage(ex_checksum(body), len(chunk), address, bytes(chunk))


# ---------------------------------------------------------------------------
# Message sequencing


@dataclass(frozen=True)
class MessageCursor:
    """Position of the next chunk to cut: row index plus byte offset.

    A fresh cursor (row 0, offset 0, chunk 0) is the undefined-message
    state; row_index past the matrix end is the end-of-file state.
    """

    row_index: int = 0
    byte_offset: int = 0
    chunk_index: int = 0  # 1-based ordinal of the chunk within its row

    def done(self, matrix: RecordMatrix) -> bool:
        return self.row_index >= len(matrix)


def next_message(
    cursor: MessageCursor, matrix: RecordMatrix, s_p: int
) -> tuple[Chunk | None, MessageCursor]:
    """Cut the chunk at the cursor and return it with the advanced cursor.

    Within a row the cursor moves to the next chunk; at end of row it moves
    to the next row; past the last row the result is (None, cursor).
    Chunk sizes follow the current ``s_p``, so a changed payload size
    re-chunks the remainder of the row from the current byte offset.
    """
    if cursor.done(matrix):
        return None, cursor
    row = matrix.rows[cursor.row_index]
    data = row.data[cursor.byte_offset : cursor.byte_offset + 2 * s_p]
    chunk = Chunk(row.address + cursor.byte_offset, data)
    new_offset = cursor.byte_offset + len(data)
    if new_offset >= len(row.data):
        advanced = MessageCursor(cursor.row_index + 1, 0, 0)
    else:
        advanced = MessageCursor(cursor.row_index, new_offset, cursor.chunk_index + 1)
    return chunk, advanced


# ---------------------------------------------------------------------------
# Throttling


class ThrottleDirection(Enum):
    UP = "up"
    DOWN_ERROR = "down-error"
    DOWN_LOST = "down-lost"


def build_ladder(s_r: int, s_max: int = DEFAULT_S_MAX) -> tuple[int, ...]:
    """Admissible payload sizes for a row of ``s_r`` words.

    The set {ceil(s_r/n) : n = 1..s_r}, deduplicated, ascending, and
    truncated to values <= s_max.
    """
    if s_r < 1 or s_max < 1:
        raise ValueError("row word count and S_max must be positive")
    values = {math.ceil(s_r / n) for n in range(1, s_r + 1)}
    return tuple(sorted(v for v in values if v <= s_max))


@dataclass
class ThrottleParams:
    """Index steps and thresholds for the adaptive payload size."""

    t_u: int = 1
    t_de: int = -2
    t_dl: int = -3
    m_threshold: int = 10

    def validate(self) -> None:
        # Required ordering: T_U < |T_DE| <= |T_DL|, down steps negative.
        if self.t_de >= 0 or self.t_dl >= 0:
            raise ValueError("down steps T_DE and T_DL must be negative")
        if self.t_u < 1:
            raise ValueError("up step T_U must be a positive integer")
        if not self.t_u < abs(self.t_de) <= abs(self.t_dl):
            raise ValueError("throttle steps must satisfy T_U < |T_DE| <= |T_DL|")


@dataclass
class ThrottleState:
    s_p: int
    m_count: int = 0
    r_count: int = 0


def throttle(s_p: int, ladder: tuple[int, ...], direction: ThrottleDirection,
             params: ThrottleParams) -> int:
    """Move the payload size along the ladder by the step for ``direction``.

    The index is clamped at the ladder ends, so throttling up at the top or
    down at the bottom leaves the size unchanged.
    """
    if s_p not in ladder:
        raise ValueError(f"payload size {s_p} not in ladder {ladder}")
    idx = ladder.index(s_p)  # 0-based
    step = {
        ThrottleDirection.UP: params.t_u,
        ThrottleDirection.DOWN_ERROR: params.t_de,
        ThrottleDirection.DOWN_LOST: params.t_dl,
    }[direction]
    new_idx = max(0, min(len(ladder) - 1, idx + step))
    return ladder[new_idx]


def derive_r_max(ladder_size: int, t_de: int) -> int:
    """Smallest resend budget that walks the ladder top to bottom.

    Solves |T_t| - |T_DE| * R <= 1 for the smallest integer R, floored at
    one resend so even a single-step ladder allows a retry.
    """
    if abs(t_de) < 1:
        raise ValueError("|T_DE| must be at least 1")
    return max(1, math.ceil((ladder_size - 1) / abs(t_de)))


def snap_to_ladder(s_p: int, ladder: tuple[int, ...]) -> int:
    """Largest ladder value <= s_p, or the ladder minimum."""
    candidates = [v for v in ladder if v <= s_p]
    return candidates[-1] if candidates else ladder[0]
