"""Intel Hex parsing, encoding and chunking.

Transfers present their payload as an Intel Hex file; each data record
becomes one row of a record matrix, which the host later slices into
fixed-size word chunks for transmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

TYPE_DATA = 0x00
TYPE_EOF = 0x01


class HexFileError(ValueError):
    """Base class for Intel Hex parse errors."""


class MalformedRecord(HexFileError):
    pass


class ChecksumMismatch(HexFileError):
    pass


class LengthMismatch(HexFileError):
    pass


class UnsupportedRecordType(HexFileError):
    pass


class MissingEof(HexFileError):
    pass


class EmptyRow(ValueError):
    pass


def record_checksum(data: bytes) -> int:
    """Two's complement of the least-significant byte of the byte sum."""
    return (-sum(data)) & 0xFF


@dataclass(frozen=True)
class HexRecord:
    byte_count: int
    address: int
    record_type: int
    data: bytes
    checksum: int


@dataclass(frozen=True)
class Row:
    """One data record: destination address plus raw bytes."""

    address: int
    data: bytes

    def word_count(self) -> int:
        """Row size in 16-bit words, odd byte counts round up."""
        return math.ceil(len(self.data) / 2)


@dataclass
class RecordMatrix:
    rows: list[Row] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, RecordMatrix) and self.rows == other.rows

    def total_bytes(self) -> int:
        return sum(len(r.data) for r in self.rows)

    def flat_image(self) -> dict[int, int]:
        """Address -> byte mapping of the whole file (later rows win)."""
        image: dict[int, int] = {}
        for row in self.rows:
            for k, b in enumerate(row.data):
                image[row.address + k] = b
        return image


def parse_record(line: str) -> HexRecord:
    """Decode a single ':llaaaattdd..cc' record and verify its checksum."""
    line = line.strip()
    if not line.startswith(":"):
        raise MalformedRecord("record does not start with ':'")
    hexpart = line[1:]
    if len(hexpart) % 2 != 0:
        raise MalformedRecord("odd number of hex digits")
    try:
        raw = bytes.fromhex(hexpart)
    except ValueError:
        raise MalformedRecord("non-hex characters in record") from None
    if len(raw) < 5:
        raise MalformedRecord("record shorter than minimal field layout")
    byte_count = raw[0]
    address = (raw[1] << 8) | raw[2]
    record_type = raw[3]
    data = raw[4:-1]
    checksum = raw[-1]
    if len(data) != byte_count:
        raise LengthMismatch(
            f"length field says {byte_count} data bytes, found {len(data)}"
        )
    if record_checksum(raw[:-1]) != checksum:
        raise ChecksumMismatch(
            f"checksum {checksum:#04x} != computed {record_checksum(raw[:-1]):#04x}"
        )
    if record_type not in (TYPE_DATA, TYPE_EOF):
        raise UnsupportedRecordType(f"record type {record_type:#04x} not supported")
    return HexRecord(byte_count, address, record_type, data, checksum)


def parse_file(text: str) -> RecordMatrix:
    """Parse a whole Intel Hex file into an ordered RecordMatrix.

    Requires exactly one EOF record, in final position.  Parse errors are
    re-raised with the 1-based line number prepended.
    """
    rows: list[Row] = []
    saw_eof = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if saw_eof:
            raise MalformedRecord(f"line {lineno}: record after EOF record")
        try:
            rec = parse_record(line)
        except HexFileError as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
        if rec.record_type == TYPE_EOF:
            saw_eof = True
        else:
            rows.append(Row(rec.address, rec.data))
    if not saw_eof:
        raise MissingEof("no EOF record found")
    return RecordMatrix(rows)


def encode_record(address: int, record_type: int, data: bytes) -> str:
    body = bytes([len(data), (address >> 8) & 0xFF, address & 0xFF, record_type])
    body += data
    return ":" + (body + bytes([record_checksum(body)])).hex().upper()


def encode(matrix: RecordMatrix) -> str:
    """Render a RecordMatrix back to Intel Hex text (uppercase, EOF last)."""
    lines = [encode_record(r.address, TYPE_DATA, r.data) for r in matrix.rows]
    lines.append(encode_record(0, TYPE_EOF, b""))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Chunk:
    """A slice of one row: the unit carried by a single message."""

    address: int
    data: bytes

    def word_count(self) -> int:
        return math.ceil(len(self.data) / 2)


def chunk_record(row: Row, s_p: int) -> list[Chunk]:
    """Slice a row into chunks of at most ``s_p`` words.

    All chunks except possibly the last hold exactly ``s_p`` words; chunk
    addresses advance by 2*s_p bytes.  Concatenating the chunk data
    reconstructs the row byte-exactly.
    """
    if not row.data:
        raise EmptyRow(f"row at {row.address:#06x} has no data")
    if s_p < 1:
        raise ValueError("chunk size must be at least one word")
    step = 2 * s_p
    return [
        Chunk(row.address + off, row.data[off : off + step])
        for off in range(0, len(row.data), step)
    ]


def generate_fixture(data: bytes, record_width: int, base_address: int = 0x4400) -> str:
    """Emit an Intel Hex file holding ``data`` in fixed-width records.

    Mirrors how experiment files are produced: every record carries
    ``record_width`` bytes (the last one may be short), laid out
    contiguously from ``base_address``.
    """
    if record_width < 1:
        raise ValueError("record width must be positive")
    lines = []
    for off in range(0, len(data), record_width):
        lines.append(
            encode_record(base_address + off, TYPE_DATA, data[off : off + record_width])
        )
    lines.append(encode_record(0, TYPE_EOF, b""))
    return "\n".join(lines) + "\n"
