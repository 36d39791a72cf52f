"""Tag-side emulation: non-volatile image, message handling, power, bootloader.

The tag's byte-addressable non-volatile memory survives power loss; its
EPC register, address-assembly registers and any in-flight multi-word
series do not.  The bootloader mode machine decides whether incoming
messages are treated as reprogramming data.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .crc import crc16_ccitt
from .protocol import (
    EPC_LENGTH,
    HDR_ADDR_FIRST,
    HDR_ADDR_SECOND,
    HDR_REPROGRAM_INIT,
    MAX_BASIC_OFFSET,
    ex_checksum,
)

FRAM_SIZE = 64 * 1024

INITIAL_EPC = bytes(EPC_LENGTH)


class InvalidEvent(ValueError):
    pass


class TagMode(Enum):
    BOOTLOADER = "bootloader"
    REPROGRAM = "reprogram"
    APPLICATION = "application"
    POWER_FAILURE = "power-failure"


class BootEvent(Enum):
    POWER_ON = "power-on"
    INIT_MESSAGE = "init-message"
    TRANSFER_COMPLETE = "transfer-complete"
    POWER_FAILURE = "power-failure"


class FramImage:
    """Persistent byte array with optional write-fault injection."""

    def __init__(self, size: int = FRAM_SIZE):
        self._bytes = bytearray(size)

    def __len__(self) -> int:
        return len(self._bytes)

    def read(self, address: int, count: int = 1) -> bytes:
        return bytes(self._bytes[address : address + count])

    def write(self, address: int, data: bytes) -> None:
        if address < 0 or address + len(data) > len(self._bytes):
            raise ValueError(f"write of {len(data)} bytes at {address:#06x} out of range")
        self._bytes[address : address + len(data)] = data

    def dump(self, path: str | Path) -> None:
        Path(path).write_bytes(bytes(self._bytes))


@dataclass
class PowerModel:
    """Two-state per-round power process.

    Each powered round browns out with probability ``brownout_prob``; an
    outage then lasts a geometrically distributed number of rounds with the
    given mean.  Driven by its own RNG, so the schedule is a deterministic
    function of the seed.
    """

    seed: int
    brownout_prob: float = 0.0
    mean_burst_rounds: float = 3.0

    def __post_init__(self):
        self._rng = random.Random(self.seed)
        self._outage_left = 0

    def step(self, brownout_prob: float | None = None) -> bool:
        """Advance one round; returns True when the tag is powered."""
        p = self.brownout_prob if brownout_prob is None else brownout_prob
        if self._outage_left > 0:
            self._outage_left -= 1
            return False
        if p > 0 and self._rng.random() < p:
            # Geometric with mean mean_burst_rounds, support {1, 2, ...}.
            u = self._rng.random()
            q = 1.0 - 1.0 / self.mean_burst_rounds
            length = 1
            while u < q and length < 10_000:
                u = self._rng.random()
                length += 1
            self._outage_left = length - 1
            return False
        return True


def distance_brownout_prob(d: float) -> float:
    """Default brown-out probability: negligible near, bursty far."""
    return min(0.9, 0.02 * (d / 0.6) ** 4)


DEFAULT_DEPLETION_COEFF = 4.0


def depletion_prob(d: float, coeff: float = DEFAULT_DEPLETION_COEFF) -> float:
    """Per-slot energy-drain hazard base during a multi-word series.

    While decoding back-to-back sub-commands the tag spends faster than it
    harvests, and the margin shrinks with distance; the hazard at series
    slot j scales as 1 - (1-p)^(j-1), so long series collapse at range
    while short ones stay viable.
    """
    return min(0.5, coeff * d**4)


class Tag:
    """CRFID tag state machine driven by the reader simulation."""

    def __init__(self, write_fault_prob: float = 0.0, fault_seed: int = 0,
                 start_in_bootloader: bool = False,
                 depletion_coeff: float = DEFAULT_DEPLETION_COEFF,
                 energy_seed: int = 0):
        self.fram = FramImage()
        self.epc = INITIAL_EPC
        self.powered = True
        self.mode = TagMode.BOOTLOADER if start_in_bootloader else TagMode.REPROGRAM
        self.write_fault_prob = write_fault_prob
        self.depletion_coeff = depletion_coeff
        self._fault_rng = random.Random(fault_seed)
        self._energy_rng = random.Random(energy_seed)
        # Volatile reprogram state.
        self._addr_high: int | None = None
        self._addr_low: int | None = None
        self._series: list[tuple[int, bool]] = []  # (word, corrupted)
        # Persistent bootloader state: survives power loss like the image.
        self._reprogram_latch = not start_in_bootloader
        self._written_ranges: list[tuple[int, int]] = []

    # -- power -------------------------------------------------------------

    def set_powered(self, powered: bool) -> None:
        if self.powered and not powered:
            self.epc = INITIAL_EPC
            self._addr_high = None
            self._addr_low = None
            self._series.clear()
            if self.mode is not TagMode.POWER_FAILURE:
                self.bootloader_event(BootEvent.POWER_FAILURE)
        elif not self.powered and powered:
            self.bootloader_event(BootEvent.POWER_ON)
        self.powered = powered

    # -- basic (single-word Write) handling ---------------------------------

    def handle_basic_write(self, word: int, crc_ok: bool = True) -> None:
        """Process one Write; on success the EPC echoes header and read-back.

        A failed command integrity check leaves all state untouched (the
        reader sees the missing reply, the tag stays silent).
        """
        if not self.powered or not crc_ok:
            return
        header = (word >> 8) & 0xFF
        payload = word & 0xFF
        if header == HDR_REPROGRAM_INIT:
            if self.mode in (TagMode.BOOTLOADER, TagMode.REPROGRAM):
                self.bootloader_event(BootEvent.INIT_MESSAGE)
                self.epc = bytes([header, payload]).ljust(EPC_LENGTH, b"\x00")
            return
        if self.mode is not TagMode.REPROGRAM:
            return
        if header == HDR_ADDR_FIRST:
            self._addr_high = payload
            self._addr_low = None
            self.epc = bytes([header, payload]).ljust(EPC_LENGTH, b"\x00")
        elif header == HDR_ADDR_SECOND:
            self._addr_low = payload
            self.epc = bytes([header, payload]).ljust(EPC_LENGTH, b"\x00")
        elif header <= MAX_BASIC_OFFSET:
            if self._addr_high is None or self._addr_low is None:
                return  # no valid base address since power-up; ignore
            address = ((self._addr_high << 8) | self._addr_low) + header
            self._commit(address, bytes([payload]))
            readback = self.fram.read(address, 1)
            self.epc = bytes([header, readback[0]]).ljust(EPC_LENGTH, b"\x00")

    # -- extended (BlockWrite series) handling -------------------------------

    def series_reset(self) -> None:
        self._series.clear()

    def series_slot_alive(self, slot: int, d: float) -> bool:
        """Whether the tag still has charge to decode series slot ``slot``.

        Slot numbering is 1-based; the first sub-command never depletes.
        A drained slot is a within-round brown-out approximated as a missed
        reply, leaving the round-scale power process untouched.
        """
        if slot <= 1:
            return True
        p = depletion_prob(d, self.depletion_coeff)
        return self._energy_rng.random() < (1.0 - p) ** (slot - 1)

    def series_word(self, word: int, corrupted: bool) -> None:
        """Accept one replied word of an in-flight series (volatile buffer)."""
        if self.powered:
            self._series.append((word, corrupted))

    def series_complete(self) -> bool:
        """Finish a fully replied series: verify, commit, update the EPC.

        The checksum is verified against the received message before any
        memory write and recomputed from read-back afterwards; both must
        pass for the EPC to acknowledge the message.  Returns True when the
        EPC was updated.
        """
        words = self._series
        self._series = []
        if not self.powered or len(words) < 2:
            return False
        if any(corrupted for _, corrupted in words):
            return False  # received-message checksum cannot match
        raw = bytearray()
        for w, _ in words:
            raw += bytes([(w >> 8) & 0xFF, w & 0xFF])
        checksum, length = raw[0], raw[1]
        address = (raw[2] << 8) | raw[3]
        payload = bytes(raw[4 : 4 + length])
        if len(payload) != length:
            return False
        if ex_checksum(raw[1 : 4 + length]) != checksum:
            return False
        if self.mode is not TagMode.REPROGRAM:
            return False
        self._commit(address, payload)
        readback = self.fram.read(address, length)
        header = bytes([checksum, length, raw[2], raw[3]])
        if ex_checksum(header[1:] + readback) != checksum:
            return False  # write fault surfaced by read-back
        self.epc = header.ljust(EPC_LENGTH, b"\x00")
        return True

    def _commit(self, address: int, data: bytes) -> None:
        written = bytearray(data)
        if self.write_fault_prob > 0:
            for i in range(len(written)):
                if self._fault_rng.random() < self.write_fault_prob:
                    written[i] ^= 0xFF
        self.fram.write(address, bytes(written))
        self._written_ranges.append((address, address + len(data)))

    # -- bootloader ----------------------------------------------------------

    def bootloader_event(self, event: BootEvent, crc: int | None = None) -> TagMode:
        """Apply one bootloader transition and return the new mode."""
        if event is BootEvent.POWER_FAILURE:
            self.mode = TagMode.POWER_FAILURE
        elif event is BootEvent.POWER_ON:
            if self.mode is not TagMode.POWER_FAILURE:
                raise InvalidEvent(f"power-on while {self.mode.value}")
            # Boot lands in the bootloader; a latched reprogram session
            # resumes immediately so transfers survive outages.
            self.mode = TagMode.REPROGRAM if self._reprogram_latch else TagMode.BOOTLOADER
        elif event is BootEvent.INIT_MESSAGE:
            if self.mode not in (TagMode.BOOTLOADER, TagMode.REPROGRAM):
                raise InvalidEvent(f"init message while {self.mode.value}")
            self.mode = TagMode.REPROGRAM
            self._reprogram_latch = True
            self._written_ranges.clear()
        elif event is BootEvent.TRANSFER_COMPLETE:
            if self.mode is not TagMode.REPROGRAM:
                raise InvalidEvent(f"transfer-complete while {self.mode.value}")
            if crc is None:
                raise InvalidEvent("transfer-complete carries a CRC16")
            if self.application_crc() == crc:
                self.mode = TagMode.APPLICATION
                self._reprogram_latch = False
            # On mismatch the tag stays in reprogram mode awaiting retransfer.
        else:
            raise InvalidEvent(f"unknown event {event}")
        return self.mode

    def application_crc(self) -> int:
        """CRC16 over everything written during the reprogram session."""
        ranges = sorted(set(self._written_ranges))
        merged: list[list[int]] = []
        for start, end in ranges:
            if merged and start <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], end)
            else:
                merged.append([start, end])
        blob = b"".join(self.fram.read(s, e - s) for s, e in merged)
        return crc16_ccitt(blob)
