"""Host engine: message dispatch, ACK/NACK classification, resend, throttling.

The host walks the record matrix one message at a time.  After sending it
watches the report stream: a report whose EPC prefix matches the expected
verification data acknowledges the in-flight message, and everything else
counts toward the NACK timeout, including the stale echoes that the old
operation frame floods into the new message frame.  A timeout resends the
current chunk (re-cut at the throttled payload size for the extended
variant) until the resend budget is exhausted and the transfer aborts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .channel import ChannelModel
from .crc import crc16_ccitt
from .ihex import Chunk, RecordMatrix
from .protocol import (
    BasicMessage,
    HDR_REPROGRAM_INIT,
    ThrottleDirection,
    ThrottleParams,
    ThrottleState,
    build_basic_messages,
    build_ex_message,
    build_ladder,
    snap_to_ladder,
    throttle,
)
from .reader import AccessSpec, OperationReport, Reader, ReportResult
from .tag import BootEvent, Tag, TagMode

DEFAULT_OCV = 15
DEFAULT_N_THRESHOLD = 20
DEFAULT_R_MAX = 3
DEFAULT_STALL_TICKS = 120  # reportless in-flight ticks treated as one timeout


class Variant(Enum):
    BASIC = "basic"
    EX = "ex"


class ConfigError(ValueError):
    pass


class Ack(Enum):
    ACK = "ack"
    NACK = "nack"


@dataclass(frozen=True)
class LogEvent:
    round_no: int
    event: str
    row: int
    chunk: int
    s_p: float
    result: str
    epc_hex: str


@dataclass
class TransferLog:
    events: list[LogEvent] = field(default_factory=list)

    def add(self, round_no: int, event: str, row: int = -1, chunk: int = 0,
            s_p: float = 0.0, result: str = "", epc: bytes = b"") -> None:
        self.events.append(
            LogEvent(round_no, event, row, chunk, s_p, result, epc.hex().upper())
        )

    def count(self, event: str) -> int:
        return sum(1 for e in self.events if e.event == event)


@dataclass
class SessionResult:
    completed: bool
    rounds: int
    log: TransferLog
    messages_sent: int  # m_t: every transmission, first sends plus resends
    resends: int  # m_r
    sum_s_p: float  # over all transmissions, for the mean payload size
    op_success: int  # n_s
    op_total: int  # n_t
    reached_application: bool = False
    failure_reason: str = ""


def matrix_crc(matrix: RecordMatrix) -> int:
    """CRC16 over the file content in address order, as the tag computes it."""
    image = matrix.flat_image()
    return crc16_ccitt(bytes(image[a] for a in sorted(image)))


@dataclass
class HostConfig:
    variant: Variant = Variant.EX
    ocv: int = DEFAULT_OCV
    n_threshold: int = DEFAULT_N_THRESHOLD
    r_max: int = DEFAULT_R_MAX
    s_max: int = 16
    fixed_s_p: int | None = None  # None enables throttling (extended variant)
    throttle_params: ThrottleParams = field(default_factory=ThrottleParams)
    use_bootloader: bool = False
    stall_ticks: int = DEFAULT_STALL_TICKS
    max_rounds: int = 60 * 3600
    # Escape hatch for demonstrating the flood misbehavior the bound prevents.
    allow_unsafe_ocv: bool = False

    def validate(self) -> None:
        if self.ocv > self.n_threshold and not self.allow_unsafe_ocv:
            raise ConfigError(
                f"OCV {self.ocv} exceeds N_threshold {self.n_threshold}; stale-echo "
                "floods could outlast the timeout window"
            )
        if self.ocv < 1 or self.n_threshold < 1 or self.r_max < 1:
            raise ConfigError("OCV, N_threshold and R_max must be positive")
        if self.variant is Variant.EX and self.fixed_s_p is None:
            self.throttle_params.validate()
        if self.fixed_s_p is not None and self.fixed_s_p < 1:
            raise ConfigError("fixed payload size must be at least one word")


def classify_report(expected_epc: bytes, report: OperationReport) -> Ack:
    """ACK iff the report's EPC prefix matches the verification data.

    Stale echoes of the previous message and no-tag reports both come back
    as NACKs; the operation result itself is irrelevant, so a report of an
    erroneous operation can still embed an ACK.
    """
    n = len(expected_epc)
    return Ack.ACK if report.epc[:n] == expected_epc[:n] else Ack.NACK


@dataclass
class _InFlight:
    expected_epc: bytes
    words: tuple[int, ...]
    is_blockwrite: bool
    row: int
    chunk: int
    s_p: float
    chunk_bytes: int  # payload bytes carried; cursor advance on ACK
    resendable_in_place: bool  # basic/init messages resend verbatim


class HostSession:
    """One transfer attempt over a reader, tag and channel."""

    def __init__(self, config: HostConfig, matrix: RecordMatrix):
        config.validate()
        if not len(matrix):
            raise ConfigError("empty record matrix")
        self.config = config
        self.matrix = matrix
        self.log = TransferLog()
        self._spec_serial = 0
        # Extended-variant cursor: start of the un-acked chunk.  It only
        # advances on ACK, so a resend re-cuts the same position.
        self._row = 0
        self._offset = 0
        self._chunk_ordinal = 1
        self._ladder = (1,)
        start = config.fixed_s_p if config.fixed_s_p is not None else config.s_max
        self.throttle_state = ThrottleState(s_p=start)
        self._skip_empty_rows()

    # ------------------------------------------------------------------
    # sequencing

    def _skip_empty_rows(self) -> None:
        # Zero-length data records are legal; they carry nothing to send.
        while self._row < len(self.matrix) and not self.matrix.rows[self._row].data:
            self._row += 1
        if self._row < len(self.matrix):
            self._enter_row()

    def _enter_row(self) -> None:
        row = self.matrix.rows[self._row]
        self._ladder = build_ladder(row.word_count(), self.config.s_max)
        if self.config.fixed_s_p is not None:
            self.throttle_state.s_p = snap_to_ladder(self.config.fixed_s_p, self._ladder)
        else:
            self.throttle_state.s_p = snap_to_ladder(self.throttle_state.s_p, self._ladder)

    def _cut_chunk(self) -> Chunk:
        row = self.matrix.rows[self._row]
        data = row.data[self._offset : self._offset + 2 * self.throttle_state.s_p]
        return Chunk(row.address + self._offset, data)

    def _advance_past(self, chunk_bytes: int) -> None:
        """Move the cursor past an acknowledged chunk."""
        row = self.matrix.rows[self._row]
        self._offset += chunk_bytes
        if self._offset >= len(row.data):
            self._row += 1
            self._offset = 0
            self._chunk_ordinal = 1
            self._skip_empty_rows()
        else:
            self._chunk_ordinal += 1

    def _apply_throttle(self, direction: ThrottleDirection) -> None:
        if self.config.fixed_s_p is not None:
            return
        old = self.throttle_state.s_p
        self.throttle_state.s_p = throttle(
            old, self._ladder, direction, self.config.throttle_params
        )
        if self.throttle_state.s_p != old:
            self.log.add(self._now, "throttle", self._row, self._chunk_ordinal,
                         self.throttle_state.s_p, result=f"{old}->{self.throttle_state.s_p}")

    # ------------------------------------------------------------------
    # transmission

    def _stage(self, reader: Reader, words: tuple[int, ...], is_blockwrite: bool) -> None:
        self._spec_serial += 1
        spec = AccessSpec(
            spec_id=self._spec_serial,
            words=words,
            is_blockwrite=is_blockwrite,
            ocv=self.config.ocv,
        )
        reader.request_delete(self._now)
        reader.stage(spec, self._now)

    def _transmit(self, reader: Reader, flight: _InFlight, resend: bool) -> None:
        self._stage(reader, flight.words, flight.is_blockwrite)
        self._in_flight = flight
        self._nack_count = 0
        self._no_tag_count = 0
        self._silent_ticks = 0
        self._m_sent += 1
        self._sum_s_p += flight.s_p
        if resend:
            self._m_resent += 1
        self.log.add(self._now, "resend" if resend else "send",
                     flight.row, flight.chunk, flight.s_p, epc=flight.expected_epc)

    def _flight_for_chunk(self) -> _InFlight:
        chunk = self._cut_chunk()
        message = build_ex_message(chunk.data, chunk.address, self.config.s_max)
        return _InFlight(
            expected_epc=message.expected_epc()[:4],
            words=tuple(message.to_words()),
            is_blockwrite=True,
            row=self._row,
            chunk=self._chunk_ordinal,
            s_p=self.throttle_state.s_p,
            chunk_bytes=len(chunk.data),
            resendable_in_place=False,
        )

    @staticmethod
    def _flight_for_basic(msg: BasicMessage, row: int, index: int) -> _InFlight:
        return _InFlight(
            expected_epc=msg.expected_epc()[:2],
            words=(msg.word,),
            is_blockwrite=False,
            row=row,
            chunk=index,
            s_p=0.5,
            chunk_bytes=0,
            resendable_in_place=True,
        )

    # ------------------------------------------------------------------
    # main loop

    def run(self, reader: Reader, tag: Tag, channel: ChannelModel,
            power_step, distance_cm) -> SessionResult:
        """Drive the transfer to completion, failure, or the round budget.

        ``power_step(round) -> bool`` gives the tag power flag for a round
        and ``distance_cm(round) -> float`` the physical distance.
        """
        cfg = self.config
        is_basic = cfg.variant is Variant.BASIC

        if is_basic:
            stream = []
            for i, row in enumerate(self.matrix.rows):
                stream.extend(
                    (i, j, m) for j, m in enumerate(build_basic_messages(row), start=1)
                )
            if cfg.use_bootloader:
                stream.insert(0, (-1, 0, BasicMessage(HDR_REPROGRAM_INIT, 0x00)))
            stream_iter = iter(stream)
            pending_init = False
        else:
            stream_iter = None
            pending_init = cfg.use_bootloader

        self._in_flight: _InFlight | None = None
        self._nack_count = 0
        self._no_tag_count = 0
        self._silent_ticks = 0
        self._m_sent = 0
        self._m_resent = 0
        self._sum_s_p = 0.0
        self._now = 0
        n_success = 0
        n_total = 0
        completed = False
        failure = ""

        def send_next() -> bool:
            if is_basic:
                try:
                    i, j, msg = next(stream_iter)
                except StopIteration:
                    return False
                self._transmit(reader, self._flight_for_basic(msg, i, j), resend=False)
                return True
            nonlocal pending_init
            if pending_init:
                pending_init = False
                init = BasicMessage(HDR_REPROGRAM_INIT, 0x00)
                self._transmit(reader, self._flight_for_basic(init, -1, 0), resend=False)
                return True
            if self._row >= len(self.matrix):
                return False
            self._transmit(reader, self._flight_for_chunk(), resend=False)
            return True

        if not send_next():
            self.log.add(0, "complete")
            return SessionResult(True, 0, self.log, 0, 0, 0.0, 0, 0)
        pending_report: OperationReport | None = None

        while self._now < cfg.max_rounds:
            self._now += 1
            channel.set_distance_cm(distance_cm(self._now))
            tag.set_powered(power_step(self._now))

            # 1. Consume the report produced by the previous round.
            report = pending_report
            pending_report = None
            timeout = False
            stall_timeout = False
            flight = self._in_flight
            if report is not None and flight is not None:
                self._silent_ticks = 0
                if report.result is not ReportResult.INVENTORY:
                    n_total += 1
                    if report.result is ReportResult.SUCCESS:
                        n_success += 1
                if classify_report(flight.expected_epc, report) is Ack.ACK:
                    self.log.add(self._now, "ack", flight.row, flight.chunk,
                                 flight.s_p, report.result.value, report.epc)
                    self.throttle_state.r_count = 0
                    if not is_basic and cfg.fixed_s_p is None and flight.row >= 0:
                        if self.throttle_state.m_count > cfg.throttle_params.m_threshold:
                            self._apply_throttle(ThrottleDirection.UP)
                            self.throttle_state.m_count = 0
                        else:
                            self.throttle_state.m_count += 1
                    if not flight.resendable_in_place:
                        self._advance_past(flight.chunk_bytes)
                    self._in_flight = None
                    if not send_next():
                        completed = True
                        break
                else:
                    self._nack_count += 1
                    if report.result is ReportResult.NO_TAG_SEEN:
                        self._no_tag_count += 1
                    self.log.add(self._now, "nack", flight.row, flight.chunk,
                                 flight.s_p, report.result.value, report.epc)
                    if self._nack_count >= cfg.n_threshold:
                        timeout = True
            elif flight is not None:
                self._silent_ticks += 1
                if self._silent_ticks >= cfg.stall_ticks:
                    timeout = True
                    stall_timeout = True

            if timeout and self._in_flight is not None:
                flight = self._in_flight
                lost_type = stall_timeout or 2 * self._no_tag_count > self._nack_count
                self.log.add(self._now, "timeout", flight.row, flight.chunk,
                             flight.s_p, "lost" if lost_type else "error")
                if self.throttle_state.r_count >= cfg.r_max:
                    failure = "resend budget exhausted"
                    self.log.add(self._now, "abort", flight.row, flight.chunk,
                                 flight.s_p, failure)
                    break
                self.throttle_state.r_count += 1
                self.throttle_state.m_count = 0
                if not is_basic and cfg.fixed_s_p is None and flight.row >= 0:
                    self._apply_throttle(
                        ThrottleDirection.DOWN_LOST if lost_type
                        else ThrottleDirection.DOWN_ERROR
                    )
                if flight.resendable_in_place:
                    self._transmit(reader, flight, resend=True)
                else:
                    replacement = self._flight_for_chunk()
                    self._transmit(reader, replacement, resend=True)

            # 2. Reader advances one inventory round.
            pending_report = reader.tick(self._now, tag, channel)

        if not completed and not failure:
            failure = "round budget exhausted"

        reached_app = False
        if completed and cfg.use_bootloader:
            reached_app = self._finalize(tag, power_step)
        if completed:
            self.log.add(self._now, "complete")

        return SessionResult(
            completed=completed,
            rounds=self._now,
            log=self.log,
            messages_sent=self._m_sent,
            resends=self._m_resent,
            sum_s_p=self._sum_s_p,
            op_success=n_success,
            op_total=n_total,
            reached_application=reached_app,
            failure_reason=failure,
        )

    def _finalize(self, tag: Tag, power_step) -> bool:
        """Deliver the whole-application checksum once the tag has power."""
        crc = matrix_crc(self.matrix)
        waited = 0
        while not tag.powered and waited < 10_000:
            self._now += 1
            waited += 1
            tag.set_powered(power_step(self._now))
        if not tag.powered:
            return False
        tag.bootloader_event(BootEvent.TRANSFER_COMPLETE, crc=crc)
        return tag.mode is TagMode.APPLICATION
