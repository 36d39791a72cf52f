"""Reader emulation: AccessSpec lifecycle, per-round command issuance, reports.

One simulation tick is one inventory round.  The reader executes the
active AccessSpec's command once per round and emits a report whose EPC
field is whatever the tag backscattered at the start of the round, i.e.
the echo of the previously handled message.  Multi-word BlockWrites go
out as a series of single-word sub-commands at sequential addresses, and
the round only counts as successful if the tag replied to every one.

Deleting an active spec is lazy: the reader finishes the operation frame
first (the stop trigger at OCV successful operations usually ends it), so
the tail of the old frame floods the next message frame with stale
reports.  A grace bound keeps blocked frames from running forever.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .channel import ChannelModel, Delivery, miss_probability
from .protocol import EPC_LENGTH
from .tag import Tag

MAX_WORD_COUNT = 32  # reader hardware ceiling

NO_TAG_EPC = bytes(EPC_LENGTH)

DEFAULT_LLRP_LATENCY_TICKS = 3  # delete+add+enable pipeline before first start
DEFAULT_SWITCH_TICKS = 2  # gap between spec removal and successor's first round
DEFAULT_DELETE_DELAY = 2  # post-delete rounds for specs without a stop trigger
DEFAULT_DELETE_GRACE = 30  # hard bound on delete-pending operation frames
FRAME_SLACK_ROUNDS = 2  # rounds past OCV before the reader drops the frame


class InvalidTransition(ValueError):
    pass


class NoActiveSpec(RuntimeError):
    pass


class SpecState(Enum):
    DISABLED = "disabled"
    ACTIVE = "active"
    HALT = "halt"


class SpecEvent(Enum):
    ADD = "add"
    ENABLE = "enable"
    DISABLE = "disable"
    DELETE = "delete"
    STOP_TRIGGER_FIRED = "stop-trigger-fired"


_TRANSITIONS = {
    (SpecState.DISABLED, SpecEvent.ENABLE): SpecState.ACTIVE,
    (SpecState.DISABLED, SpecEvent.DELETE): SpecState.HALT,
    (SpecState.ACTIVE, SpecEvent.DELETE): SpecState.HALT,
    (SpecState.ACTIVE, SpecEvent.STOP_TRIGGER_FIRED): SpecState.HALT,
    (SpecState.ACTIVE, SpecEvent.DISABLE): SpecState.DISABLED,
}


def apply_accessspec_event(state: SpecState | None, event: SpecEvent) -> SpecState:
    """Pure AccessSpec state machine; add creates a disabled spec."""
    if event is SpecEvent.ADD:
        if state is not None:
            raise InvalidTransition("add on an existing spec")
        return SpecState.DISABLED
    if state is None:
        raise InvalidTransition(f"{event.value} before add")
    try:
        return _TRANSITIONS[(state, event)]
    except KeyError:
        raise InvalidTransition(f"{event.value} while {state.value}") from None


class ReportResult(Enum):
    SUCCESS = "success"
    ERROR = "error"
    NO_TAG_SEEN = "no-tag-seen"
    INVENTORY = "inventory"  # idle round, no access operation attached


@dataclass(frozen=True)
class OperationReport:
    spec_id: int
    result: ReportResult
    epc: bytes
    round_no: int


@dataclass
class AccessSpec:
    """A Write (single word, CRC-protected) or BlockWrite (word series)."""

    spec_id: int
    words: tuple[int, ...]
    is_blockwrite: bool
    ocv: int
    stop_trigger: bool = True

    def __post_init__(self):
        if len(self.words) > MAX_WORD_COUNT:
            raise ValueError(
                f"word count {len(self.words)} exceeds reader ceiling {MAX_WORD_COUNT}"
            )
        if not self.is_blockwrite and len(self.words) != 1:
            raise ValueError("a Write carries exactly one word")


@dataclass
class _RunningSpec:
    spec: AccessSpec
    state: SpecState = SpecState.ACTIVE
    success_count: int = 0
    total_rounds: int = 0
    delete_requested_at: int | None = None


@dataclass
class Reader:
    """Single-spec reader driven one round per tick."""

    llrp_latency: int = DEFAULT_LLRP_LATENCY_TICKS
    switch_ticks: int = DEFAULT_SWITCH_TICKS
    delete_delay: int = DEFAULT_DELETE_DELAY
    delete_grace: int = DEFAULT_DELETE_GRACE
    active: _RunningSpec | None = None
    staged: tuple[AccessSpec, int] | None = None  # (spec, earliest start tick)
    _removal_tick: int | None = field(default=None, repr=False)

    def stage(self, spec: AccessSpec, now: int) -> None:
        """Queue the delete-add-enable train for ``spec``.

        A later stage before activation replaces the pending spec, the way
        a host rebuilds its command train on resend.
        """
        self.staged = (spec, now + self.llrp_latency)

    def request_delete(self, now: int) -> None:
        if self.active is not None and self.active.delete_requested_at is None:
            self.active.delete_requested_at = now

    def tick(self, now: int, tag: Tag, channel: ChannelModel) -> OperationReport | None:
        """Advance one inventory round; returns the round's report, if any."""
        self._maybe_activate(now)
        if self.active is None:
            return self._inventory_report(now, tag, channel)
        report = self._execute_round(now, tag, channel)
        self._maybe_remove(now)
        return report

    # -- internals ----------------------------------------------------------

    def _maybe_activate(self, now: int) -> None:
        if self.active is not None or self.staged is None:
            return
        spec, ready = self.staged
        if self._removal_tick is not None:
            ready = max(ready, self._removal_tick + self.switch_ticks)
        if now >= ready:
            state = apply_accessspec_event(None, SpecEvent.ADD)
            state = apply_accessspec_event(state, SpecEvent.ENABLE)
            self.active = _RunningSpec(spec, state)
            self.staged = None

    def _maybe_remove(self, now: int) -> None:
        run = self.active
        if run is None:
            return
        # The operation frame ends at OCV successful operations; a slightly
        # larger bound on total rounds keeps frames from dragging on when
        # operations keep failing mid-series.
        fired = run.spec.stop_trigger and (
            run.success_count >= run.spec.ocv
            or run.total_rounds >= run.spec.ocv + FRAME_SLACK_ROUNDS
        )
        expired = False
        if run.delete_requested_at is not None:
            waited = now - run.delete_requested_at
            if run.spec.stop_trigger:
                expired = waited >= self.delete_grace
            else:
                expired = waited >= self.delete_delay
        if fired:
            run.state = apply_accessspec_event(run.state, SpecEvent.STOP_TRIGGER_FIRED)
        elif expired:
            run.state = apply_accessspec_event(run.state, SpecEvent.DELETE)
        else:
            return
        self.active = None
        self._removal_tick = now

    def _inventory_report(self, now: int, tag: Tag, channel: ChannelModel) -> OperationReport | None:
        # With no access spec the reader still inventories; a visible tag
        # yields a bare EPC report, an invisible one yields nothing.
        if not tag.powered:
            return None
        if channel.rng.random() < miss_probability(channel.d, channel.k_miss):
            return None
        return OperationReport(0, ReportResult.INVENTORY, tag.epc, now)

    def _execute_round(self, now: int, tag: Tag, channel: ChannelModel) -> OperationReport:
        run = self.active
        if run is None:
            raise NoActiveSpec("no active spec to execute")
        run.total_rounds += 1
        spec = run.spec
        epc_at_start = tag.epc if tag.powered else NO_TAG_EPC

        if not spec.is_blockwrite:
            outcome = channel.deliver_word(tag.powered)
            if outcome is Delivery.LOST:
                return OperationReport(spec.spec_id, ReportResult.NO_TAG_SEEN, NO_TAG_EPC, now)
            if outcome is Delivery.CORRUPTED:
                # Per-command CRC16 catches the damage; the tag stays silent.
                tag.handle_basic_write(spec.words[0], crc_ok=False)
                return OperationReport(spec.spec_id, ReportResult.ERROR, epc_at_start, now)
            tag.handle_basic_write(spec.words[0], crc_ok=True)
            run.success_count += 1
            return OperationReport(spec.spec_id, ReportResult.SUCCESS, epc_at_start, now)

        # BlockWrite: one sub-command per word, no per-word CRC16, so a
        # corrupted word is written and replied to; only a lost word stops
        # the series.
        tag.series_reset()
        for index in range(len(spec.words)):
            outcome = channel.deliver_word(tag.powered)
            if outcome is not Delivery.LOST and not tag.series_slot_alive(index + 1, channel.d):
                outcome = Delivery.LOST  # charge drained mid-series, no reply
            if outcome is Delivery.LOST:
                if index == 0:
                    return OperationReport(
                        spec.spec_id, ReportResult.NO_TAG_SEEN, NO_TAG_EPC, now
                    )
                return OperationReport(spec.spec_id, ReportResult.ERROR, epc_at_start, now)
            tag.series_word(spec.words[index], outcome is Delivery.CORRUPTED)
        tag.series_complete()
        run.success_count += 1
        return OperationReport(spec.spec_id, ReportResult.SUCCESS, epc_at_start, now)
