"""Scenario orchestration: config files, distance profiles, CSV artifacts.

A scenario wires the whole stack together (hex file -> host -> reader ->
tag -> channel), runs it ``repeats`` times with per-run derived seeds and
writes one transfer log CSV per run plus a summary CSV.  Identical config
and seed produce byte-identical outputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .channel import DEFAULT_D_REF_CM, DEFAULT_K_MISS, ChannelModel
from .host import HostConfig, HostSession, SessionResult, Variant
from .ihex import RecordMatrix, parse_file
from .metrics import SessionMetrics, compute_metrics
from .protocol import ThrottleParams
from .reader import Reader
from .tag import PowerModel, Tag, distance_brownout_prob

DEFAULT_ROUNDS_PER_SEC = 60

SUMMARY_COLUMNS = ["run", "completed", "t", "m_t", "m_r", "p_r", "mean_S_p", "theta"]
LOG_COLUMNS = ["round", "event", "i", "j", "S_p", "result", "epc"]
TRACE_COLUMNS = ["round", "d_cm"]


class ScenarioError(ValueError):
    pass


@dataclass
class DistanceProfile:
    """Static position or a triangle-wave oscillation between two bounds."""

    kind: str = "static"  # "static" | "oscillate"
    d_cm: float = 20.0
    min_cm: float = 20.0
    max_cm: float = 90.0
    speed_m_per_s: float = 0.1

    def at(self, round_no: int, rounds_per_sec: float) -> float:
        if self.kind == "static":
            return self.d_cm
        span = self.max_cm - self.min_cm
        if span <= 0:
            return self.min_cm
        pos = (self.speed_m_per_s * 100.0) * (round_no / rounds_per_sec)
        cycle = pos % (2 * span)
        return self.min_cm + (cycle if cycle <= span else 2 * span - cycle)


@dataclass
class ScenarioConfig:
    hex_file: str = ""
    protocol: Variant = Variant.EX
    s_p: int | None = None  # None = throttle
    ocv: int = 15
    n_threshold: int = 20
    r_max: int = 3
    m_threshold: int = 10
    t_u: int = 1
    t_de: int = -2
    t_dl: int = -3
    s_max: int = 16
    profile: DistanceProfile = field(default_factory=DistanceProfile)
    d_ref_cm: float = DEFAULT_D_REF_CM
    k_miss: float = DEFAULT_K_MISS
    seed: int = 1
    rounds_per_sec: int = DEFAULT_ROUNDS_PER_SEC
    repeats: int = 1
    bootloader: bool = False
    brownout: float | None = None  # None = derive from distance
    write_fault_prob: float = 0.0
    max_sim_seconds: float = 3600.0
    dump_fram: bool = False  # write each run's memory image next to its log

    def host_config(self) -> HostConfig:
        return HostConfig(
            variant=self.protocol,
            ocv=self.ocv,
            n_threshold=self.n_threshold,
            r_max=self.r_max,
            s_max=self.s_max,
            fixed_s_p=self.s_p,
            throttle_params=ThrottleParams(
                t_u=self.t_u, t_de=self.t_de, t_dl=self.t_dl,
                m_threshold=self.m_threshold,
            ),
            use_bootloader=self.bootloader,
            max_rounds=int(self.max_sim_seconds * self.rounds_per_sec),
        )


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config_text(text: str) -> ScenarioConfig:
    """Parse the flat ``key = value`` config format ('#' starts a comment)."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip().lower()] = val.strip()

    cfg = ScenarioConfig()
    profile = DistanceProfile()

    def pop_num(key: str, cast, default):
        if key not in values:
            return default
        raw = values.pop(key)
        try:
            return cast(raw)
        except ValueError:
            raise ScenarioError(f"{key}: cannot parse {raw!r}") from None

    cfg.hex_file = values.pop("hex_file", "")
    proto = values.pop("protocol", "ex").lower()
    if proto not in ("ex", "basic"):
        raise ScenarioError(f"protocol must be 'ex' or 'basic', got {proto!r}")
    cfg.protocol = Variant.EX if proto == "ex" else Variant.BASIC

    raw_sp = values.pop("s_p", "throttle").lower()
    if raw_sp == "throttle":
        cfg.s_p = None
    else:
        try:
            cfg.s_p = int(raw_sp)
        except ValueError:
            raise ScenarioError(f"s_p must be an integer or 'throttle', got {raw_sp!r}") from None

    cfg.ocv = pop_num("ocv", int, cfg.ocv)
    cfg.n_threshold = pop_num("n_threshold", int, cfg.n_threshold)
    cfg.r_max = pop_num("r_max", int, cfg.r_max)
    cfg.m_threshold = pop_num("m_threshold", int, cfg.m_threshold)
    cfg.t_u = pop_num("t_u", int, cfg.t_u)
    cfg.t_de = pop_num("t_de", int, cfg.t_de)
    cfg.t_dl = pop_num("t_dl", int, cfg.t_dl)
    cfg.s_max = pop_num("s_max", int, cfg.s_max)
    cfg.d_ref_cm = pop_num("d_ref_cm", float, cfg.d_ref_cm)
    cfg.k_miss = pop_num("k_miss", float, cfg.k_miss)
    cfg.seed = pop_num("seed", int, cfg.seed)
    cfg.rounds_per_sec = pop_num("rounds_per_sec", int, cfg.rounds_per_sec)
    cfg.repeats = pop_num("repeats", int, cfg.repeats)
    cfg.max_sim_seconds = pop_num("max_sim_seconds", float, cfg.max_sim_seconds)
    cfg.write_fault_prob = pop_num("write_fault_prob", float, cfg.write_fault_prob)

    for flag in ("bootloader", "dump_fram"):
        if flag in values:
            raw = values.pop(flag).lower()
            if raw not in _BOOL:
                raise ScenarioError(f"{flag} must be a boolean, got {raw!r}")
            setattr(cfg, flag, _BOOL[raw])
    if "brownout" in values:
        raw = values.pop("brownout").lower()
        cfg.brownout = None if raw == "auto" else float(raw)

    kind = values.pop("distance", "static").lower()
    if kind == "static":
        profile.kind = "static"
        profile.d_cm = pop_num("d_cm", float, profile.d_cm)
    elif kind == "oscillate":
        profile.kind = "oscillate"
        profile.min_cm = pop_num("d_min_cm", float, profile.min_cm)
        profile.max_cm = pop_num("d_max_cm", float, profile.max_cm)
        profile.speed_m_per_s = pop_num("speed_m_per_s", float, profile.speed_m_per_s)
        if profile.min_cm >= profile.max_cm:
            raise ScenarioError("oscillate needs d_min_cm < d_max_cm")
    else:
        raise ScenarioError(f"distance must be 'static' or 'oscillate', got {kind!r}")
    cfg.profile = profile

    if values:
        raise ScenarioError(f"unknown config keys: {', '.join(sorted(values))}")
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text())


@dataclass
class RunOutcome:
    run: int
    result: SessionResult
    metrics: SessionMetrics
    tag: Tag
    matrix: RecordMatrix


@dataclass
class ScenarioOutcome:
    runs: list[RunOutcome]

    @property
    def completed_runs(self) -> int:
        return sum(1 for r in self.runs if r.result.completed)

    @property
    def all_completed(self) -> bool:
        return self.completed_runs == len(self.runs)


def run_single(config: ScenarioConfig, matrix: RecordMatrix, run_index: int) -> RunOutcome:
    """Execute one seeded repetition of the scenario."""
    base = config.seed * 1_000_003 + run_index * 7919
    channel = ChannelModel(seed=base + 1, d_ref_cm=config.d_ref_cm, k_miss=config.k_miss)
    power = PowerModel(seed=base + 2)
    tag = Tag(
        write_fault_prob=config.write_fault_prob,
        fault_seed=base + 3,
        start_in_bootloader=config.bootloader,
    )
    reader = Reader()
    session = HostSession(config.host_config(), matrix)
    rps = float(config.rounds_per_sec)
    profile = config.profile

    def distance_cm(round_no: int) -> float:
        return profile.at(round_no, rps)

    def power_step(round_no: int) -> bool:
        if config.brownout is not None:
            p = config.brownout
        else:
            p = distance_brownout_prob(distance_cm(round_no) / config.d_ref_cm)
        return power.step(p)

    result = session.run(reader, tag, channel, power_step, distance_cm)
    metrics = compute_metrics(result, rps)
    return RunOutcome(run_index, result, metrics, tag, matrix)


def run_scenario(config: ScenarioConfig, out_dir: str | Path | None = None,
                 matrix: RecordMatrix | None = None) -> ScenarioOutcome:
    """Run all repeats and optionally write the CSV artifacts."""
    if matrix is None:
        if not config.hex_file:
            raise ScenarioError("config does not name a hex_file")
        matrix = parse_file(Path(config.hex_file).read_text())
    runs = [run_single(config, matrix, i) for i in range(config.repeats)]
    outcome = ScenarioOutcome(runs)
    if out_dir is not None:
        write_artifacts(config, outcome, Path(out_dir))
    return outcome


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_artifacts(config: ScenarioConfig, outcome: ScenarioOutcome, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in sorted(outcome.runs, key=lambda r: r.run):
            m = r.metrics
            w.writerow([
                r.run,
                int(r.result.completed),
                _fmt(m.t),
                m.m_t,
                m.m_r,
                _fmt(m.p_r),
                _fmt(m.mean_s_p),
                _fmt(m.theta),
            ])
    for r in outcome.runs:
        with open(out / f"run_{r.run:02d}_log.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for e in r.result.log.events:
                w.writerow([e.round_no, e.event, e.row, e.chunk,
                            _fmt(e.s_p), e.result, e.epc_hex])
        if config.dump_fram:
            r.tag.fram.dump(out / f"run_{r.run:02d}_fram.bin")
    longest = max(outcome.runs, key=lambda r: r.result.rounds)
    with open(out / "distance_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        step = max(1, config.rounds_per_sec // 4)
        for round_no in range(0, longest.result.rounds + 1, step):
            w.writerow([round_no, _fmt(config.profile.at(round_no, config.rounds_per_sec))])
