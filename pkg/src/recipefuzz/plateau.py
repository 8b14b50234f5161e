"""Sliding-window plateau detector.

Watches telemetry frames (cumulative exec/path/edge counters) and fires a
plateau event when, over the trailing window of W seconds, fewer than
theta_execs new executions AND fewer than theta_paths new paths have
accumulated. Both comparisons are strict ("fewer than"). The detector is
armed once per campaign by default; a cooldown-based re-arm variant exists
but is off by default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

ONCE_PER_CAMPAIGN = "once_per_campaign"
REARM_AFTER_COOLDOWN = "rearm_after_cooldown"


class NonMonotonicTelemetry(Exception):
    """A cumulative counter (or the clock) went backwards."""


@dataclass(frozen=True)
class TelemetryFrame:
    t: float
    execs_done: int
    paths_total: int
    edges_found: int


def frame_from_fuzzer_stats(stats) -> TelemetryFrame:
    """Build a frame from a fuzzer_stats surface (text or parsed mapping).

    Maps run_time to the frame clock and corpus_count to paths_total, so a
    stats file polled at any cadence can feed the detector directly.
    """
    if isinstance(stats, (str, bytes)):
        if isinstance(stats, bytes):
            stats = stats.decode()
        parsed = {}
        for line in stats.splitlines():
            if ":" in line:
                key, _, value = line.partition(":")
                parsed[key.strip()] = value.strip()
        stats = parsed
    return TelemetryFrame(
        t=float(stats["run_time"]),
        execs_done=int(float(stats["execs_done"])),
        paths_total=int(float(stats["corpus_count"])),
        edges_found=int(float(stats["edges_found"])),
    )


@dataclass(frozen=True)
class DetectorConfig:
    window_sec: float = 10.0
    theta_execs: int = 50
    theta_paths: int = 1
    rearm_policy: str = ONCE_PER_CAMPAIGN
    cooldown_sec: float = 0.0

    def __post_init__(self):
        if self.window_sec <= 0:
            raise ValueError("window_sec must be > 0")
        if self.theta_execs < 1 or self.theta_paths < 1:
            raise ValueError("thresholds must be >= 1")
        if self.rearm_policy not in (ONCE_PER_CAMPAIGN, REARM_AFTER_COOLDOWN):
            raise ValueError(f"unknown rearm policy {self.rearm_policy!r}")


@dataclass(frozen=True)
class PlateauEvent:
    fired_at: float
    window_start: float
    delta_execs: int
    delta_paths: int


@dataclass(frozen=True)
class DetectorState:
    """Frames retained for the trailing window, plus arming bookkeeping."""

    window_sec: float
    frames: tuple[TelemetryFrame, ...] = ()
    fired_count: int = 0
    last_fired_at: float = float("-inf")

    @classmethod
    def for_config(cls, config: DetectorConfig) -> "DetectorState":
        return cls(window_sec=config.window_sec)


def observe(state: DetectorState, frame: TelemetryFrame) -> DetectorState:
    """Fold a telemetry frame into the window.

    Frames older than t - W are evicted, except that the newest such frame
    is kept as the window anchor so deltas always span at least W seconds
    even when frame timestamps jitter. Counters must be nondecreasing.
    """
    if state.frames:
        last = state.frames[-1]
        if frame.t < last.t:
            raise NonMonotonicTelemetry(f"time went backwards: {last.t} -> {frame.t}")
        for name in ("execs_done", "paths_total", "edges_found"):
            if getattr(frame, name) < getattr(last, name):
                raise NonMonotonicTelemetry(
                    f"{name} decreased: {getattr(last, name)} -> {getattr(frame, name)}"
                )
    frames = state.frames + (frame,)
    cutoff = frame.t - state.window_sec
    # index of the last frame at or before the cutoff: keep it as anchor
    anchor = 0
    for i, f in enumerate(frames):
        if f.t <= cutoff:
            anchor = i
        else:
            break
    return replace(state, frames=frames[anchor:])


def _armed(state: DetectorState, config: DetectorConfig, now: float) -> bool:
    if state.fired_count == 0:
        return True
    if config.rearm_policy == ONCE_PER_CAMPAIGN:
        return False
    return now >= state.last_fired_at + config.cooldown_sec


def check_plateau(
    state: DetectorState, config: DetectorConfig
) -> tuple[PlateauEvent | None, DetectorState]:
    """Evaluate the trailing window; returns (event_or_none, new_state).

    Pure in (state, config): no side effects, deterministic. Returns no
    event during warm-up (observed span < W) or while disarmed; firing
    disarms the detector per the rearm policy.
    """
    if len(state.frames) < 2:
        return None, state
    oldest, newest = state.frames[0], state.frames[-1]
    if newest.t - oldest.t < config.window_sec:
        return None, state
    if not _armed(state, config, newest.t):
        return None, state
    delta_execs = newest.execs_done - oldest.execs_done
    delta_paths = newest.paths_total - oldest.paths_total
    if delta_execs < config.theta_execs and delta_paths < config.theta_paths:
        event = PlateauEvent(
            fired_at=newest.t,
            window_start=oldest.t,
            delta_execs=delta_execs,
            delta_paths=delta_paths,
        )
        new_state = replace(
            state, fired_count=state.fired_count + 1, last_fired_at=newest.t
        )
        return event, new_state
    return None, state
