"""Hot-path mutation engine.

One sampled operator per call, dispatched against an input buffer under the
active compact recipe: focus ranges bias where the mutator writes, protect
ranges are never written, tokens come from the recipe's arena. An operator
that cannot apply (no writable offset, no tokens, empty splice corpus,
selector mismatch) degrades to a miss: the input is returned unchanged and
the loop never aborts or resamples.

Also hosts the havoc fallback used when no recipe is active, and the
dispatch-cost microbench.
"""

from __future__ import annotations

import hashlib
import multiprocessing
import random
import time
from dataclasses import dataclass

from .recipe import ByteRange, CompactRecipe, OperatorKind, Selector, choose_operator

ARITH_DELTAS = tuple(d for d in range(-35, 36) if d != 0)
ARITH_WIDTHS = (1, 2, 4)
OVERWRITE_CAP = 64
HAVOC_INSERT_CAP = 4

BENCH_CONFIGS = ("vanilla", "fp-empty", "fp-active")


class ZeroCalls(Exception):
    """bench_dispatch was asked to time zero calls."""


@dataclass(frozen=True)
class CorpusEntry:
    seed_id: str
    seed_hash: str
    data: bytes
    family: str = "default"


def make_entry(seed_id: str, data: bytes, family: str = "default") -> CorpusEntry:
    return CorpusEntry(seed_id, hashlib.sha256(data).hexdigest(), data, family)


@dataclass(frozen=True)
class MutationOutcome:
    """Result of one mutation call.

    Exactly one of hit/miss is true: hit means the sampled operator was
    applied (op_applied says which), miss means the call could not engage
    and output equals the input.
    """

    output: bytes
    op_applied: OperatorKind | None
    hit: bool
    miss: bool


def selector_matches(selector: Selector, entry: CorpusEntry) -> bool:
    """Whether a recipe's selector applies to a corpus entry.

    Mode "mode" is the global selector (the key names a campaign mode and
    is informational only); the other three match on entry identity.
    """
    if selector.mode == "mode":
        return True
    if selector.mode == "seed_id":
        return selector.key == entry.seed_id
    if selector.mode == "seed_hash":
        return selector.key == entry.seed_hash
    if selector.mode == "family":
        return selector.key == entry.family
    return False


def writable_intervals(
    focus: tuple[ByteRange, ...],
    protect: tuple[ByteRange, ...],
    input_len: int,
) -> list[tuple[int, int]]:
    """Half-open intervals the mutator may write, in ascending order.

    (focus ∩ [0, input_len)) minus protect when focus is non-empty,
    [0, input_len) minus protect otherwise. Inputs must be sorted and
    disjoint, which recipe lowering guarantees.
    """
    if focus:
        base = [
            (r.start, min(r.end, input_len)) for r in focus if r.start < input_len
        ]
    else:
        base = [(0, input_len)]
    if not protect:
        return [iv for iv in base if iv[0] < iv[1]]

    out: list[tuple[int, int]] = []
    for start, end in base:
        cur = start
        for p in protect:
            if p.end <= cur:
                continue
            if p.start >= end:
                break
            if p.start > cur:
                out.append((cur, p.start))
            cur = max(cur, p.end)
            if cur >= end:
                break
        if cur < end:
            out.append((cur, end))
    return out


def _pick_offset(intervals: list[tuple[int, int]], rng) -> int | None:
    total = sum(e - s for s, e in intervals)
    if total == 0:
        return None
    u = rng.randrange(total)
    for s, e in intervals:
        size = e - s
        if u < size:
            return s + u
        u -= size
    raise AssertionError("unreachable")


def _pick_run(intervals: list[tuple[int, int]], min_len: int, rng) -> tuple[int, int] | None:
    """Uniformly pick a start offset admitting a writable run of at least
    min_len bytes; returns (start, room) where room is the run length
    available from start within its interval."""
    total = sum(e - s - min_len + 1 for s, e in intervals if e - s >= min_len)
    if total <= 0:
        return None
    u = rng.randrange(total)
    for s, e in intervals:
        if e - s < min_len:
            continue
        count = e - s - min_len + 1
        if u < count:
            start = s + u
            return start, e - start
        u -= count
    raise AssertionError("unreachable")


def pick_writable_offset(
    focus: tuple[ByteRange, ...],
    protect: tuple[ByteRange, ...],
    input_len: int,
    rng,
) -> int | None:
    """Uniform writable offset, or None when focus/protect leave nothing."""
    if input_len < 1:
        raise ValueError("input_len must be >= 1")
    return _pick_offset(writable_intervals(focus, protect, input_len), rng)


def _op_bitflip(compact, data, corpus, rng, max_size):
    iv = writable_intervals(compact.focus_ranges, compact.protect_ranges, len(data))
    off = _pick_offset(iv, rng)
    if off is None:
        return None
    out = bytearray(data)
    out[off] ^= 1 << rng.randrange(8)
    return bytes(out)


def _op_overwrite_range(compact, data, corpus, rng, max_size):
    iv = writable_intervals(compact.focus_ranges, compact.protect_ranges, len(data))
    run = _pick_run(iv, 1, rng)
    if run is None:
        return None
    start, room = run
    length = rng.randint(1, min(room, OVERWRITE_CAP))
    out = bytearray(data)
    out[start : start + length] = rng.randbytes(length)
    return bytes(out)


def _op_insert_token(compact, data, corpus, rng, max_size):
    if compact.token_count == 0:
        return None
    tok = compact.token(rng.randrange(compact.token_count))
    if len(data) + len(tok) > max_size:
        return None
    iv = writable_intervals(compact.focus_ranges, compact.protect_ranges, len(data))
    off = _pick_offset(iv, rng)
    if off is None:
        return None
    return data[:off] + tok + data[off:]


def _op_arith(compact, data, corpus, rng, max_size):
    width = rng.choice(ARITH_WIDTHS)
    iv = writable_intervals(compact.focus_ranges, compact.protect_ranges, len(data))
    run = _pick_run(iv, width, rng)
    if run is None:
        return None
    start, _room = run
    delta = rng.choice(ARITH_DELTAS)
    endian = "little" if width == 1 else rng.choice(("little", "big"))
    value = int.from_bytes(data[start : start + width], endian)
    value = (value + delta) % (1 << (8 * width))
    out = bytearray(data)
    out[start : start + width] = value.to_bytes(width, endian)
    return bytes(out)


def _op_splice(compact, data, corpus, rng, max_size):
    if not corpus:
        return None
    donor = corpus[rng.randrange(len(corpus))].data
    if not donor:
        return None
    iv = writable_intervals(compact.focus_ranges, compact.protect_ranges, len(data))
    run = _pick_run(iv, 1, rng)
    if run is None:
        return None
    start, room = run
    excise = rng.randint(1, room)
    splice_len = rng.randint(1, len(donor))
    # Replacement length may differ from the excised length but the result
    # must stay within max_size.
    overflow = len(data) - excise + splice_len - max_size
    if overflow > 0:
        splice_len -= overflow
        if splice_len < 1:
            return None
    src = rng.randrange(len(donor) - splice_len + 1)
    return data[:start] + donor[src : src + splice_len] + data[start + excise :]


def _op_delete_block(compact, data, corpus, rng, max_size):
    if len(data) <= 1:
        return None
    iv = writable_intervals(compact.focus_ranges, compact.protect_ranges, len(data))
    run = _pick_run(iv, 1, rng)
    if run is None:
        return None
    start, room = run
    # Never delete the whole buffer: at least one byte survives.
    length = rng.randint(1, min(room, len(data) - 1))
    return data[:start] + data[start + length :]


def _op_dictionary_overwrite(compact, data, corpus, rng, max_size):
    if compact.token_count == 0:
        return None
    tok = compact.token(rng.randrange(compact.token_count))
    if len(tok) > len(data):
        return None
    iv = writable_intervals(compact.focus_ranges, compact.protect_ranges, len(data))
    run = _pick_run(iv, len(tok), rng)
    if run is None:
        return None
    start, _room = run
    out = bytearray(data)
    out[start : start + len(tok)] = tok
    return bytes(out)


_OP_TABLE = {
    OperatorKind.BitFlip: _op_bitflip,
    OperatorKind.OverwriteRange: _op_overwrite_range,
    OperatorKind.InsertToken: _op_insert_token,
    OperatorKind.Arith: _op_arith,
    OperatorKind.Splice: _op_splice,
    OperatorKind.DeleteBlock: _op_delete_block,
    OperatorKind.DictionaryOverwrite: _op_dictionary_overwrite,
}


def mutate(
    compact: CompactRecipe,
    data: bytes,
    corpus: tuple[CorpusEntry, ...],
    rng,
    max_size: int,
    seed: CorpusEntry | None = None,
) -> MutationOutcome:
    """Apply one recipe-sampled operator to data.

    Deterministic given (compact, data, corpus, rng state). When seed is
    provided, the recipe's selector is checked first and a mismatch is a
    recorded miss. Output length stays within [1, max_size] for every
    applied operator.
    """
    if len(data) < 1:
        raise ValueError("input must be at least 1 byte")
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    if seed is not None and not selector_matches(compact.selector, seed):
        return MutationOutcome(data, None, False, True)
    op = choose_operator(compact, rng)
    out = _OP_TABLE[op](compact, data, corpus, rng, max_size)
    if out is None:
        return MutationOutcome(data, None, False, True)
    return MutationOutcome(out, op, True, False)


def havoc_mutate(data: bytes, rng, max_size: int) -> bytes:
    """Recipe-free fallback: one conventional random byte/bit edit.

    Used by the baseline ablation and by the bench configurations that run
    without an active recipe.
    """
    if len(data) < 1:
        raise ValueError("input must be at least 1 byte")
    kind = rng.randrange(4)
    if kind == 0:
        out = bytearray(data)
        out[rng.randrange(len(out))] ^= 1 << rng.randrange(8)
        return bytes(out)
    if kind == 1:
        out = bytearray(data)
        out[rng.randrange(len(out))] = rng.randrange(256)
        return bytes(out)
    if kind == 2:
        if len(data) == 1:
            return data
        off = rng.randrange(len(data) - 1)
        length = rng.randint(1, min(len(data) - 1 - off, OVERWRITE_CAP))
        return data[:off] + data[off + length :]
    length = rng.randint(1, HAVOC_INSERT_CAP)
    if len(data) + length > max_size:
        return data
    off = rng.randrange(len(data))
    return data[:off] + rng.randbytes(length) + data[off:]


def dispatch_mutation(
    active: CompactRecipe | None,
    data: bytes,
    corpus: tuple[CorpusEntry, ...],
    rng,
    max_size: int,
    seed: CorpusEntry | None = None,
) -> MutationOutcome:
    """Full dispatch path: recipe mutation when a recipe is active, havoc
    fallthrough otherwise. The fallthrough neither hits nor misses the
    recipe accounting (there is no recipe to account against)."""
    if active is not None:
        return mutate(active, data, corpus, rng, max_size, seed)
    return MutationOutcome(havoc_mutate(data, rng, max_size), None, False, False)


@dataclass(frozen=True)
class BenchReport:
    config_name: str
    calls: int
    elapsed_ns: int
    calls_per_sec: float
    ns_per_call: float


def format_bench_report(report: BenchReport) -> str:
    lines = [
        f"config        : {report.config_name}",
        f"calls         : {report.calls}",
        f"elapsed_ns    : {report.elapsed_ns}",
        f"calls_per_sec : {report.calls_per_sec:.1f}",
        f"ns_per_call   : {report.ns_per_call:.1f}",
    ]
    return "\n".join(lines) + "\n"


def bench_dispatch(
    config: str,
    calls: int,
    corpus: tuple[CorpusEntry, ...],
    seed: int,
    max_size: int = 4096,
    active_recipe: CompactRecipe | None = None,
) -> BenchReport:
    """Time `calls` mutation calls over a fixed corpus.

    Configurations: vanilla applies havoc-equivalent edits through the same
    call surface; fp-empty runs the full dispatch path with no recipe
    installed; fp-active dispatches with a populated recipe. Corpus setup
    happens outside the timed region. Wall-clock numbers are hardware- and
    load-relative: the harness refuses to run alongside worker children of
    this process, and results should come from an otherwise idle machine.
    """
    if calls < 1:
        raise ZeroCalls(f"calls must be >= 1, got {calls}")
    if config not in BENCH_CONFIGS:
        raise ValueError(f"unknown bench config {config!r}")
    if not corpus:
        raise ValueError("bench corpus must be non-empty")
    if multiprocessing.active_children():
        raise RuntimeError("bench requires single-process execution")
    if config == "fp-active" and active_recipe is None:
        raise ValueError("fp-active requires an active recipe")

    rng = random.Random(seed)
    n = len(corpus)
    inputs = [entry.data for entry in corpus]

    if config == "vanilla":
        t0 = time.perf_counter_ns()
        for i in range(calls):
            havoc_mutate(inputs[i % n], rng, max_size)
        t1 = time.perf_counter_ns()
    elif config == "fp-empty":
        t0 = time.perf_counter_ns()
        for i in range(calls):
            dispatch_mutation(None, inputs[i % n], corpus, rng, max_size)
        t1 = time.perf_counter_ns()
    else:
        recipe = active_recipe
        t0 = time.perf_counter_ns()
        for i in range(calls):
            dispatch_mutation(recipe, inputs[i % n], corpus, rng, max_size, corpus[i % n])
        t1 = time.perf_counter_ns()

    elapsed = max(t1 - t0, 1)
    return BenchReport(
        config_name=config,
        calls=calls,
        elapsed_ns=elapsed,
        calls_per_sec=calls / (elapsed / 1e9),
        ns_per_call=elapsed / calls,
    )
