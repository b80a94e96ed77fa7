"""Latency accounting for the half-duplex service.

total        client send-complete -> first audio_chunk received by the client
first chunk  server receipt-complete -> first AudioChunk produced by the decoder
per step     mean wall time of one predictor step, pooled over all runs
network      total - first chunk (by construction)

Every timestamp comes from an injectable clock, so the identities can be
checked exactly with a virtual clock even though absolute numbers depend on
the hardware. The simulated scenario keeps virtual time as Fractions, so its
reports carry no rounding error until they are written out as JSON.
"""

from __future__ import annotations

import io
import logging
import socket
import threading
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from statistics import mean
from typing import Callable, Optional, Sequence

from ..config import RuntimeConfig
from . import wire
from .server import ChatServer, Connection, query_messages
from .wire import WireMessage

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyStamps:
    client_send_complete: float
    client_first_chunk: float
    server_receipt_complete: float
    server_first_chunk: float
    step_durations: tuple[float, ...] = ()

    @property
    def total(self) -> float:
        return self.client_first_chunk - self.client_send_complete

    @property
    def first_chunk(self) -> float:
        return self.server_first_chunk - self.server_receipt_complete


@dataclass
class LatencyReport:
    total_s: float
    first_chunk_s: float
    per_step_s: float
    derived_network_s: float
    runs: int
    failed_runs: int = 0
    partial: bool = False
    stamps: list = field(default_factory=list)

    @classmethod
    def from_stamps(cls, stamps: Sequence[LatencyStamps], failed_runs: int = 0) -> "LatencyReport":
        if not stamps:
            return cls(0.0, 0.0, 0.0, 0.0, runs=0, failed_runs=failed_runs, partial=True)
        total = mean(s.total for s in stamps)
        first = mean(s.first_chunk for s in stamps)
        steps = [d for s in stamps for d in s.step_durations]
        return cls(
            total_s=total,
            first_chunk_s=first,
            per_step_s=mean(steps) if steps else 0.0,
            derived_network_s=total - first,
            runs=len(stamps),
            failed_runs=failed_runs,
            partial=failed_runs > 0,
            stamps=list(stamps),
        )

    def to_dict(self, with_stamps: bool = True) -> dict:
        d = _floats(asdict(self))
        if not with_stamps:
            d.pop("stamps")
        return d


def _floats(obj):
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_floats(v) for v in obj]
    return obj


def measure_latency(runs: int, scenario: Callable[[int], LatencyStamps]) -> LatencyReport:
    """Run ``scenario(i)`` for ``i < runs`` and average the stamps.

    A failing run is logged and counted; the report is then flagged partial.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    stamps, failed = [], 0
    for i in range(runs):
        try:
            stamps.append(scenario(i))
        except Exception:  # noqa: BLE001 - any scenario failure yields a partial report
            log.exception("latency run %d failed", i)
            failed += 1
    return LatencyReport.from_stamps(stamps, failed_runs=failed)


class VirtualClock:
    """Manually advanced clock; only moves when told to."""

    def __init__(self, start=0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("time does not run backwards")
        self.now += dt


class _CostedPredictor:
    """Wraps a predictor so reset and step advance a virtual clock."""

    def __init__(self, inner, clock: VirtualClock, prefill_s: float, step_s: float):
        self.inner, self.clock = inner, clock
        self.prefill_s, self.step_s = prefill_s, step_s

    def reset(self, prompt=()):
        self.inner.reset(prompt)
        self.clock.advance(self.prefill_s)

    def step(self, grid):
        p = self.inner.step(grid)
        self.clock.advance(self.step_s)
        return p

    def clone(self):
        return _CostedPredictor(self.inner.clone(), self.clock, self.prefill_s, self.step_s)


class _FirstChunkWatch(io.BytesIO):
    """Output buffer that stamps when the first audio_chunk line is written."""

    def __init__(self, clock):
        super().__init__()
        self.clock = clock
        self.first_chunk_at: Optional[float] = None

    def write(self, b):
        if self.first_chunk_at is None and b.startswith(b'{"') and b'"type":"audio_chunk"' in b:
            self.first_chunk_at = self.clock()
        return super().write(b)


@dataclass
class SimulatedScenario:
    """Deterministic in-process run on a virtual clock.

    The real server code runs against in-memory streams. Predictor prefill and
    steps cost fixed virtual time; the network adds ``uplink_s`` before the
    server sees the query and ``downlink_s`` before the client sees the first
    chunk.
    """

    config: RuntimeConfig
    messages: Sequence[WireMessage]
    prefill_s: float = 0.0
    step_s: float = 0.0
    uplink_s: float = 0.0
    downlink_s: float = 0.0

    def __call__(self, run: int = 0) -> LatencyStamps:
        clock = VirtualClock(Fraction(0))
        prefill, step, up, down = (Fraction(str(x)) for x in
                                   (self.prefill_s, self.step_s, self.uplink_s, self.downlink_s))
        timings: list = []
        rfile = io.BytesIO(b"".join(wire.encode(m) for m in self.messages))
        wfile = _FirstChunkWatch(clock)
        send_complete = clock()
        clock.advance(up)
        conn = Connection(
            rfile, wfile, self.config,
            predictor_factory=lambda: _CostedPredictor(self.config.make_predictor(), clock, prefill, step),
            clock=clock, timings=timings,
        )
        conn.run()
        if not timings or timings[0].first_chunk is None or wfile.first_chunk_at is None:
            raise RuntimeError("scenario produced no audio chunk")
        t = timings[0]
        return LatencyStamps(
            client_send_complete=send_complete,
            client_first_chunk=wfile.first_chunk_at + down,
            server_receipt_complete=t.receipt_complete,
            server_first_chunk=t.first_chunk,
            step_durations=tuple(t.step_times),
        )


@dataclass
class LoopbackScenario:
    """Real TCP round trip on localhost timed with ``clock``.

    Send-complete is stamped when ``sendall`` returns, which on loopback can
    be after the server thread already started decoding, so the derived
    network cost may come out slightly negative. Use the simulated scenario
    when the identities must hold exactly.
    """

    config: RuntimeConfig
    messages: Sequence[WireMessage]
    clock: Callable[[], float] = time.perf_counter

    def __call__(self, run: int = 0) -> LatencyStamps:
        timings: list = []
        with ChatServer(("127.0.0.1", 0), self.config, clock=self.clock, timings=timings) as srv:
            th = threading.Thread(target=srv.serve_forever, daemon=True)
            th.start()
            try:
                with socket.create_connection(srv.server_address, timeout=30) as sock:
                    rfile = sock.makefile("rb")
                    sock.sendall(b"".join(wire.encode(m) for m in self.messages))
                    send_complete = self.clock()
                    first = None
                    while True:
                        line = rfile.readline()
                        if not line:
                            break
                        msg = wire.decode(line)
                        if msg.type == "audio_chunk" and first is None:
                            first = self.clock()
                        if msg.type in ("end", "error"):
                            break
                    rfile.close()
            finally:
                srv.shutdown()
                th.join()
        if first is None or not timings or timings[0].first_chunk is None:
            raise RuntimeError("no audio chunk received")
        t = timings[0]
        return LatencyStamps(send_complete, first, t.receipt_complete, t.first_chunk, tuple(t.step_times))


def default_messages() -> list[WireMessage]:
    return query_messages(text="what is the weather like today?")
