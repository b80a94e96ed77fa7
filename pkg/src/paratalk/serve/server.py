"""Half-duplex streaming service over a plain TCP socket.

Per connection the server reads one complete query (``audio_chunk`` and/or
``text_delta`` messages closed by ``end``), runs the duplex gate, decodes,
and streams the response back. It does not read while a response is being
written; anything the client sends meanwhile waits in the socket buffer
and is read as the next query.
"""

from __future__ import annotations

import codecs
import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field
from typing import BinaryIO, Callable, Optional

import numpy as np

from ..config import RuntimeConfig
from ..conversation import ConversationState, commit_response, serialize_prompt
from ..decoder import (
    AudioChunk,
    DecodeSession,
    Done,
    EmotionDetected,
    LabelPassthroughClassifier,
    TextDelta,
    decode_stream,
    gate,
)
from ..errors import ParseError
from ..frontend import encode_speech
from ..tools import parse_tool_call
from ..vocab import ByteTextCodec, emotion_token
from . import wire
from .wire import WireMessage

log = logging.getLogger(__name__)

MAX_LINE = 1 << 22


@dataclass
class QueryTimings:
    """Server-side stamps for one answered query."""

    receipt_complete: float
    first_chunk: Optional[float] = None
    step_times: list[float] = field(default_factory=list)


class IOLog:
    """Ordered record of every line read and written on a connection."""

    def __init__(self):
        self.events: list[tuple[str, bytes]] = []
        self._lock = threading.Lock()

    def add(self, direction: str, line: bytes) -> None:
        with self._lock:
            self.events.append((direction, line))


class _TextRouter:
    """Turns text-layer ids into text deltas and tool-call messages."""

    def __init__(self, config: RuntimeConfig):
        self.r = config.vocab.reserved
        self.codec = ByteTextCodec(config.vocab)
        self.utf8 = codecs.getincrementaldecoder("utf-8")(errors="replace")
        self.span: Optional[list[int]] = None

    def feed(self, ids) -> list[WireMessage]:
        out = []
        for t in ids:
            if t == self.r.tool_call_open:
                self.span = []
            elif t == self.r.tool_call_close and self.span is not None:
                raw = self.codec.decode(self.span)
                self.span = None
                try:
                    call = parse_tool_call(raw)
                except ParseError as e:
                    out.append(WireMessage.error("bad_tool_call", str(e)))
                else:
                    out.append(WireMessage("tool_call", call.to_json()))
            elif self.span is not None:
                self.span.append(t)
            elif self.codec.is_byte(t):
                s = self.utf8.decode(bytes([t - self.codec.offset]))
                if s:
                    out.append(WireMessage.text(s))
        return out

    def flush(self) -> list[WireMessage]:
        s = self.utf8.decode(b"", final=True)
        return [WireMessage.text(s)] if s else []


class Connection:
    """One client connection: conversation state plus the read/respond loop."""

    def __init__(
        self,
        rfile: BinaryIO,
        wfile: BinaryIO,
        config: RuntimeConfig,
        classifier=None,
        predictor_factory: Optional[Callable] = None,
        clock: Callable[[], float] = time.perf_counter,
        iolog: Optional[IOLog] = None,
        timings: Optional[list] = None,
    ):
        self.rfile, self.wfile = rfile, wfile
        self.config = config
        self.classifier = classifier or LabelPassthroughClassifier()
        self.predictor_factory = predictor_factory or config.make_predictor
        self.clock = clock
        self.iolog = iolog
        self.timings = timings
        self.codec = ByteTextCodec(config.vocab)
        self.state = ConversationState(config.vocab, active_speaker=config.speaker)

    def send(self, msg: WireMessage) -> None:
        line = wire.encode(msg)
        if self.iolog is not None:
            self.iolog.add("write", line)
        self.wfile.write(line)
        self.wfile.flush()

    def _readline(self) -> Optional[bytes]:
        line = self.rfile.readline(MAX_LINE)
        if not line:
            return None
        if self.iolog is not None:
            self.iolog.add("read", line)
        if not line.endswith(b"\n") and len(line) >= MAX_LINE:
            raise ParseError("message exceeds the line limit")
        return line

    def run(self) -> None:
        while True:
            try:
                query = self._read_query()
            except ParseError as e:
                self.send(WireMessage.error("malformed_message", str(e)))
                return
            if query is None:
                return
            self._respond(*query)

    def _read_query(self):
        pcm: list[bytes] = []
        text: list[str] = []
        while True:
            line = self._readline()
            if line is None:
                return None
            msg = wire.decode(line)
            if msg.type == "audio_chunk":
                pcm.append(msg.pcm_bytes())
            elif msg.type == "text_delta":
                text.append(msg.payload["text"])
            elif msg.type == "end":
                return b"".join(pcm), "".join(text), msg.payload
            else:
                raise ParseError(f"clients may not send {msg.type} messages")

    def _respond(self, pcm: bytes, text: str, end: dict) -> None:
        if not pcm and not text:
            self.send(WireMessage.error("empty_query", "query carried no audio and no text"))
            return
        if len(pcm) % 2:
            self.send(WireMessage.error("malformed_message", "PCM16 payload has an odd byte count"))
            return
        stamps = QueryTimings(receipt_complete=self.clock())
        cfg = self.config
        session = DecodeSession(
            self.predictor_factory(), cfg.vocab, cfg.pattern,
            chunk_frames=cfg.chunk_frames, max_steps=cfg.max_steps, clock=self.clock,
        )
        descriptor = {"label": end.get("label"), "score": end.get("score"), "has_audio": bool(pcm), "text": text}
        decision = gate(self.classifier, descriptor, cfg.gate_threshold, session=session)
        if not decision.respond:
            self.send(WireMessage.end("gated_out", detail=decision.reason.value))
            return

        if pcm:
            feats = encode_speech(np.frombuffer(pcm, dtype="<i2").astype(np.int16))
            self.state.add_user_speech(feats, transcript=self.codec.encode(text) if text else ())
        else:
            self.state.add_user_text(self.codec.encode(text))
        prompt = serialize_prompt(self.state)

        router = _TextRouter(cfg)
        text_ids: list[int] = []
        emotion = None
        for ev in decode_stream(session, prompt, emotion=cfg.emotion):
            if isinstance(ev, EmotionDetected):
                emotion = ev.label
                self.send(WireMessage("emotion", {"label": ev.label}))
            elif isinstance(ev, TextDelta):
                text_ids.extend(ev.ids)
                for m in router.feed(ev.ids):
                    self.send(m)
            elif isinstance(ev, AudioChunk):
                if stamps.first_chunk is None:
                    stamps.first_chunk = self.clock()
                self.send(WireMessage.audio(wire.placeholder_pcm(ev.frames), seq=ev.index))
            elif isinstance(ev, Done):
                for m in router.flush():
                    self.send(m)
                self.send(WireMessage.end("truncated" if ev.truncated else "complete"))
        lead = [emotion_token(cfg.vocab, emotion)] if emotion else []
        commit_response(self.state, lead + text_ids)
        stamps.step_times = list(session.step_times)
        if self.timings is not None:
            self.timings.append(stamps)


def handle_connection(rfile, wfile, config: RuntimeConfig, **kwargs) -> Connection:
    conn = Connection(rfile, wfile, config, **kwargs)
    conn.run()
    return conn


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        srv = self.server
        try:
            handle_connection(self.rfile, self.wfile, srv.runtime, **srv.connection_kwargs)
        except (BrokenPipeError, ConnectionResetError):
            log.info("client %s went away", self.client_address)


class ChatServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, runtime: RuntimeConfig, **connection_kwargs):
        self.runtime = runtime
        self.connection_kwargs = connection_kwargs
        super().__init__(address, _Handler)


def parse_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        raise ValueError(f"expected host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


def serve(address: str, config: RuntimeConfig, **connection_kwargs) -> None:
    with ChatServer(parse_address(address), config, **connection_kwargs) as srv:
        log.info("listening on %s:%d", *srv.server_address)
        srv.serve_forever()


# ------------------------------------------------------------------ client


def query_messages(pcm=None, text: Optional[str] = None, label: Optional[str] = None,
                   chunk_samples: int = 3200) -> list[WireMessage]:
    """Split a query into the messages a client sends, ``end`` last."""
    msgs = []
    if pcm is not None:
        raw = np.asarray(pcm, dtype="<i2").tobytes()
        step = 2 * chunk_samples
        for i in range(0, len(raw), step):
            msgs.append(WireMessage.audio(raw[i:i + step]))
    if text:
        msgs.append(WireMessage.text(text))
    msgs.append(WireMessage.end(label=label))
    return msgs


def read_response(rfile) -> list[WireMessage]:
    """Read server messages up to and including ``end`` or ``error``."""
    out = []
    while True:
        line = rfile.readline()
        if not line:
            return out
        msg = wire.decode(line)
        out.append(msg)
        if msg.type in ("end", "error"):
            return out


def ask(address: tuple[str, int], messages: list[WireMessage], timeout: float = 10.0) -> list[WireMessage]:
    """One-shot client: connect, send a query, return the response messages."""
    with socket.create_connection(address, timeout=timeout) as sock:
        sock.sendall(b"".join(wire.encode(m) for m in messages))
        with sock.makefile("rb") as rfile:
            return read_response(rfile)
