"""Tool registry and the in-band tool-call wire format.

A tool call travels in the text layer as ``tool_call_open``, the UTF-8 bytes
of a compact JSON object ``{"name": ..., "arguments": {...}}``, then
``tool_call_close``. The span is never voiced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

import jsonschema

from .errors import ParseError, ToolNotFoundError
from .vocab import ByteTextCodec, VocabSpec

FALLBACK_TEMPLATE = "Sorry, I can't reach the {name} service right now."


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "arguments": dict(self.arguments)}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"), ensure_ascii=False, sort_keys=True)


def parse_tool_call(raw: str) -> ToolCall:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"tool call is not valid JSON: {e}", raw=raw) from None
    if not isinstance(obj, dict) or not isinstance(obj.get("name"), str):
        raise ParseError("tool call must be an object with a string 'name'", raw=raw)
    args = obj.get("arguments", {})
    if not isinstance(args, dict):
        raise ParseError("tool call 'arguments' must be an object", raw=raw)
    return ToolCall(obj["name"], args)


def encode_tool_call(vocab: VocabSpec, codec: ByteTextCodec, call: ToolCall) -> list[int]:
    r = vocab.reserved
    return [r.tool_call_open, *codec.encode(call.dumps()), r.tool_call_close]


def find_tool_spans(vocab: VocabSpec, ids) -> list[tuple[int, int]]:
    """Index pairs ``(open, close)`` of every marker span, inclusive.

    Raises ParseError on a nested open, a stray close, or an unclosed span.
    """
    r = vocab.reserved
    spans = []
    start = None
    for i, t in enumerate(ids):
        if t == r.tool_call_open:
            if start is not None:
                raise ParseError(f"nested tool_call_open at position {i}")
            start = i
        elif t == r.tool_call_close:
            if start is None:
                raise ParseError(f"tool_call_close without open at position {i}")
            spans.append((start, i))
            start = None
    if start is not None:
        raise ParseError(f"tool_call_open at position {start} is never closed")
    return spans


@dataclass
class ToolSpec:
    name: str
    fn: Optional[Callable[[Mapping[str, Any]], str]] = None
    description: str = ""
    parameters_schema: Optional[dict] = None


def web_search_stub(arguments: Mapping[str, Any]) -> str:
    query = arguments.get("query", "")
    return f"Top result for '{query}': no live search backend is configured."


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, ToolSpec] = {}

    @classmethod
    def default(cls) -> "ToolRegistry":
        reg = cls()
        reg.register(
            "web_search",
            web_search_stub,
            description="Search the web for up-to-date information.",
            parameters_schema={
                "type": "object",
                "properties": {"query": {"type": "string"}},
                "required": ["query"],
            },
        )
        return reg

    @classmethod
    def from_json(cls, source, stubs: Mapping[str, Callable] | None = None) -> "ToolRegistry":
        """Load ``[{"name", "description", "parameters_schema"}]`` from a path or list.

        Callables come from ``stubs`` by name; the built-in web_search stub is
        always available. A declared tool without a callable raises on call.
        """
        if isinstance(source, (str, Path)):
            source = json.loads(Path(source).read_text())
        stubs = {"web_search": web_search_stub, **(stubs or {})}
        reg = cls()
        for entry in source:
            name = entry["name"]
            reg.register(name, stubs.get(name), entry.get("description", ""), entry.get("parameters_schema"))
        return reg

    def register(self, name, fn=None, description="", parameters_schema=None) -> None:
        self._tools[name] = ToolSpec(name, fn, description, parameters_schema)

    def __contains__(self, name) -> bool:
        return name in self._tools

    def names(self) -> list[str]:
        return sorted(self._tools)

    def get(self, name) -> ToolSpec:
        try:
            return self._tools[name]
        except KeyError:
            raise ToolNotFoundError(name) from None

    def call(self, call: ToolCall) -> str:
        spec = self.get(call.name)
        if spec.fn is None:
            raise ToolNotFoundError(call.name)
        if spec.parameters_schema is not None:
            try:
                jsonschema.validate(dict(call.arguments), spec.parameters_schema)
            except jsonschema.ValidationError as e:
                raise ParseError(f"arguments for {call.name} rejected: {e.message}", raw=call.dumps()) from None
        return str(spec.fn(call.arguments))

    def describe(self) -> list[dict]:
        return [
            {"name": t.name, "description": t.description, "parameters_schema": t.parameters_schema}
            for t in self._tools.values()
        ]
