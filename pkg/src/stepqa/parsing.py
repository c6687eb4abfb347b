"""Question parsing: natural language in, pattern chain out.

The template backend handles the fixed question shapes this project
generates and evaluates on. It decomposes the noun phrase of a question
into nested parts ("the book open on the table in the living room"
becomes book, table, living room), assigns each part a layer through a
built-in vocabulary and an optional scene graph, and assembles the
chain. It is deterministic: the same text always parses the same way.

A gold backend replays the chain stored with a dataset record, and a
chat backend delegates extraction to a language model and validates
whatever comes back. Backends are tried in order; the first one that
produces a chain wins.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from . import prompts
from .llm_client import ChatClient
from .patterns import (
    PatternChain,
    PatternStructureError,
    SubGoal,
    TargetKind,
    make_chain,
    parse_pattern_string,
)
from .scene_graph import Layer, SceneGraph, alias_label, normalize_label, singularize

ROOM_LABELS = {
    "living room", "family room", "kitchen", "bedroom", "bathroom", "study",
    "office", "dining room", "hallway", "garage", "balcony", "laundry room",
    "guest room", "nursery", "pantry", "attic", "basement",
}

BIG_OBJECT_LABELS = {
    "sofa", "couch", "table", "coffee table", "dining table", "side table",
    "desk", "bed", "chair", "armchair", "bench", "stool", "bookshelf",
    "shelf", "wardrobe", "closet", "cabinet", "dresser", "nightstand",
    "counter", "refrigerator", "fridge", "oven", "stove", "microwave",
    "sink", "dishwasher", "washing machine", "toilet", "bathtub", "shower",
    "television", "tv stand", "piano", "mirror", "rug", "sofa bed", "crib",
}

SMALL_OBJECT_LABELS = {
    "book", "phone", "cell phone", "laptop", "tablet", "cup", "mug", "glass",
    "bottle", "plate", "bowl", "bag", "backpack", "purse", "wallet", "key",
    "pen", "pencil", "notebook", "remote", "pillow", "cushion", "blanket",
    "towel", "toy", "doll", "ball", "clock", "vase", "lamp", "plant",
    "potted plant", "candle", "box", "person", "cat", "dog", "magazine",
    "newspaper", "letter", "photo", "picture frame", "charger", "headphones",
    "glasses", "apple", "banana", "teapot", "kettle",
}

STATE_VALUES = {
    "open", "closed", "folded", "unfolded", "empty", "full", "asleep",
    "awake", "lit", "unlit", "clean", "dirty", "tidy", "messy", "charging",
    "broken", "wet", "dry", "running", "stopped",
}

COLOR_VALUES = {
    "red", "blue", "green", "black", "white", "brown", "gray", "grey",
    "yellow", "purple", "orange", "pink", "beige", "silver", "gold",
    "turquoise", "navy", "cream",
}

VALUE_ATTRIBUTE = {v: "state" for v in STATE_VALUES}
VALUE_ATTRIBUTE.update({v: "color" for v in COLOR_VALUES})

GARMENTS = {
    "shirt", "t-shirt", "jacket", "dress", "sweater", "coat", "hat",
    "hoodie", "uniform", "suit", "top",
}

_ARTICLES = {"the", "a", "an"}

# Ordered longest first so multiword connectors win over their prefixes.
_CONNECTORS: tuple[tuple[str, ...], ...] = (
    ("on", "top", "of"),
    ("in", "front", "of"),
    ("held", "by"),
    ("carried", "by"),
    ("sitting", "on"),
    ("sitting", "in"),
    ("lying", "on"),
    ("lying", "in"),
    ("sleeping", "on"),
    ("sleeping", "in"),
    ("standing", "on"),
    ("standing", "in"),
    ("next", "to"),
    ("on",),
    ("in",),
    ("under",),
    ("beneath",),
    ("above",),
    ("below",),
    ("beside",),
    ("wearing",),
)

_RELATION_CANON = {
    "on": "on",
    "on top of": "on",
    "above": "above",
    "below": "below",
    "under": "below",
    "beneath": "below",
    "next to": "next-to",
    "beside": "next-to",
    "in": "in",
}


class EmptyQuestionError(ValueError):
    pass


class UnparsedQuestionError(ValueError):
    def __init__(self, question: str, detail: str = "") -> None:
        note = f": {detail}" if detail else ""
        super().__init__(f"no backend could parse {question!r}{note}")
        self.question = question


class ParseSource(Enum):
    TEMPLATE = "template"
    LLM = "llm"
    GOLD = "gold"


@dataclass
class ParsedQuestion:
    chain: PatternChain
    slots: dict[str, str]
    source: ParseSource


@dataclass
class _Part:
    """One noun-phrase segment, inner to outer order in the parts list."""

    label: str
    constraints: list[tuple[str, str]] = field(default_factory=list)
    connector: str | None = None
    layer: Layer | None = None
    ambiguous: bool = False


def _split_parts(np_text: str) -> list[_Part]:
    tokens = np_text.split()
    parts: list[_Part] = []
    current: list[str] = []
    pending: list[tuple[str, str]] = []
    i = 0
    while i < len(tokens):
        matched: tuple[str, ...] | None = None
        for conn in _CONNECTORS:
            if tuple(tokens[i : i + len(conn)]) == conn:
                matched = conn
                break
        if matched is None:
            current.append(tokens[i])
            i += 1
            continue
        conn_text = " ".join(matched)
        j = i + len(matched)
        # "in a black shirt" constrains the current part instead of nesting
        if conn_text in ("in", "wearing") and j < len(tokens):
            k = j
            if tokens[k] in ("a", "an"):
                k += 1
            adjs: list[str] = []
            while k < len(tokens) and tokens[k] not in GARMENTS:
                if tokens[k] in _ARTICLES or any(
                    tuple(tokens[k : k + len(c)]) == c for c in _CONNECTORS
                ):
                    break
                adjs.append(tokens[k])
                k += 1
            if k < len(tokens) and tokens[k] in GARMENTS and adjs:
                pending.append((tokens[k], " ".join(adjs)))
                i = k + 1
                continue
        if current:
            part = _finish_part(current, pending)
            part.connector = conn_text
            parts.append(part)
            current, pending = [], []
        i = j
    if current:
        parts.append(_finish_part(current, pending))
    return [p for p in parts if p.label]


def _finish_part(words: list[str], constraints: list[tuple[str, str]]) -> _Part:
    words = [w for w in words if w not in _ARTICLES]
    extra: list[tuple[str, str]] = []
    while len(words) >= 2 and " ".join(words) not in _ALL_KNOWN:
        if words[0] in VALUE_ATTRIBUTE:
            extra.append((VALUE_ATTRIBUTE[words[0]], words[0]))
            words = words[1:]
        elif words[-1] in VALUE_ATTRIBUTE:
            extra.append((VALUE_ATTRIBUTE[words[-1]], words[-1]))
            words = words[:-1]
        else:
            break
    return _Part(label=" ".join(words), constraints=list(constraints) + extra)


_ALL_KNOWN = {normalize_label(x) for x in ROOM_LABELS | BIG_OBJECT_LABELS | SMALL_OBJECT_LABELS}


def _assign_layer(part: _Part, graph: SceneGraph | None) -> None:
    norm = alias_label(part.label)
    if norm in {normalize_label(r) for r in ROOM_LABELS}:
        part.layer = Layer.ROOM
        return
    if graph is not None and graph.find_nodes(norm, Layer.ROOM):
        part.layer = Layer.ROOM
        return
    if norm in {normalize_label(b) for b in BIG_OBJECT_LABELS}:
        part.layer = Layer.BIG_OBJECT
        return
    if norm in {normalize_label(s) for s in SMALL_OBJECT_LABELS}:
        part.layer = Layer.SMALL_OBJECT
        return
    if graph is not None:
        if graph.resolve_label(norm, layer=Layer.BIG_OBJECT):
            part.layer = Layer.BIG_OBJECT
            return
        if graph.resolve_label(norm, layer=Layer.SMALL_OBJECT):
            part.layer = Layer.SMALL_OBJECT
            return
    # a label the prior graph does not know cannot be furniture
    part.layer = Layer.SMALL_OBJECT
    part.ambiguous = True


def _part_step(part: _Part, marked: bool = False) -> SubGoal:
    constraint = part.constraints[0] if part.constraints else None
    return SubGoal(
        layer=part.layer or Layer.SMALL_OBJECT,
        label=part.label,
        attribute_constraint=constraint,
        attribute_marked=marked,
    )


def _scope_slots(parts: list[_Part]) -> dict[str, str]:
    slots: dict[str, str] = {}
    for part in parts:
        if part.layer is Layer.ROOM and "room" not in slots:
            slots["room"] = part.label
        elif part.layer is Layer.BIG_OBJECT and "support" not in slots:
            slots["support"] = part.label
    return slots


def _with_alternative(chain: PatternChain, parts: list[_Part], kind: TargetKind) -> PatternChain:
    """Attach a big-object reading for an unknown target label, if it builds."""
    target = parts[0]
    if not target.ambiguous:
        return chain
    flipped = _Part(label=target.label, constraints=target.constraints, layer=Layer.BIG_OBJECT)
    try:
        ends_in_attribute = chain.steps[-1].is_attribute_step
        steps = [_part_step(p) for p in reversed(parts[1:])] + [
            _part_step(flipped, marked=ends_in_attribute)
        ]
        if ends_in_attribute:
            steps.append(
                SubGoal(
                    layer=Layer.BIG_OBJECT,
                    queried_attribute=chain.steps[-1].queried_attribute,
                )
            )
        alt = make_chain(steps, kind)
    except PatternStructureError:
        return chain
    return PatternChain(chain.steps, chain.target_kind, alternatives=(alt,))


class TemplateBackend:
    """Deterministic parser over the supported question templates."""

    name = "template"

    def __init__(self, graph: SceneGraph | None = None) -> None:
        self.graph = graph

    def parse(self, question: str) -> ParsedQuestion | None:
        text = question.strip().lower().rstrip("?.! ").strip()
        for pattern, builder in _SKELETONS:
            m = pattern.match(text)
            if m is None:
                continue
            built = builder(self, m)
            if built is not None:
                return built
        return None

    # -- builders, one per skeleton -------------------------------------

    def _parts(self, np_text: str) -> list[_Part]:
        parts = _split_parts(np_text)
        for part in parts:
            _assign_layer(part, self.graph)
        return parts

    def _room_query(self, m: re.Match) -> ParsedQuestion | None:
        parts = self._parts(m.group("np"))
        if not parts:
            return None
        subject = parts[0]
        if subject.layer is Layer.ROOM:
            return None
        try:
            chain = make_chain(
                [_part_step(subject), SubGoal(layer=Layer.ROOM)], TargetKind.ROOM
            )
        except PatternStructureError:
            return None
        slots = _scope_slots(parts[1:])
        slots["object"] = subject.label
        return ParsedQuestion(chain, slots, ParseSource.TEMPLATE)

    def _relational(self, m: re.Match) -> ParsedQuestion | None:
        relation = _RELATION_CANON.get(m.group("rel"), m.group("rel"))
        parts = self._parts(m.group("np"))
        if not parts:
            return None
        ref = parts[0]
        if ref.layer is Layer.ROOM:
            return None
        if ref.layer is Layer.BIG_OBJECT and relation == "next-to":
            target_layer = Layer.BIG_OBJECT
        else:
            target_layer = Layer.SMALL_OBJECT
        scope = [p for p in parts[1:]]
        try:
            steps = [_part_step(p) for p in reversed(scope)] + [
                _part_step(ref),
                SubGoal(layer=target_layer),
            ]
            chain = make_chain(steps, TargetKind.OBJECT)
        except PatternStructureError:
            return None
        slots = _scope_slots(parts)
        slots["relation"] = relation
        slots.setdefault("support", ref.label)
        return ParsedQuestion(chain, slots, ParseSource.TEMPLATE)

    def _attribute(self, m: re.Match, attribute: str | None = None) -> ParsedQuestion | None:
        attribute = attribute or m.group("attr")
        parts = self._parts(m.group("np"))
        if not parts:
            return None
        target = parts[0]
        if target.layer is Layer.ROOM:
            return None
        scope = parts[1:]
        try:
            steps = [_part_step(p) for p in reversed(scope)] + [
                _part_step(target, marked=True),
                SubGoal(layer=target.layer or Layer.SMALL_OBJECT, queried_attribute=attribute),
            ]
            chain = make_chain(steps, TargetKind.ATTRIBUTE)
        except PatternStructureError:
            return None
        chain = _with_alternative(chain, parts, TargetKind.ATTRIBUTE)
        slots = _scope_slots(scope)
        slots["object"] = target.label
        slots["attribute"] = attribute
        return ParsedQuestion(chain, slots, ParseSource.TEMPLATE)

    def _activity(self, m: re.Match) -> ParsedQuestion | None:
        return self._attribute(m, attribute="activity")

    def _count(self, m: re.Match) -> ParsedQuestion | None:
        words = m.group("obj").split()
        words[-1] = singularize(words[-1])
        label = " ".join(words)
        parts = self._parts(m.group("np"))
        target = _Part(label=label)
        _assign_layer(target, self.graph)
        scope = parts
        try:
            steps = [_part_step(p) for p in reversed(scope)] + [_part_step(target)]
            chain = make_chain(steps, TargetKind.COUNT)
        except PatternStructureError:
            return None
        slots = _scope_slots(scope)
        slots["object"] = target.label
        slots["relation"] = _RELATION_CANON.get(m.group("rel"), m.group("rel"))
        return ParsedQuestion(chain, slots, ParseSource.TEMPLATE)

    def _existence(self, m: re.Match) -> ParsedQuestion | None:
        parts = self._parts(m.group("np"))
        target = _Part(label=m.group("obj"))
        _assign_layer(target, self.graph)
        try:
            steps = [_part_step(p) for p in reversed(parts)] + [_part_step(target)]
            chain = make_chain(steps, TargetKind.EXISTENCE)
        except PatternStructureError:
            return None
        slots = _scope_slots(parts)
        slots["object"] = target.label
        slots["relation"] = _RELATION_CANON.get(m.group("rel"), m.group("rel"))
        return ParsedQuestion(chain, slots, ParseSource.TEMPLATE)

    def _yes_no_attribute(self, m: re.Match) -> ParsedQuestion | None:
        value = m.group("value")
        attribute = VALUE_ATTRIBUTE.get(value)
        if attribute is None:
            return None
        parts = self._parts(m.group("np"))
        if not parts:
            return None
        target = parts[0]
        if target.layer is Layer.ROOM:
            return None
        target.constraints.insert(0, (attribute, value))
        scope = parts[1:]
        try:
            steps = [_part_step(p) for p in reversed(scope)] + [_part_step(target)]
            chain = make_chain(steps, TargetKind.EXISTENCE)
        except PatternStructureError:
            return None
        slots = _scope_slots(scope)
        slots["object"] = target.label
        slots["attribute"] = attribute
        slots["value"] = value
        return ParsedQuestion(chain, slots, ParseSource.TEMPLATE)


_SKELETONS: list[tuple[re.Pattern[str], Any]] = [
    (re.compile(r"^(?:what|which) room is (?P<np>.+?)(?: located)? in$"), TemplateBackend._room_query),
    (re.compile(r"^where is (?P<np>.+?)(?: located)?$"), TemplateBackend._room_query),
    (re.compile(r"^what is (?P<rel>on top of|next to|on|above|below|under|beneath|beside) (?P<np>.+)$"), TemplateBackend._relational),
    (re.compile(r"^what is the (?P<attr>[\w-]+) of (?P<np>.+)$"), TemplateBackend._attribute),
    (re.compile(r"^what is (?P<np>.+?) doing$"), TemplateBackend._activity),
    (re.compile(r"^what (?P<attr>[\w-]+) is (?P<np>.+)$"), TemplateBackend._attribute),
    (re.compile(r"^how many (?P<obj>[\w -]+?) are(?: there)? (?P<rel>in|on) (?P<np>.+)$"), TemplateBackend._count),
    (re.compile(r"^is there (?:a|an) (?P<obj>[\w -]+?) (?P<rel>on|in|under|next to) (?P<np>.+)$"), TemplateBackend._existence),
    (re.compile(r"^is (?P<np>.+?) (?P<value>[\w-]+)$"), TemplateBackend._yes_no_attribute),
]


class GoldBackend:
    """Replays the chain a dataset record was generated with."""

    name = "gold"

    def __init__(self, gold_pattern: str, slots: dict[str, str] | None = None) -> None:
        self.gold_pattern = gold_pattern
        self.slots = dict(slots or {})

    def parse(self, question: str) -> ParsedQuestion | None:
        chain = parse_pattern_string(self.gold_pattern)
        return ParsedQuestion(chain, dict(self.slots), ParseSource.GOLD)


class LlmBackend:
    """Asks a chat model for the chain and validates the reply."""

    name = "llm"

    def __init__(self, client: ChatClient, retries: int = 2) -> None:
        self.client = client
        self.retries = retries

    def parse(self, question: str) -> ParsedQuestion | None:
        system, _version = prompts.load("extract_pattern")
        errors: list[str] = []
        for _ in range(self.retries + 1):
            reply = self.client.complete_text(system, question)
            try:
                return self._validated(reply)
            except (ValueError, KeyError) as exc:
                errors.append(str(exc))
        raise UnparsedQuestionError(question, f"model output invalid after {self.retries + 1} tries: {errors[-1]}")

    def _validated(self, reply: str) -> ParsedQuestion:
        text = reply.strip()
        m = re.match(r"^```(?:json)?\s*(.*?)\s*```$", text, flags=re.DOTALL)
        if m:
            text = m.group(1)
        data = json.loads(text)
        if not isinstance(data, dict) or "pattern" not in data:
            raise ValueError("reply must be an object with a 'pattern' field")
        chain = parse_pattern_string(str(data["pattern"]))
        slots_raw = data.get("slots", {})
        if not isinstance(slots_raw, dict):
            raise ValueError("'slots' must be an object")
        slots = {str(k): str(v) for k, v in slots_raw.items()}
        return ParsedQuestion(chain, slots, ParseSource.LLM)


def parse_question(
    question: str,
    backends: list[Any] | None = None,
    graph: SceneGraph | None = None,
) -> ParsedQuestion:
    """Run the question through the backends in order; first chain wins."""
    if not isinstance(question, str) or not question.strip():
        raise EmptyQuestionError("question text is empty")
    if backends is None:
        backends = [TemplateBackend(graph)]
    for backend in backends:
        parsed = backend.parse(question)
        if parsed is not None:
            return parsed
    raise UnparsedQuestionError(question)
