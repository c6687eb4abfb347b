"""Judgment calls the rule table cannot make on its own.

Three helpers sit here: deciding whether an attribute reads from afar or
needs a close look, rewriting the original question into the short form
an observation should answer, and producing a fallback plan when rule
planning dead-ends. Each has a deterministic lookup backend used in
tests and offline runs, and a chat-model backend for live use. Both
backends are pure: same inputs, same output, no graph mutation.
"""

from __future__ import annotations

import json
import math
import re
from typing import Any

from . import prompts
from .llm_client import ChatClient
from .patterns import PatternChain, TargetKind
from .rules import PerceptionRange, Plan, PlanKind
from .scene_graph import Layer, SceneGraph, SceneNode

# Attribute families that resolve from one layer above the object.
REMOTE_ATTRIBUTES = frozenset({"color", "quantity", "existence", "location"})
# Families that require standing at the object. Unknown names land here:
# moving closer costs steps but never loses information.
CLOSE_RANGE_ATTRIBUTES = frozenset({"material", "state", "title", "brand", "text", "activity"})


class SchemaError(ValueError):
    """A chat backend returned something that does not fit the contract."""


class LookupPlanner:
    """Deterministic table-driven backend."""

    name = "lookup"

    def classify_attribute(self, attribute: str, object_label: str) -> PerceptionRange:
        attr = attribute.strip().lower()
        if attr in REMOTE_ATTRIBUTES:
            return PerceptionRange.REMOTE
        return PerceptionRange.CLOSE_RANGE

    def simplify_question(self, question: str, chain: PatternChain, k: int, slots: dict[str, str]) -> str:
        obj = slots.get("object") or _last_labeled(chain) or "object"
        if chain.target_kind is TargetKind.ATTRIBUTE:
            attr = slots.get("attribute") or chain.steps[-1].queried_attribute or "value"
            return f"What is the {attr} of the {obj}?"
        if chain.target_kind is TargetKind.EXISTENCE:
            return f"Is there a {obj}?"
        if chain.target_kind is TargetKind.COUNT:
            return f"How many of the {obj} are there?"
        if chain.target_kind is TargetKind.OBJECT:
            rel = slots.get("relation") or "near"
            ref = slots.get("support") or slots.get("object") or "object"
            return f"What is {rel} the {ref}?"
        return f"Which room contains the {obj}?"

    def fallback_plan(
        self,
        graph: SceneGraph,
        pose: Any,
        explored: frozenset[str],
        question: str = "",
    ) -> Plan:
        sibling = _nearest_unexplored_sibling(graph, pose, explored)
        if sibling is not None:
            return Plan(
                kind=PlanKind.MOVE_TO,
                goal_id=sibling.id,
                goal_layer=sibling.layer,
                goal_label=sibling.label,
                advance_to=None,
                tool="fallback",
            )
        return Plan(kind=PlanKind.ANSWER, value="not found", tool="fallback")


def _last_labeled(chain: PatternChain) -> str | None:
    for step in reversed(chain.steps):
        if step.label:
            return step.label
    return None


def _nearest_unexplored_sibling(
    graph: SceneGraph, pose: Any, explored: frozenset[str]
) -> SceneNode | None:
    """Unexplored sibling of the anchor, then of its parent, nearest first."""
    if pose.anchor_id not in graph:
        return None
    here = graph.position_of(pose.anchor_id)

    def key(node: SceneNode) -> tuple:
        d = float("inf")
        if here is not None:
            pos = graph.position_of(node.id)
            if pos is not None:
                d = math.dist(here, pos)
        return (d, node.instance_index, node.id)

    probe: str | None = pose.anchor_id
    while probe is not None:
        parent = graph.parent(probe)
        if parent is None:
            return None
        siblings = [
            s
            for s in graph.children(parent.id)
            if s.id != probe and s.id not in explored
        ]
        if siblings:
            return sorted(siblings, key=key)[0]
        probe = parent.id


class ChatPlanner:
    """Chat-model backend; outputs are validated and retried on bad shape."""

    name = "chat"

    def __init__(self, client: ChatClient, retries: int = 2) -> None:
        self.client = client
        self.retries = retries

    def classify_attribute(self, attribute: str, object_label: str) -> PerceptionRange:
        system, version = prompts.load("classify_attribute")
        user = f"attribute: {attribute}\nobject: {object_label}"
        text = self._completed(system, user)
        verdict = text.strip().lower()
        if "remote" in verdict and "close" not in verdict:
            return PerceptionRange.REMOTE
        if "close" in verdict:
            return PerceptionRange.CLOSE_RANGE
        raise SchemaError(f"unusable perception verdict: {text!r}")

    def simplify_question(self, question: str, chain: PatternChain, k: int, slots: dict[str, str]) -> str:
        from .patterns import render

        system, version = prompts.load("simplify_question")
        user = f"question: {question}\nchain: {render(chain)}\nstep: {k}"
        text = self._completed(system, user).strip()
        if not text:
            raise SchemaError("empty simplified question")
        return text

    def fallback_plan(
        self,
        graph: SceneGraph,
        pose: Any,
        explored: frozenset[str],
        question: str = "",
    ) -> Plan:
        system, version = prompts.load("fallback_plan")
        anchor = graph.node(pose.anchor_id) if pose.anchor_id in graph else None
        siblings = []
        if anchor is not None:
            parent = graph.parent(anchor.id)
            if parent is not None:
                siblings = [
                    {"id": s.id, "label": s.label, "explored": s.id in explored}
                    for s in graph.children(parent.id)
                    if s.id != anchor.id
                ]
        user = json.dumps(
            {
                "question": question,
                "anchor": anchor.label if anchor else None,
                "siblings": siblings,
            },
            sort_keys=True,
        )
        last_error = "no attempt"
        for _ in range(self.retries + 1):
            text = self._completed(system, user)
            try:
                return self._parse_plan(text, graph)
            except SchemaError as exc:
                last_error = str(exc)
        raise SchemaError(f"fallback plan never validated: {last_error}")

    def _parse_plan(self, text: str, graph: SceneGraph) -> Plan:
        try:
            data = json.loads(_strip_fences(text))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"plan is not JSON: {exc}") from exc
        kind = data.get("kind")
        if kind == "MoveTo":
            goal = data.get("goal")
            if not isinstance(goal, str) or not goal:
                raise SchemaError("MoveTo plan needs a goal string")
            if goal in graph:
                node = graph.node(goal)
                return Plan(
                    kind=PlanKind.MOVE_TO,
                    goal_id=goal,
                    goal_layer=node.layer,
                    goal_label=node.label,
                    tool="fallback",
                )
            return Plan(kind=PlanKind.MOVE_TO, goal_label=goal, tool="fallback")
        if kind == "Observe":
            content = data.get("content")
            if not isinstance(content, str) or not content:
                raise SchemaError("Observe plan needs content")
            return Plan(kind=PlanKind.OBSERVE, content=content, tool="fallback")
        if kind == "Answer":
            value = data.get("value")
            if not isinstance(value, str) or not value:
                raise SchemaError("Answer plan needs a value")
            return Plan(kind=PlanKind.ANSWER, value=value, tool="fallback")
        raise SchemaError(f"unknown plan kind {kind!r}")

    def _completed(self, system: str, user: str) -> str:
        return self.client.complete_text(system, user)


def _strip_fences(text: str) -> str:
    text = text.strip()
    match = re.match(r"^```(?:json)?\s*(.*?)\s*```$", text, flags=re.DOTALL)
    return match.group(1) if match else text


def classify_attribute(
    attribute: str, object_label: str = "", backend: Any | None = None
) -> PerceptionRange:
    return (backend or LookupPlanner()).classify_attribute(attribute, object_label)


def simplify_question(
    question: str,
    chain: PatternChain,
    k: int,
    slots: dict[str, str] | None = None,
    backend: Any | None = None,
) -> str:
    return (backend or LookupPlanner()).simplify_question(question, chain, k, slots or {})


def fallback_plan(
    graph: SceneGraph,
    pose: Any,
    explored: frozenset[str],
    backend: Any | None = None,
    question: str = "",
) -> Plan:
    return (backend or LookupPlanner()).fallback_plan(graph, pose, explored, question=question)
