"""The episode loop: a question goes in, a traced answer comes out.

One episode owns a private copy of the prior graph and grows it from
observations. Planning, acting and feedback checking alternate until
the chain is exhausted, the plan budget runs out, or the fallback gives
up. Every plan and observation lands in the trace, so an episode can be
replayed or audited after the fact.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from . import prompts
from .environment import Environment, Observation
from .llm_planner import LookupPlanner
from .parsing import TemplateBackend, UnparsedQuestionError, parse_question
from .patterns import PatternChain, SubGoal, TargetKind, render
from .rules import (
    PerceptionRange,
    Plan,
    PlanKind,
    PlanningDomainError,
    ResolutionFailure,
    next_plan,
)
from .scene_graph import (
    Layer,
    SceneGraph,
    SceneNode,
    alias_label,
    labels_match,
    normalize_label,
)


class EpisodeStatus(Enum):
    ANSWERED = "answered"
    NOT_FOUND = "not_found"
    FAILED = "failed"


@dataclass
class AgentConfig:
    """Knobs for one episode.

    max_plans of None means the budget scales with the chain: four plans
    per subgoal plus eight spare. room_level_only keeps the agent from
    ever anchoring below a room; it exists to measure how much the
    lower layers buy.
    """

    retries: int = 2
    max_plans: int | None = None
    room_level_only: bool = False

    def plan_budget(self, chain_length: int) -> int:
        if self.max_plans is not None:
            return self.max_plans
        return 4 * chain_length + 8


@dataclass
class TraceEvent:
    t: int
    k: int
    plan: dict[str, Any]
    observation: dict[str, Any] | None
    feedback: bool | None
    secondary: bool = False
    subquestion: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "k": self.k,
            "plan": self.plan,
            "observation": self.observation,
            "feedback": self.feedback,
            "secondary": self.secondary,
            "subquestion": self.subquestion,
        }


@dataclass
class EpisodeTrace:
    question: str
    world_id: str
    pattern: str | None = None
    parse_source: str | None = None
    prompt_versions: dict[str, str] = field(default_factory=dict)
    entrance_observation: dict[str, Any] | None = None
    events: list[TraceEvent] = field(default_factory=list)
    answer: str | None = None
    status: str | None = None
    steps: int = 0
    plans: int = 0
    wall_ms: float = 0.0

    def header(self) -> dict[str, Any]:
        return {
            "kind": "header",
            "question": self.question,
            "world_id": self.world_id,
            "pattern": self.pattern,
            "parse_source": self.parse_source,
            "prompt_versions": self.prompt_versions,
            "entrance_observation": self.entrance_observation,
        }

    def final(self) -> dict[str, Any]:
        return {
            "kind": "final",
            "answer": self.answer,
            "status": self.status,
            "steps": self.steps,
            "plans": self.plans,
            "wall_ms": round(self.wall_ms, 3),
        }

    def lines(self) -> list[str]:
        records = [self.header()]
        records.extend({"kind": "event", **e.to_dict()} for e in self.events)
        records.append(self.final())
        return [json.dumps(r, sort_keys=True) for r in records]

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    def history(self) -> list[tuple[dict[str, Any], dict[str, Any] | None]]:
        """Plan and observation pairs in execution order."""
        return [(e.plan, e.observation) for e in self.events]


@dataclass
class EpisodeResult:
    question: str
    answer: str
    status: EpisodeStatus
    steps: int
    plans: int
    chain: PatternChain | None
    trace: EpisodeTrace


def normalize_answer(text: str) -> str:
    """Lowercase, collapse whitespace, drop one leading article."""
    out = " ".join(str(text).strip().lower().split())
    out = out.rstrip(".!")
    for article in ("the ", "a ", "an "):
        if out.startswith(article):
            out = out[len(article):]
            break
    return out.strip()


# -- belief updates ---------------------------------------------------------


def _instance_from_id(node_id: str) -> int:
    tail = node_id.rsplit(".", 1)[-1]
    return int(tail) if tail.isdigit() else 0


def ingest_observation(graph: SceneGraph, obs: Observation) -> None:
    """Fold an observation into the agent's graph.

    Newly seen small objects are adopted under the anchor they were seen
    from, keeping the environment's ids so later plans can address them
    directly. Revealed attribute values overwrite prior beliefs.
    """
    for v in obs.visible:
        if v.node_id in graph:
            continue
        if v.layer is Layer.SMALL_OBJECT and obs.anchor_layer is Layer.BIG_OBJECT:
            node = SceneNode(
                id=v.node_id,
                layer=v.layer,
                label=v.label,
                instance_index=_instance_from_id(v.node_id),
            )
            graph.add_node(node, parent_id=obs.anchor_id)
    for node_id, attrs in obs.revealed.items():
        if node_id not in graph:
            continue
        for name, value in attrs.items():
            graph.set_attribute(node_id, name, value)


# -- feedback ---------------------------------------------------------------


def check_feedback(plan: Plan, obs: Observation, graph: SceneGraph) -> bool:
    """First-pass success check for an executed plan.

    Move feedback compares raw labels only; it deliberately knows nothing
    about synonyms, so a move that lands on an aliased label fails here
    and is rescued by the secondary check.
    """
    if plan.kind is PlanKind.MOVE_TO:
        if obs.move_failed:
            return False
        if not plan.goal_label:
            return True
        anchor = graph.node(obs.anchor_id) if obs.anchor_id in graph else None
        return anchor is not None and labels_match(plan.goal_label, anchor.label)
    if plan.kind is PlanKind.OBSERVE:
        if plan.expects is None:
            return True
        what, name = plan.expects
        if what == "attribute":
            focus = plan.focus_id or obs.anchor_id
            if name in obs.revealed.get(focus, {}):
                return True
            return focus in graph and name in graph.node(focus).attributes
        if what == "relation":
            others = [v for v in obs.visible if v.node_id != obs.anchor_id]
            if name is None:
                return bool(others)
            return any(v.relation == name for v in others)
        # count and existence observations always settle by tallying
        return True
    return True


def secondary_perception(plan: Plan, obs: Observation, graph: SceneGraph) -> bool:
    """Identity check behind the label check.

    A move that failed the naive label comparison still counts as a
    success when the anchor is the planned node itself, or sits inside
    it. This is how a plan for "the couch" survives landing on a node
    labeled "sofa".
    """
    if plan.goal_id is None or obs.anchor_id not in graph:
        return False
    if plan.goal_id == obs.anchor_id:
        return True
    return any(a.id == plan.goal_id for a in graph.ancestors(obs.anchor_id))


# -- answer extraction ------------------------------------------------------


def _tally_scope(chain: PatternChain, graph: SceneGraph, obs: Observation) -> str:
    scope_id: str | None = None
    for step in chain.steps[:-1]:
        if not step.label:
            continue
        found = graph.resolve_label(step.label, layer=step.layer, scope_id=scope_id)
        if found:
            scope_id = found[0].id
    if scope_id is not None:
        return scope_id
    if obs.anchor_id in graph:
        anchor = graph.node(obs.anchor_id)
        if anchor.layer >= Layer.ROOM:
            return graph.room_of(obs.anchor_id).id
        return obs.anchor_id
    return graph.nodes_at(Layer.FLOOR)[0].id


def tally_matches(graph: SceneGraph, scope_id: str, step: SubGoal) -> list[SceneNode]:
    """Nodes under the scope that satisfy a count or existence target."""
    out: list[SceneNode] = []
    for node in graph.descendants(scope_id):
        if node.layer is not step.layer:
            continue
        if step.label and not (
            labels_match(step.label, node.label)
            or alias_label(step.label) == node.norm_label
        ):
            continue
        if step.attribute_constraint is not None:
            attr, want = step.attribute_constraint
            have = node.attributes.get(attr)
            if have is None or normalize_label(have) != normalize_label(want):
                continue
        out.append(node)
    return out


def extract_answer(
    chain: PatternChain,
    slots: dict[str, str],
    plan: Plan,
    obs: Observation,
    graph: SceneGraph,
) -> str | None:
    """Read the answer off the final observation, or None if absent."""
    kind = chain.target_kind
    if kind is TargetKind.ATTRIBUTE:
        attr = chain.steps[-1].queried_attribute or ""
        focus = plan.focus_id or obs.anchor_id
        value = obs.revealed.get(focus, {}).get(attr)
        if value is None and focus in graph:
            value = graph.node(focus).attributes.get(attr)
        return value
    if kind is TargetKind.OBJECT:
        relation = slots.get("relation")
        target_layer = chain.steps[-1].layer
        labels: list[str] = []
        for v in obs.visible:
            if v.node_id == obs.anchor_id or v.relation == "here":
                continue
            if v.layer is not target_layer:
                continue
            if relation is not None and v.relation != relation:
                continue
            if v.label not in labels:
                labels.append(v.label)
        return ", ".join(labels) if labels else None
    if kind in (TargetKind.COUNT, TargetKind.EXISTENCE):
        scope_id = _tally_scope(chain, graph, obs)
        count = len(tally_matches(graph, scope_id, chain.steps[-1]))
        if kind is TargetKind.COUNT:
            return str(count)
        return "yes" if count > 0 else "no"
    return None


# -- the room-only planner used for the layer ablation ----------------------


def _room_for_chain(chain: PatternChain, graph: SceneGraph) -> SceneNode | None:
    for step in reversed(chain.steps):
        if step.label and step.layer is Layer.ROOM:
            found = graph.resolve_label(step.label, layer=Layer.ROOM)
            if found:
                return found[0]
    for step in chain.steps:
        if step.label:
            found = graph.resolve_label(step.label, layer=step.layer)
            if found and found[0].layer >= Layer.ROOM:
                return graph.room_of(found[0].id)
    rooms = graph.nodes_at(Layer.ROOM)
    return rooms[0] if rooms else None


def room_level_plan(
    chain: PatternChain,
    k: int,
    graph: SceneGraph,
    pose: Any,
    slots: dict[str, str] | None = None,
) -> Plan:
    """Ablated planner that never anchors below the room layer."""
    n = len(chain.steps)
    slots = slots or {}
    if chain.target_kind is TargetKind.ROOM:
        subject = chain.steps[0]
        found = graph.resolve_label(subject.label or "", layer=subject.layer)
        if found:
            return Plan(
                kind=PlanKind.ANSWER,
                value=graph.room_of(found[0].id).label,
                advance_to=n,
            )
        raise ResolutionFailure(subject.label or "?", "room level")
    room = _room_for_chain(chain, graph)
    if room is None:
        raise ResolutionFailure("room", "prior graph")
    if pose.anchor_id != room.id:
        return Plan(
            kind=PlanKind.MOVE_TO,
            goal_id=room.id,
            goal_layer=room.layer,
            goal_label=room.label,
            advance_to=n - 1,
        )
    target = chain.steps[-1]
    focus_id: str | None = None
    focus_label = slots.get("object") or slots.get("support")
    if focus_label:
        found = graph.resolve_label(focus_label, scope_id=room.id)
        if found:
            focus_id = found[0].id
    expects: tuple[str, str | None] | None
    if chain.target_kind is TargetKind.ATTRIBUTE:
        expects = ("attribute", target.queried_attribute)
    elif chain.target_kind is TargetKind.OBJECT:
        expects = ("relation", slots.get("relation"))
    elif chain.target_kind is TargetKind.COUNT:
        expects = ("count", target.label)
    else:
        expects = ("existence", target.label)
    return Plan(
        kind=PlanKind.OBSERVE,
        focus_id=focus_id,
        expects=expects,
        advance_to=n,
    )


# -- the loop ---------------------------------------------------------------


def run_episode(
    question: str,
    env: Environment,
    config: AgentConfig | None = None,
    parse_backends: list[Any] | None = None,
    planner: Any | None = None,
) -> EpisodeResult:
    """Answer one question against one environment instance."""
    config = config or AgentConfig()
    planner = planner or LookupPlanner()
    started = time.perf_counter()

    _, first_obs = env.reset()
    graph = env.world.prior_graph()
    ingest_observation(graph, first_obs)

    trace = EpisodeTrace(
        question=question,
        world_id=env.world.world_id,
        prompt_versions=dict(prompts.VERSIONS),
        entrance_observation=first_obs.to_dict(),
    )

    def finish(answer: str, status: EpisodeStatus, chain: PatternChain | None) -> EpisodeResult:
        trace.answer = normalize_answer(answer)
        trace.status = status.value
        trace.steps = env.pose.steps_taken
        trace.plans = len(trace.events)
        trace.wall_ms = (time.perf_counter() - started) * 1000.0
        return EpisodeResult(
            question=question,
            answer=trace.answer,
            status=status,
            steps=trace.steps,
            plans=trace.plans,
            chain=chain,
            trace=trace,
        )

    try:
        parsed = parse_question(
            question,
            backends=parse_backends if parse_backends is not None else [TemplateBackend(graph)],
        )
    except UnparsedQuestionError:
        return finish("not found", EpisodeStatus.FAILED, None)

    trace.pattern = render(parsed.chain)
    trace.parse_source = parsed.source.value
    slots = parsed.slots

    candidates = [parsed.chain, *parsed.chain.alternatives]
    budget = config.plan_budget(len(parsed.chain.steps))
    explored: set[str] = set()
    t = 0
    outcome: tuple[str, EpisodeStatus] | None = None

    for chain in candidates:
        n = len(chain.steps)
        attr_class: PerceptionRange | None = None
        if chain.target_kind is TargetKind.ATTRIBUTE:
            attr_class = planner.classify_attribute(
                chain.steps[-1].queried_attribute or "", slots.get("object", "")
            )
        constraint_class: PerceptionRange | None = None
        if chain.steps[-1].attribute_constraint is not None:
            constraint_class = planner.classify_attribute(
                chain.steps[-1].attribute_constraint[0], chain.steps[-1].label or ""
            )

        k = 0
        step_retries = 0
        pending_fallback = False
        final_subquestion: str | None = None
        gave_up = False

        while t < budget:
            if pending_fallback:
                pending_fallback = False
                plan = planner.fallback_plan(graph, env.pose, frozenset(explored), question=question)
            else:
                try:
                    if config.room_level_only:
                        plan = room_level_plan(chain, k, graph, env.pose, slots)
                    else:
                        plan = next_plan(
                            chain,
                            k,
                            graph,
                            env.pose,
                            attr_class=attr_class,
                            explored=frozenset(explored),
                            slots=slots,
                            constraint_class=constraint_class,
                        )
                except ResolutionFailure:
                    pending_fallback = True
                    continue
                except PlanningDomainError:
                    outcome = ("not found", EpisodeStatus.FAILED)
                    break
            plan.step_index = k
            t += 1

            subquestion: str | None = None
            if plan.kind is PlanKind.OBSERVE and plan.advance_to == n:
                if final_subquestion is None:
                    final_subquestion = planner.simplify_question(question, chain, k, slots)
                subquestion = final_subquestion
                plan.content = subquestion

            if plan.kind is PlanKind.ANSWER:
                echo = env.observe()
                ingest_observation(graph, echo)
                trace.events.append(
                    TraceEvent(t=t, k=k, plan=plan.to_dict(), observation=echo.to_dict(), feedback=True)
                )
                if plan.tool == "fallback":
                    gave_up = True
                    break
                outcome = (plan.value or "not found", EpisodeStatus.ANSWERED)
                break

            obs = env.execute(plan)
            ingest_observation(graph, obs)
            ok = check_feedback(plan, obs, graph)
            secondary = False
            if not ok and plan.kind is PlanKind.MOVE_TO and not obs.move_failed:
                secondary = secondary_perception(plan, obs, graph)
                ok = ok or secondary
            trace.events.append(
                TraceEvent(
                    t=t,
                    k=k,
                    plan=plan.to_dict(),
                    observation=obs.to_dict(),
                    feedback=ok,
                    secondary=secondary,
                    subquestion=subquestion,
                )
            )
            if plan.kind is PlanKind.MOVE_TO and not obs.move_failed:
                explored.add(env.pose.anchor_id)

            if not ok:
                step_retries += 1
                if step_retries > config.retries:
                    step_retries = 0
                    pending_fallback = True
                continue

            step_retries = 0
            if plan.tool == "fallback" or plan.advance_to is None:
                continue
            if plan.advance_to >= n:
                value = extract_answer(chain, slots, plan, obs, graph)
                if value is not None:
                    outcome = (value, EpisodeStatus.ANSWERED)
                    break
                step_retries += 1
                if step_retries > config.retries:
                    step_retries = 0
                    pending_fallback = True
                continue
            k = plan.advance_to

        if outcome is not None:
            break
        if not gave_up and t >= budget:
            break  # budget exhausted; alternatives get no fresh budget

    if outcome is None:
        outcome = ("not found", EpisodeStatus.NOT_FOUND)
    return finish(outcome[0], outcome[1], parsed.chain)
