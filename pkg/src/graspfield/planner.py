"""Few-shot LLM task planning: prompt construction, parsing, majority voting.

The planner turns a task description plus the scene's object list into an
action primitive and an (object, part) pair by sampling k completions and
keeping the pair that appears most often. The wire contract is a minimal
chat-completion POST so any compatible endpoint works; tests and offline mode
use scripted responses instead.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from .errors import (
    EmptyObjectList,
    LLMUnavailable,
    NoParseableResponses,
    UnknownAction,
    UnparseableResponse,
)

ACTIONS = ("press", "grasp", "twist", "pick&place", "pour")

PROMPT_TEMPLATE = """Answer the question as if you are a robot with a parallel jaw gripper that has access to only the objects in the object list. Follow the exact format. First line should describe what basic action is needed to do the task from the following set of actions: press, grasp, twist, pick & place. The second line should only be an object from the object list followed by 1 object part that the robot would touch to do this task. VERY IMPORTANT: If the basic action is pick & place, only then have a third line with 'Place: ' to specify the object to place on.
Object list: ['pot', 'knife', 'spoon', 'black pan']
Q: How can I safely pick up a pan?
Basic Action: grasp
Sequence: 1. black pan 2. handle

Object list: ['mechanical keyboard', 'knife', 'TV', 'camera']
Q: How can I safely hit the spacebar on a keyboard?
Basic action: press
Sequence: 1. mechanical keyboard 2. spacebar

Object list: ['green mug', 'blue spoon', 'fork', 'knife']
Q: How can I cut a block of cheese?
Basic action: grasp
Sequence: 1. knife 2. handle

Object list: ['salt shaker', 'knife', 'fork', 'white pan']
Q: How can I safely lift a salt shaker?
Basic Action: grasp
Sequence: 1. salt shaker 2. base

Object list: ['red cup', 'blue cup', 'mug', 'bowl']
Q: How do I stack the red cup on the blue cup?
Basic action: pick & place
Sequence: 1. red cup 2. rim
Place: blue cup

Object list: ['door knob', 'black mug', 'green dish brush', 'shiny knife']
Q: How do I open a door knob?
Basic action: twist
Sequence: 1. door knob 2. rim

Object list: ['dryer', 'washing machine', 'sunglasses']
Q: How do I turn on the washing machine?
Basic action: twist
Sequence: 1. washing machine 2. dial

Object list: ['paper towel roll', 'mug', 'teacup', 'headphones', 'pen']
Q: How do I grab a paper towel?
Basic action: grasp
Sequence: 1. paper towel roll 2. paper towel

Object list: ['magnifying glass', 'blue spoon', 'fork', 'knife']
Q: How do I pick up a magnifying glass?
Basic action: grasp
Sequence: 1. magnifying glass 2. handle

Object list: ['teddy bear', 'toy block', 'mouse', 'saucepan', 'hammer']
Q: How do I grab a teddy bear?
Basic action: grasp
Sequence: 1. teddy bear 2. head

Object list: ['green mug', 'blue spoon', 'fork', 'knife']
Q: How do I put the mug in the cabinet?
Basic action: pick & place
Sequence: 1. green mug 2. handle
Place: cabinet

Object list: {OBJECT_LIST}
Q: How can I safely {TASK}?
Basic action: """


@dataclass(frozen=True)
class LLMPlan:
    """Parsed (action, object, part[, place]) tuple."""

    action: str
    object: str
    part: str
    place: str | None = None

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise UnknownAction(f"unknown action '{self.action}'")
        if (self.place is not None) != (self.action == "pick&place"):
            raise UnparseableResponse(
                "place must be present exactly when the action is pick&place"
            )

    def to_json(self) -> dict:
        out = {"action": self.action, "object": self.object, "part": self.part}
        if self.place is not None:
            out["place"] = self.place
        return out


@dataclass(frozen=True)
class LLMClientConfig:
    endpoint: str
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    timeout: float = 30.0
    max_retries: int = 2
    api_key: str | None = None

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


class LLMClient(Protocol):
    def complete(self, prompt: str) -> str: ...


class HttpLLMClient:
    """Minimal chat-completion client (POST model/messages/temperature)."""

    def __init__(self, config: LLMClientConfig) -> None:
        self.config = config

    @staticmethod
    def from_env() -> "HttpLLMClient":
        endpoint = os.environ.get("GRASPFIELD_LLM_URL")
        if not endpoint:
            raise LLMUnavailable("GRASPFIELD_LLM_URL is not set")
        return HttpLLMClient(LLMClientConfig(
            endpoint=endpoint,
            model=os.environ.get("GRASPFIELD_LLM_MODEL", "gpt-3.5-turbo"),
            api_key=os.environ.get("GRASPFIELD_LLM_API_KEY"),
        ))

    def complete(self, prompt: str) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        payload = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
        }
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            try:
                r = httpx.post(cfg.endpoint, json=payload, headers=headers,
                               timeout=cfg.timeout)
                r.raise_for_status()
                return r.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, ValueError) as e:
                last = e
                if attempt < cfg.max_retries:
                    time.sleep(min(2.0 ** attempt, 5.0))
        raise LLMUnavailable(f"LLM endpoint failed after retries: {last}")


class ScriptedClient:
    """Replays a fixed list of responses; raises when exhausted."""

    def __init__(self, responses: list[str]) -> None:
        self.responses = list(responses)
        self._i = 0

    def complete(self, prompt: str) -> str:  # noqa: ARG002 - scripted
        if self._i >= len(self.responses):
            raise LLMUnavailable("scripted client ran out of responses")
        self._i += 1
        return self.responses[self._i - 1]


class OfflineClient(ScriptedClient):
    """Reads responses from a file, one response per '---' delimiter line."""

    def __init__(self, path) -> None:
        text = Path(path).read_text()
        chunks = [c.strip("\n") for c in re.split(r"^---\s*$", text, flags=re.M)]
        super().__init__([c for c in chunks if c.strip()])


def format_object_list(objects: list[str]) -> str:
    return "[" + ", ".join(f"'{o}'" for o in objects) + "]"


def build_prompt(object_list: list[str], task: str) -> str:
    """Substitute the object list and task into the few-shot template."""
    if not object_list:
        raise EmptyObjectList("object list must not be empty")
    return (PROMPT_TEMPLATE
            .replace("{OBJECT_LIST}", format_object_list(object_list))
            .replace("{TASK}", task))


def normalize_action(text: str) -> str:
    action = re.sub(r"\s*&\s*", "&", text.strip().lower())
    if action not in ACTIONS:
        raise UnknownAction(f"unknown action '{text.strip()}'")
    return action


def parse_response(text: str) -> LLMPlan:
    """Extract (action, object, part[, place]) from a completion.

    Requires a "Basic [Aa]ction:" line and a "Sequence: 1. X 2. Y" line; a
    "Place:" line is required for pick&place and ignored otherwise.
    """
    action_m = re.search(r"^\s*Basic [Aa]ction:\s*(.+?)\s*$", text, flags=re.M)
    seq_m = re.search(r"^\s*Sequence:\s*1\.\s*(.+?)\s*2\.\s*(.+?)\s*$", text, flags=re.M)
    if action_m is None or seq_m is None:
        raise UnparseableResponse("missing Basic action or Sequence line")
    action = normalize_action(action_m.group(1))
    place_m = re.search(r"^\s*Place:\s*(.+?)\s*$", text, flags=re.M)
    place = place_m.group(1) if place_m else None
    if action == "pick&place" and place is None:
        raise UnparseableResponse("pick&place response missing its Place line")
    if action != "pick&place":
        place = None
    return LLMPlan(action=action, object=seq_m.group(1), part=seq_m.group(2),
                   place=place)


def format_response(plan: LLMPlan) -> str:
    """Render a plan in the response layout (parse_response inverts this)."""
    action = plan.action.replace("&", " & ")
    lines = [f"Basic action: {action}",
             f"Sequence: 1. {plan.object} 2. {plan.part}"]
    if plan.place is not None:
        lines.append(f"Place: {plan.place}")
    return "\n".join(lines)


def majority_vote(task: str, object_list: list[str], client: LLMClient,
                  k: int = 7) -> LLMPlan:
    """Sample k completions and return the plurality (object, part) plan.

    Unparseable responses are dropped. Pair ties break by earliest occurrence;
    the action is the mode among the winning pair's responses (earliest-seen
    action on ties), and the place comes from the earliest such response.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be odd and >= 1")
    prompt = build_prompt(object_list, task)
    plans: list[LLMPlan] = []
    for _ in range(k):
        try:
            plans.append(parse_response(client.complete(prompt)))
        except (UnparseableResponse, UnknownAction):
            continue
    if not plans:
        raise NoParseableResponses(f"none of the {k} responses parsed")

    pair_counts: dict[tuple[str, str], int] = {}
    first_seen: dict[tuple[str, str], int] = {}
    for i, p in enumerate(plans):
        pair = (p.object, p.part)
        pair_counts[pair] = pair_counts.get(pair, 0) + 1
        first_seen.setdefault(pair, i)
    winner = max(pair_counts, key=lambda pr: (pair_counts[pr], -first_seen[pr]))

    candidates = [p for p in plans if (p.object, p.part) == winner]
    action_counts: dict[str, int] = {}
    action_first: dict[str, int] = {}
    for i, p in enumerate(candidates):
        action_counts[p.action] = action_counts.get(p.action, 0) + 1
        action_first.setdefault(p.action, i)
    action = max(action_counts, key=lambda a: (action_counts[a], -action_first[a]))
    chosen = next(p for p in candidates if p.action == action)
    return chosen
