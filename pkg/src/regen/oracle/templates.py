"""Prompt templates and their renderer.

Placeholders are ``{name}`` or ``{name[-1]}`` (last element of a list).
Lists and mappings render as JSON; strings render verbatim.
"""
from __future__ import annotations

import json
import re

from .errors import TemplateError

_HEADER = "You are an expert in driving scenarios.\n\n"

_EVENT_PROPOSAL_TAIL = (
    "Please provide a list of all the plausible scenarios that caused {causal_graph[-1]}. "
    "Make sure it is precise. Provide the final answer as a comprehensive list of plausible "
    "scenarios in the following format within the tags <Answer>...</Answer>:\n"
    "\n"
    "    - cause_name: cause description\n"
    "\n"
    "Answer: Let's think step by step."
)

_SELECTION_FORMAT = (
    "Finally, provide the final answer as a list of the chosen candidates in the following "
    "format within the tags <Answer>...</Answer>.\n"
    "- chosen: ['candidate1', 'candidate2', ...]\n"
)

TEMPLATES: dict[str, str] = {
    "event_proposal": (
        _HEADER
        + "In this scenario there is {causal_graph}.\n\n"
        + _EVENT_PROPOSAL_TAIL
    ),
    "event_proposal_prior": (
        _HEADER
        + "In this scenario there is {causal_graph}.\n\n"
        + "Take the following context into account: {prior}.\n\n"
        + _EVENT_PROPOSAL_TAIL
    ),
    "property_proposal": (
        _HEADER
        + "In this scenario there is {causal_graph}. The entities in the scenario are:\n"
        "{entities_name}\n"
        "\n"
        "Please provide a list of all the possible {node_name}s for the entities in the scenario, "
        "excluding the ego-vehicle. Make sure it is precise. Provide the final answer as a "
        "comprehensive list of possible {node_name}s in the following format within the tags "
        "<Answer>...</Answer>:\n"
        "\n"
        "    - entity_name: ['{node_name}1', '{node_name}2', ...]\n"
        "\n"
        "Answer: Let's think step by step."
    ),
    "event_edge": (
        _HEADER
        + "In this scenario there is {causal_graph}.\n\n"
        "The candidate causes of {effect} are:\n"
        "{candidates}\n"
        "\n"
        "Which of the candidates could directly cause {effect}? To answer this, for each "
        "candidate, start by stating everything that is known, then check if it is a plausible "
        "direct cause given what is known, finally give your conclusion. Reject candidates that "
        "are logically implausible. Think step by step.\n"
        "\n"
        + _SELECTION_FORMAT
        + "\n"
        "Here are some tips to help you answer the question:\n"
        "- The candidates selected can only be from the list of candidates provided.\n"
        "\n"
        "Answer: Let's think step by step."
    ),
    "entity_edge": (
        _HEADER
        + "In this scenario there is {causal_graph}.\n\n"
        "The entities available in the simulator are:\n"
        "{candidates}\n"
        "\n"
        "Which of the available entities are directly involved in the event \"{event}\"? "
        "For each entity, state what is known, check whether it can represent a participant of "
        "the event, and give your conclusion. If no available entity can represent the event, "
        "choose none. Think step by step.\n"
        "\n"
        + _SELECTION_FORMAT
        + "\n"
        "Here are some tips to help you answer the question:\n"
        "- The entities selected can only be from the list of available entities provided.\n"
        "\n"
        "Answer: Let's think step by step."
    ),
    "property_edge": (
        _HEADER
        + "In this scenario there is {causal_graph}. The entities in the scenario are:\n"
        "{entities}\n"
        "\n"
        "The possible {node_name}s for each entity are:\n"
        "{candidate_values}\n"
        "\n"
        "What are all the possible {node_name}s for each entity in the scenario? To answer this, "
        "first, please summarize the details of each entities in the scenario. Then, check each "
        "to see if it is the possible outcome given what is known. For each, start by stating "
        "everything that is known about all the entities, then check if it is plausible given "
        "what is known, finally give your conclusion. Think step by step. You must not assume "
        "additional actions beyond what is explicitly described in the behavior. You must also "
        "assume that the actions are executed fully. Your evaluation needs to be in the "
        "following format:\n"
        "\n"
        "1. **Name of {node_name}**\n"
        "- Known:\n"
        "- Analysis: (think step by step)\n"
        "- Contradictions to what is known: (think step by step)\n"
        "- Conclusion:\n"
        "\n"
        "Finally, provide the final answer as a list of locations in the following formats "
        "within the tags <Answer>...</Answer>.\n"
        "- entity_name: ['{node_name}1', '{node_name}2', ...]\n"
        "\n"
        "Here are some tips to help you answer the question:\n"
        "- You may assume that the vehicles can break traffic rules as long as it is plausible "
        "in real life (realistic). However, the vehicles action must not violate the behavior "
        "described.\n"
        "- The {node_name}s selected can only be from the list of possible {node_name}s "
        "provided.\n"
        "\n"
        "Answer: Let's think step by step."
    ),
    "fsm_grounding": (
        _HEADER
        + "In this scenario there is {causal_graph}. The entities in the scenario are:\n"
        "{entities}\n"
        "\n"
        "Write the abstract states and the finite state machine that verify this scenario in "
        "simulation. Each abstract state belongs to one entity and is a conjunction (and) or "
        "disjunction (or) of calls to the following predicates, with entity names as "
        "arguments:\n"
        "{predicate_library}\n"
        "\n"
        "The finite state machine is an ordered list of stages. Each stage is a list of "
        "(entity name, abstract state name) pairs that must hold at the same time; stages must "
        "be met in order and the last stage is the terminal condition.\n"
        "\n"
        "Provide the final answer in the following format within the tags <Answer>...</Answer>:\n"
        "states:\n"
        "- entity_name | State Name: predicate(entity_name, ...) and predicate(entity_name)\n"
        "fsm:\n"
        "- [('entity_name', 'State Name'), ('entity_name', 'State Name')]\n"
        "\n"
        "Answer: Let's think step by step."
    ),
}

_PLACEHOLDER = re.compile(r"\{([A-Za-z_]+)(\[-1\])?\}")


def _render_value(value) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False)


def template_variables(template_id: str) -> set[str]:
    return {m.group(1) for m in _PLACEHOLDER.finditer(TEMPLATES[template_id])}


def render_prompt(template_id: str, variables: dict) -> str:
    try:
        template = TEMPLATES[template_id]
    except KeyError:
        raise TemplateError(f"unknown template '{template_id}'") from None

    def sub(m: re.Match) -> str:
        name, last = m.group(1), m.group(2)
        if name not in variables or variables[name] is None:
            raise TemplateError(f"template '{template_id}' needs variable '{name}'")
        value = variables[name]
        if last:
            if not isinstance(value, (list, tuple)) or not value:
                raise TemplateError(f"variable '{name}' must be a non-empty list")
            value = value[-1]
        return _render_value(value)

    return _PLACEHOLDER.sub(sub, template)
