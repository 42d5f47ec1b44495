"""Extract structured payloads from the final ``<Answer>...</Answer>`` block."""
from __future__ import annotations

import ast
import re

from .errors import AnswerParseError

SCHEMAS = ("name_desc_list", "per_entity_value_lists", "fsm_listing")

_BLOCK = re.compile(r"<Answer>(.*?)</Answer>", re.DOTALL)
_BOLD = re.compile(r"\*\*|__")
_WS = re.compile(r"\s+")


def _norm(text: str) -> str:
    return _WS.sub(" ", _BOLD.sub("", text)).strip()


def answer_block(response_text: str) -> str:
    blocks = _BLOCK.findall(response_text)
    if not blocks:
        raise AnswerParseError("response has no <Answer>...</Answer> block")
    return blocks[-1]


def _item_lines(block: str) -> list[str]:
    return [ln.strip() for ln in block.splitlines() if ln.strip()]


def _split_item(line: str) -> tuple[str, str]:
    if not line.startswith("-"):
        raise AnswerParseError(f"malformed answer line: {line!r}")
    body = _BOLD.sub("", line[1:])
    if ":" not in body:
        raise AnswerParseError(f"malformed answer line (missing ':'): {line!r}")
    name, rest = body.split(":", 1)
    name = _norm(name).rstrip(".,;")
    if not name:
        raise AnswerParseError(f"malformed answer line (empty name): {line!r}")
    return name, rest.strip()


def _parse_list(text: str, line: str) -> list[str]:
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise AnswerParseError(f"malformed value list in line: {line!r}") from None
    if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
        raise AnswerParseError(f"expected a list of strings in line: {line!r}")
    return [_norm(v) for v in value]


def _parse_name_desc(block: str) -> list[tuple[str, str]]:
    out = []
    for line in _item_lines(block):
        name, desc = _split_item(line)
        out.append((name, _norm(desc).rstrip(".;,") if desc else ""))
    return out


def _parse_value_lists(block: str) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for line in _item_lines(block):
        name, rest = _split_item(line)
        bucket = out.setdefault(name, [])
        for v in _parse_list(rest.rstrip(".;,"), line):
            if v not in bucket:
                bucket.append(v)
    return out


def _parse_fsm_listing(block: str) -> dict:
    states: list[tuple[str, str, str]] = []
    stages: list[list[tuple[str, str]]] = []
    section = None
    for line in _item_lines(block):
        header = line.rstrip(":").lower()
        if line.endswith(":") and header in ("states", "fsm"):
            section = header
            continue
        if not line.startswith("-") or section is None:
            raise AnswerParseError(f"malformed answer line: {line!r}")
        body = line[1:].strip()
        if section == "states":
            head, sep, expr = body.partition(":")
            agent, bar, name = head.partition("|")
            if not sep or not bar or not _norm(agent) or not _norm(name) or not expr.strip():
                raise AnswerParseError(f"malformed state line: {line!r}")
            states.append((_norm(agent), _norm(name), _norm(expr)))
        else:
            try:
                stage = ast.literal_eval(body)
            except (ValueError, SyntaxError):
                raise AnswerParseError(f"malformed stage line: {line!r}") from None
            if not isinstance(stage, (list, tuple)) or not all(
                isinstance(p, (list, tuple)) and len(p) == 2 and all(isinstance(x, str) for x in p)
                for p in stage
            ):
                raise AnswerParseError(f"stage must be a list of (agent, state) pairs: {line!r}")
            stages.append([(_norm(a), _norm(s)) for a, s in stage])
    return {"states": states, "fsm": stages}


def parse_answer(response_text: str, schema: str):
    """Parse the last answer block of ``response_text`` under ``schema``.

    ``name_desc_list`` gives ordered ``(name, description)`` pairs,
    ``per_entity_value_lists`` a mapping of key to string list, and
    ``fsm_listing`` a dict with ``states`` (agent, name, expression) triples and
    ``fsm`` stages.
    """
    block = answer_block(response_text)
    if schema == "name_desc_list":
        return _parse_name_desc(block)
    if schema == "per_entity_value_lists":
        return _parse_value_lists(block)
    if schema == "fsm_listing":
        return _parse_fsm_listing(block)
    raise ValueError(f"unknown schema {schema!r}")


def format_answer(payload, schema: str) -> str:
    """Inverse of :func:`parse_answer` for normalized payloads."""
    if schema == "name_desc_list":
        lines = [f"- {name}: {desc}" for name, desc in payload]
    elif schema == "per_entity_value_lists":
        lines = [f"- {key}: {list(values)!r}" for key, values in payload.items()]
    elif schema == "fsm_listing":
        lines = ["states:"]
        lines += [f"- {agent} | {name}: {expr}" for agent, name, expr in payload["states"]]
        lines.append("fsm:")
        lines += [f"- {[tuple(p) for p in stage]!r}" for stage in payload["fsm"]]
    else:
        raise ValueError(f"unknown schema {schema!r}")
    body = "\n".join(lines)
    return f"<Answer>\n{body}\n</Answer>" if body else "<Answer></Answer>"
