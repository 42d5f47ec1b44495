import json

import httpx
import pytest
from hypothesis import given, strategies as st

from regen.oracle import (
    AnswerParseError, OracleError, OracleHandle, OracleRequest, OracleTransportError, TemplateError, Transcript,
    TranscriptMiss, ask, format_answer, parse_answer, query, render_prompt,
)

from conftest import BEHAVIOR


def test_event_proposal_prompt():
    text = render_prompt("event_proposal", {"causal_graph": ["ego-vehicle stopped abruptly"]})
    assert "Please provide a list of all the plausible scenarios that caused" in text
    assert "ego-vehicle stopped abruptly" in text


def test_property_prompt_mentions_plural_key():
    text = render_prompt("property_proposal", {"causal_graph": [BEHAVIOR], "entities_name": ["ambulance1"],
                                               "node_name": "starting location"})
    assert "possible starting locations" in text


def test_unbound_variable_is_an_error():
    with pytest.raises(TemplateError, match="prior"):
        render_prompt("event_proposal_prior", {"causal_graph": [BEHAVIOR]})
    with pytest.raises(TemplateError):
        render_prompt("no_such_template", {})


def test_scripted_query_replays_abrupt_stop(abrupt_stop_oracle):
    req = OracleRequest.make("event_proposal", {"causal_graph": [BEHAVIOR]})
    first = query(abrupt_stop_oracle, req).text
    names = [n for n, _ in parse_answer(first, "name_desc_list")]
    assert {"a jaywalker walked in front", "animal on the road", "emergency vehicle approaching from behind",
            "debris in the road"} <= set(names)
    assert query(abrupt_stop_oracle, req).text == first


def test_transcript_miss_names_template_and_hash(abrupt_stop_oracle):
    req = OracleRequest.make("event_proposal", {"causal_graph": ["something else"]})
    with pytest.raises(TranscriptMiss) as info:
        query(abrupt_stop_oracle, req)
    assert "event_proposal" in str(info.value) and req.prompt_hash() in str(info.value)


def test_entity_answer_parse():
    text = "Let's think step by step.\nThe ambulance fits.\n<Answer>\n- chosen: ['ambulance']\n</Answer>"
    assert parse_answer(text, "per_entity_value_lists") == {"chosen": ["ambulance"]}


def test_empty_answer_block():
    assert parse_answer("<Answer></Answer>", "per_entity_value_lists") == {}
    assert parse_answer("<Answer></Answer>", "name_desc_list") == []


def test_preamble_does_not_change_parse():
    block = "<Answer>\n- debris in the road: something fell\n- animal: a deer\n</Answer>"
    assert parse_answer("Reasoning first...\n" + block, "name_desc_list") == parse_answer(block, "name_desc_list")


def test_missing_block_is_a_parse_error():
    with pytest.raises(AnswerParseError):
        parse_answer("no tags here", "name_desc_list")


def test_fsm_listing_round_trip():
    payload = {"states": [("ego-vehicle", "Ego Braking", 'is_braking("ego-vehicle")')],
               "fsm": [[("ego-vehicle", "Ego Braking")]]}
    got = parse_answer(format_answer(payload, "fsm_listing"), "fsm_listing")
    assert [tuple(s) for s in got["states"]] == payload["states"]
    assert [[tuple(p) for p in st] for st in got["fsm"]] == payload["fsm"]


_word = st.text("abcdefghij -", min_size=1, max_size=12).map(lambda s: " ".join(s.split())).filter(bool)


@given(st.dictionaries(_word.filter(lambda s: ":" not in s), st.lists(_word, max_size=4, unique=True), max_size=4))
def test_value_lists_round_trip(payload):
    assert parse_answer(format_answer(payload, "per_entity_value_lists"), "per_entity_value_lists") == payload


def test_recorder_captures_exchanges(abrupt_stop_oracle):
    rec = Transcript()
    handle = OracleHandle.scripted(abrupt_stop_oracle.transcript(), recorder=rec)
    ask(handle, "event_proposal", {"causal_graph": [BEHAVIOR]})
    assert len(rec) == 1
    again = Transcript.from_json(rec.to_json())
    assert again.records == rec.records


def test_conflicting_transcript_records():
    t = Transcript()
    t.add("event_proposal", {"causal_graph": ["x"]}, "a")
    with pytest.raises(OracleError, match="conflicting"):
        t.add("event_proposal", {"causal_graph": ["x"]}, "b")


def _remote(handler, **kw):
    return OracleHandle("remote", endpoint="http://oracle.test/v1", transport=httpx.MockTransport(handler),
                        sleep=lambda s: None, **kw)


def test_remote_success_sends_deterministic_sampling():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json={"choices": [{"message": {"content": "<Answer></Answer>"}}]})

    text = ask(_remote(handler, model="m"), "event_proposal", {"causal_graph": [BEHAVIOR]})
    assert text == "<Answer></Answer>"
    assert seen["temperature"] == 0.0 and seen["top_p"] == 0.0 and seen["model"] == "m"


def test_remote_retries_server_errors():
    calls, sleeps = [], []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    h = OracleHandle("remote", endpoint="http://oracle.test", transport=httpx.MockTransport(handler),
                     sleep=sleeps.append)
    assert ask(h, "event_proposal", {"causal_graph": ["x"]}) == "ok"
    assert len(calls) == 3 and sleeps == [0.5, 1.0]


@pytest.mark.parametrize("response, fragment", [
    (httpx.Response(401), "rejected"),
    (httpx.Response(200, json={"nope": 1}), "unexpected"),
    (httpx.Response(500), "unreachable"),
])
def test_remote_failures(response, fragment):
    with pytest.raises(OracleTransportError, match=fragment):
        ask(_remote(lambda r: response), "event_proposal", {"causal_graph": ["x"]})


def test_from_spec():
    assert OracleHandle.from_spec("scripted:abrupt_stop").backend == "scripted"
    with pytest.raises(OracleError):
        OracleHandle.from_spec("remote", env={})
    with pytest.raises(ValueError):
        OracleHandle.from_spec("carrier-pigeon")
