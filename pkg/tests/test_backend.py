from __future__ import annotations

import hashlib
import json
from pathlib import Path

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import analysis_json, created_skill
from supportskills.backend import (
    AuditLog,
    CallableBackend,
    ChatRequest,
    RemoteBackend,
    RoutingBackend,
    ScriptedBackend,
    extract_json_object,
    judge_parts,
    load_template,
    parse_agent_reply,
    parse_analysis_report,
    parse_judge_reply,
    parse_scorer_reply,
    parse_seeker_reply,
    parse_skill_reply,
    render,
)
from supportskills.backend.port import load_script_dir
from supportskills.backend.prompts import TEMPLATE_IDS, PromptTemplate
from supportskills.errors import (
    BadStrategy,
    BackendError,
    BackendTimeout,
    HttpError,
    InconsistentReport,
    MissingSlot,
    ScriptExhausted,
    SkillFormatError,
    UnknownSlot,
    Unparseable,
)
from supportskills.skill import serialize_skill

GOLDEN = Path(__file__).parent / "golden" / "templates.sha256"
TEMPLATE_DIR = Path(__file__).parents[1] / "src" / "supportskills" / "backend" / "templates"


def golden_checksums() -> dict[str, str]:
    out = {}
    for line in GOLDEN.read_text().splitlines():
        digest, name = line.split()
        out[name.removesuffix(".txt")] = digest
    return out


def req(tag="t", user="hi"):
    return ChatRequest.single("sys", user, tag=tag)


# --- templates -----------------------------------------------------------------


def test_six_templates_match_checksums():
    sums = golden_checksums()
    assert sorted(sums) == sorted(TEMPLATE_IDS) and len(sums) == 6
    for tid in TEMPLATE_IDS:
        body = load_template(tid).body
        assert hashlib.sha256(body.encode("utf-8")).hexdigest() == sums[tid], tid
        assert (TEMPLATE_DIR / f"{tid}.txt").read_text(encoding="utf-8") == body


def test_template_slots():
    assert load_template("agent_system").required_slots == {"skills_section"}
    assert load_template("analysis").required_slots == {
        "task", "scene_summary", "skills_catalog", "skills_used_list", "used_skills_content", "conversations_text",
    }
    assert "avg_score" in load_template("skill_update").required_slots
    assert load_template("selfgen_cot").required_slots == frozenset()
    system, user = judge_parts()
    assert system.required_slots == frozenset()
    assert user.required_slots == {"history", "situation", "strategy", "response"}


def test_render_baseline_and_errors():
    agent = load_template("agent_system")
    baseline = agent.render(skills_section="")
    assert "{skills_section}" not in baseline
    assert '"strategy"' in baseline  # JSON example braces stay literal
    with pytest.raises(MissingSlot) as exc:
        load_template("analysis").render(scene_summary="", skills_catalog="", skills_used_list="", used_skills_content="", conversations_text="")
    assert exc.value.name == "task"
    with pytest.raises(UnknownSlot):
        agent.render(skills_section="", extra="x")
    with pytest.raises(KeyError):
        load_template("nope")


def test_render_formats_and_does_not_reexpand():
    t = PromptTemplate("x", "score {avg:.1f}; said {text}")
    assert render(t, {"avg": 42.25, "text": "{avg}"}) == "score 42.2; said {avg}"
    assert render(t, {"avg": "7", "text": ""}) == "score 7.0; said "


@given(st.text(max_size=50))
def test_render_inserts_values_verbatim(value):
    body = load_template("agent_system").body
    out = load_template("agent_system").render(skills_section=value)
    assert out == body.replace("{skills_section}", value)


# --- requests and scripted backends ----------------------------------------------------


def test_chat_request_validation():
    r = ChatRequest("s", [("user", "a"), ("assistant", "b"), ("user", "c")])
    assert r.messages == (("user", "a"), ("assistant", "b"), ("user", "c"))
    for bad in (
        dict(system="", messages=[("user", "a")]),
        dict(system="s", messages=[]),
        dict(system="s", messages=[("assistant", "a")]),
        dict(system="s", messages=[("user", "a")], temperature=-1),
        dict(system="s", messages=[("user", "a")], max_tokens=0),
    ):
        with pytest.raises(ValueError):
            ChatRequest(**bad)


def test_scripted_backend_replays_per_tag(tmp_path):
    audit = AuditLog(tmp_path / "a.ndjson")
    b = ScriptedBackend({"x": ["1", "2"], "y": ["3"]}, audit=audit)
    assert [b.complete(req("x")), b.complete(req("y")), b.complete(req("x"))] == ["1", "3", "2"]
    assert b.remaining() == {}
    with pytest.raises(ScriptExhausted) as exc:
        b.complete(req("x"))
    assert (exc.value.tag, exc.value.index) == ("x", 2)
    lines = [json.loads(line) for line in (tmp_path / "a.ndjson").read_text().splitlines()]
    assert [(r["tag"], r["index"]) for r in lines] == [("x", 0), ("y", 0), ("x", 1)]


def test_script_files_and_directories(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"x": ["1"]}))
    (tmp_path / "b.ndjson").write_text(json.dumps({"tag": "x", "response": "2"}) + "\n\n" + json.dumps({"tag": "y", "response": "3"}) + "\n")
    assert ScriptedBackend.from_file(tmp_path / "b.ndjson").script == {"x": ["2"], "y": ["3"]}
    merged = load_script_dir(tmp_path)
    assert merged.script == {"x": ["1", "2"], "y": ["3"]}
    with pytest.raises(BackendError):
        load_script_dir(tmp_path / "empty")


def test_callable_and_routing_backends():
    seen = []
    live = CallableBackend(lambda r: seen.append(r.tag) or "live")
    scripted = ScriptedBackend({"simulate/p/seeker": ["s"]})
    router = RoutingBackend({"seeker": scripted}, default=live)
    assert router.complete(req("simulate/p/seeker")) == "s"
    assert router.complete(req("simulate/p/agent")) == "live"
    assert seen == ["simulate/p/agent"]


# --- remote backend ------------------------------------------------------------------


def ok(content="hello"):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def remote(handler, tmp_path=None, **kw):
    sleeps: list[float] = []
    audit = AuditLog(tmp_path / "audit.ndjson") if tmp_path else None
    backend = RemoteBackend(
        "http://llm.test/v1", api_key="sk-secret", model="m", transport=httpx.MockTransport(handler),
        sleep=sleeps.append, seed=0, audit=audit, **kw,
    )
    return backend, sleeps


def test_remote_success_payload(tmp_path):
    captured = {}

    def handler(request):
        captured["url"] = str(request.url)
        captured["auth"] = request.headers["authorization"]
        captured["body"] = json.loads(request.content)
        return ok()

    backend, sleeps = remote(handler, tmp_path)
    assert backend.complete(ChatRequest.single("sys", "hi", tag="t")) == "hello"
    assert captured["url"] == "http://llm.test/v1/chat/completions"
    assert captured["auth"] == "Bearer sk-secret"
    assert captured["body"]["model"] == "m"
    assert captured["body"]["messages"] == [{"role": "system", "content": "sys"}, {"role": "user", "content": "hi"}]
    assert sleeps == []


@pytest.mark.parametrize("status", [408, 409, 425, 429, 500, 502, 503, 529])
def test_remote_retries_then_gives_up(status, tmp_path):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(status, text="busy sk-secret")

    backend, sleeps = remote(handler, tmp_path, max_retries=3, backoff=1.0)
    with pytest.raises(HttpError) as exc:
        backend.complete(req())
    assert exc.value.status == status
    assert len(calls) == 4  # first attempt plus three retries
    assert len(sleeps) == 3
    for n, delay in enumerate(sleeps, start=1):
        base = 2 ** (n - 1)
        assert base <= delay <= base * 1.1
    audit = (tmp_path / "audit.ndjson").read_text()
    assert "sk-secret" not in audit and "***" in audit
    assert [json.loads(line)["attempt"] for line in audit.splitlines()] == [0, 1, 2, 3]


def test_remote_recovers_after_transient_failures():
    responses = iter([httpx.Response(503), httpx.Response(429), ok("fine")])
    backend, sleeps = remote(lambda r: next(responses), backoff=0.5)
    assert backend.complete(req()) == "fine"
    assert len(sleeps) == 2 and 0.5 <= sleeps[0] <= 0.55 and 1.0 <= sleeps[1] <= 1.1


def test_remote_does_not_retry_client_errors():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad request")

    backend, sleeps = remote(handler)
    with pytest.raises(HttpError):
        backend.complete(req())
    assert len(calls) == 1 and sleeps == []


def test_remote_timeouts_and_transport_errors_retry():
    def timeout(request):
        raise httpx.ReadTimeout("slow", request=request)

    backend, sleeps = remote(timeout, max_retries=1)
    with pytest.raises(BackendTimeout):
        backend.complete(req())
    assert len(sleeps) == 1

    def refused(request):
        raise httpx.ConnectError("refused", request=request)

    backend, _ = remote(refused, max_retries=0)
    with pytest.raises(BackendError):
        backend.complete(req())


def test_remote_malformed_body_and_config():
    backend, _ = remote(lambda r: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(BackendError):
        backend.complete(req())
    with pytest.raises(BackendError):
        RemoteBackend("")
    with pytest.raises(ValueError):
        RemoteBackend("http://x", max_retries=-1)
    env = {"BACKEND_URL": "http://env.test", "BACKEND_API_KEY": "k", "BACKEND_MODEL": "mm"}
    b = RemoteBackend.from_env(env)
    assert b.url == "http://env.test/chat/completions" and b.model == "mm"


# --- reply parsers -----------------------------------------------------------------


def test_extract_json_object():
    assert extract_json_object('noise {"a": 1} tail') == {"a": 1}
    assert extract_json_object('```json\n{"a": {"b": 2}}\n```') == {"a": {"b": 2}}
    assert extract_json_object('[1, 2] then {"c": 3}') == {"c": 3}
    assert extract_json_object('{bad} {"d": 4}') == {"d": 4}
    for raw in ("", "no braces", "[1, 2]", '{"open": '):
        with pytest.raises(Unparseable):
            extract_json_object(raw)


def test_agent_reply_contract():
    r = parse_agent_reply('{"strategy": "Reflection of feelings", "text": "That sounds hard."}')
    assert (r.strategy, r.text) == ("Reflection of feelings", "That sounds hard.")
    assert parse_agent_reply('{"strategy": "[question]", "text": "Why?"}').strategy == "Question"
    assert parse_agent_reply('{"strategy": "Hypnosis", "text": "x"}').strategy == "Others"
    with pytest.raises(BadStrategy):
        parse_agent_reply('{"strategy": "Hypnosis", "text": "x"}', strict=True)
    for raw in ('{"strategy": "Question"}', '{"strategy": "Question", "text": "  "}', "plain prose"):
        with pytest.raises(Unparseable):
            parse_agent_reply(raw)
    assert parse_agent_reply(r.to_json()) == r


def test_seeker_and_scorer_replies():
    s = parse_seeker_reply('{"thought": "t", "utterance": "u", "states": ["rumination", "Bogus", "Rumination"]}')
    assert s.states == ("Rumination",)
    with pytest.raises(Unparseable):
        parse_seeker_reply('{"thought": "t"}')
    assert parse_scorer_reply('{"analysis": "a", "delta": -5}').delta == -5
    assert parse_scorer_reply('{"delta": "3"}').delta == 3
    assert parse_scorer_reply('{"delta": 4.0}').delta == 4
    for raw in ('{"delta": 2.5}', '{"delta": true}', '{"delta": "lots"}', '{"analysis": "a"}'):
        with pytest.raises(Unparseable):
            parse_scorer_reply(raw)


def test_analysis_report_accepts_each_recommendation():
    r = parse_analysis_report(analysis_json(recommendation="no_action"))
    assert r.recommendation == "no_action" and r.target_skill is None
    r = parse_analysis_report(analysis_json(recommendation="update_existing", target_skill="esc-x", update_reason="why"))
    assert r.target_skill == "esc-x"
    r = parse_analysis_report(analysis_json(recommendation="add_new", new_skill_name="esc-new", new_skill_description="One line."))
    assert (r.new_skill_name, r.new_skill_description) == ("esc-new", "One line.")
    assert set(r.to_dict()) == {
        "profile_id", "avg_score", "analysis", "skills_actually_used", "skill_effectiveness", "skill_gaps",
        "recommendation", "target_skill", "update_reason", "new_skill_name", "new_skill_description", "reasoning",
    }
    assert parse_analysis_report("```json\n" + json.dumps(r.to_dict()) + "\n```") == r


@pytest.mark.parametrize(
    "fields, exc",
    [
        (dict(recommendation="rewrite"), Unparseable),
        (dict(recommendation=None), Unparseable),
        (dict(recommendation="no_action", avg_score="high"), Unparseable),
        (dict(recommendation="update_existing", target_skill=None), InconsistentReport),
        (dict(recommendation="update_existing", target_skill="null"), InconsistentReport),
        (dict(recommendation="add_new", new_skill_name=""), InconsistentReport),
        (dict(recommendation="no_action", skill_gaps=7), Unparseable),
    ],
)
def test_analysis_report_violations(fields, exc):
    with pytest.raises(exc):
        parse_analysis_report(analysis_json(**fields))


def test_judge_reply():
    j = parse_judge_reply('{"empathy": 5, "relevance": "4", "helpfulness": 3.0, "overall": 4, "rationale": "ok"}')
    assert (j.empathy, j.relevance, j.helpfulness, j.overall, j.rationale) == (5, 4, 3, 4, "ok")
    for bad in ('{"empathy": 6, "relevance": 4, "helpfulness": 3, "overall": 4}', '{"empathy": 5, "relevance": 4, "helpfulness": 3}', '{"empathy": true, "relevance": 4, "helpfulness": 3, "overall": 4}'):
        with pytest.raises(Unparseable):
            parse_judge_reply(bad)


def test_skill_reply_tolerates_fence_and_chatter():
    text = serialize_skill(created_skill("esc-new-thing"))
    assert parse_skill_reply(text) == created_skill("esc-new-thing")
    assert parse_skill_reply("```markdown\n" + text + "```") == created_skill("esc-new-thing")
    assert parse_skill_reply("Here is the skill:\n\n" + text) == created_skill("esc-new-thing")
    with pytest.raises(SkillFormatError):
        parse_skill_reply("no frontmatter at all")
