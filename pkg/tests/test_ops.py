import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from spshm import ops
from spshm.ad import ParamSpec
from spshm.ops import (
    InvalidCommand,
    Session,
    ToolCall,
    ToolDescriptor,
    ToolError,
    ToolOutput,
    ToolRegistry,
    Unrecognized,
    Workspace,
    execute,
    parse_command,
)

CORPUS = json.loads((Path(__file__).parent / "fixtures" / "ops_corpus.json").read_text())["commands"]


def noop(ws, **kw):
    return ToolOutput()


def seven_tools():
    return [ToolDescriptor(f"tool{i}", f"tool number {i}", (), noop) for i in range(7)]


class TestRegistry:
    def test_listing_keeps_order(self):
        reg = ToolRegistry(seven_tools())
        assert reg.names() == [f"tool{i}" for i in range(7)]
        assert reg.listing()[3] == ("tool3", "tool number 3")

    def test_duplicate(self):
        reg = ToolRegistry(seven_tools())
        with pytest.raises(ToolError):
            reg.register(ToolDescriptor("tool0", "again", (), noop))

    def test_frozen(self):
        with pytest.raises(ToolError):
            ops.DEFAULT_TOOLS.register(ToolDescriptor("x", "x", (), noop))

    def test_bad_descriptors(self):
        p = ParamSpec("a", int, 1)
        with pytest.raises(ToolError):
            ToolDescriptor("t", "t", (p, p), noop)
        with pytest.raises(ToolError):
            ToolDescriptor("t", "t", (p,), noop, required=("b",))

    def test_noop_tool_is_ok_and_empty(self):
        reg = ToolRegistry(seven_tools())
        r = execute(ToolCall("tool0", {}, "r1"), Workspace(), reg)
        assert r.ok and r.text == "" and r.artifacts == () and r.data == {} and r.request_id == "r1"

    def test_session_lists_its_own_tools(self):
        s = Session(tools=ToolRegistry([ToolDescriptor("list_tools", "l", (), ops._list_tools), *seven_tools()]))
        _, r = s.handle("list tools")
        assert r.data["tools"] == ["list_tools"] + [f"tool{i}" for i in range(7)]

    def test_failures_become_error_results(self):
        r = execute(ToolCall("detect", {}), Workspace())
        assert r.status == "error" and "train first" in r.reason
        assert execute(ToolCall("nope", {}), Workspace()).status == "error"


class TestParser:
    def test_list_algorithms(self):
        assert parse_command("list algorithms") == ToolCall("describe_models", {})

    def test_set_params(self):
        call = parse_command("set batch_size 64 patience 5 for AR")
        assert call == ToolCall("set_params", {"model": "AR", "batch_size": 64, "patience": 5})

    def test_filler_words_do_not_matter(self):
        a = parse_command("set batch_size to 64, set patience to 5 for AR")
        assert a == parse_command("set batch_size 64 patience 5 for AR")

    @pytest.mark.parametrize("text,reason", [
        ("set batch_size 0 for AR", "batch_size"),
        ("set depth 3 for AR", "depth"),
        ("set order 3 for Persistence", "order"),
        ("set for AR", "at least one"),
        ("advise", "missing fault"),
        ("simulate", "missing kind"),
        ("list", "list what"),
        ("list planets", "cannot list"),
        ("describe", "describe what"),
        ("train LSTM", "LSTM"),
        ("advise BAT_OPEN k two", "k expects"),
        ("detect on", "needs a value"),
        ("recognize start 1 start 2", "twice"),
    ])
    def test_invalid(self, text, reason):
        r = parse_command(text)
        assert isinstance(r, InvalidCommand) and reason in r.reason

    @pytest.mark.parametrize("text", ["", "   ", "hello there", "please reboot the satellite", "'unclosed"])
    def test_unrecognized_gets_capabilities(self, text):
        r = parse_command(text)
        assert isinstance(r, Unrecognized) and "list algorithms" in r.summary

    def test_quantile_is_a_train_argument(self):
        assert parse_command("train quantile 0.99").args["quantile"] == 0.99
        assert isinstance(parse_command("set quantile 0.99"), InvalidCommand)

    @settings(max_examples=300)
    @given(st.text(max_size=80))
    def test_never_raises_on_text(self, text):
        assert isinstance(parse_command(text), (ToolCall, Unrecognized, InvalidCommand))

    @settings(max_examples=300)
    @given(st.sampled_from(ops.VERBS), st.lists(st.sampled_from(
        ["AR", "for", "on", "64", "order", "x=1", "=", "to", "k", "start", "-3", "0.5", "tool", "train", "'a b'"]),
        max_size=6))
    def test_never_raises_on_grammar_words(self, verb, words):
        assert isinstance(parse_command(" ".join([verb, *words])), (ToolCall, Unrecognized, InvalidCommand))


@pytest.mark.parametrize("entry", CORPUS, ids=[e["command"] for e in CORPUS])
def test_corpus_parses_to_expected_call(entry):
    call = parse_command(entry["command"])
    assert call == ToolCall(entry["tool"], entry["args"])


class TestSession:
    def test_corpus_runs_in_order(self, tmp_path):
        s = Session(Workspace(out_dir=tmp_path), log_path=tmp_path / "session.log")
        for e in CORPUS:
            parsed, result = s.handle(e["command"])
            assert result is not None and result.ok, (e["command"], result and result.reason)
        assert (s.dispatched, s.attempted) == (50, 50) and s.accuracy == 1.0
        lines = (tmp_path / "session.log").read_text().splitlines()
        assert len(lines) == 50 and lines[0].split("\t")[1] == "list algorithms"
        assert (tmp_path / "report_BAT_OPEN.txt").exists()

    def test_accuracy_counts(self):
        s = Session()
        s.handle("list tools")
        s.handle("advise")  # invalid: attempted, not dispatched
        s.handle("detect")  # parses, fails at run time
        s.handle("what can you do?")  # outside the grammar: neither
        assert (s.dispatched, s.attempted) == (1, 3)
        assert s.accuracy == pytest.approx(1 / 3)
        assert [e.status.split(":")[0] for e in s.log] == ["ok", "invalid", "error", "unrecognized"]

    def test_replies(self):
        s = Session()
        assert "list algorithms" in s.reply("hi")
        assert s.reply("advise").startswith("Cannot run that: missing fault")
        assert "BAT_OPEN" in s.reply("list faults")

    def test_set_then_describe_shows_value(self):
        s = Session()
        s.handle("set order 7 for AR")
        _, r = s.handle("describe AR")
        assert "order=7" in r.text
        # workspaces do not share settings
        assert "order=4" in Session().reply("describe AR")
