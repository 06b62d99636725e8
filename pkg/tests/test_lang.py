import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lreq.errors import ConfigError, ParseError
from lreq.lang import desugar, parse, show
from lreq.lang.syntax import (
    Abs,
    App,
    Event,
    Fork,
    If,
    MetFrame,
    Req,
    Res,
    SecFrame,
    Sequence,
    Signature,
    Unit,
    Var,
    free_vars,
    requests,
)

from programs import ProgramGenerator, make_world


@pytest.fixture(scope="module")
def sig(corpus):
    return corpus.signature


def test_parses_every_corpus_program(corpus_dir, sig):
    files = sorted(corpus_dir.glob("*.lreq")) + sorted((corpus_dir / "services").glob("*.lreq"))
    assert len(files) == 15
    for f in files:
        e = parse(f.read_text(), sig)
        assert parse(show(e), sig) == e, f.name


def test_basic_shapes(sig):
    assert parse("*") == Unit()
    assert parse("AIRPORT", sig) == Res("AIRPORT", "A")
    assert parse("reserve(FLIGHT_No)", sig) == Event("reserve", Res("FLIGHT_No", "F"))
    assert parse("f x y") == App(App(Var("f"), Var("x")), Var("y"))
    assert parse("f (x)") == App(Var("f"), Var("x"))
    assert parse("a(*); b(*); *") == Sequence(Event("a", Unit()), Sequence(Event("b", Unit()), Unit()))


def test_lambda_and_fun(sig):
    e = parse(r"\x : A -> x", sig)
    assert e == Abs(None, "x", Var("x"), "A")
    e = parse("fun z(y) = z y")
    assert e == Abs("z", "y", App(Var("z"), Var("y")))
    assert free_vars(e) == frozenset()


def test_else_branch_stops_at_semicolon(sig):
    e = parse("if is_empty then * else *; SIGNED_DOC", sig)
    assert isinstance(e, Sequence) and isinstance(e.first, If)


def test_frames_and_requests(sig):
    e = parse('sec "no_overbooking" { met RISK <= 75 { (req rho1 : A -> F) AIRPORT } }', sig)
    assert isinstance(e, SecFrame) and e.policy == "no_overbooking"
    assert isinstance(e.body, MetFrame) and str(e.body.check) == "RISK <= 75"
    assert requests(e) == [Req("rho1", "A", "F")]


def test_annotated_request_desugars_to_framings(sig):
    e = parse('(req rho1 : A -[sec "no_overbooking", met RISK <= 75]-> F) AIRPORT', sig)
    core = desugar(e)
    assert isinstance(core, SecFrame) and isinstance(core.body, MetFrame)
    assert core.body.body == App(Req("rho1", "A", "F"), Res("AIRPORT", "A"))


def test_sequence_and_fork_desugaring(sig):
    seq = desugar(parse("a(*); *"))
    assert isinstance(seq, App) and isinstance(seq.fn, Abs) and seq.arg == Event("a", Unit())
    fork = parse("fork { a(*) } and { b(*) }")
    assert isinstance(fork, Fork)
    core = desugar(fork)
    # ((fun _(_) = \x -> x) right) left
    assert core.arg == Event("a", Unit())
    assert core.fn.arg == Event("b", Unit())


def test_desugar_is_idempotent(corpus_dir, sig):
    e = parse((corpus_dir / "besttravel.lreq").read_text(), sig)
    once = desugar(e)
    assert desugar(once) == once


@pytest.mark.parametrize(
    "source, fragment",
    [
        ("(x", "1:3"),
        ("\\x -> ", "1:7"),
        ("if g then *", "1:12"),
        ("req r : A", "1:10"),
        ("a(*) )", "1:6"),
        ('sec "p" *', "1:9"),
    ],
)
def test_parse_errors_carry_positions(source, fragment):
    with pytest.raises(ParseError) as exc:
        parse(source)
    assert str(exc.value).startswith(fragment)


def test_signature_checks(sig):
    with pytest.raises(ParseError, match="guard"):
        parse("if unknown_guard then * else *", sig)
    with pytest.raises(ParseError, match="polic"):
        parse('sec "nope" { * }', sig)
    with pytest.raises(ParseError, match="NOWHERE"):
        parse("NOWHERE", sig)
    with pytest.raises(ParseError):
        parse(r"\x : Q -> x", sig)


def test_signature_domains():
    sig = Signature.from_doc({"B": {"union": ["I", "F"]}, "I": ["IT"], "F": ["FL", "NO"]})
    assert sig.members("B") == ("IT", "FL", "NO")
    assert sig.includes("F", "B") and not sig.includes("B", "F")
    with pytest.raises(ConfigError):
        Signature.from_doc({"A": ["X"], "B": ["X"]})
    with pytest.raises(ConfigError):
        Signature.from_doc({"U": {"union": ["Missing"]}})


def test_comments_are_skipped():
    assert parse("-- nothing here\n*  -- trailing") == Unit()


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False))
def test_show_parse_round_trip_on_random_programs(rnd):
    world = make_world()
    e = ProgramGenerator(random.Random(rnd.random())).program()
    assert parse(show(e), world.signature) == e
