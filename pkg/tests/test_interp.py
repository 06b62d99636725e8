import pytest

from lreq.errors import ExplorationLimit, RunError
from lreq.interp import (
    Done,
    MetricHalt,
    OutOfFuel,
    Runtime,
    SecurityHalt,
    Stuck,
    describe,
    explore,
    guard_valuations,
    make_scheduler,
    outcome_json,
    run,
)
from lreq.lang import parse
from lreq.lang.syntax import App
from lreq.semiring import RISK
from lreq.trace import Event, Marker

R = RISK.value


@pytest.fixture(scope="module")
def P(corpus):
    return lambda source: parse(source, corpus.signature)


def runtime(cfg, plan=None, guard_mode="predictive", **guards):
    return Runtime(cfg.repo, cfg.F, plan or {}, dict(cfg.guards, **guards), cfg.policies, guard_mode)


def test_flight_service_run(corpus, P):
    prog = App(corpus.load_program("services/e1.lreq"), P("AIRPORT"))
    o = run(prog, runtime(corpus))
    assert isinstance(o, Done)
    assert [r.rule for r in o.log] == ["S-App3", "S-Ev2", "S-App3", "S-If", "S-Ev2", "S-App3"]
    assert o.trace == (Event("search_flight_for", "AIRPORT"), Event("reserve", "FLIGHT_No"))
    assert o.metric == R(15)
    assert describe(o).startswith("Done FLIGHT_No metric 15")


@pytest.fixture(scope="module")
def hotel(corpus):
    return corpus.load_program("hotel.lreq")


class TestHotel:
    def test_predicted_overrun_halts(self, corpus, hotel):
        o = run(hotel, runtime(corpus, {"rho2": "e7", "rho3": "e6"}))
        assert isinstance(o, MetricHalt) and o.value == R(78)
        assert str(o.check) == "RISK <= 75"

    @pytest.mark.parametrize("plan, actual, guard", [({"rho2": "e8", "rho3": "e6"}, 65, 75),
                                                     ({"rho2": "e8", "rho3": "e5"}, 55, 65)])
    def test_within_budget(self, corpus, hotel, plan, actual, guard):
        o = run(hotel, runtime(corpus, plan))
        assert isinstance(o, Done)
        assert [(f.actual, f.guard) for f in o.frames] == [(R(actual), R(guard))]
        assert o.metric == R(actual)
        assert isinstance(o.trace[0], Marker) and o.trace[0].opening

    def test_actual_mode_only_counts_what_happened(self, corpus, hotel):
        o = run(hotel, runtime(corpus, {"rho2": "e7", "rho3": "e6"}, guard_mode="actual"))
        assert isinstance(o, Done)
        assert o.frames[0].actual == R(68) and o.frames[0].guard == R(78)


def test_security_halt(corpus, P):
    prog = P('sec "no_overbooking" { (req rho7 : A -> F) AIRPORT }')
    rt = runtime(corpus, {"rho7": "e2"}, is_available=False, can_overbook=True)
    o = run(prog, rt)
    assert isinstance(o, SecurityHalt) and o.policy == "no_overbooking"
    assert o.trace[-1] == Event("overbook", "FLIGHT_No")
    safe = run(prog, runtime(corpus, {"rho7": "e1"}, is_available=False, can_overbook=True))
    assert isinstance(safe, Done) and safe.trace[-1] == Marker(False, "no_overbooking")


def test_stuck_and_out_of_fuel(corpus, P):
    o = run(P("AIRPORT CITY"), runtime(corpus))
    assert isinstance(o, Stuck) and "not a function" in o.description
    loop = P("(fun z(y) = z y) *")
    o = run(loop, runtime(corpus), fuel=50)
    assert isinstance(o, OutOfFuel) and o.steps == 50


def test_run_errors(corpus, P):
    with pytest.raises(RunError, match="does not assign"):
        run(P("(req rho7 : A -> F) AIRPORT"), runtime(corpus))
    with pytest.raises(RunError, match="explore"):
        run(P("if is_available then * else *"), runtime(corpus, is_available="both"))
    with pytest.raises(RunError, match="guard mode"):
        runtime(corpus, guard_mode="eager")


class TestSchedulers:
    FORK = "fork { reserve(ITINERARY) } and { book(HOTEL) }"

    def test_deterministic_orders(self, corpus, P):
        left = run(P(self.FORK), runtime(corpus), make_scheduler("left"))
        right = run(P(self.FORK), runtime(corpus), make_scheduler("right"))
        assert left.trace == (Event("book", "HOTEL"), Event("reserve", "ITINERARY"))
        assert right.trace == tuple(reversed(left.trace))
        assert left.metric == right.metric == R(35)

    def test_seeded_is_reproducible(self, corpus, P):
        outs = {run(P(self.FORK), runtime(corpus), make_scheduler("seeded", s)).trace for s in range(6)}
        again = {run(P(self.FORK), runtime(corpus), make_scheduler("seeded", s)).trace for s in range(6)}
        assert outs == again and len(outs) == 2

    def test_unknown(self):
        with pytest.raises(RunError):
            make_scheduler("random")


def test_explore_covers_guards_and_interleavings(corpus, P):
    prog = App(corpus.load_program("services/e2.lreq"), P("AIRPORT"))
    outcomes = explore(prog, runtime(corpus, is_available=False, can_overbook="both"))
    assert {(o.value.name, o.metric.value) for o in outcomes} == {("FLIGHT_No", 20), ("NO_FLIGHT", 0)}
    fork = explore(P(TestSchedulers.FORK), runtime(corpus))
    assert len(fork) == 2
    with pytest.raises(ExplorationLimit):
        explore(P(TestSchedulers.FORK), runtime(corpus), state_cap=3)


def test_guard_valuations():
    vals = guard_valuations({"a": True, "b": "both", "c": "both"})
    assert len(vals) == 4 and all(v["a"] for v in vals)
    assert vals[0] == {"a": True, "b": True, "c": True}
    with pytest.raises(RunError):
        guard_valuations({"a": 1})


def test_outcome_json(corpus, P):
    doc = outcome_json(run(P("reserve(ITINERARY)"), runtime(corpus)))
    assert doc["outcome"] == "Done" and doc["metric"] == 15
    assert doc["trace"] == [{"event": "reserve", "resource": "ITINERARY"}]
    assert doc["log"][0]["rule"] == "S-Ev2"
