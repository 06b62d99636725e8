import pytest

from lreq.effects import (
    UNIT,
    Arrow,
    MetricFn,
    ServiceRepository,
    domain_type,
    infer,
    infer_recursive_latent,
    natural_key,
    publish,
    render_type,
)
from lreq.errors import ConfigError, TypingError
from lreq.history import EPS, Ev, Mu, Par, Seq, parse_history, render
from lreq.lang import parse
from lreq.semiring import RISK, TRUST


@pytest.fixture(scope="module")
def env(corpus):
    return corpus


def effect_of(cfg, source):
    return infer(parse(source, cfg.signature), cfg.repo, cfg.F)


def strip(text):
    return parse_history(text)


class TestServices:
    def test_interfaces(self, env):
        kinds = {s.location: (str(s.interface.input), str(s.interface.output)) for s in env.repo}
        assert kinds == {
            "e1": ("A", "F"), "e2": ("A", "F"), "e3": ("A", "I"), "e4": ("A", "I"),
            "e5": ("C", "H"), "e6": ("C", "H"), "e7": ("B", "D"), "e8": ("B", "D"),
            "e9": ("D", "D"), "e10": ("D", "D"),
        }

    def test_flight_service(self, env):
        expected = "M[0]search_flight_for(AIRPORT) · (M[15]reserve(FLIGHT_No) + M[0]reserve(NO_FLIGHT) + ε)"
        assert env.repo["e1"].effect == strip(expected)

    def test_signing_service(self, env):
        assert env.repo["e9"].effect == strip("M[1]sign_64(RCPT) + M[1]sign_64(SIGNED_DOC)")

    def test_hotel_service_choice(self, env):
        expected = "(M[30]find_hotel_2s(CITY) + M[15]find_hotel_4s(CITY)) · M[20]book(HOTEL)"
        assert env.repo["e6"].effect == strip(expected)

    def test_union_domain_sums_in_member_order(self, env):
        _, h = effect_of(env, r"(\x : B -> buy(x)) FLIGHT_No")
        assert render(h) == "M[20]buy(ITINERARY) + M[10]buy(FLIGHT_No) + M[0]buy(NO_FLIGHT) + M[10]buy(HOTEL_RESV)"


class TestTyping:
    def test_values_have_empty_effect(self, env):
        assert effect_of(env, "*") == (UNIT, EPS)
        t, h = effect_of(env, "AIRPORT")
        assert t == domain_type("A") and h == EPS

    def test_abstraction_latent(self, env):
        t, h = effect_of(env, r"\x : A -> search_flight_for(x)")
        assert h == EPS
        assert isinstance(t, Arrow) and t.latent == strip("M[0]search_flight_for(AIRPORT)")
        assert render_type(t) == "A -{M[0]search_flight_for(AIRPORT)}-> unit"

    def test_application_runs_latent_after_operands(self, env):
        _, h = effect_of(env, r"(\x : A -> reserve(ITINERARY)) (search_flight_for(AIRPORT); AIRPORT)")
        assert render(h) == "M[0]search_flight_for(AIRPORT) · M[15]reserve(ITINERARY)"

    def test_fork_is_parallel(self, env):
        _, h = effect_of(env, "fork { reserve(ITINERARY) } and { book(HOTEL) }")
        assert isinstance(h, Par)
        assert {render(h.left), render(h.right)} == {"M[15]reserve(ITINERARY)", "M[20]book(HOTEL)"}

    def test_event_sums_over_the_static_domain(self, env):
        # A resource is typed by its domain, so the event may touch any member.
        _, h = effect_of(env, "reserve(FLIGHT_No)")
        assert h == strip("M[15]reserve(FLIGHT_No) + M[0]reserve(NO_FLIGHT)")

    def test_request_sums_candidates(self, env):
        _, h = effect_of(env, "(req rho1 : C -> H) CITY")
        expected = strip(
            "M[20]find_hotel_3s(CITY) · M[20]book(HOTEL)"
            " + (M[30]find_hotel_2s(CITY) + M[15]find_hotel_4s(CITY)) · M[20]book(HOTEL)"
        )
        assert h == expected

    def test_narrower_domain_accepted_at_application(self, env):
        t, _ = effect_of(env, "(req rho1 : B -> D) FLIGHT_No")
        assert t == domain_type("D")

    def test_recursion_gets_mu(self, env):
        t, _ = effect_of(env, "fun z(x : D) = if is_empty then * else (sign_64(x); z x)")
        assert isinstance(t, Arrow) and isinstance(t.latent, Mu)
        assert render(t.latent).startswith("μh.")

    def test_recursive_latent_helper(self, env):
        body = parse("if is_empty then * else (sign_64(x); z x)", env.signature)
        latent = infer_recursive_latent("z", "x", body, domain_type("D"), env.repo, env.F)
        assert isinstance(latent, Mu)

    def test_parameter_type_from_context(self, env):
        t, h = effect_of(env, r"(\y -> reserve(y)) ITINERARY")
        assert t == UNIT and h == strip("M[15]reserve(ITINERARY)")

    @pytest.mark.parametrize(
        "source, message",
        [
            ("reserve(*)", "resource"),
            ("AIRPORT AIRPORT", "function"),
            ("(req rho2 : B -> D) CITY", "expects B"),
            ("if is_empty then AIRPORT else CITY", "incompatible"),
            ("x", "x"),
            ("(req rho9 : C -> D) CITY", "no service offers"),
        ],
    )
    def test_type_errors(self, env, source, message):
        with pytest.raises(TypingError, match=message):
            effect_of(env, source)

    def test_type_error_has_position(self, env):
        with pytest.raises(TypingError) as exc:
            effect_of(env, "*;\n  reserve(*)")
        assert exc.value.pos is not None and exc.value.pos[0] == 2


class TestPublish:
    def test_publish_and_replace(self, env):
        repo = env.repo.copy()
        s = publish("x1", parse(r"\x : A -> x", env.signature), repo, env.F)
        assert s.offers("A", "A") and "x1" in repo
        publish("x1", parse(r"\x : A -> CITY", env.signature), repo, env.F)
        assert repo["x1"].offers("A", "C")
        assert "x1" not in env.repo

    def test_publish_rejects(self, env):
        repo = env.repo.copy()
        with pytest.raises(TypingError, match="free"):
            publish("bad", parse(r"\x : A -> y", env.signature), repo, env.F)
        with pytest.raises(TypingError, match="function"):
            publish("bad", parse("AIRPORT", env.signature), repo, env.F)
        with pytest.raises(TypingError, match="declared"):
            publish("bad", parse(r"\x : A -> x", env.signature), repo, env.F, declared=Ev("a", "R"))

    def test_declared_effect_accepted_when_equal(self, env):
        repo = env.repo.copy()
        declared = strip("M[0]search_flight_for(AIRPORT)")
        publish("ok", parse(r"\x : A -> search_flight_for(x); x", env.signature), repo, env.F, declared=declared)

    def test_natural_order(self, env):
        assert [s.location for s in env.repo] == [f"e{i}" for i in range(1, 11)]
        assert sorted(["e10", "e9", "e1"], key=natural_key) == ["e1", "e9", "e10"]


class TestMetricFn:
    def test_lookup_order(self):
        F = MetricFn.from_doc(
            {"metric": "RISK", "entries": [
                {"action": "a", "resource": "X", "value": 3},
                {"action": "a", "resource": "*", "value": 7},
            ]}
        )
        assert F("a", "X") == RISK.value(3)
        assert F("a", "Y") == RISK.value(7)
        assert F("b", "X") == RISK.one

    def test_rejects_duplicates_and_foreign_values(self):
        with pytest.raises(ConfigError):
            MetricFn.from_doc({"metric": "RISK", "entries": [
                {"action": "a", "resource": "X", "value": 1},
                {"action": "a", "resource": "X", "value": 2},
            ]})
        with pytest.raises(ConfigError):
            MetricFn(RISK, {("a", "X"): TRUST.value(0.5)})

    def test_events_use_table_values(self, env):
        _, h = effect_of(env, "book(HOTEL); insurance(ITINERARY)")
        assert h == Seq(strip("M[20]book(HOTEL)"), strip("M[10]insurance(ITINERARY)"))

    def test_empty_repository(self, env):
        repo = ServiceRepository(env.signature)
        with pytest.raises(TypingError):
            infer(parse("(req r : A -> F) AIRPORT", env.signature), repo, env.F)
