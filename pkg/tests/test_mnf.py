import math
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lreq.effects import MetricFn
from lreq.errors import HistoryError
from lreq.history import (
    EPS,
    Ann,
    Choice,
    Ev,
    HVar,
    MetF,
    Mu,
    Par,
    Seq,
    denote,
    has_annotations,
    parse_history,
    walk,
)
from lreq.mnf import bound_of, cap_frame, mu_bound, normalize
from lreq.plans import plan_effect
from lreq.semiring import RISK, TRUST, MetricCheck
from lreq.trace import Event

from programs import ACTIONS, METRIC_DOC, RESOURCES, random_history

R = RISK.value


def worst_trace_cost(h, F):
    """Independent oracle for frame- and recursion-free Risk effects whose
    annotations sit on events only: the costliest trace."""
    return max(sum(F(e.action, e.resource).value for e in t if isinstance(e, Event)) for t in denote(h).traces)


class TestCorpus:
    def test_service_bounds_match_brute_force(self, corpus):
        for s in corpus.repo:
            assert bound_of(s.effect, RISK).value == worst_trace_cost(s.effect, corpus.F), s.location

    def test_service_bounds(self, corpus):
        bounds = {s.location: bound_of(s.effect, RISK).value for s in corpus.repo}
        assert bounds == {"e1": 15, "e2": 20, "e3": 25, "e4": 15, "e5": 40,
                          "e6": 50, "e7": 28, "e8": 25, "e9": 1, "e10": 0}

    def test_besttravel(self, corpus):
        prog = corpus.load_program("besttravel.lreq")
        nf = normalize(plan_effect(prog, None, corpus.repo, corpus.F), RISK)
        assert nf.bound == R(223)
        assert [(f.inner.value, f.capped.value) for f in nf.frames] == [(73, 73), (78, 75), (math.inf, 75)]
        assert [f.satisfied for f in nf.frames] == [True, False, False]
        assert not has_annotations(nf.body)
        assert nf.trail[-1].path == () and nf.trail[-1].bound == R(223)


class TestRules:
    def test_neutral_and_fuse(self):
        nf = normalize(Ann(R(3), Ann(R(4), Ev("a", "X"))), RISK)
        assert nf.bound == R(7)
        assert [s.rule for s in nf.trail] == ["neutral", "fuse", "fuse"]
        assert nf.expr == Ann(R(7), Ev("a", "X"))

    def test_choice_keeps_worse(self):
        assert bound_of(Choice(Ann(R(3), EPS), Ann(R(9), EPS)), RISK) == R(9)
        h = Choice(Ann(TRUST.value(0.5), EPS), Ann(TRUST.value(0.9), EPS))
        assert bound_of(h, TRUST) == TRUST.value(0.5)

    def test_seq_and_par_multiply(self):
        a, b = Ann(R(3), Ev("a", "X")), Ann(R(4), Ev("b", "X"))
        assert bound_of(Seq(a, b), RISK) == R(7)
        assert bound_of(Par(a, b), RISK) == R(7)

    def test_metric_frame_caps(self):
        check = MetricCheck("RISK", R(5))
        nf = normalize(MetF(check, Ann(R(8), EPS)), RISK)
        assert nf.bound == R(5)
        assert nf.frames[0].inner == R(8) and not nf.frames[0].satisfied
        assert cap_frame(R(3), check) == R(3)

    def test_frames_are_numbered_in_preorder(self):
        c = MetricCheck("RISK", R(9))
        h = Seq(MetF(c, MetF(c, Ann(R(1), EPS))), MetF(c, Ann(R(2), EPS)))
        nf = normalize(h, RISK)
        assert [f.index for f in nf.frames] == [0, 1, 2]
        assert [f.inner.value for f in nf.frames] == [1, 1, 2]

    def test_recursion(self):
        step = Ann(R(1), Ev("a", "X"))
        assert mu_bound("h", Choice(EPS, Seq(step, HVar("h"))), RISK) == RISK.zero
        capped = MetF(MetricCheck("RISK", R(5)), Seq(step, HVar("h")))
        assert mu_bound("h", capped, RISK) == R(5)
        # Without a fixed point within the iteration budget the bound is zero.
        assert mu_bound("h", capped, RISK, mu_iters=1) == RISK.zero

    def test_trust_recursion(self):
        step = Ann(TRUST.value(0.5), Ev("a", "X"))
        assert mu_bound("h", Choice(EPS, Seq(step, HVar("h"))), TRUST) == TRUST.zero

    def test_empty_program(self):
        assert bound_of(EPS, RISK) == RISK.one
        assert bound_of(EPS, TRUST) == TRUST.one

    def test_errors(self):
        with pytest.raises(HistoryError):
            bound_of(HVar("h"), RISK)
        with pytest.raises(HistoryError):
            bound_of(Ann(TRUST.value(0.5), EPS), RISK)
        with pytest.raises(HistoryError):
            cap_frame(TRUST.value(0.5), MetricCheck("RISK", R(1)))
        with pytest.raises(HistoryError):
            mu_bound("h", Seq(HVar("h"), HVar("k")), RISK)

    def test_semiring_is_read_from_the_expression(self):
        assert normalize(parse_history("M[3]a(X)")).bound == R(3)


def costed(rng, F, depth=4):
    if depth <= 0 or rng.random() < 0.25:
        if rng.random() < 0.15:
            return EPS
        ty = rng.choice("XY")
        action, res = rng.choice(ACTIONS), rng.choice(RESOURCES[ty])
        return Ann(F(action, res), Ev(action, res))
    kind = rng.choice([Seq, Choice, Par])
    d = depth - (2 if kind is Par else 1)
    return kind(costed(rng, F, d), costed(rng, F, d))


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False))
def test_bound_is_worst_trace_cost(rnd):
    F = MetricFn.from_doc(METRIC_DOC)
    h = costed(random.Random(rnd.random()), F)
    assert bound_of(h, RISK).value == worst_trace_cost(h, F)


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_normal_form_is_idempotent_without_recursion(rnd):
    # A stripped recursion has bound zero again, so only recursion-free
    # expressions are fixed points of normalisation.
    h = random_history(random.Random(rnd.random()))
    assume(not any(isinstance(n, Mu) for n in walk(h)))
    nf = normalize(h, RISK)
    again = normalize(nf.expr, RISK)
    assert again.bound == nf.bound and again.body == nf.body
