from hypothesis import given
from hypothesis import strategies as st

from lapkin.harness.scoring import ERROR_WEIGHTS, ErrorKind, TrialEvent, score_trial

events = st.lists(st.builds(TrialEvent, st.floats(0, 100), st.sampled_from(list(ErrorKind))))


def test_weights_match_error_table():
    assert {k.value: w for k, w in ERROR_WEIGHTS.items()} == {
        "failed_pickup": 2, "stretch_pegs": 2, "stretch_handoff": 4, "drop": 5, "collision": 3, "straw": 3,
    }


def test_empty_is_zero():
    assert score_trial([]) == 0


def test_drop_ring():
    assert score_trial([TrialEvent(1.0, ErrorKind.DROP_RING)]) == 5


def test_mixed_sum():
    ev = [TrialEvent(0.0, "collision"), TrialEvent(1.0, "collision"), TrialEvent(2.0, "failed_pickup")]
    assert score_trial(ev) == 8


@given(events, events)
def test_linearity(a, b):
    assert score_trial(a + b) == score_trial(a) + score_trial(b)
