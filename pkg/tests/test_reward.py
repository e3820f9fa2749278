from hypothesis import given, settings
from hypothesis import strategies as st

from kbqa_metarl.interpreter import Bools, Count, Entities, reward
from oracles import ref_reward

names = st.sampled_from(list("abcdef"))
answers = st.one_of(
    st.frozensets(names, max_size=6).map(Entities),
    st.integers(0, 5).map(Count),
    st.lists(st.booleans(), min_size=1, max_size=4).map(Bools),
)


def pair(a):
    if isinstance(a, Entities):
        return ("entities", a.members)
    if isinstance(a, Count):
        return ("count", a.value)
    return ("bools", a.values)


@settings(max_examples=2000, deadline=None)
@given(answers, answers)
def test_reward_contract(a, b):
    r = reward(a, b)
    assert 0.0 <= r <= 1.0
    assert r == reward(b, a)
    assert (r == 1.0) == (a == b)
    if type(a) is not type(b):
        assert r == 0.0
    assert r == ref_reward(pair(a), pair(b))


def test_examples():
    assert reward(Entities("AB"), Entities("AB")) == 1.0
    assert reward(Entities("A"), Entities("AB")) == 0.5
    assert reward(Count(5), Entities("A")) == 0.0
    assert reward(Bools([True, False]), Bools([True, True])) == 0.5
    assert reward(Bools([True]), Bools([True, True])) == 0.0
    assert reward(Entities(), Entities()) == 1.0
    assert reward(Count(2), Count(3)) == 0.0
