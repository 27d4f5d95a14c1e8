"""Hypothesis strategies shared by the test modules."""

from hypothesis import strategies as st

# Dyadic grids keep exact ties (arrival == token instant) in play.
dyadic_times = st.lists(st.integers(0, 64).map(lambda v: v / 4), max_size=30).map(sorted)
real_times = st.lists(st.floats(0, 50, allow_nan=False, allow_infinity=False), max_size=30).map(sorted)
times = st.one_of(dyadic_times, real_times)
rates = st.one_of(st.sampled_from([0.25, 0.5, 1.0, 2.0, 4.0]), st.floats(0.1, 10))
bursts = st.one_of(st.sampled_from([1.0, 1.5, 2.0, 3.0, 5.0]), st.floats(1.0, 10))
orders = st.sampled_from(["fcfs", "lcfs", "random"])
