from hypothesis import given, settings
from hypothesis import strategies as st

from mtctc.metrics import EditCounts, ErrorRateReport, edit_distance, score_multistream


def test_deletion_example():
    counts = edit_distance(["a", "b", "c"], ["a", "c"])
    assert counts.as_tuple() == (0, 1, 0)


def test_identical_sequences():
    assert edit_distance([1, 2, 3], [1, 2, 3]).total == 0


def test_empty_cases():
    assert edit_distance([], [1, 2]).as_tuple() == (0, 0, 2)
    assert edit_distance([1, 2], []).as_tuple() == (0, 2, 0)
    assert edit_distance([], []).total == 0


def test_tie_prefers_substitution():
    assert edit_distance(["a"], ["b"]).as_tuple() == (1, 0, 0)
    assert edit_distance(["a", "b"], ["c", "d"]).as_tuple() == (2, 0, 0)


def test_deletion_preferred_over_insertion_on_ties():
    # ref [a, b] vs hyp [b]: delete a, match b
    assert edit_distance(["a", "b"], ["b"]).as_tuple() == (0, 1, 0)


def test_swapping_args_swaps_deletions_and_insertions():
    fwd = edit_distance([1, 2, 3, 4], [1, 3])
    rev = edit_distance([1, 3], [1, 2, 3, 4])
    assert fwd.total == rev.total
    assert fwd.deletions == rev.insertions
    assert fwd.insertions == rev.deletions


@settings(max_examples=200)
@given(
    st.lists(st.integers(0, 4), max_size=8),
    st.lists(st.integers(0, 4), max_size=8),
)
def test_edit_distance_bounds(ref, hyp):
    counts = edit_distance(ref, hyp)
    assert counts.total >= abs(len(ref) - len(hyp))
    assert counts.total <= max(len(ref), len(hyp))
    assert counts.deletions - counts.insertions == len(ref) - len(hyp)


def test_multistream_position_pairing():
    refs = [[1, 2], [3, 4]]
    hyps = [[1, 2], [3, 5]]
    assert score_multistream(refs, hyps).as_tuple() == (1, 0, 0)
    # crossed hypotheses are charged, order matters
    crossed = score_multistream(refs, [[3, 4], [1, 2]])
    assert crossed.total == 4


def test_multistream_missing_and_extra_streams():
    refs = [[1, 2], [3]]
    assert score_multistream(refs, [[1, 2]]).as_tuple() == (0, 1, 0)
    assert score_multistream([[1, 2]], [[1, 2], [7, 8]]).as_tuple() == (0, 0, 2)


def test_report_micro_average():
    report = ErrorRateReport()
    report.add(2, "clean", EditCounts(1, 0, 0), 10)
    report.add(2, "noisy", EditCounts(0, 2, 0), 10)
    report.add(3, "clean", EditCounts(0, 0, 3), 30)
    assert abs(report.rate(2, "clean") - 0.1) < 1e-12
    assert abs(report.rate(2) - 0.15) < 1e-12
    assert abs(report.rate() - 0.12) < 1e-12
    assert report.rate(3, "noisy") == 0.0


def test_report_csv_shape():
    report = ErrorRateReport()
    report.add(2, "clean", EditCounts(1, 2, 3), 100)
    text = report.to_csv()
    lines = text.strip().split("\n")
    assert lines[0].startswith("talker_count,condition")
    assert lines[1].startswith("2,clean,1,100,1,2,3,")
