"""Interaction zone classification and presence debouncing."""

import pytest
from hypothesis import given, settings, strategies as st

from oracles import presence_oracle, zone_oracle
from sia.core import UserEntered, UserLeft
from sia.presence import (
    BoundingBox,
    DetectionFrame,
    InvalidBox,
    PresenceTracker,
    StaleFrame,
    ZoneConfig,
    classify_box,
    count_people,
)

CFG = ZoneConfig(min_area_ratio=0.05, min_midpoint_height=0.5, debounce_frames=10)

# Canned boxes: one clearly in zone, one clearly out.
IN_BOX = BoundingBox(0.3, 0.2, 0.3, 0.6)
OUT_BOX = BoundingBox(0.45, 0.02, 0.05, 0.05)


def frames_from_counts(counts, start_ts=0, step=33):
    """One frame per raw count, using IN_BOX replicas."""
    return [
        DetectionFrame(start_ts + i * step + step, tuple([IN_BOX] * c))
        for i, c in enumerate(counts)
    ]


# --- classify_box -----------------------------------------------------------


def test_full_frame_box_always_in_zone():
    assert classify_box(BoundingBox(0, 0, 1, 1), CFG)
    assert classify_box(BoundingBox(0, 0, 1, 1), ZoneConfig(0.9, 0.99, 1))


def test_small_high_box_out_of_zone():
    # area 0.0025 < 0.05 and midpoint_y 0.045 < 0.5
    assert not classify_box(BoundingBox(0.45, 0.02, 0.05, 0.05), CFG)


def test_small_low_box_in_zone_via_midpoint():
    # the "standing close but small" rule: area 0.03 < 0.05, midpoint 0.75 >= 0.5
    assert classify_box(BoundingBox(0.4, 0.6, 0.1, 0.3), CFG)


@pytest.mark.parametrize(
    "box",
    [
        BoundingBox(-0.1, 0, 0.5, 0.5),
        BoundingBox(0, 0, 0, 0.5),
        BoundingBox(0.8, 0, 0.5, 0.5),
        BoundingBox(0, 0.8, 0.1, 0.5),
        BoundingBox(0, 0, 0.5, 0),
    ],
)
def test_invalid_boxes_rejected(box):
    with pytest.raises(InvalidBox):
        classify_box(box, CFG)


def test_classify_is_pure():
    box = BoundingBox(0.2, 0.3, 0.2, 0.2)
    assert classify_box(box, CFG) == classify_box(box, CFG)


@given(
    x=st.floats(0, 0.5), y=st.floats(0, 0.5),
    w=st.floats(0.01, 0.5), h=st.floats(0.01, 0.5),
    grow=st.floats(0, 0.4),
)
def test_monotone_zone_membership(x, y, w, h, grow):
    """Growing a box (midpoint moving down, area up) never leaves the zone."""
    small = BoundingBox(x, y, w, h)
    tall = BoundingBox(x, y, w, min(h + grow, 1.0 - y))
    if classify_box(small, CFG):
        assert classify_box(tall, CFG)


@given(
    x=st.floats(0, 0.9), y=st.floats(0, 0.9),
    w=st.floats(0.001, 1.0), h=st.floats(0.001, 1.0),
)
def test_classify_matches_direct_formula(x, y, w, h):
    if x + w > 1.0 or y + h > 1.0:
        return
    box = BoundingBox(x, y, w, h)
    assert classify_box(box, CFG) == zone_oracle(x, y, w, h, 0.05, 0.5)


# --- count_people -------------------------------------------------------------


def test_count_people_examples():
    assert count_people(DetectionFrame(0, ()), CFG) == 0
    assert count_people(DetectionFrame(0, (IN_BOX, OUT_BOX, IN_BOX)), CFG) == 2
    assert count_people(DetectionFrame(0, (BoundingBox(0, 0, 1, 1),)), CFG) == 1


# --- debouncing ------------------------------------------------------------------


def test_nine_frames_not_enough_tenth_flips():
    tracker = PresenceTracker()
    frames = frames_from_counts([1] * 10)
    for frame in frames[:9]:
        estimate, events = tracker.update(frame, CFG)
        assert events == []
        assert not estimate.present
    estimate, events = tracker.update(frames[9], CFG)
    assert events == [UserEntered(frames[9].timestamp_ms, 1)]
    assert estimate.present and estimate.users_in_zone == 1


def test_alternating_frames_never_flip():
    tracker = PresenceTracker()
    for frame in frames_from_counts([1, 0] * 200):
        _, events = tracker.update(frame, CFG)
        assert events == []
    assert not tracker.present


def test_leave_after_consistent_absence():
    tracker = PresenceTracker()
    events_seen = []
    for frame in frames_from_counts([1] * 10 + [0] * 10):
        _, events = tracker.update(frame, CFG)
        events_seen.extend(events)
    assert [type(e) for e in events_seen] == [UserEntered, UserLeft]
    assert events_seen[1].people_count == 0


def test_count_change_requires_stable_new_value():
    tracker = PresenceTracker()
    cfg = ZoneConfig(0.05, 0.5, 3)
    seq = [1, 1, 1] + [1, 2] * 5 + [2, 2, 2]
    flips = []
    for frame in frames_from_counts(seq):
        estimate, events = tracker.update(frame, cfg)
        flips.extend(events)
    assert [type(e) for e in flips] == [UserEntered]
    assert tracker.count == 2  # only after the final stable run


def test_stale_frame_rejected():
    tracker = PresenceTracker()
    tracker.update(DetectionFrame(100, ()), CFG)
    with pytest.raises(StaleFrame):
        tracker.update(DetectionFrame(100, ()), CFG)
    with pytest.raises(StaleFrame):
        tracker.update(DetectionFrame(50, ()), CFG)


def test_estimate_present_iff_count_positive():
    tracker = PresenceTracker()
    for frame in frames_from_counts([1, 1, 1, 0, 2, 2, 0, 0, 1, 2, 2, 2, 0, 0, 0]):
        estimate, _ = tracker.update(frame, ZoneConfig(0.05, 0.5, 2))
        assert estimate.present == (estimate.users_in_zone > 0)


@settings(max_examples=200)
@given(
    counts=st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=60),
    debounce=st.sampled_from([1, 2, 3, 10]),
)
def test_debounce_matches_replay_oracle(counts, debounce):
    cfg = ZoneConfig(0.05, 0.5, debounce)
    tracker = PresenceTracker()
    got = []
    presents = []
    tracked_counts = []
    for i, frame in enumerate(frames_from_counts(counts)):
        estimate, events = tracker.update(frame, cfg)
        for event in events:
            kind = "enter" if isinstance(event, UserEntered) else "leave"
            got.append((i, kind, event.people_count))
        presents.append(estimate.present)
        tracked_counts.append(estimate.users_in_zone)
    want_events, want_presents, want_counts = presence_oracle(counts, debounce)
    assert got == want_events
    assert presents == want_presents
    assert tracked_counts == want_counts
