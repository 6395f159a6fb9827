"""ARAS dataset constants: raw activity ids and the regrouped catalog."""

from __future__ import annotations

from .model import Activity, LabelMap

RAW_ACTIVITIES = {
    1: "Other",
    2: "Going Out",
    3: "Preparing Breakfast",
    4: "Having Breakfast",
    5: "Preparing Lunch",
    6: "Having Lunch",
    7: "Preparing Dinner",
    8: "Having Dinner",
    9: "Washing Dishes",
    10: "Having Snack",
    11: "Sleeping",
    12: "Watching TV",
    13: "Studying",
    14: "Having Shower",
    15: "Toileting",
    16: "Napping",
    17: "Using Internet",
    18: "Reading Book",
    19: "Laundry",
    20: "Shaving",
    21: "Brushing Teeth",
    22: "Talking on the Phone",
    23: "Listening to Music",
    24: "Cleaning",
    25: "Having Conversation",
    26: "Having Guest",
    27: "Changing Clothes",
}

GOING_OUT = 2

CATALOG = (
    Activity(0, "Other"),
    Activity(1, "Preparing Breakfast"),
    Activity(2, "Having Breakfast"),
    Activity(3, "Preparing Lunch"),
    Activity(4, "Having Lunch"),
    Activity(5, "Preparing Dinner"),
    Activity(6, "Having Dinner"),
    Activity(7, "Washing Dishes"),
    Activity(8, "Having Snack"),
    Activity(9, "Sleeping"),
    Activity(10, "Entertainment"),
    Activity(11, "Having Shower"),
    Activity(12, "Toileting"),
    Activity(13, "Working"),
    Activity(14, "Shaving"),
    Activity(15, "Brushing Teeth"),
    Activity(16, "Talking on the Phone"),
    Activity(17, "Changing Clothes"),
)

_COMMON = {
    1: 0, 2: 0, 3: 1, 4: 2, 5: 3, 6: 4, 7: 5, 8: 6, 9: 7, 10: 8,
    11: 9, 12: 10, 14: 11, 15: 12, 16: 9, 18: 10, 19: 0, 20: 14,
    21: 15, 22: 16, 23: 10, 24: 0, 25: 0, 26: 0, 27: 17,
}
# raw ids whose class disappears entirely (Going Out is handled by presence)
_DROPPED = frozenset({1, 19, 24, 25, 26})


def house_a_labels() -> LabelMap:
    # Studying and Using Internet both become Working.
    return LabelMap({**_COMMON, 13: 13, 17: 13}, _DROPPED)


def house_b_labels() -> LabelMap:
    # Using Internet becomes Entertainment; Studying is renamed Working.
    return LabelMap({**_COMMON, 13: 13, 17: 10}, _DROPPED)
