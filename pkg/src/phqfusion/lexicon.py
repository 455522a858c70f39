"""Keyword lexicon shared by the synthetic generator and the mock summarizer.

Each PHQ domain owns a set of phrases; the generator writes them into
transcripts and the mock summarizer counts them back. Phrases are matched on
word boundaries after lower-casing and normalising curly apostrophes.
"""

from __future__ import annotations

import re
from functools import lru_cache

PHQ_DOMAINS: dict[str, tuple[str, ...]] = {
    "interest": ("lost interest", "no interest", "don't enjoy", "nothing is fun"),
    "mood": ("feel down", "hopeless", "feel sad", "feel empty"),
    "sleep": ("can't sleep", "insomnia", "wake up at night", "sleep all day"),
    "energy": ("always tired", "no energy", "exhausted", "worn out"),
    "appetite": ("no appetite", "overeating", "skip meals", "lost weight"),
    "self_worth": ("feel worthless", "a failure", "let everyone down", "feel guilty"),
    "concentration": ("can't concentrate", "can't focus", "hard to think", "forgetful"),
    "psychomotor": ("restless", "moving slowly", "fidgety", "slowed down"),
    "self_harm": ("better off dead", "hurt myself", "no reason to live"),
}

DOMAIN_LABELS = {
    "interest": "little interest or pleasure",
    "mood": "feeling down or hopeless",
    "sleep": "sleep problems",
    "energy": "tiredness or low energy",
    "appetite": "appetite changes",
    "self_worth": "feeling bad about oneself",
    "concentration": "trouble concentrating",
    "psychomotor": "psychomotor changes",
    "self_harm": "thoughts of self-harm",
}

PHQ8_DOMAINS = tuple(list(PHQ_DOMAINS)[:8])
PHQ9_DOMAINS = tuple(PHQ_DOMAINS)

CAUSES: dict[str, tuple[str, ...]] = {
    "job loss": ("lost my job", "got fired", "unemployed"),
    "relationship breakdown": ("divorce", "breakup", "we split up"),
    "financial strain": ("money problems", "can't pay rent", "debt"),
    "loneliness": ("lonely", "no friends", "isolated"),
    "work stress": ("work stress", "overworked", "my boss"),
    "bereavement": ("passed away", "funeral", "grieving"),
}

WELLBEING: tuple[str, ...] = (
    "enjoy hiking", "see my friends", "feel good", "proud of", "sleeping well", "excited about",
)

SYMPTOM_TEMPLATES = (
    "well {p} lately",
    "you know {p} most days",
    "i would say {p}",
    "{p} these days",
    "to be honest {p}",
)

CAUSE_TEMPLATES = (
    "things got worse after {p}",
    "there was {p} this year",
    "i think it started with {p}",
)

WELLBEING_TEMPLATES = (
    "on good days {p}",
    "i still {p} sometimes",
    "lately {p}",
)

FILLERS = (
    "i live in the city with a roommate",
    "i studied engineering in college",
    "the weather has been fine this week",
    "i usually take the bus to work",
    "my favorite food is pasta",
    "i watched a movie last weekend",
    "i grew up in a small town",
    "i have a younger brother",
    "i like listening to the radio",
    "we talked about the news yesterday",
    "i am not sure how to answer that",
    "my apartment is near the park",
)


def normalize(text: str) -> str:
    return text.lower().replace("’", "'").replace("‘", "'")


@lru_cache(maxsize=None)
def _pattern(phrase: str) -> re.Pattern:
    return re.compile(r"(?<![\w'])" + re.escape(phrase) + r"(?![\w'])")


def count_phrases(text: str, phrases) -> int:
    text = normalize(text)
    return sum(len(_pattern(p).findall(text)) for p in phrases)


def domain_counts(text: str, domains=PHQ9_DOMAINS) -> dict[str, int]:
    return {d: count_phrases(text, PHQ_DOMAINS[d]) for d in domains}


def cause_hits(text: str) -> list[str]:
    return [name for name, phrases in CAUSES.items() if count_phrases(text, phrases)]


def wellbeing_count(text: str) -> int:
    return count_phrases(text, WELLBEING)


def domains_for(instrument: str) -> tuple[str, ...]:
    return PHQ9_DOMAINS if instrument == "phq9" else PHQ8_DOMAINS
