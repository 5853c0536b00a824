"""Concept expansion and prompt assembly.

A concept ("freedom") becomes three drawable object prompts plus three font
attributes, either from the remote LLM endpoint of a scorer service or from a
bundled offline lookup table. Offline mode is total: unknown concepts fall back
to the concept itself and a neutral attribute triple.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

FONT_ATTRIBUTE_VOCABULARY = (
    "angular", "artistic", "attention-grabbing", "attractive", "bad", "boring",
    "calm", "capitals", "charming", "clumsy", "complex", "cursive", "delicate",
    "disorderly", "display", "dramatic", "formal", "fresh", "friendly", "gentle",
    "graceful", "happy", "italic", "legible", "modern", "monospace", "playful",
    "pretentious", "serif", "sharp", "sloppy", "soft", "strong", "technical",
    "thin", "warm", "wide",
)

DEFAULT_SUFFIX = (
    "minimal flat 2d vector icon. lineal color. on a white background. "
    "trending on artstation"
)

FALLBACK_ATTRIBUTES = ("legible", "strong", "modern")

CONCEPT_TEMPLATE = """\
You will be given a concept word, and your task is to imagine this word as an \
art element. Describe the elements you would include to convey the essence of \
the concept word. Your description should list exactly three key symbols in a \
single line, formatted like this: symbol1, symbol2, or symbol3.

Examples:
Concept word: 'freedom'
Task: Imagine 'freedom' as an art element. Describe the elements you would \
include to convey freedom, listing exactly three key symbols in a single line.
Response: Wings or open book or flying birds.

Concept word: 'Knowledge'
Task: Imagine 'Knowledge' as an art element. Describe the elements you would \
include to convey Knowledge, listing exactly three key symbols in a single line.
Response: Open book or lightbulb or owl.

Concept word: 'Egypt'
Task: Imagine 'Egypt' as an art element. Describe the elements you would \
include to convey Egypt, listing exactly three key symbols in a single line.
Response: Pyramids or Ankh or Sphinx.

Your task:
Concept word: '{concept}'
Task: Imagine '{concept}' as an art element. Describe the elements you would \
include to convey {concept}, listing exactly three key symbols in a single line.
Response:"""

ATTRIBUTES_TEMPLATE = """\
Given the following font attributes
("angular", "artistic", "attention-grabbing", "attractive", "bad", "boring", \
"calm", "capitals", "charming", "clumsy", "complex", "cursive", "delicate", \
"disorderly", "display", "dramatic", "formal", "fresh", "friendly", "gentle", \
"graceful", "happy", "italic", "legible", "modern", "monospace", "playful", \
"pretentious", "serif", "sharp", "sloppy", "soft", "strong", "technical", \
"thin", "warm", "wide")
Your task is to choose the top 3 attributes that align with an input concept \
and output them as a list.
Examples:
Concept: freedom
Answer: ["playful", "fresh", "modern"]

Concept: Elegance
Answer: ["graceful", "delicate", "formal"]

Concept: {concept}
Answer:"""


class PromptError(Exception):
    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ConceptExpansion:
    concept: str
    objects: tuple[str, str, str]
    font_attributes: tuple[str, str, str]

    def __post_init__(self):
        if len(self.objects) != 3 or any(not o for o in self.objects):
            raise ValueError("exactly three non-empty objects required")
        if len(self.font_attributes) != 3:
            raise ValueError("exactly three font attributes required")
        bad = [a for a in self.font_attributes if a not in FONT_ATTRIBUTE_VOCABULARY]
        if bad:
            raise ValueError(f"attributes outside the vocabulary: {bad}")


def _load_offline_table(path: str | None = None) -> dict[str, tuple[tuple, tuple]]:
    if path is None:
        text = resources.files("wordmorph").joinpath("data/offline_prompts.txt").read_text(
            encoding="utf-8"
        )
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    table = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3:
            continue
        concept, objs, attrs = parts
        objects = tuple(o.strip() for o in objs.split(";"))
        attributes = tuple(a.strip() for a in attrs.split(";"))
        if len(objects) == 3 and len(attributes) == 3:
            table[concept.lower()] = (objects, attributes)
    return table


def expand_concept(
    concept: str,
    mode: str = "offline",
    scorer=None,
    offline_table: str | None = None,
    reasks: int = 2,
) -> ConceptExpansion:
    """Three object prompts plus three font attributes for a concept."""
    if not concept:
        raise ValueError("empty concept")
    if mode == "offline":
        table = _load_offline_table(offline_table)
        hit = table.get(concept.lower())
        if hit is not None:
            objects, attributes = hit
        else:
            objects = (concept, concept, concept)
            attributes = FALLBACK_ATTRIBUTES
        return ConceptExpansion(concept, tuple(objects), tuple(attributes))
    if mode != "remote":
        raise ValueError(f"unknown mode {mode!r}")
    if scorer is None:
        raise ValueError("remote mode needs a scorer handle")
    objects = _remote_objects(concept, scorer, reasks)
    attributes = _remote_attributes(concept, scorer, reasks)
    return ConceptExpansion(concept, objects, attributes)


def _ask(scorer, kind: str, prompt: str) -> str:
    from .scorer import ScorerRequest

    resp = scorer.score(ScorerRequest(kind=kind, prompt=prompt))
    if not resp.strings:
        raise PromptError(f"empty {kind} response", raw="")
    return resp.strings[0]


def _remote_objects(concept: str, scorer, reasks: int) -> tuple[str, str, str]:
    prompt = CONCEPT_TEMPLATE.format(concept=concept)
    raw = ""
    for _ in range(reasks + 1):
        raw = _ask(scorer, "concepts", prompt)
        objs = parse_objects(raw)
        if objs is not None:
            return objs
    raise PromptError(f"unparseable concept reply after {reasks} re-asks", raw=raw)


def _remote_attributes(concept: str, scorer, reasks: int) -> tuple[str, str, str]:
    prompt = ATTRIBUTES_TEMPLATE.format(concept=concept)
    raw = ""
    for _ in range(reasks + 1):
        raw = _ask(scorer, "font-attrs", prompt)
        attrs = parse_attributes(raw)
        if attrs is not None:
            return attrs
    raise PromptError(f"unparseable attribute reply after {reasks} re-asks", raw=raw)


def parse_objects(raw: str) -> tuple[str, str, str] | None:
    """Parse 'symbol1, symbol2, or symbol3.' / 'a or b or c.' style replies."""
    text = raw.strip()
    text = re.sub(r"^Response:\s*", "", text).rstrip(".").strip()
    if not text:
        return None
    text = re.sub(r",\s*or\s+", ", ", text)  # "a, b, or c" -> "a, b, c"
    parts = re.split(r"\s+or\s+|,\s*", text)
    parts = [p.strip() for p in parts if p.strip()]
    if len(parts) != 3:
        return None
    return tuple(parts)  # type: ignore[return-value]


def parse_attributes(raw: str) -> tuple[str, str, str] | None:
    """Parse the bracketed-list reply; members must be in the vocabulary."""
    text = raw.strip()
    text = re.sub(r"^Answer:\s*", "", text)
    m = re.search(r"\[.*\]", text, flags=re.DOTALL)
    attrs: list[str] | None = None
    if m:
        try:
            decoded = json.loads(m.group(0))
            if isinstance(decoded, list):
                attrs = [str(a).strip() for a in decoded]
        except json.JSONDecodeError:
            attrs = None
    if attrs is None:
        attrs = [a.strip() for a in re.findall(r'"([^"]+)"', text)]
    if len(attrs) != 3 or any(a not in FONT_ATTRIBUTE_VOCABULARY for a in attrs):
        return None
    return tuple(attrs)  # type: ignore[return-value]


def build_prompts(
    expansion: ConceptExpansion, suffix: str = DEFAULT_SUFFIX
) -> tuple[list[str], str]:
    """Morphing prompts ('a {object}. {suffix}') and the font prompt sentence."""
    morph = [f"a {obj}. {suffix}" for obj in expansion.objects]
    a1, a2, a3 = expansion.font_attributes
    return morph, f"This is a {a1}, {a2}, {a3} font"


def offline_reply(kind: str, prompt: str | None) -> str:
    """Format an offline-table answer the way the remote LLM would, so the
    client-side parsers are exercised identically in builtin mode."""
    concept = None
    if prompt:
        hits = re.findall(r"Concept word: '([^']*)'", prompt)
        if hits:
            concept = hits[-1]
        else:
            hits = re.findall(r"Concept:\s*(.+)", prompt)
            if hits:
                concept = hits[-1].strip()
    if not concept:
        concept = "unknown"
    exp = expand_concept(concept, mode="offline")
    if kind == "concepts":
        return f"{exp.objects[0]} or {exp.objects[1]} or {exp.objects[2]}."
    return json.dumps(list(exp.font_attributes))
