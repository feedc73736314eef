"""Semantic command-and-control grammar.

The grammar file format is line oriented: an ``=[name]`` header starts a
category, each following line is one expansion.  Within an expansion,
``<name>`` references another category, ``( ... )`` marks an optional group,
``+`` is a dictation of one or more words, and ``*`` an unconstrained
dictation of up to five words.  Parsing only accepts utterances carrying an
attention word at the start or end, and a parse tree is mined into an
ordered slot-value set keyed by the capitalized categories it passed
through.  The grammar is a value: mutation returns a new version.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

TOP = "top_level"
ATTN = "attn"
WILDCARD_MAX = 5


class GrammarError(Exception):
    pass


# ---------------------------------------------------------------- elements

@dataclass(frozen=True)
class Tok:
    word: str


@dataclass(frozen=True)
class Ref:
    category: str


@dataclass(frozen=True)
class Opt:
    elements: tuple


@dataclass(frozen=True)
class Dict_:
    pass


@dataclass(frozen=True)
class Wild:
    pass


Expansion = tuple  # of elements


@dataclass(frozen=True)
class Grammar:
    categories: dict[str, tuple[Expansion, ...]]

    def __post_init__(self):
        if TOP not in self.categories:
            raise GrammarError(f"grammar has no {TOP!r} category")
        for name, exps in self.categories.items():
            for exp in exps:
                for ref in _refs_in(exp):
                    if ref not in self.categories:
                        raise GrammarError(
                            f"category {name!r} references undefined <{ref}>")

    def with_category(self, name: str, exps: tuple[Expansion, ...]) -> "Grammar":
        cats = dict(self.categories)
        cats[name] = exps
        return Grammar(cats)


def _refs_in(exp: Expansion):
    for el in exp:
        if isinstance(el, Ref):
            yield el.category
        elif isinstance(el, Opt):
            yield from _refs_in(el.elements)


_ELEMENT_RE = re.compile(r"\([^()]*\)|\S+")


def _parse_element(text: str):
    if text.startswith("(") and text.endswith(")"):
        inner = text[1:-1].strip()
        return Opt(tuple(_parse_element(t) for t in _ELEMENT_RE.findall(inner)))
    if text == "+":
        return Dict_()
    if text == "*":
        return Wild()
    m = re.fullmatch(r"<([^<>]+)>", text)
    if m:
        return Ref(m.group(1))
    return Tok(text.lower())


def load_grammar(text: str) -> Grammar:
    """Parse the ``=[name]`` line format into a Grammar."""
    categories: dict[str, list[Expansion]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = re.fullmatch(r"=\[([^\[\]]+)\]", line.strip())
        if m:
            current = m.group(1)
            categories.setdefault(current, [])
            continue
        if current is None:
            raise GrammarError(f"line {lineno}: expansion before any =[category]")
        elements = tuple(_parse_element(t) for t in _ELEMENT_RE.findall(line.strip()))
        categories[current].append(elements)
    if not categories:
        raise GrammarError("empty grammar text")
    return Grammar({k: tuple(v) for k, v in categories.items()})


def _element_text(el) -> str:
    if isinstance(el, Tok):
        return el.word
    if isinstance(el, Ref):
        return f"<{el.category}>"
    if isinstance(el, Opt):
        return "(" + " ".join(_element_text(e) for e in el.elements) + ")"
    if isinstance(el, Dict_):
        return "+"
    return "*"


def serialize(grammar: Grammar) -> str:
    lines = []
    for name, exps in grammar.categories.items():
        lines.append(f"=[{name}]")
        for exp in exps:
            lines.append(" ".join(_element_text(el) for el in exp))
        lines.append("")
    return "\n".join(lines)


# ----------------------------------------------------------------- parsing

_PUNCT_RE = re.compile(r"[.,!?;:\"()]")


def tokenize(text: str) -> tuple[list[str], list[str]]:
    """Lowercased tokens for matching plus the original surface tokens."""
    cleaned = _PUNCT_RE.sub(" ", text)
    originals = cleaned.split()
    return [t.lower() for t in originals], originals


@dataclass(frozen=True)
class Leaf:
    kind: str   # "tok" | "dict" | "wild"
    start: int
    end: int


@dataclass(frozen=True)
class Node:
    category: str
    exp_index: int
    children: tuple
    start: int
    end: int


def _dict_cost(child) -> int:
    if isinstance(child, Leaf):
        return (child.end - child.start) if child.kind in ("dict", "wild") else 0
    return sum(_dict_cost(c) for c in child.children)


def _exp_order(child, out: list):
    if isinstance(child, Node):
        out.append(child.exp_index)
        for c in child.children:
            _exp_order(c, out)


class _Matcher:
    def __init__(self, grammar: Grammar, tokens: list[str]):
        self.g = grammar
        self.toks = tokens
        self.memo: dict[tuple[str, int], list[tuple[int, Node]]] = {}
        self.active: set[tuple[str, int]] = set()

    def category(self, name: str, pos: int) -> list[tuple[int, Node]]:
        key = (name, pos)
        if key in self.memo:
            return self.memo[key]
        if key in self.active:
            return []  # left recursion guard; the format has no use for it
        self.active.add(key)
        results = []
        for i, exp in enumerate(self.g.categories[name]):
            for end, children in self.sequence(exp, 0, pos):
                results.append((end, Node(name, i, tuple(children), pos, end)))
        self.active.discard(key)
        self.memo[key] = results
        return results

    def sequence(self, exp: Expansion, idx: int, pos: int):
        if idx == len(exp):
            yield pos, []
            return
        el = exp[idx]
        n = len(self.toks)
        if isinstance(el, Tok):
            if pos < n and self.toks[pos] == el.word:
                for end, rest in self.sequence(exp, idx + 1, pos + 1):
                    yield end, [Leaf("tok", pos, pos + 1)] + rest
        elif isinstance(el, Ref):
            for mid, node in self.category(el.category, pos):
                for end, rest in self.sequence(exp, idx + 1, mid):
                    yield end, [node] + rest
        elif isinstance(el, Opt):
            for mid, inner in self.sequence(el.elements, 0, pos):
                for end, rest in self.sequence(exp, idx + 1, mid):
                    yield end, inner + rest
            for end, rest in self.sequence(exp, idx + 1, pos):
                yield end, rest
        elif isinstance(el, Dict_):
            for take in range(1, n - pos + 1):
                for end, rest in self.sequence(exp, idx + 1, pos + take):
                    yield end, [Leaf("dict", pos, pos + take)] + rest
        elif isinstance(el, Wild):
            for take in range(0, min(WILDCARD_MAX, n - pos) + 1):
                leaf = [Leaf("wild", pos, pos + take)] if take else []
                for end, rest in self.sequence(exp, idx + 1, pos + take):
                    yield end, leaf + rest


def _has_edge_attn(node, n_tokens: int) -> bool:
    if isinstance(node, Node):
        if node.category == ATTN and (node.start == 0 or node.end == n_tokens):
            return True
        return any(_has_edge_attn(c, n_tokens) for c in node.children)
    return False


def parse(grammar: Grammar, tokens: list[str]) -> Node | None:
    """Best full-span parse of ``top_level``, or None.

    Valid parses must carry an attention word as the first or last content
    element; among valid parses the one whose wildcards and dictations
    consume the fewest tokens wins, with ties broken by expansion order.
    """
    if not tokens:
        return None
    matcher = _Matcher(grammar, tokens)
    n = len(tokens)
    candidates = []
    for end, node in matcher.category(TOP, 0):
        if end != n:
            continue
        if not _has_edge_attn(node, n):
            continue
        order: list[int] = []
        _exp_order(node, order)
        candidates.append((_dict_cost(node), tuple(order), node))
    if not candidates:
        return None
    return min(candidates, key=lambda c: (c[0], c[1]))[2]


# -------------------------------------------------------------------- slots

@dataclass(frozen=True)
class SlotSet:
    """Ordered (name, value) pairs; value None for bare marker slots."""

    slots: tuple[tuple[str, str | None], ...]

    def get(self, name: str) -> str | None:
        for slot, value in self.slots:
            if slot == name:
                return value
        return None

    def has(self, name: str) -> bool:
        return any(slot == name for slot, _ in self.slots)

    def names(self) -> list[str]:
        return [slot for slot, _ in self.slots]

    def __str__(self) -> str:
        parts = [name if value is None else f"{name}={value}"
                 for name, value in self.slots]
        return "{" + ", ".join(parts) + "}"


def _is_slot_category(name: str) -> bool:
    return name == name.upper() and any(ch.isalpha() for ch in name)


def _surface(node_or_leaf, originals: list[str]) -> str:
    return " ".join(originals[node_or_leaf.start:node_or_leaf.end])


def extract_slots(tree: Node, grammar: Grammar, originals: list[str]) -> SlotSet:
    """Depth-first slot mining.

    A capitalized category contributes one slot.  Its value is the referenced
    category's name when the chosen expansion is exactly one category
    reference, the matched surface text when the expansion is all terminals
    or dictation, and empty for mixed expansions (bare marker slots).
    """
    slots: list[tuple[str, str | None]] = []

    def visit(node):
        if not isinstance(node, Node):
            return
        if _is_slot_category(node.category):
            exp = grammar.categories[node.category][node.exp_index]
            if len(exp) == 1 and isinstance(exp[0], Ref):
                value = exp[0].category
            elif all(isinstance(el, (Tok, Dict_, Wild)) for el in exp):
                value = _surface(node, originals)
            else:
                value = None
            slots.append((node.category, value))
        for child in node.children:
            visit(child)

    visit(tree)
    return SlotSet(tuple(slots))


# ----------------------------------------------------------------- mutation

def add_name(grammar: Grammar, words: str) -> Grammar:
    """Append a learned noun to the NAME category (idempotent)."""
    toks = tuple(Tok(w) for w in words.lower().split())
    if not toks:
        raise GrammarError("empty name")
    exps = grammar.categories.get("NAME", ())
    if toks in exps:
        return grammar
    return grammar.with_category("NAME", exps + (toks,))


def add_verb(grammar: Grammar, word: str, arity: int) -> Grammar:
    """Append a learned verb to ACT-0 or ACT-1 per its arity (idempotent)."""
    if arity not in (0, 1):
        raise GrammarError(f"verb arity must be 0 or 1, got {arity}")
    cat = f"ACT-{arity}"
    toks = tuple(Tok(w) for w in word.lower().split())
    if not toks:
        raise GrammarError("empty verb")
    exps = grammar.categories.get(cat, ())
    if toks in exps:
        return grammar
    return grammar.with_category(cat, exps + (toks,))
