"""C-family lexing, vocabulary building, pair encoding and def-use extraction."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ConfigError, LexError

KEYWORDS = frozenset(
    """
    abstract assert auto boolean break byte case catch char class const continue
    default do double else enum extends extern final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public register return short signed sizeof static strictfp struct
    super switch synchronized this throw throws transient try typedef union
    unsigned var void volatile while true false null bool namespace using
    template typename virtual delete operator friend inline nullptr
    """.split()
)

# Longest first; lex() matches greedily against this list.
OPERATORS = sorted(
    """
    >>>= <<= >>= >>> ... -> :: ++ -- && || == != <= >= += -= *= /= %= &= |= ^=
    << >> + - * / % = < > ! ~ & | ^ ? :
    """.split(),
    key=len,
    reverse=True,
)

CLS, SEP, PAD, UNK = "[CLS]", "[SEP]", "[PAD]", "[UNK]"
SPECIALS = (CLS, SEP, PAD, UNK)


@dataclass(frozen=True)
class Token:
    kind: str  # identifier | keyword | number | string | operator | punctuation
    text: str
    index: int
    line: int = 0


TokenSequence = list  # list[Token]


def _is_ident_start(ch: str) -> bool:
    return ch == "_" or ch.isalpha()


def _is_ident_char(ch: str) -> bool:
    return ch == "_" or ch.isalnum()


def _scan_number(src: str, i: int) -> int:
    n = len(src)
    if src.startswith(("0x", "0X"), i):
        i += 2
        while i < n and (src[i] in "0123456789abcdefABCDEF_"):
            i += 1
    elif src.startswith(("0b", "0B"), i) and i + 2 < n and src[i + 2] in "01":
        i += 2
        while i < n and src[i] in "01_":
            i += 1
    else:
        while i < n and (src[i].isdigit() or src[i] == "_"):
            i += 1
        if i < n and src[i] == "." and i + 1 < n and src[i + 1].isdigit():
            i += 1
            while i < n and src[i].isdigit():
                i += 1
        elif i < n and src[i] == "." and not (i + 1 < n and _is_ident_start(src[i + 1])):
            i += 1  # "1." is a float literal
        if i < n and src[i] in "eE":
            j = i + 1
            if j < n and src[j] in "+-":
                j += 1
            if j < n and src[j].isdigit():
                i = j
                while i < n and src[i].isdigit():
                    i += 1
    while i < n and src[i] in "lLuUfFdD":
        i += 1
    return i


def lex(source: str) -> list[Token]:
    """Split C-family source text into tokens, dropping comments and whitespace.

    Raises LexError (with a line number) on an unterminated string, char
    literal or block comment. Any other unrecognised character becomes a
    punctuation token so that lexing stays total on real-world files.
    """
    tokens: list[Token] = []
    i, n, line = 0, len(source), 1

    def emit(kind: str, text: str) -> None:
        tokens.append(Token(kind, text, len(tokens), line))

    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            i += 1
        elif ch.isspace():
            i += 1
        elif source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j
        elif source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise LexError("unterminated block comment", line)
            line += source.count("\n", i, j)
            i = j + 2
        elif ch in "\"'":
            start, start_line = i, line
            i += 1
            while True:
                if i >= n or source[i] == "\n":
                    what = "string" if ch == '"' else "char"
                    raise LexError(f"unterminated {what} literal", start_line)
                if source[i] == "\\":
                    i += 2
                    continue
                if source[i] == ch:
                    i += 1
                    break
                i += 1
            emit("string", source[start:i])
        elif ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = _scan_number(source, i)
            emit("number", source[i:j])
            i = j
        elif _is_ident_start(ch):
            j = i + 1
            while j < n and _is_ident_char(source[j]):
                j += 1
            word = source[i:j]
            emit("keyword" if word in KEYWORDS else "identifier", word)
            i = j
        else:
            for op in OPERATORS:
                if source.startswith(op, i):
                    emit("operator", op)
                    i += len(op)
                    break
            else:
                emit("punctuation", ch)
                i += 1
    return tokens


def token_texts(tokens: Iterable[Token]) -> list[str]:
    return [t.text for t in tokens]


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict
    max_size: int

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def id_of(self, text: str) -> int:
        return self.token_to_id.get(text, self.token_to_id[UNK])

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    def to_json(self) -> dict:
        regular = {t: i for t, i in self.token_to_id.items() if t not in SPECIALS}
        return {
            "max_size": self.max_size,
            "specials": {name: self.token_to_id[name] for name in SPECIALS},
            "tokens": regular,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Vocabulary":
        mapping = dict(data["specials"])
        mapping.update(data["tokens"])
        return cls(dict(sorted(mapping.items(), key=lambda kv: kv[1])), int(data["max_size"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def vocab_from_counts(counts: Counter, max_size: int) -> Vocabulary:
    if max_size <= len(SPECIALS):
        raise ConfigError(f"vocabulary max_size must exceed {len(SPECIALS)}, got {max_size}")
    mapping = {name: i for i, name in enumerate(SPECIALS)}
    ranked = sorted((t for t in counts if t not in mapping), key=lambda t: (-counts[t], t))
    for text in ranked[: max_size - len(SPECIALS)]:
        mapping[text] = len(mapping)
    return Vocabulary(mapping, max_size)


def build_vocab(manifest, max_size: int) -> Vocabulary:
    """Specials take ids 0-3; the rest go to the most frequent tokens (ties: lexicographic)."""
    if max_size <= len(SPECIALS):
        raise ConfigError(f"vocabulary max_size must exceed {len(SPECIALS)}, got {max_size}")
    counts: Counter = Counter()
    for frag in manifest.fragments:
        counts.update(token_texts(lex(frag.source)))
    return vocab_from_counts(counts, max_size)


@dataclass(frozen=True)
class EncodedPair:
    input_ids: tuple
    attention_mask: tuple
    # (query, key) positions in encoded coordinates that get the data-flow bias
    edges: tuple = field(default=())

    def __len__(self) -> int:
        return len(self.input_ids)


def truncated_lengths(len_a: int, len_b: int, budget: int) -> tuple[int, int]:
    if len_a + len_b <= budget:
        return len_a, len_b
    total = len_a + len_b
    ta = budget * len_a // total
    tb = budget * len_b // total
    leftover = budget - ta - tb
    # longest-first, ties favour the first fragment
    order = ("a", "b") if len_a >= len_b else ("b", "a")
    for side in order:
        if leftover == 0:
            break
        if side == "a" and ta < len_a:
            ta += 1
            leftover -= 1
        elif side == "b" and tb < len_b:
            tb += 1
            leftover -= 1
    return ta, tb


def encode_pair(
    seq_a: Sequence,
    seq_b: Sequence,
    vocab: Vocabulary,
    max_len: int,
    edges_a: Sequence = (),
    edges_b: Sequence = (),
) -> EncodedPair:
    """Lay out ``[CLS] a [SEP] b [SEP]`` padded to ``max_len``.

    Sequences may hold Token objects or plain strings. Oversize inputs are
    truncated proportionally to their lengths. Optional def-use edges (token
    indices local to each fragment) are shifted into encoded positions and
    dropped if either end was truncated away.
    """
    if max_len < 5:
        raise ConfigError(f"max_len must be at least 5, got {max_len}")
    texts_a = [t.text if isinstance(t, Token) else t for t in seq_a]
    texts_b = [t.text if isinstance(t, Token) else t for t in seq_b]
    la, lb = truncated_lengths(len(texts_a), len(texts_b), max_len - 3)
    ids = [vocab.cls_id]
    ids += [vocab.id_of(t) for t in texts_a[:la]]
    ids.append(vocab.sep_id)
    ids += [vocab.id_of(t) for t in texts_b[:lb]]
    ids.append(vocab.sep_id)
    used = len(ids)
    ids += [vocab.pad_id] * (max_len - used)
    mask = [1] * used + [0] * (max_len - used)

    positions = []
    for edge in edges_a:
        d, u = _edge_ends(edge)
        if u < la:
            positions.append((1 + d, 1 + u))
    offset = la + 2
    for edge in edges_b:
        d, u = _edge_ends(edge)
        if u < lb:
            positions.append((offset + d, offset + u))
    return EncodedPair(tuple(ids), tuple(mask), tuple(positions))


def _edge_ends(edge) -> tuple[int, int]:
    if isinstance(edge, DataFlowEdge):
        return edge.def_index, edge.use_index
    return int(edge[0]), int(edge[1])


@dataclass(frozen=True)
class DataFlowEdge:
    def_index: int
    use_index: int


_DEF_CLOSERS = frozenset(",)")


def extract_dataflow(tokens: Sequence[Token]) -> list[DataFlowEdge]:
    """Flat def-use edges: ``name =`` defines ``name``; later reads link to the live definition.

    A new definition only becomes live once its assignment expression ends
    (``;``, or ``,``/``)`` at the nesting depth of the assignment), so in
    ``x = x + 1`` the right-hand read still refers to the previous definition.
    """
    edges: list[DataFlowEdge] = []
    live: dict[str, int] = {}
    pending: list[tuple[str, int, int]] = []  # (name, def index, depth)
    depth = 0

    def settle(at_depth=None):
        nonlocal pending
        keep = []
        for name, idx, d in pending:
            if at_depth is None or d >= at_depth:
                live[name] = idx
            else:
                keep.append((name, idx, d))
        pending = keep

    for pos, tok in enumerate(tokens):
        text = tok.text
        if tok.kind == "identifier":
            nxt = tokens[pos + 1] if pos + 1 < len(tokens) else None
            if nxt is not None and nxt.kind == "operator" and nxt.text == "=":
                pending.append((text, tok.index, depth))
            elif text in live:
                edges.append(DataFlowEdge(live[text], tok.index))
        elif text in "([{" and tok.kind == "punctuation":
            depth += 1
        elif text in ")]}" and tok.kind == "punctuation":
            if text == ")":
                settle(depth)
            depth = max(depth - 1, 0)
            if text == "}":
                settle()
        elif text == ";":
            settle()
        elif text in _DEF_CLOSERS:
            settle(depth)
    return edges
