"""Corpus loading, token normalization, and vocabulary construction.

Corpora are newline-delimited JSON records with "id", "code" and "docstring"
fields (the public CodeSearchNet layout).  Code and description vocabularies
are disjoint, frequency-ranked, and capped at 10,000 entries plus the two
reserved ids PAD=0 and UNK=1.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

VOCAB_LIMIT = 10_000
DESCRIPTION_CAP = 30

VOCAB_MAGIC = "CRDL-VOCAB v1"

# "wordCase" boundary, and the last capital of an upper run before a lower
# ("HWhwc" -> "H Whwc").
_LOWER_TO_UPPER = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_UPPER_RUN_END = re.compile(r"(?<=[A-Z])(?=[A-Z][a-z])")
_WORD_RUN = re.compile(r"[a-z0-9]+")


class CorpusFormatError(ValueError):
    """A corpus line is not a JSON object; message carries the line number."""


@dataclass(frozen=True)
class CorpusPair:
    """One <code, description> example with a stable identifier."""

    id: str
    code: str
    description: str


@dataclass(frozen=True)
class TokenizedQuery:
    """Description word ids, truncated to DESCRIPTION_CAP."""

    ids: tuple[int, ...]
    true_length: int

    def padded(self, cap: int = DESCRIPTION_CAP) -> list[int]:
        return list(self.ids) + [PAD_ID] * (cap - len(self.ids))


def split_identifier(name: str) -> list[str]:
    """Split an identifier at underscores and camelCase boundaries.

    Subtokens come back lowercased; empty fragments are dropped.  Idempotent
    on its own outputs.
    """
    parts: list[str] = []
    for chunk in name.split("_"):
        chunk = _LOWER_TO_UPPER.sub(" ", chunk)
        chunk = _UPPER_RUN_END.sub(" ", chunk)
        parts.extend(piece.lower() for piece in chunk.split() if piece)
    return parts


def description_tokens(text: str) -> list[str]:
    """Lowercase and split a description on non-alphanumeric runs.

    Underscore and camelCase identifiers mentioned in queries fall apart into
    the same subtokens the code channel produces.
    """
    words: list[str] = []
    for run in _WORD_RUN.findall(text.lower()):
        words.extend(split_identifier(run))
    return words


def tokenize_description(text: str, vocab: "Vocabulary") -> TokenizedQuery:
    """Map a description to vocabulary ids, truncated to DESCRIPTION_CAP."""
    words = description_tokens(text)
    if not words:
        raise ValueError("empty description")
    words = words[:DESCRIPTION_CAP]
    ids = tuple(vocab.id_for(w) for w in words)
    return TokenizedQuery(ids=ids, true_length=len(ids))


class Vocabulary:
    """Immutable token -> dense id mapping with PAD=0 and UNK=1 reserved."""

    def __init__(self, kind: str, tokens: Iterable[str]):
        if kind not in ("code", "description"):
            raise ValueError(f"unknown vocabulary kind {kind!r}")
        self.kind = kind
        self.tokens: tuple[str, ...] = (PAD_TOKEN, UNK_TOKEN, *tokens)
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_for(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def serialize(self) -> str:
        lines = [f"{VOCAB_MAGIC} kind={self.kind}"]
        lines.extend(f"{tok}\t{i}" for i, tok in enumerate(self.tokens))
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.splitlines()
        if not lines or not lines[0].startswith(VOCAB_MAGIC):
            raise ValueError(f"{path}: not a vocabulary file")
        kind = lines[0].split("kind=", 1)[1].strip()
        tokens = []
        for i, line in enumerate(lines[1:]):
            tok, _, id_text = line.partition("\t")
            if int(id_text) != i:
                raise ValueError(f"{path}: non-dense id at line {i + 2}")
            tokens.append(tok)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError(f"{path}: reserved entries missing")
        return cls(kind, tokens[2:])


def build_vocabulary(
    pairs: Iterable[CorpusPair], kind: str, limit: int = VOCAB_LIMIT
) -> Vocabulary:
    """Count subtokens over the training pairs and keep the top `limit`.

    Code tokens are counted after identifier splitting and keyword removal;
    ties at the cutoff go to the lexicographically smaller token.
    """
    counts: Counter[str] = Counter()
    n_pairs = 0
    if kind == "description":
        for pair in pairs:
            counts.update(description_tokens(pair.description))
            n_pairs += 1
    elif kind == "code":
        from . import pystmt  # local import: pystmt uses split_identifier

        for pair in pairs:
            try:
                tree = pystmt.segment(pair.code)
            except pystmt.ParseError as exc:
                log.warning("vocabulary: skipping %s (%s)", pair.id, exc)
                continue
            for stmt in tree.statements:
                counts.update(pystmt.statement_subtokens(stmt))
            n_pairs += 1
    else:
        raise ValueError(f"unknown vocabulary kind {kind!r}")
    if n_pairs == 0:
        raise ValueError("no usable pairs to build a vocabulary from")
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return Vocabulary(kind, [tok for tok, _ in ranked[:limit]])


def load_corpus(path: str | Path, split: str) -> list[CorpusPair]:
    """Read a newline-delimited corpus file into CorpusPairs.

    Records that fail UTF-8 decoding, lack a non-empty code or description,
    or repeat an id are skipped and logged.  A line that is not a JSON object
    raises CorpusFormatError with its line number.
    """
    path = Path(path)
    pairs: list[CorpusPair] = []
    seen: set[str] = set()
    skipped = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                skipped += 1
                log.warning("%s:%d: undecodable record skipped", path, lineno)
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(
                    f"{path}:{lineno}: malformed record ({exc.msg})"
                ) from exc
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{lineno}: record is not an object")
            code = record.get("code")
            description = record.get("docstring", record.get("description"))
            pair_id = record.get("id") or record.get("url") or f"{split}:{lineno}"
            if not isinstance(code, str) or not code.strip():
                skipped += 1
                log.warning("%s:%d: missing code, skipped", path, lineno)
                continue
            if not isinstance(description, str) or not description.strip():
                skipped += 1
                log.warning("%s:%d: missing description, skipped", path, lineno)
                continue
            if pair_id in seen:
                skipped += 1
                log.warning("%s:%d: duplicate id %s, skipped", path, lineno, pair_id)
                continue
            seen.add(pair_id)
            pairs.append(CorpusPair(id=str(pair_id), code=code, description=description))
    log.info("%s [%s]: %d pairs, %d skipped", path, split, len(pairs), skipped)
    return pairs
