"""Statement-level segmentation of a single Python function.

One function is lexed (stdlib tokenize) and cut into an ordered statement
tree: the def line yields a function-name statement (S1) and a parameter
statement (S2), every further logical line is one statement, and elif/else/
except/finally headers chain under their preceding header so that a nested
statement's ancestor set spells out the full branch chain governing it.

No expression grammar is parsed.  Statement kinds, nesting, and the role of
NAME tokens (defined vs used) are all the downstream dependency analysis
needs.
"""

from __future__ import annotations

import io
import keyword
import tokenize as _tokenize
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

from .ingest import split_identifier

TOKEN_CAP = 5

FUNC_NAME = "FuncName"
PARAMS = "Params"

_COMPOUND_KEYWORDS = {
    "if", "elif", "else", "for", "while", "try", "except", "finally",
    "with", "def", "class",
}
_CHAIN_KEYWORDS = {"elif", "else", "except", "finally"}
_AUG_OPS = {
    "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=",
    "&=", "|=", "^=", "@=",
}
_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {")", "]", "}"}

_KIND_BY_KEYWORD = {
    "if": "If", "elif": "Elif", "else": "Else", "for": "For",
    "while": "While", "try": "Try", "except": "Except",
    "finally": "Finally", "with": "With", "return": "Return",
    "raise": "Raise", "break": "Break", "continue": "Continue",
    "pass": "Pass", "import": "Import", "from": "Import",
}

LOOP_KINDS = {"For", "While"}


class ParseError(ValueError):
    """Base class for statement segmentation failures."""


class IndentationInconsistency(ParseError):
    """Tabs and spaces are mixed, or dedents do not line up."""


class UnterminatedConstruct(ParseError):
    """A string or bracket is left open at end of input."""


class MissingFunction(ParseError):
    """The source contains no top-level function definition."""


class Tok(NamedTuple):
    type: str  # name | kw | op | num | str
    text: str


@dataclass
class Statement:
    index: int
    kind: str
    parent: int
    tokens: list[Tok]
    line: int
    col: int
    defined_vars: frozenset[str] = frozenset()
    used_vars: frozenset[str] = frozenset()

    @property
    def raw_tokens(self) -> list[str]:
        return [t.text for t in self.tokens]


@dataclass
class StatementTree:
    statements: list[Statement]
    source_id: str = ""

    def __len__(self) -> int:
        return len(self.statements)

    def get(self, index: int) -> Statement:
        return self.statements[index - 1]

    def ancestors(self, index: int) -> list[int]:
        """Parent chain of a statement, nearest first, root (0) excluded."""
        chain = []
        parent = self.get(index).parent
        while parent != 0:
            chain.append(parent)
            parent = self.get(parent).parent
        return chain

    def enclosing_loops(self, index: int) -> set[int]:
        """For/While headers whose body contains the statement.

        A loop header belongs to its own loop: its condition re-evaluates on
        every iteration.
        """
        loops = {a for a in self.ancestors(index) if self.get(a).kind in LOOP_KINDS}
        if self.get(index).kind in LOOP_KINDS:
            loops.add(index)
        return loops


def _lex(code: str) -> list[_tokenize.TokenInfo]:
    try:
        return list(_tokenize.generate_tokens(io.StringIO(code).readline))
    except _tokenize.TokenError as exc:
        raise UnterminatedConstruct(str(exc)) from exc
    except IndentationError as exc:
        raise IndentationInconsistency(str(exc)) from exc


def _wrap(tok: _tokenize.TokenInfo) -> Tok:
    if tok.type == _tokenize.NAME:
        return Tok("kw" if keyword.iskeyword(tok.string) else "name", tok.string)
    if tok.type == _tokenize.OP:
        return Tok("op", tok.string)
    if tok.type == _tokenize.NUMBER:
        return Tok("num", tok.string)
    if tok.type == _tokenize.STRING:
        return Tok("str", tok.string)
    return Tok("op", tok.string)


def _match_bracket(toks: list[Tok], start: int) -> int:
    """Index of the bracket closing toks[start]; len(toks) if unbalanced."""
    depth = 0
    for i in range(start, len(toks)):
        if toks[i].type == "op":
            if toks[i].text in _OPEN:
                depth += 1
            elif toks[i].text in _CLOSE:
                depth -= 1
                if depth == 0:
                    return i
    return len(toks)


def _top_level_positions(toks: list[Tok], wanted: set[str]) -> list[int]:
    """Positions of `wanted` op/keyword texts at bracket depth 0.

    '=' and ':' occurrences inside a lambda's parameter list are not
    top-level: a lambda opens at its keyword and closes at the first ':'
    at the same depth.
    """
    out = []
    depth = 0
    lambda_depths: list[int] = []
    for i, t in enumerate(toks):
        if t.type == "op" and t.text in _OPEN:
            depth += 1
        elif t.type == "op" and t.text in _CLOSE:
            depth -= 1
            while lambda_depths and lambda_depths[-1] > depth:
                lambda_depths.pop()
        elif t.type == "kw" and t.text == "lambda":
            lambda_depths.append(depth)
            continue
        in_lambda_params = bool(lambda_depths) and lambda_depths[-1] == depth
        if t.type == "op" and t.text == ":" and in_lambda_params:
            lambda_depths.pop()
            continue
        if depth == 0 and not in_lambda_params and t.text in wanted:
            out.append(i)
    return out


def _split_on(toks: list[Tok], positions: list[int]) -> list[list[Tok]]:
    segments = []
    last = 0
    for pos in positions:
        segments.append(toks[last:pos])
        last = pos + 1
    segments.append(toks[last:])
    return segments


def _read_names(toks: list[Tok]) -> tuple[set[str], set[str]]:
    """NAME tokens in read position: (uses, walrus-defined names).

    Attribute names after '.' and keyword-argument names inside call
    parentheses are not variable reads.
    """
    uses: set[str] = set()
    walrus: set[str] = set()
    depth = 0
    for i, t in enumerate(toks):
        if t.type == "op":
            if t.text in _OPEN:
                depth += 1
            elif t.text in _CLOSE:
                depth -= 1
            continue
        if t.type != "name":
            continue
        prev = toks[i - 1] if i > 0 else None
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        if prev is not None and prev.type == "op" and prev.text == ".":
            continue
        if nxt is not None and nxt.type == "op" and nxt.text == ":=":
            walrus.add(t.text)
            continue
        if (
            depth > 0
            and nxt is not None
            and nxt == Tok("op", "=")
            and prev is not None
            and prev.type == "op"
            and prev.text in ("(", ",")
        ):
            continue  # keyword argument name
        uses.add(t.text)
    return uses, walrus


def _target_names(toks: list[Tok]) -> tuple[set[str], set[str]]:
    """Names bound by an assignment target: (defined, used).

    Plain and unpacked names bind; attribute and subscript targets read
    their base name and any index expressions instead.
    """
    defined: set[str] = set()
    used: set[str] = set()
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.type == "name":
            nxt = toks[i + 1] if i + 1 < len(toks) else None
            if nxt is not None and nxt.type == "op" and nxt.text in (".", "[", "("):
                used.add(t.text)
                i += 1
                while i < len(toks) and toks[i].type == "op":
                    if toks[i].text == ".":
                        i += 2
                    elif toks[i].text in ("[", "("):
                        end = _match_bracket(toks, i)
                        inner_uses, inner_walrus = _read_names(toks[i + 1 : end])
                        used |= inner_uses
                        defined |= inner_walrus
                        i = end + 1
                    else:
                        break
            else:
                defined.add(t.text)
                i += 1
        elif t.type == "op" and t.text in ("(", "["):
            end = _match_bracket(toks, i)
            d, u = _target_names(toks[i + 1 : end])
            defined |= d
            used |= u
            i = end + 1
        else:
            i += 1
    return defined, used


def _uses_only(toks: list[Tok]) -> tuple[set[str], set[str]]:
    uses, walrus = _read_names(toks)
    return walrus, uses


def extract_def_use(stmt: Statement) -> tuple[frozenset[str], frozenset[str]]:
    """Defined and used variable names of one lexed statement.

    Unknown statement kinds fall back to the conservative read: every NAME
    token is a use and nothing is defined.
    """
    toks = stmt.tokens
    kind = stmt.kind
    defined: set[str] = set()
    used: set[str] = set()

    if kind == FUNC_NAME:
        defined = {toks[0].text} if toks else set()
    elif kind == PARAMS:
        for piece in _split_on(toks, _top_level_positions(toks, {","})):
            piece = [t for t in piece if not (t.type == "op" and t.text in ("*", "**", "/"))]
            if not piece:
                continue
            if piece[0].type == "name":
                defined.add(piece[0].text)
            extra_uses, extra_walrus = _read_names(piece[1:])
            used |= extra_uses
            defined |= extra_walrus
    elif kind in ("Assign", "AugAssign"):
        aug_positions = _top_level_positions(toks, _AUG_OPS)
        if aug_positions:
            target, rhs = toks[: aug_positions[0]], toks[aug_positions[0] + 1 :]
            t_def, t_use = _target_names(target)
            r_use, r_walrus = _read_names(rhs)
            defined = t_def | r_walrus
            used = t_def | t_use | r_use  # augmented target is read then written
        else:
            eq_positions = _top_level_positions(toks, {"="})
            segments = _split_on(toks, eq_positions)
            rhs = segments[-1]
            targets = segments[:-1]
            if not targets:  # bare annotation: "x: int"
                colon = _top_level_positions(toks, {":"})
                targets = [toks[: colon[0]]] if colon else []
                rhs = toks[colon[0] + 1 :] if colon else toks
            for target in targets:
                colon = _top_level_positions(target, {":"})
                if colon:  # annotated target
                    ann_uses, ann_walrus = _read_names(target[colon[0] + 1 :])
                    used |= ann_uses
                    defined |= ann_walrus
                    target = target[: colon[0]]
                t_def, t_use = _target_names(target)
                defined |= t_def
                used |= t_use
            r_use, r_walrus = _read_names(rhs)
            used |= r_use
            defined |= r_walrus
    elif kind == "For":
        in_positions = _top_level_positions(toks, {"in"})
        split = in_positions[0] if in_positions else len(toks)
        t_def, t_use = _target_names(toks[1:split])
        defined |= t_def
        used |= t_use
        iter_uses, iter_walrus = _read_names(toks[split + 1 :])
        used |= iter_uses
        defined |= iter_walrus
    elif kind == "With":
        body = toks[1:]
        if (
            body
            and body[0] == Tok("op", "(")
            and _match_bracket(body, 0) == len(body) - 1
        ):
            body = body[1:-1]
        for item in _split_on(body, _top_level_positions(body, {","})):
            as_positions = _top_level_positions(item, {"as"})
            if as_positions:
                expr, target = item[: as_positions[0]], item[as_positions[0] + 1 :]
                t_def, _ = _target_names(target)
                defined |= t_def
            else:
                expr = item
            e_uses, e_walrus = _read_names(expr)
            used |= e_uses
            defined |= e_walrus
    elif kind == "Except":
        as_positions = _top_level_positions(toks, {"as"})
        if as_positions:
            used |= _read_names(toks[1 : as_positions[0]])[0]
            t_def, _ = _target_names(toks[as_positions[0] + 1 :])
            defined |= t_def
        else:
            used |= _read_names(toks[1:])[0]
    elif kind == "Import":
        if toks and toks[0].text == "from":
            import_positions = [i for i, t in enumerate(toks) if t.text == "import"]
            names = toks[import_positions[0] + 1 :] if import_positions else []
        else:
            names = toks[1:]
        for piece in _split_on(names, _top_level_positions(names, {","})):
            as_positions = [i for i, t in enumerate(piece) if t.text == "as"]
            if as_positions:
                target = piece[as_positions[0] + 1 :]
                if target and target[0].type == "name":
                    defined.add(target[0].text)
            elif piece and piece[0].type == "name":
                defined.add(piece[0].text)
    elif kind in ("If", "Elif", "While", "Return", "Raise", "Expr"):
        skip = 1 if toks and toks[0].type == "kw" else 0
        u, w = _read_names(toks[skip:])
        used |= u
        defined |= w
    elif kind in ("Else", "Try", "Finally", "Pass", "Break", "Continue"):
        pass
    else:  # Other: conservative
        used = {t.text for t in toks if t.type == "name"}

    return frozenset(defined), frozenset(used)


def statement_subtokens(stmt: Statement) -> list[str]:
    """All NAME subtokens of a statement, split and lowercased, in order.

    Keywords, operators and literals are dropped; attribute and call names
    are kept.  No deduplication or cap: this is the raw stream vocabulary
    counting consumes.
    """
    out: list[str] = []
    for tok in stmt.tokens:
        if tok.type == "name":
            out.extend(split_identifier(tok.text))
    return out


def statement_tokens(stmt: Statement, vocab, cap: int = TOKEN_CAP) -> list[int]:
    """Vocabulary ids of a statement's subtokens: dedup, cap, UNK fallback."""
    seen: set[str] = set()
    kept: list[str] = []
    for sub in statement_subtokens(stmt):
        if sub not in seen:
            seen.add(sub)
            kept.append(sub)
        if len(kept) == cap:
            break
    return [vocab.id_for(s) for s in kept]


@dataclass
class _Pending:
    toks: list[Tok] = field(default_factory=list)
    line: int = 0
    col: int = 0


class _Segmenter:
    def __init__(self, code: str):
        self.code = code
        self.source_lines = code.splitlines()
        self.statements: list[Statement] = []
        self.parent_stack = [0]
        self.chain_stack: list[int | None] = [None]
        self.next_block_parent = 0
        self.after_def = False
        self.saw_def = False
        self.indent_styles: set[str] = set()

    def run(self) -> StatementTree:
        tokens = _lex(self.code)
        pending = _Pending()
        depth = 0
        for tok in tokens:
            if tok.type in (_tokenize.COMMENT, _tokenize.NL, _tokenize.ENCODING):
                continue
            if tok.type == _tokenize.INDENT:
                depth += 1
                self.parent_stack.append(self.next_block_parent)
                self.chain_stack.append(None)
                continue
            if tok.type == _tokenize.DEDENT:
                depth -= 1
                if len(self.parent_stack) > 1:
                    self.parent_stack.pop()
                    self.chain_stack.pop()
                if depth <= 0 and self.saw_def:
                    break  # function body closed
                continue
            if tok.type == _tokenize.NEWLINE:
                if pending.toks:
                    self._logical_line(pending)
                pending = _Pending()
                continue
            if tok.type == _tokenize.ENDMARKER:
                break
            if not pending.toks:
                pending.line, pending.col = tok.start
                self._check_indent(tok.start[0])
            pending.toks.append(_wrap(tok))
        if pending.toks:
            self._logical_line(pending)
        if not self.saw_def:
            raise MissingFunction("no function definition found")
        return StatementTree(statements=self.statements)

    def _check_indent(self, lineno: int) -> None:
        if lineno - 1 >= len(self.source_lines):
            return
        text = self.source_lines[lineno - 1]
        indent = text[: len(text) - len(text.lstrip(" \t"))]
        if " " in indent:
            self.indent_styles.add(" ")
        if "\t" in indent:
            self.indent_styles.add("\t")
        if len(self.indent_styles) > 1:
            raise IndentationInconsistency("mixed tabs and spaces in indentation")

    def _logical_line(self, pending: _Pending) -> None:
        toks, line, col = pending.toks, pending.line, pending.col
        if not self.saw_def:
            if toks[0] == Tok("op", "@"):
                return  # decorator
            lead = 1 if toks[0] == Tok("kw", "async") else 0
            if len(toks) > lead and toks[lead] == Tok("kw", "def"):
                self._emit_def(toks[lead:], line, col)
                return
            raise MissingFunction("no function definition found")
        self._statement(toks, line, col)

    def _emit_def(self, toks: list[Tok], line: int, col: int) -> None:
        """Top-level def line: function-name and parameter statements."""
        name = toks[1].text if len(toks) > 1 and toks[1].type == "name" else ""
        paren = next(
            (i for i, t in enumerate(toks) if t == Tok("op", "(")), len(toks)
        )
        close = _match_bracket(toks, paren) if paren < len(toks) else len(toks)
        inner = toks[paren + 1 : close]
        self._append(FUNC_NAME, [Tok("name", name)] if name else [], 0, line, col)
        params = self._append(PARAMS, inner, 0, line, col)
        self.saw_def = True
        self.next_block_parent = 0
        self.after_def = True
        # inline body after the colon ("def f(): return x")
        colon = _top_level_positions(toks[close + 1 :], {":"})
        if colon:
            rest = toks[close + 1 + colon[0] + 1 :]
            if rest:
                self._emit_simple(rest, params.parent, line, col)

    def _statement(self, toks: list[Tok], line: int, col: int) -> None:
        first = toks[0]
        lead = 1 if first == Tok("kw", "async") and len(toks) > 1 else 0
        head = toks[lead]
        if head.type == "kw" and head.text in _COMPOUND_KEYWORDS:
            self._emit_compound(toks, lead, line, col)
            return
        if self._looks_like_header(toks):
            # soft-keyword compound statements (match/case)
            self._emit_compound(toks, lead, line, col, kind="Other")
            return
        self._emit_simple(toks, self.parent_stack[-1], line, col)
        self.chain_stack[-1] = None

    def _looks_like_header(self, toks: list[Tok]) -> bool:
        colon = _top_level_positions(toks, {":"})
        if not colon or colon[-1] != len(toks) - 1:
            return False
        # annotated assignment also holds a top-level colon; headers start
        # with a bare name followed by an expression, never "name : type"
        return toks[0].type == "name" and len(colon) == 1 and colon[0] > 1

    def _emit_compound(
        self, toks: list[Tok], lead: int, line: int, col: int, kind: str | None = None
    ) -> None:
        head = toks[lead]
        if kind is None:
            kind = "Other" if head.text in ("def", "class") else _KIND_BY_KEYWORD[head.text]
        colon = _top_level_positions(toks, {":"})
        split = colon[0] if colon else len(toks) - 1
        header_toks = toks[:split] if colon else toks
        if kind in ("Elif", "Else", "Except", "Finally") and self.chain_stack[-1]:
            parent = self.chain_stack[-1]
        else:
            parent = self.parent_stack[-1]
        stmt = self._append(kind, header_toks, parent, line, col)
        if kind in ("If", "Elif", "For", "While", "Try", "Except", "Else", "Finally", "With", "Other"):
            self.chain_stack[-1] = stmt.index
        self.next_block_parent = stmt.index
        if head.text == "def":
            self.after_def = True
        rest = toks[split + 1 :]
        if rest:  # inline body
            self._emit_simple(rest, stmt.index, line, col)

    def _emit_simple(self, toks: list[Tok], parent: int, line: int, col: int) -> None:
        for piece in _split_on(toks, _top_level_positions(toks, {";"})):
            if not piece:
                continue
            if self.after_def and all(t.type == "str" for t in piece):
                self.after_def = False
                continue  # leading docstring
            self.after_def = False
            self._append(self._classify_simple(piece), piece, parent, line, col)

    def _classify_simple(self, toks: list[Tok]) -> str:
        head = toks[0]
        if head.type == "kw":
            skip = 1 if head.text == "async" and len(toks) > 1 else 0
            head = toks[skip]
            if head.text in _KIND_BY_KEYWORD and head.text not in _COMPOUND_KEYWORDS:
                return _KIND_BY_KEYWORD[head.text]
            if head.text in ("yield", "await", "lambda", "not"):
                return "Expr"
            return "Other"  # del / global / nonlocal / assert / nested def ...
        if _top_level_positions(toks, _AUG_OPS):
            return "AugAssign"
        if _top_level_positions(toks, {"="}):
            return "Assign"
        if head.type == "name" and _top_level_positions(toks, {":"}):
            return "Assign"  # bare annotated target
        return "Expr"

    def _append(
        self, kind: str, toks: list[Tok], parent: int, line: int, col: int
    ) -> Statement:
        stmt = Statement(
            index=len(self.statements) + 1,
            kind=kind,
            parent=parent,
            tokens=toks,
            line=line,
            col=col,
        )
        stmt.defined_vars, stmt.used_vars = extract_def_use(stmt)
        self.statements.append(stmt)
        return stmt


def segment(code: str, source_id: str = "") -> StatementTree:
    """Segment one Python function into its statement tree.

    Comments and the leading docstring are dropped; continuation lines are
    joined; nested def/class headers become Other statements with
    conservative def/use sets.
    """
    tree = _Segmenter(code).run()
    tree.source_id = source_id
    return tree


def tree_to_dict(tree: StatementTree) -> dict:
    """JSON-friendly dump of a statement tree for inspection and fixtures."""
    return {
        "source_id": tree.source_id,
        "statements": [
            {
                "index": s.index,
                "kind": s.kind,
                "parent": s.parent,
                "line": s.line,
                "tokens": s.raw_tokens,
                "defines": sorted(s.defined_vars),
                "uses": sorted(s.used_vars),
            }
            for s in tree.statements
        ],
    }


def iter_statement_token_ids(
    tree: StatementTree, vocab, cap: int = TOKEN_CAP
) -> Iterator[list[int]]:
    for stmt in tree.statements:
        yield statement_tokens(stmt, vocab, cap)
