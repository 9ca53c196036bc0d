"""Text format for describing scenes as distance-bound expressions.

Grammar (LL(1), parsed by hand with single-token lookahead):

    scene := stmt+
    stmt  := "let" IDENT "=" expr ";"
           | "emit" expr ";"
           | "seed" "(" num "," num "," num ")" ";"
    expr  := IDENT "(" args? ")" | IDENT
    args  := arg ("," arg)*
    arg   := num | STRING | expr

Comments run from "#" to end of line.  Exactly one "emit" is required.
Identifiers resolve to prior "let" bindings or to the built-in
constructors.  Numbers are plain decimals with an optional exponent; there
is no arithmetic, so scene files stay data.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Union

from . import fields
from .geometry import Vec3

__all__ = ["ParseError", "Call", "SceneAst", "parse_scene", "pretty", "build_field",
           "BUILTINS"]

_MAX_DEPTH = 200


class ParseError(Exception):
    """Positioned syntax or resolution error in a scene source."""

    def __init__(self, line: int, column: int, message: str, expected: str = ""):
        self.line = line
        self.column = column
        self.message = message
        self.expected = expected
        detail = f" (expected {expected})" if expected else ""
        super().__init__(f"line {line}, column {column}: {message}{detail}")


Arg = Union[float, str, "Call"]


@dataclass(frozen=True)
class Call:
    """One constructor application; arguments are numbers, strings or calls."""

    name: str
    args: tuple[Arg, ...] = ()


@dataclass(frozen=True)
class SceneAst:
    root: Call
    seeds: tuple[tuple[float, float, float], ...] = ()


# Builtin name -> parameter kinds; "*expr" means one-or-more field arguments.
BUILTINS: dict[str, tuple[str, ...] | str] = {
    "sphere": ("num",),
    "box": ("num", "num", "num"),
    "box_exact": ("num", "num", "num"),
    "plane": ("num", "num", "num", "num", "num", "num"),
    "torus": ("num", "num"),
    "cylinder": ("num", "num"),
    "cone": ("num", "num"),
    "capsule": ("num", "num", "num", "num", "num", "num", "num"),
    "hex_prism": ("num", "num"),
    "genus2": (),
    "knot": ("num", "num"),
    "sierpinski": ("num",),
    "union": "*expr",
    "intersection": "*expr",
    "translate": ("expr", "num", "num", "num"),
    "shrink": ("expr", "num"),
    "scale_uniform": ("expr", "num"),
    "nn": ("str",),
}

_KEYWORDS = frozenset({"let", "emit", "seed"})


@dataclass(frozen=True)
class _Token:
    kind: str  # ident | number | string | punct | eof
    text: str
    value: object
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            tokens.append(_Token("ident", text, text, start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit() or ch == "." or (ch in "+-" and i + 1 < n and
                                         (source[i + 1].isdigit() or source[i + 1] == ".")):
            j = i
            if source[j] in "+-":
                j += 1
            digits = 0
            while j < n and source[j].isdigit():
                j += 1
                digits += 1
            if j < n and source[j] == ".":
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
                    digits += 1
            if digits == 0:
                raise ParseError(start_line, start_col,
                                 f"malformed number starting with {source[i:j + 1]!r}")
            if j < n and source[j] in "eE":
                j += 1
                if j < n and source[j] in "+-":
                    j += 1
                if j >= n or not source[j].isdigit():
                    raise ParseError(start_line, start_col,
                                     "malformed exponent in number")
                while j < n and source[j].isdigit():
                    j += 1
            text = source[i:j]
            value = float(text)
            if value in (float("inf"), float("-inf")):
                raise ParseError(start_line, start_col,
                                 f"numeric literal {text!r} overflows")
            tokens.append(_Token("number", text, value, start_line, start_col))
            col += j - i
            i = j
            continue
        if ch == '"':
            j = i + 1
            out = []
            while True:
                if j >= n or source[j] == "\n":
                    raise ParseError(start_line, start_col, "unterminated string")
                cj = source[j]
                if cj == '"':
                    break
                if cj == "\\":
                    if j + 1 >= n or source[j + 1] not in '"\\':
                        raise ParseError(line, start_col + (j - i),
                                         "unsupported escape in string")
                    out.append(source[j + 1])
                    j += 2
                    continue
                out.append(cj)
                j += 1
            tokens.append(_Token("string", source[i:j + 1], "".join(out),
                                 start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch in "=(),;":
            tokens.append(_Token("punct", ch, ch, start_line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError(start_line, start_col, f"unexpected character {ch!r}")
    tokens.append(_Token("eof", "", None, line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.bindings: dict[str, Call] = {}
        self.in_progress: str | None = None

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_punct(self, ch: str) -> _Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != ch:
            raise ParseError(tok.line, tok.column,
                             f"unexpected {tok.text!r}" if tok.kind != "eof"
                             else "unexpected end of input", expected=repr(ch))
        return self.advance()

    def parse(self) -> SceneAst:
        root: Call | None = None
        seeds: list[tuple[float, float, float]] = []
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind != "ident":
                raise ParseError(tok.line, tok.column, f"unexpected {tok.text!r}",
                                 expected="'let', 'emit' or 'seed'")
            if tok.text == "let":
                self.advance()
                name_tok = self.advance()
                if name_tok.kind != "ident" or name_tok.text in _KEYWORDS:
                    raise ParseError(name_tok.line, name_tok.column,
                                     "invalid binding name", expected="identifier")
                name = name_tok.text
                if name in BUILTINS:
                    raise ParseError(name_tok.line, name_tok.column,
                                     f"cannot rebind builtin constructor {name!r}")
                if name in self.bindings:
                    raise ParseError(name_tok.line, name_tok.column,
                                     f"duplicate binding {name!r}")
                self.expect_punct("=")
                self.in_progress = name
                value = self.parse_expr(0)
                self.in_progress = None
                self.expect_punct(";")
                self.bindings[name] = value
            elif tok.text == "emit":
                if root is not None:
                    raise ParseError(tok.line, tok.column, "duplicate 'emit' statement")
                self.advance()
                root = self.parse_expr(0)
                self.expect_punct(";")
            elif tok.text == "seed":
                self.advance()
                self.expect_punct("(")
                coords = []
                for m in range(3):
                    if m:
                        self.expect_punct(",")
                    num = self.peek()
                    if num.kind != "number":
                        raise ParseError(num.line, num.column,
                                         f"unexpected {num.text!r}", expected="number")
                    coords.append(float(num.value))
                    self.advance()
                self.expect_punct(")")
                self.expect_punct(";")
                if not all(-0.5 <= v <= 0.5 for v in coords):
                    raise ParseError(tok.line, tok.column,
                                     f"seed {tuple(coords)} outside the closed unit cube")
                seeds.append(tuple(coords))
            else:
                raise ParseError(tok.line, tok.column, f"unexpected {tok.text!r}",
                                 expected="'let', 'emit' or 'seed'")
        if root is None:
            last = self.tokens[-1]
            raise ParseError(last.line, last.column, "missing 'emit' statement")
        return SceneAst(root, tuple(seeds))

    def parse_expr(self, depth: int) -> Call:
        if depth > _MAX_DEPTH:
            tok = self.peek()
            raise ParseError(tok.line, tok.column, "expression nested too deeply")
        tok = self.peek()
        if tok.kind != "ident" or tok.text in _KEYWORDS:
            raise ParseError(tok.line, tok.column,
                             f"unexpected {tok.text!r}" if tok.kind != "eof"
                             else "unexpected end of input",
                             expected="constructor or binding name")
        name = tok.text
        self.advance()
        nxt = self.peek()
        if not (nxt.kind == "punct" and nxt.text == "("):
            # Bare identifier: a reference to a prior binding.
            if name == self.in_progress:
                raise ParseError(tok.line, tok.column, f"cyclic reference to {name!r}")
            if name in self.bindings:
                return self.bindings[name]
            raise ParseError(tok.line, tok.column, f"unknown identifier {name!r}",
                             expected="a prior 'let' binding")
        if name == self.in_progress:
            raise ParseError(tok.line, tok.column, f"cyclic reference to {name!r}")
        if name in self.bindings:
            raise ParseError(tok.line, tok.column,
                             f"binding {name!r} cannot be called like a constructor")
        if name not in BUILTINS:
            raise ParseError(tok.line, tok.column, f"unknown constructor {name!r}")
        self.expect_punct("(")
        args: list[Arg] = []
        if not (self.peek().kind == "punct" and self.peek().text == ")"):
            while True:
                args.append(self.parse_arg(depth + 1))
                if self.peek().kind == "punct" and self.peek().text == ",":
                    self.advance()
                    continue
                break
        self.expect_punct(")")
        self._check_signature(name, args, tok)
        return Call(name, tuple(args))

    def parse_arg(self, depth: int) -> Arg:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return float(tok.value)
        if tok.kind == "string":
            self.advance()
            return str(tok.value)
        return self.parse_expr(depth)

    def _check_signature(self, name: str, args: list[Arg], tok: _Token) -> None:
        sig = BUILTINS[name]
        if sig == "*expr":
            if not args:
                raise ParseError(tok.line, tok.column,
                                 f"{name} expects at least one field argument")
            for a in args:
                if not isinstance(a, Call):
                    raise ParseError(tok.line, tok.column,
                                     f"{name} arguments must be field expressions")
            return
        if len(args) != len(sig):
            raise ParseError(tok.line, tok.column,
                             f"{name} expects {len(sig)} argument(s), got {len(args)}")
        for kind, a in zip(sig, args):
            ok = (kind == "num" and isinstance(a, float)) or \
                 (kind == "str" and isinstance(a, str)) or \
                 (kind == "expr" and isinstance(a, Call))
            if not ok:
                raise ParseError(tok.line, tok.column,
                                 f"{name} argument of wrong kind", expected=kind)


def parse_scene(source: str) -> SceneAst:
    """Parse scene text; raises :class:`ParseError` with position on any
    malformed input."""
    return _Parser(_tokenize(source)).parse()


def _format_arg(a: Arg) -> str:
    if isinstance(a, float):
        return repr(a)
    if isinstance(a, str):
        return '"' + a.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return _format_call(a)


def _format_call(c: Call) -> str:
    return f"{c.name}({', '.join(_format_arg(a) for a in c.args)})"


def pretty(ast: SceneAst) -> str:
    """Deterministic text for an AST; reparsing yields an identical AST."""
    lines = [f"emit {_format_call(ast.root)};"]
    lines.extend(f"seed ({x!r}, {y!r}, {z!r});" for x, y, z in ast.seeds)
    return "\n".join(lines) + "\n"


def _int_arg(name: str, value: float) -> int:
    if value != int(value):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    return int(value)


def build_field(ast: SceneAst, base_dir: str | None = None) -> fields.Field:
    """Compose the field constructors bottom-up from a parsed scene.

    ``nn(path)`` weight files resolve relative to ``base_dir`` (normally
    the scene file's directory).  Invalid constructor parameters raise
    the constructors' own errors.
    """

    def build(c: Call) -> fields.Field:
        a = c.args
        if c.name == "sphere":
            return fields.sphere(a[0])
        if c.name == "box":
            return fields.box(a[0], a[1], a[2])
        if c.name == "box_exact":
            return fields.box_exact(a[0], a[1], a[2])
        if c.name == "plane":
            return fields.PlaneField(Vec3(a[0], a[1], a[2]), Vec3(a[3], a[4], a[5]))
        if c.name == "torus":
            return fields.torus(a[0], a[1])
        if c.name == "cylinder":
            return fields.cylinder(a[0], a[1])
        if c.name == "cone":
            return fields.cone(a[0], a[1])
        if c.name == "capsule":
            return fields.capsule(Vec3(a[0], a[1], a[2]), Vec3(a[3], a[4], a[5]), a[6])
        if c.name == "hex_prism":
            return fields.hex_prism(a[0], a[1])
        if c.name == "genus2":
            return fields.genus2()
        if c.name == "knot":
            return fields.knot_tube(_int_arg("knot curve_samples", a[0]), a[1])
        if c.name == "sierpinski":
            return fields.sierpinski_tetra(_int_arg("sierpinski iterations", a[0]))
        if c.name == "union":
            return fields.union([build(x) for x in a])
        if c.name == "intersection":
            return fields.intersection([build(x) for x in a])
        if c.name == "translate":
            return fields.translate(build(a[0]), Vec3(a[1], a[2], a[3]))
        if c.name == "shrink":
            return fields.shrink(build(a[0]), a[1])
        if c.name == "scale_uniform":
            return fields.scale_uniform(build(a[0]), a[1])
        if c.name == "nn":
            from . import neural
            path = a[0]
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            return neural.NeuralField(neural.load_weights(path))
        raise ValueError(f"unknown constructor {c.name!r}")

    return build(ast.root)
