"""Tokenizer and recursive-descent parser for the Java subset the extractor needs.

The grammar covers class/interface/enum structure (including nested types,
fields, initializer blocks, and enum constants) plus the statement forms of
the supported taxonomy. Anything outside the subset raises
:class:`UnsupportedConstructError` naming the construct instead of being
silently mis-typed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try void volatile while yield true false
    null""".split()
)

PRIMITIVE_TYPES = frozenset(
    ["boolean", "byte", "short", "int", "long", "float", "double", "char", "void"]
)

MODIFIER_WORDS = frozenset(
    [
        "public",
        "protected",
        "private",
        "static",
        "final",
        "abstract",
        "native",
        "synchronized",
        "transient",
        "volatile",
        "strictfp",
        "default",
    ]
)

# Longest-first so maximal munch works with a simple scan.
OPERATORS = [
    ">>>=",
    "<<=",
    ">>=",
    ">>>",
    "==",
    "!=",
    "<=",
    ">=",
    "&&",
    "||",
    "++",
    "--",
    "+=",
    "-=",
    "*=",
    "/=",
    "%=",
    "&=",
    "|=",
    "^=",
    "<<",
    ">>",
    "->",
    "::",
    "+",
    "-",
    "*",
    "/",
    "%",
    "=",
    "<",
    ">",
    "!",
    "~",
    "&",
    "|",
    "^",
    "?",
    ":",
    ";",
    ",",
    ".",
    "(",
    ")",
    "[",
    "]",
    "{",
    "}",
    "@",
]

ASSIGN_OPS = {
    "=": "ASSIGN",
    "+=": "ADD_ASSIGN",
    "-=": "SUB_ASSIGN",
    "*=": "MUL_ASSIGN",
    "/=": "DIV_ASSIGN",
    "%=": "MOD_ASSIGN",
    "&=": "AND_ASSIGN",
    "|=": "OR_ASSIGN",
    "^=": "XOR_ASSIGN",
    "<<=": "LSHIFT_ASSIGN",
    ">>=": "RSHIFT_ASSIGN",
    ">>>=": "URSHIFT_ASSIGN",
}


class JavaParseError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnsupportedConstructError(JavaParseError):
    def __init__(self, construct: str, line: int):
        super().__init__(f"unsupported construct: {construct}", line)
        self.construct = construct


@dataclass(frozen=True)
class Token:
    kind: str  # word | num | str | char | op
    text: str
    line: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, n, line = 0, len(text), 1
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch in " \t\r\f":
            i += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "*":
            end = text.find("*/", i + 2)
            if end == -1:
                raise JavaParseError("unterminated block comment", line)
            line += text.count("\n", i, end)
            i = end + 2
            continue
        if ch == '"':
            j = i + 1
            while j < n:
                if text[j] == "\\":
                    j += 2
                    continue
                if text[j] == '"':
                    break
                if text[j] == "\n":
                    raise JavaParseError("unterminated string literal", line)
                j += 1
            else:
                raise JavaParseError("unterminated string literal", line)
            tokens.append(Token("str", text[i : j + 1], line))
            i = j + 1
            continue
        if ch == "'":
            j = i + 1
            while j < n:
                if text[j] == "\\":
                    j += 2
                    continue
                if text[j] == "'":
                    break
                j += 1
            else:
                raise JavaParseError("unterminated char literal", line)
            tokens.append(Token("char", text[i : j + 1], line))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n:
                c = text[j]
                if c.isalnum() or c == "_":
                    j += 1
                elif c == "." and not seen_dot and j + 1 < n and text[j + 1].isdigit():
                    seen_dot = True
                    j += 1
                elif c in "+-" and j > i and text[j - 1] in "eEpP":
                    j += 1
                else:
                    break
            tokens.append(Token("num", text[i:j], line))
            i = j
            continue
        if ch.isalpha() or ch == "_" or ch == "$":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_$"):
                j += 1
            tokens.append(Token("word", text[i:j], line))
            i = j
            continue
        for op in OPERATORS:
            if text.startswith(op, i):
                tokens.append(Token("op", op, line))
                i += len(op)
                break
        else:
            raise JavaParseError(f"unexpected character {ch!r}", line)
    return tokens


# --------------------------------------------------------------------------
# Syntax tree
# --------------------------------------------------------------------------


@dataclass
class VarDeclarator:
    name: str
    extra_dims: int
    init_tokens: list[Token]


@dataclass
class FieldDecl:
    type_name: str  # base identifier, e.g. "HashMap" or "int"
    dims: int
    modifiers: set[str]
    declarators: list[VarDeclarator]
    start_line: int
    end_line: int


@dataclass
class EnumConstantDecl:
    name: str
    line: int


@dataclass
class Block:
    statements: list["Stmt"]
    start_line: int
    end_line: int


@dataclass
class Stmt:
    kind: str  # if|while|do|for|switch|try|sync|return|throw|break|continue|
    #            assert|yield|localvar|expr|block|empty
    start_line: int
    end_line: int
    cond_tokens: list[Token] = field(default_factory=list)
    expr_tokens: list[Token] = field(default_factory=list)
    blocks: list[Block] = field(default_factory=list)
    # localvar payload
    type_name: str = ""
    dims: int = 0
    is_final: bool = False
    declarators: list[VarDeclarator] = field(default_factory=list)
    # switch/try payload
    case_count: int = 0
    catch_count: int = 0
    enhanced_for: bool = False


@dataclass
class MethodDecl:
    name: str
    arity: int
    modifiers: set[str]
    throws: bool
    is_constructor: bool
    body: Block | None
    start_line: int
    end_line: int


@dataclass
class InitBlock:
    static: bool
    body: Block
    start_line: int
    end_line: int


@dataclass
class TypeDecl:
    kind: str  # class | interface | enum
    name: str
    fields: list[FieldDecl]
    methods: list[MethodDecl]
    init_blocks: list[InitBlock]
    enum_constants: list[EnumConstantDecl]
    nested: list["TypeDecl"]
    start_line: int
    end_line: int


@dataclass
class CompilationUnit:
    package: str
    types: list[TypeDecl]


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers ----------------------------------------------------

    def peek(self, offset: int = 0) -> Token | None:
        idx = self.pos + offset
        return self.tokens[idx] if idx < len(self.tokens) else None

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1].line if self.tokens else 1
            raise JavaParseError("unexpected end of input", last)
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise JavaParseError(f"expected {text!r}, got {tok.text!r}", tok.line)
        return tok

    def line(self) -> int:
        tok = self.peek()
        if tok is not None:
            return tok.line
        return self.tokens[-1].line if self.tokens else 1

    def skip_annotations(self) -> None:
        while self.at("@"):
            self.next()
            tok = self.next()
            if tok.kind != "word":
                raise JavaParseError("annotation name expected", tok.line)
            while self.at("."):
                self.next()
                self.next()
            if self.at("("):
                self.consume_balanced("(", ")")

    def consume_balanced(self, open_text: str, close_text: str) -> list[Token]:
        """Consume from the current opening bracket to its match, inclusive."""
        out = [self.expect(open_text)]
        depth = 1
        while depth > 0:
            tok = self.next()
            out.append(tok)
            if tok.text == open_text:
                depth += 1
            elif tok.text == close_text:
                depth -= 1
        return out

    # -- compilation unit -------------------------------------------------

    def parse_unit(self) -> CompilationUnit:
        package = ""
        self.skip_annotations()
        if self.at("package"):
            self.next()
            parts = [self.next().text]
            while self.at("."):
                self.next()
                parts.append(self.next().text)
            self.expect(";")
            package = ".".join(parts)
        while self.at("import"):
            while not self.at(";"):
                self.next()
            self.next()
        types = []
        while self.peek() is not None:
            if self.at(";"):
                self.next()
                continue
            types.append(self.parse_type_decl())
        return CompilationUnit(package=package, types=types)

    def parse_modifiers(self) -> set[str]:
        mods: set[str] = set()
        while True:
            self.skip_annotations()
            tok = self.peek()
            if tok is not None and tok.text in MODIFIER_WORDS:
                # 'default' is a modifier only in interface method position;
                # it never starts a statement here because members are parsed
                # separately from statements.
                mods.add(tok.text)
                self.next()
            else:
                return mods

    def parse_type_decl(self) -> TypeDecl:
        start = self.line()
        self.parse_modifiers()
        tok = self.next()
        if tok.text not in ("class", "interface", "enum"):
            raise UnsupportedConstructError(
                f"top-level construct starting with {tok.text!r}", tok.line
            )
        kind = tok.text
        name = self.next().text
        if self.at("<"):
            self.consume_generics()
        while self.peek() is not None and not self.at("{"):
            if self.at("<"):
                self.consume_generics()
            else:
                self.next()  # extends / implements clauses
        self.expect("{")
        decl = TypeDecl(
            kind=kind,
            name=name,
            fields=[],
            methods=[],
            init_blocks=[],
            enum_constants=[],
            nested=[],
            start_line=start,
            end_line=start,
        )
        if kind == "enum":
            self.parse_enum_constants(decl)
        while not self.at("}"):
            self.parse_member(decl)
        decl.end_line = self.expect("}").line
        return decl

    def consume_generics(self) -> list[Token]:
        """Consume a balanced <...> section, treating >> and >>> as nested closers."""
        out = [self.expect("<")]
        depth = 1
        while depth > 0:
            tok = self.next()
            out.append(tok)
            if tok.text == "<":
                depth += 1
            elif tok.text == ">":
                depth -= 1
            elif tok.text == ">>":
                depth -= 2
            elif tok.text == ">>>":
                depth -= 3
            if depth < 0:
                raise JavaParseError("unbalanced generics", tok.line)
        return out

    def parse_enum_constants(self, decl: TypeDecl) -> None:
        while True:
            self.skip_annotations()
            tok = self.peek()
            if tok is None or tok.text in ("}", ";"):
                break
            if tok.kind != "word":
                raise JavaParseError("enum constant expected", tok.line)
            decl.enum_constants.append(EnumConstantDecl(name=tok.text, line=tok.line))
            self.next()
            if self.at("("):
                self.consume_balanced("(", ")")
            if self.at("{"):
                raise UnsupportedConstructError("enum constant class body", self.line())
            if self.at(","):
                self.next()
            else:
                break
        if self.at(";"):
            self.next()

    def parse_member(self, decl: TypeDecl) -> None:
        if self.at(";"):
            self.next()
            return
        start = self.line()
        if self.at("{"):
            body = self.parse_block()
            decl.init_blocks.append(
                InitBlock(static=False, body=body, start_line=start, end_line=body.end_line)
            )
            return
        mods = self.parse_modifiers()
        if self.at("{"):
            body = self.parse_block()
            decl.init_blocks.append(
                InitBlock(
                    static="static" in mods,
                    body=body,
                    start_line=start,
                    end_line=body.end_line,
                )
            )
            return
        if self.at("class") or self.at("interface") or self.at("enum"):
            tok = self.next()
            kind = tok.text
            name = self.next().text
            if self.at("<"):
                self.consume_generics()
            while not self.at("{"):
                if self.at("<"):
                    self.consume_generics()
                else:
                    self.next()
            self.expect("{")
            nested = TypeDecl(
                kind=kind,
                name=name,
                fields=[],
                methods=[],
                init_blocks=[],
                enum_constants=[],
                nested=[],
                start_line=start,
                end_line=start,
            )
            if kind == "enum":
                self.parse_enum_constants(nested)
            while not self.at("}"):
                self.parse_member(nested)
            nested.end_line = self.expect("}").line
            decl.nested.append(nested)
            return
        if self.at("<"):
            self.consume_generics()  # generic method type parameters
        # Constructor: bare name matching the class, then '('
        tok = self.peek()
        nxt = self.peek(1)
        if (
            tok is not None
            and tok.kind == "word"
            and tok.text == decl.name
            and nxt is not None
            and nxt.text == "("
        ):
            self.next()
            decl.methods.append(self.parse_method_rest(decl.name, mods, start, True))
            return
        type_name, dims = self.parse_type()
        name_tok = self.next()
        if name_tok.kind != "word":
            raise JavaParseError(
                f"member name expected, got {name_tok.text!r}", name_tok.line
            )
        if self.at("("):
            decl.methods.append(self.parse_method_rest(name_tok.text, mods, start, False))
            return
        declarators = self.parse_declarators(name_tok.text)
        end = self.expect(";").line
        decl.fields.append(
            FieldDecl(
                type_name=type_name,
                dims=dims,
                modifiers=mods,
                declarators=declarators,
                start_line=start,
                end_line=end,
            )
        )

    def parse_type(self) -> tuple[str, int]:
        """Parse a type reference; return (base name, array dims)."""
        tok = self.next()
        if tok.kind != "word":
            raise JavaParseError(f"type expected, got {tok.text!r}", tok.line)
        base = tok.text
        while self.at("."):
            self.next()
            base = self.next().text
        if self.at("<"):
            self.consume_generics()
        dims = 0
        while self.at("["):
            self.next()
            self.expect("]")
            dims += 1
        return base, dims

    def parse_declarators(self, first_name: str) -> list[VarDeclarator]:
        declarators = []
        name = first_name
        while True:
            extra = 0
            while self.at("["):
                self.next()
                self.expect("]")
                extra += 1
            init: list[Token] = []
            if self.at("="):
                self.next()
                init = self.consume_expression(stop_at_comma=True)
            declarators.append(VarDeclarator(name=name, extra_dims=extra, init_tokens=init))
            if self.at(","):
                self.next()
                name = self.next().text
            else:
                return declarators

    def parse_method_rest(
        self, name: str, mods: set[str], start: int, is_constructor: bool
    ) -> MethodDecl:
        params = self.consume_balanced("(", ")")
        arity = _param_count(params)
        while self.at("["):
            self.next()
            self.expect("]")
        throws = False
        if self.at("throws"):
            throws = True
            while not (self.at("{") or self.at(";")):
                self.next()
        if self.at(";"):
            end = self.next().line
            body = None
        else:
            body = self.parse_block()
            end = body.end_line
        return MethodDecl(
            name=name,
            arity=arity,
            modifiers=mods,
            throws=throws,
            is_constructor=is_constructor,
            body=body,
            start_line=start,
            end_line=end,
        )

    # -- statements --------------------------------------------------------

    def parse_block(self) -> Block:
        start = self.expect("{").line
        statements = []
        while not self.at("}"):
            statements.append(self.parse_statement())
        end = self.expect("}").line
        return Block(statements=statements, start_line=start, end_line=end)

    def embedded_block(self) -> Block:
        """A statement body: either a braced block or a single statement."""
        if self.at("{"):
            return self.parse_block()
        stmt = self.parse_statement()
        return Block(
            statements=[stmt], start_line=stmt.start_line, end_line=stmt.end_line
        )

    def parse_statement(self) -> Stmt:
        self.skip_annotations()
        tok = self.peek()
        if tok is None:
            raise JavaParseError("unexpected end of input in block", self.line())
        start = tok.line
        text = tok.text

        if text == ";":
            self.next()
            return Stmt(kind="empty", start_line=start, end_line=start)
        if text == "{":
            block = self.parse_block()
            return Stmt(
                kind="block", start_line=start, end_line=block.end_line, blocks=[block]
            )
        if text == "if":
            self.next()
            cond = self.consume_balanced("(", ")")[1:-1]
            then = self.embedded_block()
            blocks = [then]
            end = then.end_line
            if self.at("else"):
                self.next()
                other = self.embedded_block()
                blocks.append(other)
                end = other.end_line
            return Stmt(
                kind="if", start_line=start, end_line=end, cond_tokens=cond, blocks=blocks
            )
        if text == "while":
            self.next()
            cond = self.consume_balanced("(", ")")[1:-1]
            body = self.embedded_block()
            return Stmt(
                kind="while",
                start_line=start,
                end_line=body.end_line,
                cond_tokens=cond,
                blocks=[body],
            )
        if text == "do":
            self.next()
            body = self.embedded_block()
            self.expect("while")
            cond = self.consume_balanced("(", ")")[1:-1]
            end = self.expect(";").line
            return Stmt(
                kind="do",
                start_line=start,
                end_line=end,
                cond_tokens=cond,
                blocks=[body],
            )
        if text == "for":
            self.next()
            header = self.consume_balanced("(", ")")[1:-1]
            cond, enhanced = _for_condition(header)
            body = self.embedded_block()
            return Stmt(
                kind="for",
                start_line=start,
                end_line=body.end_line,
                cond_tokens=cond,
                blocks=[body],
                enhanced_for=enhanced,
            )
        if text == "switch":
            self.next()
            selector = self.consume_balanced("(", ")")[1:-1]
            return self.parse_switch_body(start, selector)
        if text == "try":
            return self.parse_try(start)
        if text == "synchronized":
            self.next()
            expr = self.consume_balanced("(", ")")[1:-1]
            body = self.parse_block()
            return Stmt(
                kind="sync",
                start_line=start,
                end_line=body.end_line,
                cond_tokens=expr,
                blocks=[body],
            )
        if text == "return":
            self.next()
            expr = [] if self.at(";") else self.consume_expression()
            end = self.expect(";").line
            return Stmt(kind="return", start_line=start, end_line=end, expr_tokens=expr)
        if text == "throw":
            self.next()
            expr = self.consume_expression()
            end = self.expect(";").line
            return Stmt(kind="throw", start_line=start, end_line=end, expr_tokens=expr)
        if text in ("break", "continue"):
            self.next()
            if not self.at(";"):
                self.next()  # optional label
            end = self.expect(";").line
            return Stmt(kind=text, start_line=start, end_line=end)
        if text == "assert":
            self.next()
            expr = self.consume_expression()
            end = self.expect(";").line
            return Stmt(kind="assert", start_line=start, end_line=end, expr_tokens=expr)
        if text == "yield":
            self.next()
            expr = self.consume_expression()
            end = self.expect(";").line
            return Stmt(kind="yield", start_line=start, end_line=end, expr_tokens=expr)
        if text in ("class", "interface", "enum"):
            raise UnsupportedConstructError("local type declaration", start)
        nxt = self.peek(1)
        if tok.kind == "word" and nxt is not None and nxt.text == ":":
            raise UnsupportedConstructError("labeled statement", start)

        decl = self.try_local_var_decl()
        if decl is not None:
            return decl
        expr = self.consume_expression()
        end = self.expect(";").line
        if not expr:
            raise JavaParseError("empty expression statement", start)
        return Stmt(kind="expr", start_line=start, end_line=end, expr_tokens=expr)

    def parse_switch_body(self, start: int, selector: list[Token]) -> Stmt:
        self.expect("{")
        body_start = self.line()
        statements: list[Stmt] = []
        cases = 0
        while not self.at("}"):
            if self.at("case"):
                self.next()
                cases += 1
                while not self.at(":"):
                    tok = self.next()
                    if tok.text == "->":
                        raise UnsupportedConstructError("switch arrow case", tok.line)
                self.next()
                continue
            if self.at("default"):
                self.next()
                self.expect(":")
                continue
            statements.append(self.parse_statement())
        end = self.expect("}").line
        block = Block(statements=statements, start_line=body_start, end_line=end)
        return Stmt(
            kind="switch",
            start_line=start,
            end_line=end,
            cond_tokens=selector,
            blocks=[block],
            case_count=cases,
        )

    def parse_try(self, start: int) -> Stmt:
        self.next()
        cond: list[Token] = []
        if self.at("("):
            cond = self.consume_balanced("(", ")")[1:-1]  # try-with-resources
        body = self.parse_block()
        blocks = [body]
        catches = 0
        end = body.end_line
        while self.at("catch"):
            self.next()
            self.consume_balanced("(", ")")
            catch_block = self.parse_block()
            blocks.append(catch_block)
            catches += 1
            end = catch_block.end_line
        if self.at("finally"):
            self.next()
            fin = self.parse_block()
            blocks.append(fin)
            end = fin.end_line
        return Stmt(
            kind="try",
            start_line=start,
            end_line=end,
            cond_tokens=cond,
            blocks=blocks,
            catch_count=catches,
        )

    def try_local_var_decl(self) -> Stmt | None:
        """Attempt ``[final] Type name [= init] (, name...)* ;`` with rollback."""
        saved = self.pos
        start = self.line()
        is_final = False
        if self.at("final"):
            is_final = True
            self.next()
        tok = self.peek()
        if tok is None or tok.kind != "word" or tok.text in KEYWORDS - PRIMITIVE_TYPES:
            self.pos = saved
            return None
        try:
            type_name, dims = self.parse_type()
            name_tok = self.peek()
            follow = self.peek(1)
            if (
                name_tok is None
                or name_tok.kind != "word"
                or name_tok.text in KEYWORDS
                or follow is None
                or follow.text not in ("=", ";", ",", "[")
            ):
                self.pos = saved
                return None
            self.next()
            declarators = self.parse_declarators(name_tok.text)
            end = self.expect(";").line
        except JavaParseError:
            self.pos = saved
            return None
        return Stmt(
            kind="localvar",
            start_line=start,
            end_line=end,
            type_name=type_name,
            dims=dims,
            is_final=is_final,
            declarators=declarators,
        )

    def consume_expression(self, stop_at_comma: bool = False) -> list[Token]:
        """Consume tokens up to a top-level ';' (or ',') with bracket balancing."""
        out: list[Token] = []
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                raise JavaParseError("unterminated expression", self.line())
            if tok.text == "->":
                raise UnsupportedConstructError("lambda expression", tok.line)
            if tok.text == "::":
                raise UnsupportedConstructError("method reference", tok.line)
            if depth == 0 and tok.text == ";":
                return out
            if depth == 0 and stop_at_comma and tok.text == ",":
                return out
            if tok.text in ("(", "[", "{"):
                depth += 1
            elif tok.text in (")", "]", "}"):
                if depth == 0:
                    return out
                depth -= 1
            out.append(self.next())


def _param_count(paren_tokens: list[Token]) -> int:
    """Count parameters inside a consumed '(...)' token run."""
    inner = paren_tokens[1:-1]
    if not inner:
        return 0
    count, depth = 1, 0
    for tok in inner:
        if tok.text in ("(", "[", "{"):
            depth += 1
        elif tok.text in (")", "]", "}"):
            depth -= 1
        elif tok.text == "<":
            depth += 1
        elif tok.text == ">":
            depth -= 1
        elif tok.text == ">>":
            depth -= 2
        elif tok.text == ">>>":
            depth -= 3
        elif tok.text == "," and depth == 0:
            count += 1
    return count


def _for_condition(header: list[Token]) -> tuple[list[Token], bool]:
    """Extract the loop condition from a for header.

    Classic ``for (init; cond; update)`` yields the middle section; an
    enhanced ``for (Type x : iterable)`` yields the iterable expression.
    """
    depth = 0
    semis: list[int] = []
    colon = -1
    for idx, tok in enumerate(header):
        if tok.text in ("(", "[", "{"):
            depth += 1
        elif tok.text in (")", "]", "}"):
            depth -= 1
        elif depth == 0 and tok.text == ";":
            semis.append(idx)
        elif depth == 0 and tok.text == ":" and colon == -1:
            colon = idx
    if semis:
        first = semis[0]
        second = semis[1] if len(semis) > 1 else len(header)
        return header[first + 1 : second], False
    if colon != -1:
        return header[colon + 1 :], True
    return header, False


def parse_source(text: str) -> CompilationUnit:
    """Parse Java source text in the supported subset."""
    return _Parser(tokenize(text)).parse_unit()


def parse_lone_method(text: str) -> MethodDecl:
    """Parse a single method declaration (used for test-case sources)."""
    unit = parse_source("class __Holder {\n" + text + "\n}")
    holder = unit.types[0]
    if len(holder.methods) != 1:
        raise JavaParseError(
            f"expected exactly one method, found {len(holder.methods)}", 1
        )
    return holder.methods[0]


# --------------------------------------------------------------------------
# Token-stream analyses shared by the feature extractor
# --------------------------------------------------------------------------


def classify_expression_statement(tokens: list[Token]) -> str:
    """Map an expression statement onto the statement-type taxonomy."""
    depth = 0
    for tok in tokens:
        if tok.text in ("(", "[", "{"):
            depth += 1
        elif tok.text in (")", "]", "}"):
            depth -= 1
        elif depth == 0 and tok.text in ASSIGN_OPS:
            return ASSIGN_OPS[tok.text]
    if tokens and tokens[0].text in ("++", "--"):
        return "INC" if tokens[0].text == "++" else "DEC"
    if len(tokens) >= 2 and tokens[-1].text in ("++", "--"):
        return "INC" if tokens[-1].text == "++" else "DEC"
    call = _leading_call(tokens)
    if call is not None:
        receiver, name = call
        if receiver == "super" or name == "super":
            return "methodCall-super"
        if receiver == "this" or name == "this":
            return "methodCall-this"
        if name.startswith("get"):
            return "methodCall-get"
        if name.startswith("set"):
            return "methodCall-set"
        return "methodCall"
    return "expression"


def _leading_call(tokens: list[Token]) -> tuple[str, str] | None:
    """Detect a call at the head of an expression statement.

    Returns (receiver, simple name); receiver is '' for unqualified calls.
    """
    if not tokens:
        return None
    idx = 0
    chain: list[str] = []
    while idx < len(tokens):
        tok = tokens[idx]
        if tok.kind != "word":
            return None
        chain.append(tok.text)
        if idx + 1 < len(tokens) and tokens[idx + 1].text == "(":
            receiver = chain[0] if len(chain) > 1 else ""
            return receiver, chain[-1]
        if idx + 1 < len(tokens) and tokens[idx + 1].text == ".":
            idx += 2
            continue
        return None
    return None


_GENERIC_INNER = frozenset([".", ",", "?", "[", "]", "extends", "super", "&"])


_NON_TYPE_KEYWORDS = KEYWORDS - {"extends", "super"} - PRIMITIVE_TYPES
_GENERIC_FOLLOW = frozenset(["(", ")", ".", "["])


def _generic_span(tokens: list[Token], start: int) -> int:
    """If tokens[start] opens a generic argument list, return its end index.

    Only type-ish tokens may appear inside, and in expression streams a
    generic close is followed by '(' (constructor/call), ')' (cast), '.' or
    '['. Anything else means the '<' was a comparison and -1 is returned.
    """
    depth = 0
    for idx in range(start, len(tokens)):
        tok = tokens[idx]
        if tok.text == "<":
            depth += 1
        elif tok.text == ">":
            depth -= 1
        elif tok.text == ">>":
            depth -= 2
        elif tok.text == ">>>":
            depth -= 3
        elif tok.kind != "word" and tok.text not in _GENERIC_INNER:
            return -1
        elif tok.kind == "word" and tok.text in _NON_TYPE_KEYWORDS:
            return -1
        if depth <= 0:
            follow = tokens[idx + 1].text if idx + 1 < len(tokens) else ""
            return idx if follow in _GENERIC_FOLLOW else -1
    return -1


def _mask_generics(tokens: list[Token]) -> list[bool]:
    """Flag tokens that belong to generic argument lists."""
    masked = [False] * len(tokens)
    idx = 0
    while idx < len(tokens):
        if tokens[idx].text == "<":
            end = _generic_span(tokens, idx)
            if end != -1:
                for k in range(idx, end + 1):
                    masked[k] = True
                idx = end + 1
                continue
        idx += 1
    return masked


def find_call_sites(tokens: list[Token]) -> list[tuple[str, int]]:
    """All (simple name, arity) call sites in a token stream.

    Constructor invocations (``new Foo(...)``) and the delegation forms
    ``this(...)``/``super(...)`` are not method calls and are skipped.
    """
    sites = []
    masked = _mask_generics(tokens)
    for idx, tok in enumerate(tokens):
        if tok.kind != "word" or tok.text in KEYWORDS:
            continue
        if idx + 1 >= len(tokens) or tokens[idx + 1].text != "(":
            continue
        if idx > 0 and tokens[idx - 1].text == "new":
            continue
        arity = _arity_at(tokens, idx + 1, masked)
        sites.append((tok.text, arity))
    return sites


def _arity_at(tokens: list[Token], open_idx: int, masked: list[bool]) -> int:
    depth = 0
    count = 0
    empty = True
    for pos in range(open_idx, len(tokens)):
        tok = tokens[pos]
        if tok.text == "(":
            depth += 1
            if depth == 1:
                continue
        elif tok.text == ")":
            depth -= 1
            if depth == 0:
                break
        if depth >= 1:
            empty = False
            if depth == 1 and tok.text == "," and not masked[pos]:
                count += 1
    return 0 if empty else count + 1


def decision_points(tokens: list[Token]) -> int:
    """Count short-circuit and ternary operators in a token stream.

    Tokens inside generic argument lists (including '?' wildcards) are not
    decision points.
    """
    masked = _mask_generics(tokens)
    points = 0
    for idx, tok in enumerate(tokens):
        if masked[idx]:
            continue
        if tok.text in ("&&", "||") or tok.text == "?":
            points += 1
    return points


def identifiers(tokens: list[Token]) -> list[str]:
    """Identifier tokens that are not keywords and not call names."""
    out = []
    for idx, tok in enumerate(tokens):
        if tok.kind != "word" or tok.text in KEYWORDS:
            continue
        if idx + 1 < len(tokens) and tokens[idx + 1].text == "(":
            continue
        out.append(tok.text)
    return out
