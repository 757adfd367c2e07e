"""OpenQASM 2.0 frontend: lexer, recursive-descent parser and lowering.

Supported: the version header, ``include "qelib1.inc"`` (served from a
builtin table), qreg/creg, the qelib1 gates plus ``U``/``CX``, user gate
macros, measure, barrier and ``//`` comments. ``if``, ``opaque`` and
``reset`` are rejected with :class:`QasmUnsupportedError`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .circuit import Circuit, MonolithicGate
from .qstate import GateSpec


class QasmError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        self.message = message
        super().__init__(f"line {line} col {col}: {message}" if line else message)


class QasmSyntaxError(QasmError):
    pass


class QasmUnsupportedError(QasmError):
    pass


class QasmSemanticError(QasmError):
    pass


class MacroCycleError(QasmError):
    pass


# ---------------------------------------------------------------------------
# lexer


@dataclass(frozen=True)
class Token:
    kind: str  # ID, REAL, INT, STRING, SYM, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<REAL>(?:\d+\.\d*|\.\d+)(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+)
  | (?P<INT>\d+)
  | (?P<ID>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<STRING>"[^"\n]*")
  | (?P<SYM>->|==|[;,()\[\]{}+\-*/^])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise QasmSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# AST

# expressions: float | ("id", name) | ("neg", e) | (op, a, b) | ("call", fn, e)
Expr = Union[float, tuple]


@dataclass(frozen=True)
class Arg:
    reg: str
    index: Optional[int]  # None: whole register (broadcast)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass
class Statement:
    kind: str  # "gate", "measure", "barrier"
    name: str
    params: list[Expr]
    args: list[Arg]
    line: int
    col: int


@dataclass
class GateDef:
    name: str
    params: list[str]
    qargs: list[str]
    body: list[Statement]
    line: int


@dataclass
class QasmProgram:
    qregs: dict[str, int] = field(default_factory=dict)
    cregs: dict[str, int] = field(default_factory=dict)
    statements: list[Statement] = field(default_factory=list)
    gates: dict[str, GateDef] = field(default_factory=dict)
    includes: list[str] = field(default_factory=list)


# native gate name -> (GateSpec name, n params, n qubits, param map)
_HALF_PI = math.pi / 2
NATIVE: dict[str, tuple] = {
    "U": ("U", 3, 1, None),
    "CX": ("CNOT", 0, 2, None),
    "u3": ("U", 3, 1, None),
    "u2": ("U", 2, 1, lambda phi, lam: (_HALF_PI, phi, lam)),
    "u1": ("U", 1, 1, lambda lam: (0.0, 0.0, lam)),
    "id": ("U", 0, 1, lambda: (0.0, 0.0, 0.0)),
    "x": ("X", 0, 1, None),
    "y": ("Y", 0, 1, None),
    "z": ("Z", 0, 1, None),
    "h": ("H", 0, 1, None),
    "s": ("S", 0, 1, None),
    "sdg": ("U", 0, 1, lambda: (0.0, 0.0, -_HALF_PI)),
    "t": ("T", 0, 1, None),
    "tdg": ("U", 0, 1, lambda: (0.0, 0.0, -math.pi / 4)),
    "rx": ("RX", 1, 1, None),
    "ry": ("RY", 1, 1, None),
    "rz": ("RZ", 1, 1, None),
    "cx": ("CNOT", 0, 2, None),
    "cz": ("CZ", 0, 2, None),
    "swap": ("SWAP", 0, 2, None),
}

# qelib1 gates without a native counterpart, expanded from their standard
# definitions
QELIB1_EXTRA = """
gate cy a,b { sdg b; cx a,b; s b; }
gate ch a,b { h b; sdg b; cx a,b; h b; t b; cx a,b; t b; h b; s b; x b; s a; }
gate ccx a,b,c
{
  h c; cx b,c; tdg c; cx a,c; t c; cx b,c; tdg c; cx a,c;
  t b; t c; h c; cx a,b; t a; tdg b; cx a,b;
}
gate crz(lambda) a,b { u1(lambda/2) b; cx a,b; u1(-lambda/2) b; cx a,b; }
gate cu1(lambda) a,b { u1(lambda/2) a; cx a,b; u1(-lambda/2) b; cx a,b; u1(lambda/2) b; }
gate cu3(theta,phi,lambda) c,t
{
  u1((lambda+phi)/2) c; u1((lambda-phi)/2) t; cx c,t;
  u3(-theta/2,0,-(phi+lambda)/2) t; cx c,t; u3(theta/2,phi,0) t;
}
gate cswap a,b,c { cx c,b; ccx a,b,c; cx c,b; }
gate rzz(theta) a,b { cx a,b; u1(theta) b; cx a,b; }
gate rxx(theta) a,b
{
  u3(pi/2,theta,0) a; h b; cx a,b; u1(-theta) b;
  cx a,b; h b; u2(-pi,pi-theta) a;
}
gate sx a { sdg a; h a; sdg a; }
gate sxdg a { s a; h a; s a; }
"""

_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
}


class _Parser:
    def __init__(self, source: str, prog: Optional[QasmProgram] = None, builtin: bool = False):
        self.toks = tokenize(source)
        self.i = 0
        self.prog = prog or QasmProgram()
        self.builtin = builtin

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Optional[Token] = None) -> QasmSyntaxError:
        tok = tok or self.tok
        shown = tok.text if tok.kind != "EOF" else "end of file"
        return QasmSyntaxError(f"{msg}, got {shown!r}", tok.line, tok.col)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            raise self.error(f"expected {text or kind}")
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.tok.kind == "SYM" and self.tok.text == text:
            self.i += 1
            return True
        return False

    # -- program -------------------------------------------------------------

    def parse(self) -> QasmProgram:
        if self.tok.kind == "ID" and self.tok.text == "OPENQASM":
            self.advance()
            v = self.advance()
            if v.kind not in ("REAL", "INT") or float(v.text) != 2.0:
                raise QasmUnsupportedError(f"OpenQASM version {v.text} (only 2.0)", v.line, v.col)
            self.expect("SYM", ";")
        while self.tok.kind != "EOF":
            self.statement()
        return self.prog

    def statement(self) -> None:
        t = self.tok
        if t.kind != "ID":
            raise self.error("expected a statement")
        kw = t.text
        if kw == "OPENQASM":
            raise self.error("version header must come first")
        if kw == "include":
            self.advance()
            s = self.expect("STRING")
            name = s.text[1:-1]
            if name != "qelib1.inc":
                raise QasmUnsupportedError(f"include of {name!r} (only qelib1.inc)", s.line, s.col)
            self.expect("SYM", ";")
            self.prog.includes.append(name)
        elif kw in ("qreg", "creg"):
            self.advance()
            name = self.expect("ID")
            self.expect("SYM", "[")
            size = self.expect("INT")
            self.expect("SYM", "]")
            self.expect("SYM", ";")
            if name.text in self.prog.qregs or name.text in self.prog.cregs:
                raise QasmSemanticError(f"register {name.text!r} redeclared", name.line, name.col)
            if int(size.text) < 1:
                raise QasmSemanticError(f"register {name.text!r} has size 0", size.line, size.col)
            (self.prog.qregs if kw == "qreg" else self.prog.cregs)[name.text] = int(size.text)
        elif kw == "gate":
            self.gate_decl()
        elif kw in ("opaque", "if", "reset"):
            raise QasmUnsupportedError(f"unsupported construct {kw!r}", t.line, t.col)
        elif kw == "measure":
            self.advance()
            q = self.arg()
            self.expect("SYM", "->")
            c = self.arg()
            self.expect("SYM", ";")
            self.check_arg(q, self.prog.qregs, "quantum")
            self.check_arg(c, self.prog.cregs, "classical")
            self.check_broadcast([q, c], t)
            self.prog.statements.append(Statement("measure", "measure", [], [q, c], t.line, t.col))
        elif kw == "barrier":
            self.advance()
            args = self.arglist()
            self.expect("SYM", ";")
            for a in args:
                self.check_arg(a, self.prog.qregs, "quantum")
            self.prog.statements.append(Statement("barrier", "barrier", [], args, t.line, t.col))
        else:
            st = self.gate_call()
            self.check_call(st)
            for a in st.args:
                self.check_arg(a, self.prog.qregs, "quantum")
            self.check_broadcast(st.args, t)
            self.prog.statements.append(st)

    def gate_decl(self) -> None:
        start = self.advance()
        name = self.expect("ID")
        if name.text in self.prog.gates or (name.text in NATIVE and not self.builtin):
            raise QasmSemanticError(f"gate {name.text!r} redefined", name.line, name.col)
        params: list[str] = []
        if self.accept("("):
            if not self.accept(")"):
                params = [self.expect("ID").text]
                while self.accept(","):
                    params.append(self.expect("ID").text)
                self.expect("SYM", ")")
        qargs = [self.expect("ID").text]
        while self.accept(","):
            qargs.append(self.expect("ID").text)
        self.expect("SYM", "{")
        body: list[Statement] = []
        while not self.accept("}"):
            t = self.tok
            if t.kind == "EOF":
                raise self.error("unterminated gate body")
            if t.kind == "ID" and t.text == "barrier":
                self.advance()
                args = self.arglist()
                self.expect("SYM", ";")
                body.append(Statement("barrier", "barrier", [], args, t.line, t.col))
                continue
            if t.kind == "ID" and t.text in ("measure", "reset", "if", "opaque", "gate"):
                raise QasmUnsupportedError(f"{t.text!r} inside a gate body", t.line, t.col)
            st = self.gate_call()
            for a in st.args:
                if a.index is not None or a.reg not in qargs:
                    raise QasmSemanticError(
                        f"gate body may only use its qubit arguments, got {a.reg!r}", a.line, a.col
                    )
            body.append(st)
        self.prog.gates[name.text] = GateDef(name.text, params, qargs, body, start.line)

    def gate_call(self) -> Statement:
        t = self.expect("ID")
        params: list[Expr] = []
        if self.accept("("):
            if not self.accept(")"):
                params = [self.expr()]
                while self.accept(","):
                    params.append(self.expr())
                self.expect("SYM", ")")
        args = self.arglist()
        self.expect("SYM", ";")
        return Statement("gate", t.text, params, args, t.line, t.col)

    def arglist(self) -> list[Arg]:
        args = [self.arg()]
        while self.accept(","):
            args.append(self.arg())
        return args

    def arg(self) -> Arg:
        t = self.expect("ID")
        idx = None
        if self.accept("["):
            idx = int(self.expect("INT").text)
            self.expect("SYM", "]")
        return Arg(t.text, idx, t.line, t.col)

    # -- checks --------------------------------------------------------------

    def check_arg(self, a: Arg, regs: dict[str, int], kind: str) -> None:
        if a.reg not in regs:
            raise QasmSemanticError(f"undeclared {kind} register {a.reg!r}", a.line, a.col)
        if a.index is not None and not 0 <= a.index < regs[a.reg]:
            raise QasmSemanticError(
                f"index {a.index} out of range for {a.reg}[{regs[a.reg]}]", a.line, a.col
            )

    def check_call(self, st: Statement) -> None:
        if st.name in NATIVE:
            _, npar, nq, _ = NATIVE[st.name]
        elif st.name in self.prog.gates:
            g = self.prog.gates[st.name]
            npar, nq = len(g.params), len(g.qargs)
        else:
            raise QasmSemanticError(f"unknown gate {st.name!r}", st.line, st.col)
        if len(st.params) != npar or len(st.args) != nq:
            raise QasmSemanticError(
                f"gate {st.name!r} takes {npar} parameter(s) and {nq} qubit(s), "
                f"got {len(st.params)} and {len(st.args)}",
                st.line,
                st.col,
            )
        if len({(a.reg, a.index) for a in st.args}) != len(st.args):
            raise QasmSemanticError(f"repeated qubit argument to {st.name!r}", st.line, st.col)

    def check_broadcast(self, args: list[Arg], t: Token) -> None:
        regs = {**self.prog.qregs, **self.prog.cregs}
        sizes = {regs[a.reg] for a in args if a.index is None}
        if len(sizes) > 1:
            raise QasmSemanticError("broadcast over registers of different sizes", t.line, t.col)

    # -- expressions -----------------------------------------------------------

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.kind == "SYM" and self.tok.text in "+-":
            op = self.advance().text
            left = (op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "SYM" and self.tok.text in "*/":
            op = self.advance().text
            left = (op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.accept("-"):
            return ("neg", self.unary())
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            return ("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind in ("REAL", "INT"):
            self.advance()
            return float(t.text)
        if t.kind == "ID":
            self.advance()
            if t.text == "pi":
                return math.pi
            if t.text in _FUNCS:
                self.expect("SYM", "(")
                e = self.expr()
                self.expect("SYM", ")")
                return ("call", t.text, e)
            return ("id", t.text, t.line, t.col)
        if self.accept("("):
            e = self.expr()
            self.expect("SYM", ")")
            return e
        raise self.error("expected an expression")


def _load_builtins() -> dict[str, GateDef]:
    p = _Parser(QELIB1_EXTRA, builtin=True)
    while p.tok.kind != "EOF":
        p.gate_decl()
    return p.prog.gates


_BUILTIN_MACROS = _load_builtins()


def parse_qasm(source: str) -> QasmProgram:
    """Parse OpenQASM 2.0 source into a :class:`QasmProgram`."""
    prog = QasmProgram()
    prog.gates.update(_BUILTIN_MACROS)
    return _Parser(source, prog).parse()


# ---------------------------------------------------------------------------
# lowering


def evaluate(e: Expr, env: dict[str, float]) -> float:
    if isinstance(e, float):
        return e
    kind = e[0]
    if kind == "id":
        if e[1] not in env:
            raise QasmUnsupportedError(f"non-constant parameter {e[1]!r}", e[2], e[3])
        return env[e[1]]
    if kind == "neg":
        return -evaluate(e[1], env)
    if kind == "call":
        return _FUNCS[e[1]](evaluate(e[2], env))
    a, b = evaluate(e[1], env), evaluate(e[2], env)
    if kind == "+":
        return a + b
    if kind == "-":
        return a - b
    if kind == "*":
        return a * b
    if kind == "/":
        return a / b
    return a**b


def _expand(
    prog: QasmProgram,
    name: str,
    params: list[float],
    qubits: list[int],
    out: list[MonolithicGate],
    stack: tuple[str, ...],
    line: int,
    col: int,
) -> None:
    if name in NATIVE:
        spec_name, _, _, pmap = NATIVE[name]
        vals = tuple(pmap(*params)) if pmap else tuple(params)
        out.append(MonolithicGate(GateSpec(spec_name, vals), tuple(qubits)))
        return
    if name not in prog.gates:
        raise QasmSemanticError(f"unknown gate {name!r}", line, col)
    if name in stack:
        raise MacroCycleError(f"recursive gate definition {' -> '.join(stack + (name,))}", line, col)
    g = prog.gates[name]
    env = dict(zip(g.params, params))
    qenv = dict(zip(g.qargs, qubits))
    for st in g.body:
        if st.kind == "barrier":
            continue
        sub_params = [evaluate(p, env) for p in st.params]
        _expand(prog, st.name, sub_params, [qenv[a.reg] for a in st.args], out, stack + (name,), st.line, st.col)


def lower_to_circuit(prog: QasmProgram) -> Circuit:
    """Flatten registers, inline macros and broadcast statements."""
    qoff, n = {}, 0
    for name, size in prog.qregs.items():
        qoff[name] = n
        n += size
    coff, nc = {}, 0
    for name, size in prog.cregs.items():
        coff[name] = nc
        nc += size
    circ = Circuit([], n, nc)

    def expand_args(args: list[Arg], offs_list: list[dict[str, int]]) -> list[list[int]]:
        regs = {**prog.qregs, **prog.cregs}
        width = max((regs[a.reg] for a in args if a.index is None), default=1)
        rows = []
        for k in range(width):
            rows.append(
                [offs[a.reg] + (a.index if a.index is not None else k) for a, offs in zip(args, offs_list)]
            )
        return rows

    for st in prog.statements:
        if st.kind == "barrier":
            circ.annotations.append(f"barrier dropped (line {st.line})")
        elif st.kind == "measure":
            for q, c in expand_args(st.args, [qoff, coff]):
                circ.gates.append(MonolithicGate(GateSpec("MEASURE"), (q,), c))
        else:
            params = [evaluate(p, {}) for p in st.params]
            for qs in expand_args(st.args, [qoff] * len(st.args)):
                _expand(prog, st.name, params, qs, circ.gates, (), st.line, st.col)
    return circ


def load_qasm(source: str) -> Circuit:
    return lower_to_circuit(parse_qasm(source))


_UNPARSE = {
    "H": "h",
    "X": "x",
    "Y": "y",
    "Z": "z",
    "S": "s",
    "T": "t",
    "RX": "rx",
    "RY": "ry",
    "RZ": "rz",
    "U": "u3",
    "CNOT": "cx",
    "CZ": "cz",
    "SWAP": "swap",
}


def unparse(circ: Circuit) -> str:
    """Emit OpenQASM 2.0 for a monolithic circuit (single q/c registers)."""
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";']
    if circ.num_qubits:
        lines.append(f"qreg q[{circ.num_qubits}];")
    if circ.num_clbits:
        lines.append(f"creg c[{circ.num_clbits}];")
    for g in circ.gates:
        if g.gate.name == "MEASURE":
            lines.append(f"measure q[{g.qubits[0]}] -> c[{g.cbit}];")
            continue
        if g.gate.name == "INIT":
            raise ValueError("INIT has no OpenQASM 2.0 form")
        name = _UNPARSE[g.gate.name]
        if g.gate.params:
            name += "(" + ",".join(repr(p) for p in g.gate.params) + ")"
        lines.append(f"{name} " + ",".join(f"q[{q}]" for q in g.qubits) + ";")
    return "\n".join(lines) + "\n"


def format_circuit(circ: Circuit) -> str:
    """One gate per line, e.g. ``CNOT 0 1`` or ``MEASURE 2 -> c0``."""
    out = []
    for g in circ.gates:
        line = f"{g.gate} " + " ".join(str(q) for q in g.qubits)
        if g.cbit is not None:
            line += f" -> c{g.cbit}"
        out.append(line)
    return "\n".join(out) + ("\n" if out else "")
