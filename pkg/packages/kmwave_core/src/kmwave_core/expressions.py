from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import sympy

from lark import Lark, Token, Transformer, UnexpectedInput
from lark.exceptions import VisitError


FUNCTIONS = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tan": sympy.tan,
    "exp": sympy.exp,
    "log": sympy.log,
    "sqrt": sympy.sqrt,
    "sinh": sympy.sinh,
    "cosh": sympy.cosh,
    "tanh": sympy.tanh,
    "atan": sympy.atan,
}

CONSTANTS = {"pi": sympy.pi, "e": sympy.E}


class ParsingError(Exception):
    """
    Exception raised for syntax errors in expressions.

    Attributes:
        msg: The error message describing the parsing issue.
        context: A snippet of the expression showing the error in context.
    """

    def __init__(self, msg: str, context: str = "") -> None:
        super().__init__()
        self.msg = msg
        self.context = context

    def __str__(self) -> str:
        message = "Expression syntax error.\n\n"
        message += "\n".join([f"\t{line}" for line in self.context.split("\n")])
        message += f"\n{self.msg}"
        return message


class SemanticError(Exception):
    """
    Exception raised when a well-formed expression references something unknown.

    Attributes:
        msg: The error message.
        expr: The expression where the error occurred.
        pos: The zero-based position of the offending token, -1 when unknown.
        context: The expression line with a caret under the offending token.
    """

    def __init__(self, msg: str, expr: str, column: Optional[int] = None) -> None:
        super().__init__()
        self.msg = msg
        self.expr = expr
        self.pos = column - 1 if column is not None else -1
        self.context = self.get_context(80)

    def get_context(self, span: int) -> str:
        start = max(self.pos - span, 0)
        end = self.pos + span
        before = self.expr[start : self.pos].rsplit("\n", 1)[-1]
        after = self.expr[self.pos : end].split("\n", 1)[0]
        return f"\n\t{before}{after}\n\t" + len(before.expandtabs()) * " " + "^\n\n"

    def __str__(self) -> str:
        return "Invalid expression.\n" + self.context + self.msg


@lru_cache(maxsize=1)
def _parser() -> Lark:
    grammar = (Path(__file__).parent / "expression_grammar.lark").read_text()
    return Lark(grammar, start="start", parser="earley")


class ExpressionParser:
    """
    Parses arithmetic expressions over a fixed set of variables into sympy expressions.

    Attributes:
        symbols: Mapping from variable name to the real sympy symbol used for it.

    Example:
        >>> ExpressionParser(["q", "p"]).parse("0.5*(q^2 + p^2)")
        0.5*p**2 + 0.5*q**2
    """

    def __init__(self, variables: Iterable[str]) -> None:
        self.symbols: Dict[str, sympy.Symbol] = {
            name: sympy.Symbol(name, real=True) for name in variables
        }
        clashes = set(self.symbols) & (set(FUNCTIONS) | set(CONSTANTS))
        if clashes:
            raise ValueError(f"Variable names shadow builtins: {sorted(clashes)}.")

    def parse(self, expression: str) -> sympy.Expr:
        if not expression or not expression.strip():
            raise ParsingError(msg="Empty expression.")
        try:
            tree = _parser().parse(expression)
        except UnexpectedInput as error:
            label = error.match_examples(
                parse_fn=_parser().parse,
                examples={
                    "Invalid character.": ["#", "q $ p"],
                    "Missing operand.": ["q +", "* q", "q * / p"],
                    "Missing operator between operands.": ["q p", "2 q"],
                    "Unbalanced parentheses.": ["(q", "q)", "sin(q"],
                },
            )
            if label is None:
                label = "The text is not a valid expression."
            raise ParsingError(msg=label, context=error.get_context(expression))
        try:
            return ExpressionTransformer(self.symbols, expression).transform(tree)
        except VisitError as error:
            if isinstance(error.orig_exc, SemanticError):
                raise error.orig_exc
            raise


class ExpressionTransformer(Transformer):
    """Builds a sympy expression bottom-up from a parse tree."""

    def __init__(self, symbols: Dict[str, sympy.Symbol], expr: str) -> None:
        super().__init__(visit_tokens=True)
        self._symbols = symbols
        self._expr = expr

    def number(self, args: List[Token]) -> sympy.Expr:
        text = str(args[0])
        if text.isdigit():
            return sympy.Integer(text)
        return sympy.Float(text)

    def name(self, args: List[Token]) -> sympy.Expr:
        token = args[0]
        if token.value in self._symbols:
            return self._symbols[token.value]
        if token.value in CONSTANTS:
            return CONSTANTS[token.value]
        known = ", ".join(sorted(self._symbols)) or "none"
        raise SemanticError(
            msg=f"Unknown identifier '{token.value}'. Known variables: {known}.",
            expr=self._expr,
            column=token.column,
        )

    def call(self, args: list) -> sympy.Expr:
        token, argument = args
        func = FUNCTIONS.get(token.value)
        if func is None:
            raise SemanticError(
                msg=f"Unknown function '{token.value}'. Known functions: {', '.join(FUNCTIONS)}.",
                expr=self._expr,
                column=token.column,
            )
        return func(argument)

    def add(self, args: list) -> sympy.Expr:
        return args[0] + args[1]

    def sub(self, args: list) -> sympy.Expr:
        return args[0] - args[1]

    def mul(self, args: list) -> sympy.Expr:
        return args[0] * args[1]

    def div(self, args: list) -> sympy.Expr:
        return args[0] / args[1]

    def neg(self, args: list) -> sympy.Expr:
        return -args[0]

    def pow(self, args: list) -> sympy.Expr:
        return args[0] ** args[2]
