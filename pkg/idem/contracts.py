"""
The contracts module parses and canonically renders the contract language and trust ladder definitions.

Contract grammar (EBNF), tokens separated by whitespace::

    contract   = capability comparator threshold [ "over" duration ] [ "max-episode" duration ] [ "per-group" ] ;
    comparator = ">=" | ">" | "<=" | "<" ;
    threshold  = [ "-" ] digit { digit } [ "." digit { digit } ] ;   (* at most 9 fractional digits *)
    duration   = digit { digit } ( "ms" | "s" | "m" | "h" | "d" ) ;
    capability = lower { lower | digit | "_" } ;

Ladder grammar, one rule per line, ``#`` comment lines and blank lines ignored::

    ladder     = { rule } default ;
    rule       = "level" number "when" condition { "," condition } ;
    condition  = capability "in" "[" number "," ( number | "inf" ) ")" ;
    default    = "default" number ;

The words ``over``, ``max-episode``, ``per-group``, ``level``, ``when``, ``in``, ``default`` and ``inf`` are reserved.
"""

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, List, Optional, Union

from idem.exceptions import MissingDefault, ParseError
from idem.model import (
    DURATION_UNITS,
    Comparator,
    ContractSpec,
    LadderCondition,
    LadderRule,
    TrustLadder,
    TrustProfile,
    is_identifier,
    to_decimal,
)

MAX_FRACTIONAL_DIGITS = 9

KEYWORDS = frozenset({"over", "max-episode", "per-group", "level", "when", "in", "default", "inf"})
COMPARATORS = frozenset(comparator.value for comparator in Comparator)
PUNCTUATION = frozenset("[](),")

CHUNK = re.compile(r"[\[\](),]|[^\s\[\](),]+")
NUMBER = re.compile(r"-?[0-9]+(?:\.([0-9]+))?")
DURATION = re.compile(r"([0-9]+)(ms|s|m|h|d)")
UNIT_TICKS = dict(DURATION_UNITS)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int

    @classmethod
    def classify(cls, text: str, position: int) -> "Token":
        if text in PUNCTUATION:
            return cls("PUNCTUATION", text, position)
        if text in KEYWORDS:
            return cls("KEYWORD", text, position)
        if text in COMPARATORS:
            return cls("COMPARATOR", text, position)
        if is_identifier(text):
            return cls("IDENTIFIER", text, position)
        if NUMBER.fullmatch(text):
            return cls("NUMBER", text, position)
        if DURATION.fullmatch(text):
            return cls("DURATION", text, position)

        return cls("UNKNOWN", text, position)


def decimal_literal(text: str) -> Decimal:
    """A number written as in the grammar: no exponent, at most 9 fractional digits."""

    match = NUMBER.fullmatch(text)
    if match is None or len(match.group(1) or "") > MAX_FRACTIONAL_DIGITS:
        raise ValueError(f"'{text}' is not a decimal with at most {MAX_FRACTIONAL_DIGITS} fractional digits")

    return to_decimal(text)


def _tokenize(text: str, offset: int = 0) -> List[Token]:
    return [Token.classify(match.group(), offset + match.start()) for match in CHUNK.finditer(text)]


def _decode(src: Union[str, bytes]) -> str:
    if isinstance(src, str):
        return src

    try:
        return bytes(src).decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(e.start, "UTF-8 text", repr(bytes(src)[e.start : e.start + 1])) from e


class _Parser:
    def __init__(self, source: str, tokens: List[Token], end: int):
        self.source = source
        self.tokens = tokens
        self.end = end
        self.index = 0

    @property
    def nt(self) -> Optional[Token]:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1

        return token

    def peek(self, kind: str, text: Optional[str] = None) -> bool:
        return self.nt is not None and self.nt.kind == kind and (text is None or self.nt.text == text)

    def peek_kw(self, value: str) -> bool:
        return self.peek("KEYWORD", value)

    def match(self, kind: str, expected: str, text: Optional[str] = None) -> Token:
        if not self.peek(kind, text):
            raise self.error(expected)

        return self.advance()

    def match_kw(self, value: str) -> Token:
        return self.match("KEYWORD", f"'{value}'", value)

    def match_punctuation(self, value: str) -> Token:
        return self.match("PUNCTUATION", f"'{value}'", value)

    def match_eof(self) -> None:
        if self.nt is not None:
            raise self.error("end of input")

    def error(self, expected: str, token: Optional[Token] = None) -> ParseError:
        token = token or self.nt
        position = self.end if token is None else token.position
        found = "end of input" if token is None else f"'{token.text}'"

        return ParseError(len(self.source[:position].encode("utf-8", "surrogatepass")), expected, found)

    def parse_decimal(self, expected: str) -> Decimal:
        token = self.match("NUMBER", expected)
        fraction = NUMBER.fullmatch(token.text).group(1)

        if fraction is not None and len(fraction) > MAX_FRACTIONAL_DIGITS:
            raise self.error(f"{expected} with at most {MAX_FRACTIONAL_DIGITS} fractional digits", token)

        return to_decimal(token.text)

    def parse_duration(self) -> int:
        token = self.match("DURATION", "duration (e.g. 30d, 10m, 500ms)")
        amount, unit = DURATION.fullmatch(token.text).groups()

        if int(amount) == 0:
            raise self.error("positive duration", token)

        return int(amount) * UNIT_TICKS[unit]

    def parse_contract(self) -> ContractSpec:
        capability = self.match("IDENTIFIER", "capability").text
        comparator = Comparator(self.match("COMPARATOR", "comparator (>=, >, <=, <)").text)
        threshold = self.parse_decimal("threshold")
        window = max_episode = None

        if self.peek_kw("over"):
            self.advance()
            window = self.parse_duration()

        if self.peek_kw("max-episode"):
            if window is None:
                raise self.error("'over' clause before 'max-episode'")

            self.advance()
            max_episode = self.parse_duration()

        per_group = self.peek_kw("per-group")
        if per_group:
            self.advance()

        return ContractSpec(capability, comparator, threshold, window, max_episode, per_group)

    def parse_rule(self) -> LadderRule:
        self.match_kw("level")
        level_token = self.nt
        level = self.parse_decimal("level")

        if level < 0:
            raise self.error("non-negative level", level_token)

        self.match_kw("when")
        conditions = [self.parse_condition()]

        while self.peek("PUNCTUATION", ","):
            self.advance()
            conditions.append(self.parse_condition())

        return LadderRule(tuple(conditions), level)

    def parse_condition(self) -> LadderCondition:
        capability = self.match("IDENTIFIER", "capability").text
        self.match_kw("in")
        self.match_punctuation("[")
        lower = self.parse_decimal("lower bound")
        self.match_punctuation(",")

        upper_token = self.nt
        if self.peek_kw("inf"):
            self.advance()
            upper = None
        else:
            upper = self.parse_decimal("upper bound or 'inf'")

            if upper <= lower:
                raise self.error("upper bound above lower bound", upper_token)

        self.match_punctuation(")")

        return LadderCondition(capability, lower, upper)


def parse_contract(src: Union[str, bytes]) -> ContractSpec:
    """
    >>> parse_contract("uptime >= 0.999 over 30d max-episode 10m").render()
    'uptime >= 0.999 over 30d max-episode 10m'
    """

    text = _decode(src)
    parser = _Parser(text, _tokenize(text), len(text))
    contract = parser.parse_contract()
    parser.match_eof()

    return contract


def render_contract(c: ContractSpec) -> str:
    return c.render()


def parse_profile(sources: Iterable[Union[str, bytes]]) -> TrustProfile:
    return TrustProfile(frozenset(parse_contract(source) for source in sources))


def parse_ladder(src: Union[str, bytes]) -> TrustLadder:
    text = _decode(src)
    rules: List[LadderRule] = []
    default: Optional[Decimal] = None
    start = 0

    for line in text.split("\n"):
        end = start + len(line)
        parser = _Parser(text, _tokenize(line, start), end)
        start = end + 1

        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue

        if default is not None:
            raise parser.error("end of input after the 'default' line")

        if parser.peek_kw("default"):
            parser.advance()
            level_token = parser.nt
            default = parser.parse_decimal("default level")

            if default < 0:
                raise parser.error("non-negative level", level_token)
        else:
            rules.append(parser.parse_rule())

        parser.match_eof()

    if default is None:
        raise MissingDefault(len(text.encode("utf-8", "surrogatepass")))

    return TrustLadder(tuple(rules), default)


def render_ladder(ladder: TrustLadder) -> str:
    return ladder.render()
