"""
Exception hierarchy shared by every stage of the toolchain.

Stages raise these; the step drivers and the CLI catch ``MlcError`` and
render ``str(err)``, which includes the source location and the rule name
when the raising site knows them.
"""

from typing import Iterable, Optional, Tuple

Location = Tuple[int, int]


class MlcError(Exception):
    """Base class for all toolchain errors."""

    def __init__(self, message: str, location: Optional[Location] = None, rule: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.location = location
        self.rule = rule

    def __str__(self):
        prefix = ""
        if self.location is not None:
            prefix = f"{self.location[0]}:{self.location[1]}: "
        suffix = f" [rule: {self.rule}]" if self.rule else ""
        return f"{prefix}{self.message}{suffix}"


# --- numeric-core ---

class ArithmeticFault(MlcError):
    pass


class Overflow(ArithmeticFault):
    pass


class DivisionByZero(ArithmeticFault):
    pass


class KindMismatch(ArithmeticFault):
    pass


class OutOfRange(ArithmeticFault):
    pass


# --- chain-model ---

class SpecViolation(MlcError):
    pass


class GuardFailed(MlcError):
    def __init__(self, flag_name: str):
        super().__init__(f"guard '{flag_name}' is false")
        self.flag_name = flag_name


class UnknownFlag(MlcError):
    pass


# --- orderbook-trading ---

class PreconditionViolation(MlcError):
    pass


class OrderBookError(MlcError):
    pass


# --- mlc-frontend ---

class LexError(MlcError):
    pass


class ParseError(MlcError):
    def __init__(self, message: str, location: Optional[Location] = None,
                 expected: Iterable[str] = (), rule: Optional[str] = None):
        self.expected = sorted(set(expected))
        if self.expected:
            message = f"{message} (expected one of: {', '.join(self.expected)})"
        super().__init__(message, location, rule)


class CheckError(MlcError):
    pass


class MlcTypeError(CheckError):
    pass


class RaiseDisciplineError(CheckError):
    pass


class GlobalShapeError(CheckError):
    pass


class StepLimit(MlcError):
    """The reference interpreter ran past its evaluation budget."""


# --- evm-backend ---

class UnsupportedConstruct(MlcError):
    pass


class TruncatedPush(MlcError):
    pass


# --- gas-analyzer ---

class DynamicJump(MlcError):
    pass


class PathExplosion(MlcError):
    pass


class NonAffine(MlcError):
    pass


# --- evm-interpreter ---

class MachineFault(MlcError):
    """Aborts a transaction; folded into TxResult by exec_tx, never raised past it."""


class StackUnderflow(MachineFault):
    pass


class StackOverflow(MachineFault):
    pass


class InvalidJump(MachineFault):
    pass


class InvalidOpcode(MachineFault):
    pass


class OutOfGas(MachineFault):
    pass


# --- bemp-corpus ---

class ScenarioError(MlcError):
    pass


class StepMismatch(MlcError):
    def __init__(self, index: int, expected: str, got: str):
        super().__init__(f"step {index}: expected {expected}, got {got}")
        self.index = index
        self.expected = expected
        self.got = got
