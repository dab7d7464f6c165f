"""Exception types shared across the package."""


class PlacementError(Exception):
    """Base class for every error this package raises on purpose."""


class ParseError(PlacementError):
    """Malformed input text. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownBlockType(ParseError):
    pass


class DuplicateName(ParseError):
    pass


class DanglingPin(ParseError):
    """A net references a block name that was never declared."""


class NetWithoutSource(ParseError):
    pass


class NetWithoutSink(ParseError):
    pass


class DimensionMismatch(ParseError):
    """Grid payload does not match the declared width and height."""


class UnknownTileType(ParseError):
    pass


class NegativeCapacity(ParseError):
    pass


class UnknownBlock(PlacementError):
    """A block id or name outside the netlist."""


class InfeasibleParams(PlacementError):
    """Generator parameters that cannot yield a valid netlist."""


class IllegalPosition(PlacementError):
    """Placement at a cell that is out of bounds, wrongly typed, or full."""


class AlreadyPlaced(PlacementError):
    pass


class NotPlaced(PlacementError):
    pass


class UnplacedBlock(PlacementError):
    """An operation that needs a complete placement found a hole."""


class NoLegalAction(PlacementError):
    """The legality mask for the current block is empty."""


class ShapeMismatch(PlacementError):
    """Tensor input does not match the declared network shape."""


class SchemaMismatch(PlacementError):
    """Weight collection does not match the expected parameter schema."""


class BadGranularity(PlacementError):
    pass


class Infeasible(PlacementError):
    """A baseline placer ran out of legal cells."""


class NonFiniteLoss(PlacementError):
    """A training loss term became NaN or infinite."""
