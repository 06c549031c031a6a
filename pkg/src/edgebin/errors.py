"""Exception hierarchy shared by every edgebin module."""


class EdgeBinError(Exception):
    """Base class for domain errors (CLI maps these to exit code 1)."""


class ShapeMismatch(EdgeBinError):
    def __init__(self, node, message):
        self.node = node
        super().__init__(f"node {node}: {message}")


class UnknownAttribute(EdgeBinError):
    pass


class DTypeMismatch(EdgeBinError):
    pass


class UnsupportedOp(EdgeBinError):
    pass


class CycleDetected(EdgeBinError):
    pass


class InvalidGraph(EdgeBinError):
    """Raised when an operation needs a graph that passes ``validate``."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class CorruptManifest(EdgeBinError):
    pass


class ChecksumMismatch(EdgeBinError):
    pass


class ExecFailure(EdgeBinError):
    pass


class NonAffinePattern(EdgeBinError):
    pass


class Unreplaceable(EdgeBinError):
    def __init__(self, node, reason):
        self.node = node
        self.reason = reason
        super().__init__(f"node {node}: {reason}")


class EmptyDataset(EdgeBinError):
    pass


class MissingStats(EdgeBinError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"no calibration statistics for node {node}")


class UnsupportedAlpha(EdgeBinError):
    pass


class EmptyClass(EdgeBinError):
    pass


class BadRatios(EdgeBinError):
    pass


class BadMagic(EdgeBinError):
    pass


class TruncatedPixels(EdgeBinError):
    pass


class LengthMismatch(EdgeBinError):
    pass


class UnknownLabel(EdgeBinError):
    pass


class InvalidTransition(EdgeBinError):
    def __init__(self, state, event):
        self.state = state
        self.event = event
        super().__init__(f"{type(event).__name__} not valid in state {state!r}")


class ZeroDraw(EdgeBinError):
    pass


class EmptySeries(EdgeBinError):
    pass
