"""Exception hierarchy.  Every error raised by the package derives from
:class:`VoxelConvError` so callers (and the CLI) can catch one type."""


class VoxelConvError(Exception):
    pass


class LengthMismatch(VoxelConvError, ValueError):
    pass


class OutOfBounds(VoxelConvError, IndexError):
    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"coordinate at row {row} is out of bounds")


class DuplicateCoordinate(VoxelConvError, ValueError):
    def __init__(self, row_a, row_b):
        self.row_a = row_a
        self.row_b = row_b
        super().__init__(f"rows {row_a} and {row_b} share a voxel coordinate")


class EvenKernel(VoxelConvError, ValueError):
    def __init__(self, k):
        self.k = k
        super().__init__(f"submanifold kernel size must be odd and >= 1, got {k}")


class MissingParent(VoxelConvError, LookupError):
    def __init__(self, fine_row):
        self.fine_row = fine_row
        super().__init__(f"fine row {fine_row} has no parent cell in the coarse index set")


class ShapeMismatch(VoxelConvError, ValueError):
    pass


class ChannelMismatch(VoxelConvError, ValueError):
    def __init__(self, layer, expected, got):
        self.layer = layer
        super().__init__(
            f"layer {layer}: weights expect {expected} input channels, tensor has {got}"
        )


class UnmatchedInverse(VoxelConvError, ValueError):
    def __init__(self, layer):
        self.layer = layer
        super().__init__(f"layer {layer}: inverse layer has no preceding downsample")


# serialization


class FormatError(VoxelConvError, ValueError):
    pass


class BadMagic(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


class Truncated(FormatError):
    pass


class InvariantViolation(FormatError):
    def __init__(self, findings):
        self.findings = list(findings)
        detail = "; ".join(str(f) for f in self.findings[:5])
        super().__init__(f"tensor payload violates invariants: {detail}")
