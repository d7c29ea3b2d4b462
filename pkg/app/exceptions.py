class GraspAlignError(Exception):
    """Base class for every error raised by the package"""


class MeshFormatError(GraspAlignError, ValueError):
    pass


class HandDescriptionError(GraspAlignError, ValueError):
    pass


class UnknownLinkError(GraspAlignError, LookupError):
    pass


class UnknownPartError(GraspAlignError, LookupError):
    pass


class ContactFormatError(GraspAlignError, ValueError):
    pass


class PartArityError(ContactFormatError):
    pass


class EmptyPartError(GraspAlignError, ValueError):
    pass


class DegenerateBisectorError(GraspAlignError, ArithmeticError):
    pass


class ConfigValidationError(GraspAlignError, ValueError):
    pass


class NoValidGraspError(GraspAlignError, RuntimeError):
    pass


class RecordFormatError(GraspAlignError, ValueError):
    pass
