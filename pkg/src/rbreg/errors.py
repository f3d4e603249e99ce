"""Exception hierarchy shared by all modules.

Three families map onto the CLI exit codes: configuration problems (2),
data/file problems (3), numerical failures (4).
"""


class RbregError(Exception):
    pass


class ConfigError(RbregError):
    pass


class DataError(RbregError):
    pass


class NumericalError(RbregError):
    pass


# --- data errors ---------------------------------------------------------

class BadMagic(DataError):
    pass


class TruncatedFile(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class OutOfRange(DataError):
    pass


class InsufficientClassSamples(DataError):
    def __init__(self, class_index, have, need):
        super().__init__(
            f"class {class_index}: have {have} samples, need {need}"
        )
        self.class_index = class_index
        self.have = have
        self.need = need


class EmptyInput(DataError):
    pass


class NonPositiveGroundTruth(DataError):
    pass


# --- numerical errors ----------------------------------------------------

class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class ZeroNormAtom(NumericalError):
    pass


class ZeroNormQuery(NumericalError):
    pass


class LayoutMismatch(NumericalError):
    pass


class ShapeMismatch(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
