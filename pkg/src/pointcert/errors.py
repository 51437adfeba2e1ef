"""Exception types shared across the verifier."""


class ModelFormatError(ValueError):
    """A model or point-cloud document violates the on-disk schema."""


class ShapeChainError(ModelFormatError):
    """Layer input/output shapes do not chain consistently."""


class ContractError(ValueError):
    """An operation was called outside its stated preconditions."""
