"""Exception types shared by the package."""


class PhchartsError(Exception):
    """Base class."""


class ContractError(PhchartsError):
    """Arity/order mismatch or a violated precondition."""


class DomainError(PhchartsError):
    """Evaluation outside the declared working region."""


class ValidationError(PhchartsError):
    """Invalid scenario or configuration."""


class NumericalError(PhchartsError):
    """A numerical procedure failed to converge or a tolerance check failed.

    Attributes
    ----------
    info : dict
        Diagnostic values (last residual, offending ratio, ...).
    """

    def __init__(self, msg, **info):
        super().__init__(msg)
        self.info = info
