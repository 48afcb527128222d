"""Exception hierarchy shared by the library and the CLI."""


class PKIError(Exception):
    """Base class for all library errors."""


class MalformedError(PKIError, ValueError):
    """A document or value violates its structural invariants."""


class IssuanceError(PKIError):
    """A certificate cannot be issued (role mismatch, validity escape, ...)."""


class AuthorityError(PKIError):
    """An administrative operation was refused; authority state is unchanged."""


class ProvisioningError(PKIError):
    """A device cannot be provisioned (unknown model, missing credentials)."""


class ScenarioError(PKIError):
    """A scenario file is malformed or references undefined entities."""

    def __init__(self, index, message):
        self.index = index
        super().__init__(f"event {index}: {message}" if index is not None else message)
