"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
BackendExhaustedError -> 3.
"""
from __future__ import annotations


class DocaugError(Exception):
    """Base class for all package errors."""


class ConfigError(DocaugError):
    """Invalid configuration, CLI usage, or missing required inputs."""


class DataError(DocaugError):
    """Malformed or inconsistent data files."""


class CorpusError(DataError):
    """A corpus file violates the document schema or its invariants."""


class RegistryError(DataError):
    """A relation registry or constraint file is malformed."""


class UnknownRelationError(DataError):
    """A relation id is not present in the registry."""


class EvalError(DataError):
    """A prediction file references unknown documents or entities."""


class VerificationError(DataError):
    """Verification task/decision data is inconsistent."""


class UnknownTaskError(VerificationError):
    """A decision references a task id that is not in the store."""


class DuplicateDecisionError(VerificationError):
    """An annotator already decided this task."""


class TaskStateError(VerificationError):
    """The task is not in a state this actor may decide."""


class AuthError(DocaugError):
    """Unknown or missing session token."""


class BackendError(DocaugError):
    """Transport-level failure talking to an LLM or NLI endpoint."""


class BackendProtocolError(BackendError):
    """The endpoint answered, but not in the agreed wire format."""


class BackendExhaustedError(BackendError):
    """Retry budgets exhausted with nothing accomplished."""


class ScoringUnavailableError(DocaugError):
    """Entailment scoring failed for at least one hypothesis of a proposal."""
