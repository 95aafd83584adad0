"""Exception hierarchy shared across the harness."""


class HarnessError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(HarnessError):
    """A suite, sample, or run file violates its schema.

    ``pointer`` locates the offending element (test coordinates, line
    number, or field path) so batch tooling can report it precisely.
    """

    def __init__(self, message: str, pointer: str | None = None):
        self.pointer = pointer
        super().__init__(message if pointer is None else f"{message} (at {pointer})")


class StructureError(HarnessError):
    """A suite is structurally inconsistent, e.g. duplicate test coordinates."""


class MissingGroundTruthError(HarnessError):
    """A prompt variant requires a ground-truth answer the sample lacks."""


class BackendError(HarnessError):
    """Base class for judge-invocation failures."""


class TransientBackendError(BackendError):
    """Retryable failure (HTTP 429/5xx, timeouts) that persisted past the retry budget."""


class AuthError(BackendError):
    """HTTP 401/403 from the remote endpoint; never retried."""


class CacheMissError(BackendError):
    """Replay backend found no cache entry for the request."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no cached response for key {key}")


class MissingFixtureError(BackendError):
    """Scripted backend has no fixture registered for the request tag."""

    def __init__(self, tag: str):
        self.tag = tag
        super().__init__(f"no fixture registered for request tag {tag!r}")


class InsufficientPairsError(HarnessError):
    """Fewer than two usable pairs remained after null exclusion."""


class NoOverlapError(HarnessError):
    """Two runs share no sample_id, so alignment is undefined."""


class MixedSuitesError(HarnessError):
    """Results passed to one report come from different suites."""


class MissingRawResponsesError(HarnessError):
    """Trace export needs a run with raw judge responses retained."""
