"""Exception types shared across the toolkit.

Precondition violations on plain bad arguments raise ValueError; the classes
here name failure modes callers are expected to branch on.
"""


class AstkitError(Exception):
    """Base class for all toolkit errors."""


# LLM gateway

class BackendUnavailable(AstkitError):
    """Remote backend unreachable after exhausting retries."""


class BadRequest(AstkitError):
    """Backend rejected the request (4xx); retrying is pointless."""


class Timeout(AstkitError):
    """Every attempt timed out."""


class MissingImage(AstkitError):
    """Vision completion called without any image attachment."""


# Prompt assembly

class EmptyAgentGoals(AstkitError):
    """A prompt spec must define non-empty agent goals."""


# Knowledge store

class EmptyText(AstkitError):
    """Cannot embed an empty string."""


class EmptyCorpus(AstkitError):
    """Corpus directory yielded no readable incidents."""


class EmptyIndex(AstkitError):
    """Search requires a non-empty vector index."""


# Scenario agent

class UnparseableBlueprint(AstkitError):
    """Agent response could not be parsed into a complete blueprint."""


# Script generation

class UnparseableScript(AstkitError):
    """Agent response could not be parsed into the target script shape."""


# Flight logs

class BadMagic(AstkitError):
    """Input does not start with the binary log magic bytes."""


class CorruptHeader(AstkitError):
    """Log file header is truncated or has an unsupported version."""


class CorruptLog(AstkitError):
    """More than the tolerated fraction of log messages failed to parse."""


class MissingHeader(AstkitError):
    """CSV log lacks the required timestamp_us header row."""


class NoDataRows(AstkitError):
    """CSV log has a header but no data rows."""


class NonMonotonicTimestamps(AstkitError):
    """CSV log timestamps are not strictly increasing."""


# Plot rendering

class InvalidSpec(AstkitError):
    """Plot spec violates its structural invariants."""


# Analytics

class NoMatchingParameters(AstkitError):
    """No selected parameter is present in the flight log."""


# Evaluation

class TooFewBlueprints(AstkitError):
    """Diversity needs at least two blueprints."""


class UnknownQuery(AstkitError):
    """Relevance labels do not cover the requested query."""


# Orchestrator

class WrongStage(AstkitError):
    """Operation not permitted in the run's current stage."""


class UnknownRun(AstkitError):
    """No run with the given id."""


class UnknownLog(AstkitError):
    """No flight log with the given id."""
