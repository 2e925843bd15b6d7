"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
to 2 (usage/config), 3 (data) or 4 (convergence).
"""


class WearAuthError(Exception):
    exit_code = 3


# --- ingestion / data -------------------------------------------------------

class EmptyInput(WearAuthError):
    pass


class MalformedRow(WearAuthError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateMinute(WearAuthError):
    def __init__(self, subject, minute):
        self.subject = subject
        self.minute = minute
        super().__init__(f"duplicate minute {minute} for subject {subject!r}")


class DegenerateWindow(WearAuthError):
    pass


class InvalidTransitionMatrix(WearAuthError):
    pass


# --- selection --------------------------------------------------------------

class EmptySample(WearAuthError):
    pass


class NoFeatureSurvives(WearAuthError):
    pass


class TopKExceedsAvailable(WearAuthError):
    pass


# --- svm --------------------------------------------------------------------

class DimensionMismatch(WearAuthError):
    pass


class SingleClass(WearAuthError):
    pass


class NonFinite(WearAuthError):
    pass


class NoConvergence(WearAuthError):
    exit_code = 4


class PlattNotFitted(WearAuthError):
    pass


# --- evaluation -------------------------------------------------------------

class InsufficientWindows(WearAuthError):
    def __init__(self, target, count, minimum):
        self.target = target
        super().__init__(
            f"subject {target!r} has {count} windows, need at least {minimum}")


class EmptyTestSet(WearAuthError):
    pass


class EmptyScores(WearAuthError):
    pass


class EmptyResults(WearAuthError):
    pass


# --- persistence / cli ------------------------------------------------------

class SchemaVersionMismatch(WearAuthError):
    pass


class CorruptFile(WearAuthError):
    pass


class ConfigInvalid(WearAuthError):
    exit_code = 2

    def __init__(self, field, reason=""):
        self.field = field
        super().__init__(f"invalid config field {field!r}" + (f": {reason}" if reason else ""))


class StageFailure(WearAuthError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"stage {stage!r} failed: {cause}")
