"""
Exception hierarchy shared by every package.

Everything raised on purpose derives from WatermarkError, so callers (the CLI
in particular) can turn failures into exit codes without catching bare
Exception.
"""

from __future__ import annotations

from typing import Optional


class WatermarkError(Exception):
    """Base class for all toolkit errors."""


# ---------------------------------------------------------------
# Pattern keys
# ---------------------------------------------------------------
class InvalidSpec(WatermarkError, ValueError):
    pass


class NyquistViolation(InvalidSpec):
    pass


class KeyFormatError(WatermarkError, ValueError):
    pass


# ---------------------------------------------------------------
# Providers
# ---------------------------------------------------------------
class ProviderError(WatermarkError):
    pass


class EmptyVocabulary(ProviderError):
    pass


class EmptyPrefix(ProviderError, ValueError):
    pass


class RemoteError(ProviderError):
    def __init__(self, message: str, status_code: Optional[int] = None) -> None:
        super().__init__(message)
        self.status_code = status_code


# ---------------------------------------------------------------
# Generation / re-computation
# ---------------------------------------------------------------
class GenerationError(WatermarkError):
    pass


class InvalidRequest(GenerationError, ValueError):
    pass


class PatternTooShort(InvalidRequest):
    pass


class EmptyPrompt(InvalidRequest):
    pass


class EmptyText(WatermarkError, ValueError):
    pass


# ---------------------------------------------------------------
# Detection
# ---------------------------------------------------------------
class DetectionError(WatermarkError):
    pass


class SeriesTooShort(DetectionError, ValueError):
    pass


class EmptyKeySet(DetectionError, ValueError):
    pass


class DuplicateKeyFrequency(DetectionError, ValueError):
    pass


class TextTooShort(DetectionError, ValueError):
    pass


# ---------------------------------------------------------------
# Attacks
# ---------------------------------------------------------------
class InvalidAttack(WatermarkError, ValueError):
    pass


# ---------------------------------------------------------------
# Harness
# ---------------------------------------------------------------
class HarnessError(WatermarkError):
    pass


class MalformedRecord(HarnessError, ValueError):
    pass


class CorpusFileError(HarnessError, OSError):
    pass


class EmptyClass(HarnessError, ValueError):
    pass


class LengthMismatch(HarnessError, ValueError):
    pass


class UnknownExperiment(HarnessError, ValueError):
    pass


class ExperimentAborted(HarnessError):
    def __init__(self, message: str, completed: int) -> None:
        super().__init__(message)
        self.completed = completed
