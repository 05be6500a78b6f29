"""Logit capture for external training loops; writes aumclean's log format."""

from .capture import (
    CaptureError,
    CaptureSession,
    begin,
    finish,
    record,
    reference_aums,
)

__all__ = ["CaptureError", "CaptureSession", "begin", "record", "finish",
           "reference_aums"]
