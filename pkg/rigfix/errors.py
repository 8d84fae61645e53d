"""
Error Types

A single exception family for the rectification pipeline. Every failure carries
an ErrorType so the CLI can map it to a stable exit code and the gating layer
can turn estimation failures into a mono-fallback decision.
"""

from enum import Enum
from typing import Any, Optional


class ErrorType(Enum):
    """Categories of pipeline failures."""
    INVALID_INTRINSICS = "invalid_intrinsics"
    BEHIND_CAMERA = "behind_camera"
    INVALID_IMAGE = "invalid_image"
    BOUNDARY = "boundary"
    CONFIG = "config"
    TOO_FEW_MATCHES = "too_few_matches"
    DEGENERATE_GEOMETRY = "degenerate_geometry"
    EMPTY_INPUT = "empty_input"
    IO = "io"


class RectificationError(Exception):
    """Custom exception for rectification pipeline errors."""

    def __init__(
        self,
        error_type: ErrorType,
        message: str,
        detail: Optional[Any] = None
    ):
        self.error_type = error_type
        self.message = message
        self.detail = detail
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        if self.error_type == ErrorType.INVALID_INTRINSICS:
            return f"Invalid intrinsics: {self.message}"
        elif self.error_type == ErrorType.BEHIND_CAMERA:
            return f"Point behind camera: {self.message}"
        elif self.error_type == ErrorType.BOUNDARY:
            return f"Patch out of bounds: {self.message}"
        elif self.error_type == ErrorType.CONFIG:
            return f"Configuration error: {self.message}"
        elif self.error_type == ErrorType.TOO_FEW_MATCHES:
            return f"Too few matches: {self.message}"
        elif self.error_type == ErrorType.DEGENERATE_GEOMETRY:
            if self.detail:
                return f"Degenerate geometry ({', '.join(self.detail)} unidentifiable): {self.message}"
            return f"Degenerate geometry: {self.message}"
        elif self.error_type == ErrorType.IO:
            return f"I/O error: {self.message}"
        return self.message
