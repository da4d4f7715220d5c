"""Figure rendering for the rmf laboratory's experiment CSV outputs."""

from .figures import (
    KINDS,
    EmptyInputError,
    FigureSpec,
    RenderResult,
    SchemaError,
    render,
)

__all__ = [
    "KINDS",
    "EmptyInputError",
    "FigureSpec",
    "RenderResult",
    "SchemaError",
    "render",
]
