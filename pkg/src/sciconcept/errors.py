"""Common exception base so callers can catch package errors in one clause."""


class SciConceptError(Exception):
    """Base class for every error raised by this package."""
