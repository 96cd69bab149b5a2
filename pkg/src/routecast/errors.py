"""Shared exception root.

Every domain failure in the engine derives from :class:`RoutecastError` so
the CLI can map "the input was bad" (exit 1) apart from usage errors
(exit 2) and genuine crashes.
"""


class RoutecastError(Exception):
    """Base class for all engine-level failures."""
