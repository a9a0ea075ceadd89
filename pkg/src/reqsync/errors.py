"""Common exception base for the whole package."""


class ReqSyncError(Exception):
    """Base class for every domain error raised by reqsync.

    The CLI maps these to exit code 1 and the HTTP service to a 422
    response; anything else is a genuine bug.
    """
