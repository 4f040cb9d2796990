"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input caught before any work is done (CLI exit code 1)."""


class BehindCameraError(ValidationError):
    """3D point at or behind the camera plane cannot be projected."""


class GenerationAborted(ValidationError):
    """Rejection sampling gave up: the acceptance rate collapsed, which
    almost always means a misconfigured pose or viewpoint prior."""
