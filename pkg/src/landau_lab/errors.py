"""Error types shared across the package.

Every failure carries a short machine-readable ``code`` (e.g. ``"picard-divergence"``)
so the CLI and tests can match on it without parsing messages.
"""


class LandauLabError(Exception):
    """Base error; ``code`` names the failure, ``context`` holds diagnostics."""

    def __init__(self, code, message="", **context):
        self.code = code
        self.context = context
        super().__init__(f"[{code}] {message}" if message else f"[{code}]")


class ConfigError(LandauLabError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__("config-invalid", f"{field}: {message}", field=field)


class PenroseViolation(LandauLabError):
    """Penrose margin is not positive. Carries the finished scan."""

    def __init__(self, scan):
        self.scan = scan
        super().__init__(
            "penrose-violation",
            f"margin {scan.margin:.3e} at tau={scan.argmin[0]:.4g}, |xi|={scan.argmin[1]:.4g}",
            scan=scan,
        )


class ZeroWavenumberWarning(UserWarning):
    """K~ requested at xi = 0, where the integrand vanishes identically."""
