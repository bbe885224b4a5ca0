"""Exception types shared across the package."""


class GameTuneError(Exception):
    pass


class InvalidConfiguration(GameTuneError, ValueError):
    pass


class InvalidArgument(GameTuneError, ValueError):
    pass


class TooManyRegions(InvalidArgument):
    pass


class GameFailed(GameTuneError, RuntimeError):
    """Every player in a game failed to make progress."""


class NoHistory(GameTuneError, LookupError):
    pass


class RefusedEnumeration(GameTuneError):
    """Search space too large to enumerate for the ground-truth oracle."""


class ConfigError(GameTuneError, ValueError):
    """Invalid experiment configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
