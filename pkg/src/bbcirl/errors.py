"""Exception types. Each carries a short machine-readable ``category``."""


class BBCError(Exception):
    category = "error"


class ConfigError(BBCError, ValueError):
    category = "config"


class UsageError(BBCError, ValueError):
    category = "usage"


class DivergenceError(BBCError, ArithmeticError):
    category = "divergence"


class MissingArtifactError(BBCError, FileNotFoundError):
    category = "missing-artifact"
