"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Inconsistent or unsupported configuration."""


class ContractError(ValueError):
    """Caller violated an interface contract (buffer sizes, layout pairing)."""


class ComparisonError(ValueError):
    """Benchmark records are not comparable (kernel, problem size or machine differ)."""
