from forum_moblo.shared.errors import ConfigurationError


def beta_schedule(k: int, exponent: float) -> float:
    """Momentum coefficient beta_k = (k + 1) ** -exponent, with beta_0 = 1."""
    if k < 0:
        raise ConfigurationError(f"iteration index must be >= 0, got {k}", field="k")
    if not 0.0 < exponent <= 1.0:
        raise ConfigurationError(f"exponent must lie in (0, 1], got {exponent}", field="beta_exponent")
    return float((k + 1) ** (-exponent))
