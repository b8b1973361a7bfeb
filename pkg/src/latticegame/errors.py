"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid experiment configuration (bad key, value, or schema)."""


class InvariantViolation(Exception):
    """A structural invariant of the simulation was broken.

    Raised for conditions that must hold by construction: duplicate
    memory records, replay mismatches, diverging shared randomness in
    coupled runs.  These are bugs or corrupted inputs, never expected
    statistical fluctuations.
    """
