"""Exception types shared across the toolkit."""


class InputError(ValueError):
    """Bad input data or configuration: malformed files, missing paths, invalid fields."""


class SolverError(RuntimeError):
    """An optimization stage failed: infeasible problem, iteration limit, or no usable sample."""
