"""Error hierarchy shared by the services, the CLI and the HTTP surface.

Every error carries the process exit code the CLI reports for it.
"""


class VortwaveError(Exception):
    exit_code = 1


class ConfigError(VortwaveError):
    """Schema violation or unreadable run configuration."""

    exit_code = 2


class InvariantFailure(VortwaveError):
    """An asserted property missed its threshold."""

    exit_code = 3

    def __init__(self, name, measured, threshold):
        self.name = name
        self.measured = measured
        self.threshold = threshold
        super().__init__(f"invariant '{name}' failed: measured {measured:.3e}, threshold {threshold:.3e}")


class SpectralError(VortwaveError, ValueError):
    exit_code = 4


class StrictConnectednessError(VortwaveError):
    """Bottom and surface come closer than the admissible margin."""

    exit_code = 4

    def __init__(self, node, margin, h0):
        self.node = node
        self.margin = margin
        self.h0 = h0
        super().__init__(
            f"strict connectedness violated at node {node}: h - beta + eta = {margin:.6g} < h0 = {h0:.6g}"
        )


class SolverError(VortwaveError):
    exit_code = 4


class IntegrationError(VortwaveError):
    exit_code = 4

    def __init__(self, message, t):
        self.t = t
        super().__init__(f"{message} (t = {t:.6g})")


class DiffeomorphismError(VortwaveError):
    """Smoothing parameter outside the admissible range."""

    exit_code = 4

    def __init__(self, delta, delta_max, c0):
        self.delta = delta
        self.delta_max = delta_max
        self.c0 = c0
        super().__init__(
            f"regularizing parameter delta = {delta:.6g} is not admissible "
            f"(c0 = {c0:.6g}); admissible bound is delta < {delta_max:.6g}"
        )
