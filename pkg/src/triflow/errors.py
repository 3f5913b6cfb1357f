"""Exception types shared across the package."""


class TriflowError(Exception):
    """Base class for all errors raised by triflow."""


class StateShapeError(TriflowError, ValueError):
    """A state does not match the network's buses, branches or phase sets."""


class SingularVoltageError(TriflowError, ZeroDivisionError):
    """Unit current requested at a (near-)zero voltage with nonzero power."""


class ZeroImpedanceError(TriflowError, ValueError):
    """Admittance-form evaluation requested on a zero-impedance branch."""


class MeshedNetworkError(TriflowError, ValueError):
    """An operation that needs a radial network received a meshed one."""


class IsolatedBusError(TriflowError, ValueError):
    """A bus phase has no conductor path to a reference bus."""


class SolverError(TriflowError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message, trace=None, state=None):
        super().__init__(message)
        self.trace = trace
        self.state = state


class SingularJacobianError(SolverError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot
