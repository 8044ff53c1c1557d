"""Exception hierarchy shared by all planner stages."""


class DqcError(Exception):
    pass


class ParameterError(DqcError, ValueError):
    """Invalid user-supplied parameter."""


class ModelError(DqcError):
    """Network or circuit model violates a structural invariant."""


class RoutingError(DqcError):
    pass


class CapacityError(DqcError):
    """More circuit qubits than network memories."""


class ContractError(DqcError):
    """Input violates an operation's precondition."""


class InfeasibleError(DqcError):
    """No schedule or cover satisfies the constraints."""


class PlanError(DqcError):
    pass
