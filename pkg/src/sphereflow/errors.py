"""Exception hierarchy shared by all sphereflow modules."""


class SphereFlowError(Exception):
    pass


class DomainError(SphereFlowError, ValueError):
    """Input lies outside the domain of an operation (e.g. not in the positive cone)."""


class ParityError(DomainError):
    """Nodal data is not even about the poles."""


class NumericError(SphereFlowError, ArithmeticError):
    pass


class ConvexityError(SphereFlowError):
    """A principal curvature became non-positive.

    Carries the first offending node and the curvature value found there.
    """

    def __init__(self, node, value, message=None):
        self.node = int(node)
        self.value = float(value)
        super().__init__(message or f"convexity lost at node {self.node}: kappa = {self.value:.6g}")


class HemisphereError(SphereFlowError):
    def __init__(self, node, value, message=None):
        self.node = int(node)
        self.value = float(value)
        super().__init__(message or f"graph leaves the hemisphere at node {self.node}: u = {self.value:.6g}")


class IntegratorError(SphereFlowError):
    pass
