class LocalFactorizationError(ArithmeticError):
    """Cholesky of an element Gram matrix hit a non-positive pivot."""

    def __init__(self, element: int, pivot: int):
        self.element = element
        self.pivot = pivot
        super().__init__(
            f"local Gram matrix of element {element} is not positive definite "
            f"(pivot {pivot}); this indicates a basis or quadrature bug"
        )
