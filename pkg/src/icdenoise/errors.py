class InvalidArgument(ValueError):
    """A precondition on an argument was violated."""


class Unsupported(InvalidArgument):
    """The operation is not defined for this kind of model."""


class NonFiniteGradient(FloatingPointError):
    def __init__(self, epoch: int, message: str = "non-finite gradient"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, initial_loss: float, last_losses: list[float]):
        super().__init__(
            f"training diverged by epoch {epoch}: initial train mse {initial_loss:.4g}, "
            f"recent {[round(x, 4) for x in last_losses[-5:]]}"
        )
        self.epoch = epoch
        self.initial_loss = initial_loss
        self.last_losses = last_losses
