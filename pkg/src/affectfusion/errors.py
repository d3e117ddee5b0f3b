"""Exceptions shared across file formats and commands."""


class FormatError(ValueError):
    """A file does not match its declared binary or text layout."""

    def __init__(self, message: str, offset: int | None = None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class ConfigError(ValueError):
    """A run configuration failed validation."""


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, grad_norm: float, loss: float):
        self.epoch, self.batch, self.grad_norm, self.loss = epoch, batch, grad_norm, loss
        super().__init__(
            f"non-finite loss {loss} at epoch {epoch}, batch {batch} (grad norm {grad_norm})"
        )
