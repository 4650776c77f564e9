class ExportError(Exception):
    """Any failure that should stop an export run.

    The code is the machine-readable half of the CLI's JSON error line.
    """

    code = "export_error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code
