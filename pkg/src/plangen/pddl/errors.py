class PDDLError(ValueError):
    """Invalid PDDL input or reference."""


class PDDLSyntaxError(PDDLError):
    def __init__(self, message, line=None, col=None):
        self.line, self.col = line, col
        where = f" at line {line}, column {col}" if line is not None else ""
        super().__init__(f"{message}{where}")


class UnsupportedFeatureError(PDDLError):
    def __init__(self, construct, line=None, col=None):
        self.construct = construct
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(f"unsupported PDDL construct {construct!r}{where}")


class InapplicableActionError(PDDLError):
    pass
