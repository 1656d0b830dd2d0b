#!/usr/bin/env python3
"""
Exception hierarchy for the imaging gateway simulator
"""

from typing import Optional


class GatewayError(Exception):
    """Base class for every error raised on purpose by this project"""

    category = "error"
    exit_code = 1


class ConfigurationError(GatewayError):
    """Invalid configuration value or unknown configuration key"""

    category = "configuration"
    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = ""
        if key:
            where += f" [{key}"
            if line is not None:
                where += f", line {line}"
            where += "]"
        super().__init__(f"{message}{where}")


class TraceParseError(GatewayError):
    """Malformed line in a trace, index or label file"""

    category = "parse"
    exit_code = 3

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ValidationFailed(GatewayError):
    """A trace does not validate against its repository index"""

    category = "validation"
    exit_code = 4

    def __init__(self, report):
        self.report = report
        super().__init__(f"trace validation failed with {len(report.findings)} finding(s): {report.summary()}")


class StudyNotFound(GatewayError):
    """A study uid is absent from the repository index"""

    category = "lookup"
    exit_code = 5

    def __init__(self, study_uid: str):
        self.study_uid = study_uid
        super().__init__(f"study not found: {study_uid}")


class DuplicateStudy(GatewayError):
    """A study uid was added twice to one repository index"""

    category = "lookup"
    exit_code = 5

    def __init__(self, study_uid: str):
        self.study_uid = study_uid
        super().__init__(f"duplicate study uid: {study_uid}")


class AdmissionRejected(GatewayError):
    """A study is larger than the whole cache"""

    category = "cache"

    def __init__(self, study_uid: str, size_bytes: int, capacity_bytes: int):
        self.study_uid = study_uid
        super().__init__(
            f"study {study_uid} ({size_bytes} bytes) exceeds cache capacity ({capacity_bytes} bytes)"
        )


class CachePreconditionError(GatewayError):
    """Cache operation called with arguments outside its contract"""

    category = "cache"


class DimensionMismatch(GatewayError):
    """Feature or target vector does not fit the model"""

    category = "model"

    def __init__(self, expected: int, got: int, what: str = "features"):
        super().__init__(f"{what} dimension mismatch: expected {expected}, got {got}")


class NonFiniteInput(GatewayError):
    """NaN or infinite value in training data"""

    category = "model"


class CheckpointError(GatewayError):
    """Model checkpoint cannot be read"""

    category = "model"


class ReportError(GatewayError):
    """Experiment table cannot be aggregated"""

    category = "report"
    exit_code = 6
