""" Custom error types """


class SplayNetSimError(Exception):
    """Base error type for splaynetsim custom errors."""

    def __init__(self, msg):
        super(SplayNetSimError, self).__init__(msg)


class EmptyTreeError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""empty tree. {msg}""")


class NodeNotFoundError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Node does not exist in the tree. {msg}""")


class TreeStructureError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Tree structure is invalid. {msg}""")


class RotationError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Rotation error: {msg}""")


class BufferOverflowError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Buffer capacity exceeded. {msg}""")


class ProtocolError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Protocol violation. {msg}""")


class SplayRequestError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Invalid splay request. {msg}""")


class WorkloadError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Workload error. {msg}""")


class TraceFormatError(SplayNetSimError):
    def __init__(self, line: int, msg=""):
        self.line = line
        super().__init__(f"""Trace format error at line {line}. {msg}""")


class AnalysisError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Analysis error. {msg}""")


class DetectorFiredError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Detector fired during the run. {msg}""")


class ResultStoreError(SplayNetSimError):
    def __init__(self, msg=""):
        super().__init__(f"""Result store error. {msg}""")
