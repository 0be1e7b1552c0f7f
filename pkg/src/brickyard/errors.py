"""Exception hierarchy. Every domain failure derives from ``BrickyardError``
so the CLI can map it to exit code 1."""


class BrickyardError(Exception):
    pass


class MalformedBlueprint(BrickyardError):
    pass


class NonAxisAligned(BrickyardError):
    pass


class OverCapacity(BrickyardError):
    pass


class NoPlaneFound(BrickyardError):
    pass


class DegenerateCluster(BrickyardError):
    pass


class EmptyView(BrickyardError):
    pass


class MarkerNotVisible(BrickyardError):
    pass


class SingularSystem(BrickyardError):
    pass


class NoPile(BrickyardError):
    pass


class NoGround(BrickyardError):
    pass


class EmptyAfterCrop(BrickyardError):
    pass


class NoCorrespondences(BrickyardError):
    pass


class Infeasible(BrickyardError):
    pass


class Unpartitionable(BrickyardError):
    pass


class NoCandidate(BrickyardError):
    pass


class CorruptSnapshot(BrickyardError):
    pass


class MissionFailed(BrickyardError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class ValidationFailed(BrickyardError):
    """A marker fit whose side lengths disagree with the expected marker."""

    def __init__(self, detection, detail: str = ""):
        super().__init__(detail or "marker side lengths out of tolerance")
        self.detection = detection
