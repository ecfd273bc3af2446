"""
Custom exceptions for the channel semantics toolkit
"""


class ChannelSemanticsError(Exception):
    """Base exception for the channel semantics toolkit"""
    pass


class ConfigurationError(ChannelSemanticsError):
    """Configuration related errors"""
    pass


class SceneError(ChannelSemanticsError):
    """Invalid scene or snapshot time outside the scene"""
    pass


class DelayRangeError(SceneError):
    """A path delay exceeds the unambiguous delay of the sounding grid"""
    pass


class TraceFormatError(ChannelSemanticsError):
    """Unreadable, corrupted or version-mismatched trace file"""
    pass


class SignalProcessingError(ChannelSemanticsError):
    """Non-finite or malformed sounding data"""
    pass


class ClusteringError(ChannelSemanticsError):
    """Cluster count out of range or empty input"""
    pass


class RuleError(ChannelSemanticsError):
    """Malformed event rule or unresolved rule reference"""
    pass


class StorageError(ChannelSemanticsError):
    """Semantic store file unavailable"""
    pass


class InvalidMapError(ChannelSemanticsError):
    """Semantic map rejected because it violates its invariants"""

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"Semantic map has {len(report.violations)} invariant violation(s)")


class UnknownIdError(ChannelSemanticsError):
    """Identifier does not resolve inside the store"""
    pass


class QueryError(ChannelSemanticsError):
    """Malformed semantic query"""
    pass
