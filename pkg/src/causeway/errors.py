"""Exception hierarchy shared by all causeway modules.

Every error carries a stable ``code`` string that the CLI maps to a
distinct process exit code (see ``causeway.cli.EXIT_CODES``).
"""


class CausewayError(Exception):
    """Base class for all library errors."""

    code = "error"


class ConfigInvalid(CausewayError):
    code = "config_invalid"


class NoOverlap(CausewayError):
    code = "no_overlap"


class TooShort(CausewayError):
    code = "too_short"


class InvalidParams(CausewayError):
    code = "invalid_params"


class EmptyCorpus(CausewayError):
    code = "empty_corpus"


class SingularDesign(CausewayError):
    code = "singular_design"


class InvalidRank(CausewayError):
    code = "invalid_rank"


class UnknownTarget(CausewayError):
    code = "unknown_target"


class EmptyGraph(CausewayError):
    code = "empty_graph"


class UnknownNode(CausewayError):
    code = "unknown_node"


class IoError(CausewayError):
    code = "io_error"


class CorruptFile(CausewayError):
    code = "corrupt_file"


class TargetNotInGraph(CausewayError):
    code = "target_not_in_graph"


class NoPathFound(CausewayError):
    code = "no_path_found"


class UnknownRelation(CausewayError):
    code = "unknown_relation"


class DivergedLoss(CausewayError):
    code = "diverged_loss"


class NoChainFound(CausewayError):
    code = "no_chain_found"


class InsufficientHistory(CausewayError):
    code = "insufficient_history"


class LengthMismatch(CausewayError):
    code = "length_mismatch"


class SeriesTooShort(CausewayError):
    code = "series_too_short"
