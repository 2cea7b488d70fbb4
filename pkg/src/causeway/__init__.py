"""causeway: detect which textual features temporally cause a target time
series, build a cause-effect graph from causal tuples, and generate
explanation chains between a detected cause and the target."""

__version__ = "0.1.0"
