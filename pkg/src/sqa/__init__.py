"""Simple question answering over a triple knowledge base.

Entity text is tagged with a Bi-LSTM, candidates come from an inverted
n-gram index over aliases, relations are chosen by a Bi-GRU matcher, and
same-name entities can be re-ranked by out-degree or notable type.
"""

from importlib import resources

__version__ = "0.1.0"


def data_path(name: str):
    """Path to a file of the bundled mini knowledge base."""
    return resources.files(__name__) / "data" / name
