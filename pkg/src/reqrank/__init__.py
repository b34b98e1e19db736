"""reqrank: text-request-to-item retrieval.

Frozen base embeddings projected through two trainable towers, scored by
dot product, next to lexical and random baselines, with the retrieval
metrics and the query/feedback service that go with them.
"""

from importlib import resources

__version__ = "0.1.0"


def default_lexicon_path():
    """Path to the bundled garment category lexicon."""
    return resources.files("reqrank").joinpath("data/default_lexicon.json")
