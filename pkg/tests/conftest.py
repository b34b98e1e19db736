import pytest

from reqrank import cli

from helpers import build_pipeline_workspace


@pytest.fixture(scope="session")
def demo_config(tmp_path_factory):
    """A fully built pipeline workspace: corpus, checkpoint, both indexes.

    Session scoped; tests must treat the artifacts as read-only and point
    feedback or report outputs at their own temp paths.
    """
    root = tmp_path_factory.mktemp("demo_ws")
    cfg_path = build_pipeline_workspace(root)
    for verb in ("ingest", "train", "index"):
        assert cli.main(["--config", str(cfg_path), verb]) == 0
    return cfg_path
