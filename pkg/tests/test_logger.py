import pytest

from utils.logger import logger


@pytest.fixture
def status_lines():
    lines = []
    logger.set_status_callback(lambda level, message: lines.append((level, message)))
    yield lines
    logger.set_status_callback(None)


def test_status_callback_receives_levels(status_lines):
    logger.debug("hidden")
    logger.info("fitting")
    logger.warning("dropped 3 queries")
    logger.error("cholesky failed")
    logger.success("done")
    assert status_lines == [("INFO", "fitting"), ("WARNING", "dropped 3 queries"),
                            ("ERROR", "cholesky failed"), ("SUCCESS", "done")]


def test_failing_status_callback_is_ignored():
    def broken(level, message):
        raise RuntimeError("status bar gone")

    logger.set_status_callback(broken)
    try:
        logger.success("still logged")
    finally:
        logger.set_status_callback(None)


def test_cleared_callback_is_not_called(status_lines):
    logger.set_status_callback(None)
    logger.info("nobody listens")
    assert status_lines == []
