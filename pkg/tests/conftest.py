import pytest


def pytest_addoption(parser):
    parser.addoption("--run-long", action="store_true", default=False,
                     help="run multi-hour production-tier simulations")
    parser.addoption("--run-stretch", action="store_true", default=False,
                     help="run offline fine-tier quantitative targets")


def pytest_collection_modifyitems(config, items):
    skip_long = pytest.mark.skip(reason="long-running; enable with --run-long")
    skip_stretch = pytest.mark.skip(reason="offline fine-tier target; enable with --run-stretch")
    for item in items:
        if "long" in item.keywords and not config.getoption("--run-long"):
            item.add_marker(skip_long)
        if "stretch" in item.keywords and not config.getoption("--run-stretch"):
            item.add_marker(skip_stretch)
