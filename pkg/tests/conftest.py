import functools

import pytest

from choquard.geometry import build_grid
from choquard.kernel import assemble_kernel
from choquard.params import make_params

ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def kernel_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("kernels")


@pytest.fixture(scope="session")
def problem(kernel_cache):
    """problem(n, parts, mu, size) -> (params, grid, kernel), built once per session."""

    @functools.lru_cache(maxsize=None)
    def build(n, parts, mu, size=32):
        params = make_params(n, mu)
        grid = build_grid(params, parts, size)
        return params, grid, assemble_kernel(grid, params, cache_dir=kernel_cache)

    return build


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
