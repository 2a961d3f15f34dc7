import pytest

from wesnet.experiments import ExperimentConfig, run_train

_RESULTS = {}

# desk-scale model shared by the acceptance criteria that need a trained net
DESK = dict(nt=4, nr=8, layers=12, profile="halfexp", keep_fraction=0.5, lam=1e-3,
            iterations=2000, batch=500, train_snr_min=8.0, train_snr_max=14.0, seed=0)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.fixture(scope="session")
def desk_model(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    cfg = ExperimentConfig(**DESK, out_dir=str(out))
    return cfg, run_train(cfg, out)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _RESULTS[mark.args[0]] = (mark.args[1], report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, ok, detail = _RESULTS[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
