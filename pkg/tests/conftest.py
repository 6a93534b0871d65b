import pytest

from femtoprop.geometry import Point, Segment
from femtoprop.sitemodel import ClutterObject, Material, RadioNode, SiteModel, Wall

ACCEPTANCE_LINES = []

MATERIALS = {
    "drywall": Material("drywall", 2.5, {2.5: 5.4, 60.0: 6.0}),
    "whiteboard": Material("whiteboard", 1.9, {2.5: 0.5, 60.0: 9.6}),
    "clear_glass": Material("clear_glass", 0.32, {2.5: 6.4, 60.0: 3.6}),
    "mesh_glass": Material("mesh_glass", 0.32, {2.5: 7.7, 60.0: 10.2}),
    "clutter": Material("clutter", None, {2.5: 2.5, 60.0: 1.2}),
}


def make_site(walls=(), clutter=(), nodes=()):
    """Site with the five reference materials.

    walls: (material, x1, y1, x2, y2); clutter: (material, x, y, r);
    nodes: (id, x, y).
    """
    return SiteModel(
        materials=MATERIALS,
        walls=tuple(Wall(m, Segment(Point(x1, y1), Point(x2, y2))) for m, x1, y1, x2, y2 in walls),
        clutter=tuple(ClutterObject(m, Point(x, y), r) for m, x, y, r in clutter),
        nodes={n: RadioNode(n, Point(x, y), 0.0, 6.0) for n, x, y in nodes},
    )


@pytest.fixture
def site_factory():
    return make_site


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    failed_early = report.when == "setup" and not report.passed
    if report.when == "call" or failed_early:
        number, title = marker.args
        status = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_LINES.append((number, f"criterion {number}: {status}  {title}"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
