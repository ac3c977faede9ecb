"""Shared test plumbing.

The acceptance tests in test_acceptance.py each cover one numbered release
criterion; the hooks below collect their outcomes and print a one-line
pass/fail summary per criterion at the end of the run.
"""

from __future__ import annotations

ACCEPTANCE_CRITERIA = {
    "test_clean_cube_recovery": (1, "clean cube: 6 planes, edge recall, endpoint error, runtime"),
    "test_noisy_cube_recall": (2, "noisy cube: edge recall under perpendicular noise"),
    "test_normal_estimation_error": (3, "normal accuracy on a noisy plane (noise = grid pitch)"),
    "test_growing_merging_postprocess_examples": (4, "threshold arithmetic: growing, merging, cleanup"),
    "test_scale_invariance_of_decisions": (5, "scale invariance of index-level decisions"),
    "test_projection_round_trip": (6, "plane projection round trip"),
    "test_contour_boundary_oracle": (7, "contour tracing vs brute-force boundary predicate"),
    "test_runtime_and_scaling": (8, "million-point runtime and size-scaling trend"),
    "test_postprocess_runtime_share": (9, "postprocess share of total runtime"),
}

_outcomes: dict[int, str] = {}


def _basename(nodeid: str) -> str:
    return nodeid.split("::")[-1].split("[")[0]


def pytest_runtest_logreport(report):
    entry = ACCEPTANCE_CRITERIA.get(_basename(report.nodeid))
    if entry is None:
        return
    num = entry[0]
    if report.skipped:
        _outcomes[num] = "SKIP"
    elif report.failed:
        _outcomes[num] = "FAIL"
    elif report.when == "call" and _outcomes.get(num) != "FAIL":
        _outcomes[num] = "PASS"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, (num, label) in sorted(ACCEPTANCE_CRITERIA.items(), key=lambda kv: kv[1][0]):
        status = _outcomes.get(num, "NOT RUN")
        terminalreporter.write_line(f"criterion {num} [{status}] {label} ({name})")
