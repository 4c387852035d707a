import numpy as np
import pytest

from phasedict import save_image

# one line per acceptance criterion, echoed after the run summary so the
# pass/fail verdicts are visible without -s
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion_report():
    def _report(number: int, ok: bool, detail: str) -> None:
        word = "PASS" if ok else "FAIL"
        line = f"criterion {number:2d} {word}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_image_dir(tmp_path_factory):
    """A 16x16 grayscale and a 16x16 RGB test image on disk."""
    root = tmp_path_factory.mktemp("toyimages")
    rng = np.random.default_rng(2024)
    gray = rng.random((16, 16))
    save_image(gray, root / "gray.png", bit_depth=16)
    rgb = rng.random((16, 16, 3))
    save_image(rgb, root / "color.png", bit_depth=8)
    return root
