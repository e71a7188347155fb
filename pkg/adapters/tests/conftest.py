import numpy as np
import pytest

cv2 = pytest.importorskip("cv2")

# BGR fills matching the builtin hue lexicon
COLOR_BGR = {
    "red": (40, 40, 220),
    "green": (60, 200, 60),
    "blue": (220, 80, 40),
    "yellow": (40, 220, 230),
    "cyan": (200, 200, 60),
    "magenta": (200, 60, 200),
}


def paint_scene(path, rects, size=(480, 640)):
    """Gray background with filled color rectangles: (color, x, y, w, h)."""
    img = np.full((size[0], size[1], 3), 128, dtype=np.uint8)
    for color, x, y, w, h in rects:
        img[y : y + h, x : x + w] = COLOR_BGR[color]
    assert cv2.imwrite(str(path), img)
    return path


@pytest.fixture
def fixture_images(tmp_path):
    """Two synthetic rooms with high-contrast objects on gray."""
    a = paint_scene(
        tmp_path / "room_a.png",
        [("red", 50, 120, 90, 70), ("blue", 300, 200, 120, 80), ("yellow", 480, 60, 80, 90)],
    )
    b = paint_scene(
        tmp_path / "room_b.png",
        [("magenta", 100, 100, 140, 180), ("green", 400, 260, 100, 90)],
    )
    return [a, b]
