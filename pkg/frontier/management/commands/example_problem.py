from __future__ import annotations

import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

# Lower level: min (2 y1, y2) over 1 <= y1 <= min(4, x1), 2 <= y2 <= min(3, x2).
# Upper level: min (x1 + y1, x2 + y2) over x1 >= 4, x2 >= 3.
BOX_EXAMPLE = {
    "_comment": [
        "Bi-objective bilevel problem with a linear lower level.",
        "Lower level: minimize C y subject to A x + B y <= d; here C y = (2 y1, y2).",
        "Rows of B/A/d: y1 <= 4, y1 >= 1, 2 y2 <= 6, y2 >= 2, y1 <= x1, y2 <= x2.",
        "Upper level: minimize F(x, y) = (x1 + y1, x2 + y2) subject to G x <= h, i.e. x1 >= 4, x2 >= 3.",
        "Each F component is 1/2 z'Qz + c'z + b over z = (x, y); Q defaults to zero and b to 0.",
        "Optional keys: lower.D and lower.e add D x + e to the lower objective.",
        "The front at every x in X is the single point (2, 2), attained at y = (1, 2).",
    ],
    "name": "box example",
    "dims": {"n": 2, "m": 2, "p": 2, "q": 2},
    "upper": {
        "F": [
            {"c": [1, 0, 1, 0], "b": 0},
            {"c": [0, 1, 0, 1], "b": 0},
        ],
    },
    "X": {
        "G": [[-1, 0], [0, -1]],
        "h": [-4, -3],
    },
    "lower": {
        "C": [[2, 0], [0, 1]],
        "A": [[0, 0], [0, 0], [0, 0], [0, 0], [-1, 0], [0, -1]],
        "B": [[1, 0], [-1, 0], [0, 2], [0, -1], [1, 0], [0, 1]],
        "d": [4, -1, 6, -2, 0, 0],
    },
    "sampling": {
        "x_box": [[4, 3], [4.5, 3.5]],
        "y_box": [[1, 2], [4, 3]],
        "h": 0.25,
    },
    "candidates": [
        {"x": [4, 3], "y": [1, 2]},
        {"x": [5, 4], "y": [1, 2]},
    ],
}


def example_text() -> str:
    return json.dumps(BOX_EXAMPLE, indent=2) + "\n"


class Command(BaseCommand):
    help = "Write the annotated example problem file"

    def add_arguments(self, parser):
        parser.add_argument("path", nargs="?", help="Target file; prints to stdout when omitted")
        parser.add_argument("--force", action="store_true", help="Overwrite an existing file")

    def handle(self, *args, **options):
        text = example_text()
        if not options.get("path"):
            self.stdout.write(text, ending="")
            return
        path = Path(options["path"])
        if path.exists() and not options.get("force"):
            raise CommandError(f"{path} exists; pass --force to overwrite it", returncode=2)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        self.stdout.write(self.style.SUCCESS(f"Wrote example problem to {path}"))
