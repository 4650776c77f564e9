"""Regenerate the packaged color palette from sRGB anchor values.

The engine names cluster centroids by nearest-neighbor lookup in CIELAB,
so the palette ships Lab coordinates. Anchors live here in RGB because
that is how reference colors are usually quoted; run this script after
editing the table below:

    python scripts/make_palette.py > src/fashionpost/data/palette.tsv
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from fashionpost.color import rgb_to_lab  # noqa: E402

# name -> sRGB anchor
ANCHORS = {
    "white": (255, 255, 255),
    "ivory": (255, 255, 240),
    "cream": (255, 253, 208),
    "beige": (245, 245, 220),
    "tan": (210, 180, 140),
    "brown": (139, 69, 19),
    "maroon": (128, 0, 0),
    "red": (255, 0, 0),
    "crimson": (220, 20, 60),
    "pink": (255, 192, 203),
    "hot pink": (255, 105, 180),
    "peach": (255, 218, 185),
    "coral": (255, 127, 80),
    "orange": (255, 165, 0),
    "gold": (255, 215, 0),
    "yellow": (255, 255, 0),
    "mustard": (225, 173, 1),
    "olive": (128, 128, 0),
    "green": (0, 128, 0),
    "dark green": (0, 100, 0),
    "mint": (152, 255, 152),
    "teal": (0, 128, 128),
    "turquoise": (64, 224, 208),
    "sky blue": (135, 206, 235),
    "blue": (0, 0, 255),
    "royal blue": (65, 105, 225),
    "navy": (0, 0, 128),
    "purple": (128, 0, 128),
    "violet": (238, 130, 238),
    "lavender": (230, 230, 250),
    "gray": (128, 128, 128),
    "silver": (192, 192, 192),
    "charcoal": (54, 69, 79),
    "black": (0, 0, 0),
}


def main():
    print("# Garment color palette: name<TAB>L<TAB>a<TAB>b (CIELAB, D65)")
    print("# Generated by scripts/make_palette.py; edit anchors there, not here.")
    for name, rgb in ANCHORS.items():
        lab = rgb_to_lab(rgb)
        print(f"{name}\t{lab[0]:.2f}\t{lab[1]:.2f}\t{lab[2]:.2f}")


if __name__ == "__main__":
    main()
