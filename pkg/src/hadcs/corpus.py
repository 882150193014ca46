"""Binary A-Z letter corpus rendered from an embedded 7x9 block font."""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .channel import Image

GLYPH_ROWS = 9
GLYPH_COLS = 7

# 9 rows x 7 cols, '#' = open (transmitting) pixel
_FONT = {
    "A": ["..###..", ".##.##.", "##...##", "##...##", "#######", "##...##", "##...##", "##...##", "##...##"],
    "B": ["######.", "##...##", "##...##", "##..##.", "#####..", "##..##.", "##...##", "##...##", "######."],
    "C": [".#####.", "##...##", "##.....", "##.....", "##.....", "##.....", "##.....", "##...##", ".#####."],
    "D": ["#####..", "##..##.", "##...##", "##...##", "##...##", "##...##", "##...##", "##..##.", "#####.."],
    "E": ["#######", "##.....", "##.....", "##.....", "######.", "##.....", "##.....", "##.....", "#######"],
    "F": ["#######", "##.....", "##.....", "##.....", "######.", "##.....", "##.....", "##.....", "##....."],
    "G": [".#####.", "##...##", "##.....", "##.....", "##.####", "##...##", "##...##", "##...##", ".#####."],
    "H": ["##...##", "##...##", "##...##", "##...##", "#######", "##...##", "##...##", "##...##", "##...##"],
    "I": ["..###..", "...#...", "...#...", "...#...", "...#...", "...#...", "...#...", "...#...", "..###.."],
    "J": ["....###", ".....#.", ".....#.", ".....#.", ".....#.", ".....#.", "#....#.", "##..##.", ".####.."],
    "K": ["##...##", "##..##.", "##.##..", "####...", "###....", "####...", "##.##..", "##..##.", "##...##"],
    "L": ["##.....", "##.....", "##.....", "##.....", "##.....", "##.....", "##.....", "##.....", "#######"],
    "M": ["#.....#", "##...##", "###.###", "##.#.##", "##...##", "##...##", "##...##", "##...##", "##...##"],
    "N": ["##...##", "###..##", "###..##", "##.#.##", "##.#.##", "##..###", "##..###", "##...##", "##...##"],
    "O": [".#####.", "##...##", "##...##", "##...##", "##...##", "##...##", "##...##", "##...##", ".#####."],
    "P": ["######.", "##...##", "##...##", "##...##", "######.", "##.....", "##.....", "##.....", "##....."],
    "Q": [".#####.", "##...##", "##...##", "##...##", "##...##", "##.#.##", "##..##.", "##..###", ".####.#"],
    "R": ["######.", "##...##", "##...##", "##...##", "######.", "##.##..", "##..##.", "##...##", "##...##"],
    "S": [".#####.", "##...##", "##.....", ".##....", "..###..", "....##.", ".....##", "##...##", ".#####."],
    "T": ["#######", "...#...", "...#...", "...#...", "...#...", "...#...", "...#...", "...#...", "...#..."],
    "U": ["##...##", "##...##", "##...##", "##...##", "##...##", "##...##", "##...##", "##...##", ".#####."],
    "V": ["##...##", "##...##", "##...##", "##...##", "##...##", ".##.##.", ".##.##.", "..###..", "...#..."],
    "W": ["##...##", "##...##", "##...##", "##...##", "##.#.##", "##.#.##", "###.###", "##...##", "#.....#"],
    "X": ["##...##", "##...##", ".##.##.", "..###..", "...#...", "..###..", ".##.##.", "##...##", "##...##"],
    "Y": ["##...##", "##...##", ".##.##.", "..###..", "...#...", "...#...", "...#...", "...#...", "...#..."],
    "Z": ["#######", ".....##", "....##.", "...##..", "..##...", ".##....", "##.....", "##.....", "#######"],
}

LETTERS = string.ascii_uppercase


@dataclass(frozen=True, eq=False)
class Glyph:
    char: str
    bitmap: np.ndarray

    @property
    def fill_fraction(self) -> float:
        return float(self.bitmap.mean())


def glyph(c: str) -> Glyph:
    if c not in _FONT:
        raise ValueError(f"unsupported character {c!r}; expected one of A-Z")
    bm = np.array([[ch == "#" for ch in row] for row in _FONT[c]], dtype=np.uint8)
    return Glyph(c, bm)


def render_letter(c: str, p: int = 41, q: int = 43) -> Image:
    """Nearest-neighbour upscale of the glyph into a ``p x q`` frame.

    The glyph fills the ``(p-2) x (q-2)`` interior; the outer one-pixel
    ring stays blank.
    """
    g = glyph(c)
    if p - 2 < GLYPH_ROWS or q - 2 < GLYPH_COLS:
        raise ValueError(f"frame {p}x{q} too small for a {GLYPH_ROWS}x{GLYPH_COLS} glyph")
    h, w = p - 2, q - 2
    # pixel centres mapped back onto the glyph grid
    ri = ((np.arange(h) + 0.5) * GLYPH_ROWS / h).astype(int)
    ci = ((np.arange(w) + 0.5) * GLYPH_COLS / w).astype(int)
    img = np.zeros((p, q))
    img[1:-1, 1:-1] = g.bitmap[np.ix_(ri, ci)]
    return Image(img, c)


def full_corpus(p: int = 41, q: int = 43) -> list[Image]:
    return [render_letter(c, p, q) for c in LETTERS]


def fill_fraction(img: Image) -> float:
    return float(np.mean(img.pixels > 0.5))


def save_pgm(img: Image, path, maxval: int = 255) -> None:
    """Write a plain (P2) PGM; pixel values are clipped to [0, 1] first."""
    px = np.rint(np.clip(img.pixels, 0.0, 1.0) * maxval).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{img.q} {img.p}\n{maxval}\n")
        for row in px:
            fh.write(" ".join(str(v) for v in row) + "\n")


def load_pgm(path) -> Image:
    with open(path) as fh:
        toks = [t for line in fh for t in line.split("#", 1)[0].split()]
    if toks[0] != "P2":
        raise ValueError("only plain P2 PGM is supported")
    q, p, maxval = int(toks[1]), int(toks[2]), int(toks[3])
    px = np.array([int(t) for t in toks[4 : 4 + p * q]], dtype=float).reshape(p, q)
    return Image(px / maxval)


def write_manifest(images: list[Image], path) -> None:
    with open(path, "w") as fh:
        fh.write("letter,fill_fraction\n")
        for img in images:
            fh.write(f"{img.label},{fill_fraction(img):.6f}\n")


def augment(images: list[Image], radius: int = 1) -> list[Image]:
    """Each image plus its translations by up to ``radius`` pixels.

    Shifts are cyclic, which is harmless here because the border ring is
    blank. Order: image-major, then dy, then dx.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius and any(img.pixels[:radius].any() or img.pixels[-radius:].any() or img.pixels[:, :radius].any() or img.pixels[:, -radius:].any() for img in images):
        raise ValueError(f"images need a blank border of width {radius} to translate")
    out = []
    offs = range(-radius, radius + 1)
    for img in images:
        for dy in offs:
            for dx in offs:
                out.append(Image(np.roll(img.pixels, (dy, dx), axis=(0, 1)), img.label))
    return out
