#!/usr/bin/env python3
"""Straight-line reference for the 192-bit perceptual hash.

Recomputes golden vectors for the fixture images used in the Rust tests.
Fixture pixels come from a 64-bit LCG so both sides can regenerate them.
Downsampling uses exact fractional pixel/cell overlaps.
"""
from fractions import Fraction

MASK = (1 << 64) - 1


class Lcg:
    def __init__(self, seed):
        self.s = seed & MASK

    def next(self):
        self.s = (self.s * 6364136223846793005 + 1442695040888963407) & MASK
        return self.s

    def byte(self):
        return self.next() >> 56


def noise(w, h, seed):
    g = Lcg(seed)
    return w, h, [[(g.byte(), g.byte(), g.byte()) for x in range(w)] for y in range(h)]


def halves16():
    px = [[(0, 0, 0) if x < 8 else (255, 255, 255) for x in range(16)] for y in range(16)]
    return 16, 16, px


def gradient():
    w, h = 37, 23
    px = [[((x * 7 + y * 3) % 256, (x * x + y) % 256, (x * y) % 256) for x in range(w)] for y in range(h)]
    return w, h, px


def blocks():
    w, h = 29, 41
    g = Lcg(3)
    px = []
    for y in range(h):
        row = []
        for x in range(w):
            r = 255 if ((x // 5 + y // 7) % 2 == 0) else 0
            row.append((r, (x * 11) % 256, g.byte()))
        px.append(row)
    return w, h, px


def salt_pepper(img, seed, percent):
    w, h, px = img
    g = Lcg(seed)
    out = []
    for y in range(h):
        row = []
        for x in range(w):
            r = (g.next() >> 33) % 100
            if r < percent:
                v = 255 if (g.next() >> 63) == 1 else 0
                row.append((v, v, v))
            else:
                row.append(px[y][x])
        out.append(row)
    return w, h, out


def overlap(a0, a1, b0, b1):
    lo = max(a0, b0)
    hi = min(a1, b1)
    return hi - lo if hi > lo else Fraction(0)


def cells(w, h, plane):
    out = []
    for cy in range(8):
        y0, y1 = Fraction(cy * h, 8), Fraction((cy + 1) * h, 8)
        for cx in range(8):
            x0, x1 = Fraction(cx * w, 8), Fraction((cx + 1) * w, 8)
            total = Fraction(0)
            for y in range(h):
                wy = overlap(Fraction(y), Fraction(y + 1), y0, y1)
                if wy == 0:
                    continue
                for x in range(w):
                    wx = overlap(Fraction(x), Fraction(x + 1), x0, x1)
                    if wx == 0:
                        continue
                    total += wx * wy * plane[y][x]
            out.append(total / ((x1 - x0) * (y1 - y0)))
    return out


def bits64(w, h, plane):
    c = cells(w, h, plane)
    mean = sum(c) / 64
    word = 0
    for k, v in enumerate(c):
        if v >= mean:
            word |= 1 << (63 - k)
    return word


def phash(img):
    w, h, px = img
    words = [bits64(w, h, [[p[ch] for p in row] for row in px]) for ch in range(3)]
    gray = [[int(Fraction(299 * p[0] + 587 * p[1] + 114 * p[2], 1000) + Fraction(1, 2)) for p in row] for row in px]
    gk = bits64(w, h, gray)
    return "%016x%016x%016x" % tuple(words), "%016x" % gk


def hamming(a, b):
    return bin(int(a, 16) ^ int(b, 16)).count("1")


if __name__ == "__main__":
    fixtures = {
        "noise64": noise(64, 64, 1),
        "halves16": halves16(),
        "gradient37x23": gradient(),
        "noise100x60": noise(100, 60, 7),
        "blocks29x41": blocks(),
    }
    for name, img in fixtures.items():
        bits, gk = phash(img)
        print(name, bits, gk)
    sp = salt_pepper(fixtures["noise64"], 99, 2)
    bits, gk = phash(sp)
    print("noise64_saltpepper", bits, gk, hamming(bits, phash(fixtures["noise64"])[0]))
