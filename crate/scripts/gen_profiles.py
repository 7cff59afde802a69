"""Writes the bundled summer-day profile table for the five player buildings."""
import math
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates/core/data/profiles.csv"

BUILDINGS = ["ritchie", "law", "academic", "education", "chemistry"]


def t_out(h):
    # daily low 64 F near 05:00, high 94 F near 15:00
    return round(79.0 - 15.0 * math.cos(2 * math.pi * (h - 3) / 24.0 + 0.5), 1)


def office(h, peak, night):
    if 8 <= h <= 17:
        return peak
    if h in (7, 18, 19):
        return peak * 0.4
    if h in (20, 21):
        return peak * 0.15
    return night


def occupancy(name, h):
    if name == "ritchie":
        if h in (12, 13):
            return 2500
        if h == 14:
            return 900
        if 8 <= h <= 21:
            return 450
        return 40
    if name == "law":
        return office(h, 420, 10)
    if name == "academic":
        return office(h, 650 if h in (10, 11, 14, 15) else 520, 5)
    if name == "education":
        return office(h, 300, 5)
    if name == "chemistry":
        return 240 if 7 <= h <= 19 else 25
    raise ValueError(name)


BASE_KW = {"ritchie": 120.0, "law": 70.0, "academic": 55.0, "education": 40.0, "chemistry": 95.0}
PER_PERSON_KW = {"ritchie": 0.03, "law": 0.08, "academic": 0.06, "education": 0.07, "chemistry": 0.15}


def main():
    cols = ["hour", "t_out_f"]
    for b in BUILDINGS:
        cols += [f"{b}_occupancy", f"{b}_baseline_kw"]
    lines = [",".join(cols)]
    for h in range(24):
        row = [str(h), f"{t_out(h):.1f}"]
        for b in BUILDINGS:
            occ = occupancy(b, h)
            base = BASE_KW[b] + PER_PERSON_KW[b] * occ
            row += [f"{occ:.0f}", f"{base:.2f}"]
        lines.append(",".join(row))
    OUT.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
