"""Regenerate the reference rasters: ``python3 tests/golden/make_golden.py``.

Only rerun after an intentional change to the stability code; the
acceptance suite compares fresh rasters to these files byte for byte.
"""

from pathlib import Path

from ddisrk.randvars import THREE_POINT, TWO_POINT
from ddisrk.stability import rasterize
from ddisrk.tableau import catalogue

HERE = Path(__file__).parent
RESOLUTION = (120, 96)
CSV_RESOLUTION = (24, 16)


def golden_cases():
    for t in catalogue():
        modes = (THREE_POINT, TWO_POINT) if t.family == "order1" else (THREE_POINT,)
        for mode in modes:
            stem = f"{t.label.replace('(', '-').rstrip(')')}_{'3pt' if mode == THREE_POINT else '2pt'}"
            yield t, mode, stem


def render(t, mode, threads=1):
    pgm = rasterize(t, mode, resolution=RESOLUTION, threads=threads).to_pgm()
    csv = rasterize(t, mode, resolution=CSV_RESOLUTION, threads=threads).to_csv().encode()
    return pgm, csv


if __name__ == "__main__":
    for t, mode, stem in golden_cases():
        pgm, csv = render(t, mode)
        (HERE / f"{stem}.pgm").write_bytes(pgm)
        (HERE / f"{stem}.csv").write_bytes(csv)
        print(stem)
