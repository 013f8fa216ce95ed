#!/usr/bin/env python3
"""Regenerate the frozen rendering fixtures under tests/golden/.

Run only when the colormap or overlay conventions intentionally change;
review the refreshed images before committing them.
"""

from pathlib import Path

import numpy as np

from ensemblecam.cam import Cam, RES_INPUT, NORM_UNIT, apply_threshold
from ensemblecam.synthdata import SynthSpec, render_image, write_image
from ensemblecam.viz import colormap, comparison_panel, overlay
from PIL import Image

OUT = Path(__file__).resolve().parent.parent / "tests" / "golden"


def ramp_cam(h=8, w=8):
    return Cam(np.linspace(0.0, 1.0, h * w).reshape(h, w), RES_INPUT, NORM_UNIT)


def fixture_image():
    return render_image(SynthSpec(per_class=1, seed=123), "spoof", 0)


def fixture_cam():
    yy, xx = np.mgrid[0:64, 0:64] / 63.0
    v = np.exp(-((yy - 0.4) ** 2 + (xx - 0.6) ** 2) / 0.05)
    v = (v - v.min()) / (v.max() - v.min())
    return Cam(v, RES_INPUT, NORM_UNIT)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    Image.fromarray(colormap(ramp_cam()), mode="RGB").save(OUT / "colormap_ramp_8x8.png")
    img = fixture_image()
    cam = fixture_cam()
    write_image(overlay(img, cam, alpha=0.5), OUT / "overlay_alpha05.png")
    write_image(overlay(img, apply_threshold(cam), alpha=0.5),
                OUT / "overlay_thresholded.png")
    write_image(comparison_panel(img, [("cam", cam), ("thresholded", apply_threshold(cam))]),
                OUT / "panel_three.png")
    print(f"wrote goldens to {OUT}")


if __name__ == "__main__":
    main()
