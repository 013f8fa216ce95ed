"""Hand-built model fixtures with analytically known behavior."""

import numpy as np

from ensemblecam import model as mm


def passthrough_model(w_live=1.0, b_live=0.0, w_spoof=0.0, b_spoof=0.0):
    """SmallCnn whose logits are an affine function of the mean of image channel 0.

    conv1/conv2/conv3 each pass channel 0 through untouched (center-tap
    kernels), so the target activation in channel 0 is the twice-pooled
    image channel and the GAP equals its spatial mean m.  Logits are
    (w_live*m + b_live, w_spoof*m + b_spoof), which makes softmax
    arithmetic checkable by hand.  Requires non-negative images (relu is
    then the identity along the path).
    """
    params = {name: np.zeros(shape) for name, shape in mm.PARAM_SHAPES}
    params["conv1.w"][0, 0, 1, 1] = 1.0
    params["conv2.w"][0, 0, 1, 1] = 1.0
    params["conv3.w"][0, 0, 1, 1] = 1.0
    params["fc.w"][0, 0] = w_live
    params["fc.w"][1, 0] = w_spoof
    params["fc.b"][0] = b_live
    params["fc.b"][1] = b_spoof
    return mm.SmallCnn(params)


def const_image(value):
    return np.full((1, 3, 64, 64), float(value))
