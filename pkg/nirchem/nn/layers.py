# vim: set sts=4 ts=8 sw=4 tw=99 et:
#
# This file is part of nirchem.
#
# nirchem is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# nirchem is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with nirchem. If not, see <http://www.gnu.org/licenses/>.
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Valid, stride-1 cross-correlation.
#   x: (batch, channels_in, length)
#   weights: (kernels, channels_in, width)
# Returns (batch, kernels, length - width + 1).
def ConvForward(x, weights, bias):
    windows = sliding_window_view(x, weights.shape[2], axis = 2)
    out = np.tensordot(windows, weights, axes = ([1, 3], [1, 2]))
    return out.transpose(0, 2, 1) + bias[None, :, None]

# Gradients of a ConvForward call given dL/dout. Returns (dx, dweights, dbias).
def ConvBackward(x, weights, dout):
    width = weights.shape[2]
    windows = sliding_window_view(x, width, axis = 2)
    dweights = np.tensordot(dout, windows, axes = ([0, 2], [0, 2]))
    dbias = dout.sum(axis = (0, 2))

    # Full correlation of the output gradient with the flipped kernel.
    padded = np.pad(dout, ((0, 0), (0, 0), (width - 1, width - 1)))
    pad_windows = sliding_window_view(padded, width, axis = 2)
    dx = np.tensordot(pad_windows, weights[:, :, ::-1], axes = ([1, 3], [0, 2]))
    return dx.transpose(0, 2, 1), dweights, dbias

def Relu(x):
    return np.maximum(x, 0.0)

def DenseForward(x, weights, bias):
    return x @ weights + bias

def DenseBackward(x, weights, dout):
    return dout @ weights.T, x.T @ dout, dout.sum(axis = 0)

# Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
def GlorotUniform(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size = shape)
