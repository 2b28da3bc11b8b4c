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
from nirchem.nn import layers
from nirchem.nn.losses import HUBER_DELTA, HuberGradient, ModelException

TRAIN = 'train'
INFER = 'infer'

NOISE_STD = 0.01

# Parameter tensors, in the order they are initialized and serialized.
PARAM_NAMES = [
    'conv1_w', 'conv1_b',
    'conv2_w', 'conv2_b',
    'dense_w', 'dense_b',
    'output_w', 'output_b',
]

# Bounds of the tuning search; a hand-written spec may go outside them.
TUNING_RANGES = {
    'k1': (2, 40),
    'f1': (5, 150),
    'k2': (2, 40),
    'f2': (5, 150),
    'dense_units': (4, 1000),
    'dropout_rate': (0.0, 0.5),
}

class CnnSpec(object):
    def __init__(self, k1, f1, k2, f2, dense_units, input_len, dropout_rate = 0.0,
                 noise_std = NOISE_STD):
        self.k1 = int(k1)
        self.f1 = int(f1)
        self.k2 = int(k2)
        self.f2 = int(f2)
        self.dense_units = int(dense_units)
        self.input_len = int(input_len)
        self.dropout_rate = float(dropout_rate)
        self.noise_std = float(noise_std)
        self.validate()

    def validate(self):
        for name in ['k1', 'f1', 'k2', 'f2', 'dense_units', 'input_len']:
            if getattr(self, name) < 1:
                raise ModelException('{0} must be >= 1, got {1}'.format(name, getattr(self, name)))
        if not (0.0 <= self.dropout_rate <= 0.5):
            raise ModelException('dropout_rate must lie in [0, 0.5], got {0}'.format(
                self.dropout_rate))
        if not self.noise_std >= 0:
            raise ModelException('noise_std must be >= 0, got {0}'.format(self.noise_std))
        if self.f1 + self.f2 > self.input_len:
            raise ModelException(
                'filter sizes {0} + {1} do not fit an input of {2} wavelengths'.format(
                    self.f1, self.f2, self.input_len))

    def in_tuning_ranges(self):
        for name, (low, high) in TUNING_RANGES.items():
            if not (low <= getattr(self, name) <= high):
                return False
        return True

    @property
    def conv1_len(self):
        return self.input_len - self.f1 + 1

    @property
    def conv2_len(self):
        return self.conv1_len - self.f2 + 1

    @property
    def flatten_len(self):
        return self.k2 * self.conv2_len

    def shapes(self):
        return {
            'conv1_w': (self.k1, 1, self.f1),
            'conv1_b': (self.k1,),
            'conv2_w': (self.k2, self.k1, self.f2),
            'conv2_b': (self.k2,),
            'dense_w': (self.flatten_len, self.dense_units),
            'dense_b': (self.dense_units,),
            'output_w': (self.dense_units, 1),
            'output_b': (1,),
        }

    def to_json(self):
        return {
            'k1': self.k1,
            'f1': self.f1,
            'k2': self.k2,
            'f2': self.f2,
            'dense_units': self.dense_units,
            'input_len': self.input_len,
            'dropout_rate': self.dropout_rate,
            'noise_std': self.noise_std,
        }

    @staticmethod
    def from_json(obj):
        try:
            return CnnSpec(**obj)
        except TypeError as exn:
            raise ModelException('bad network spec: {0}'.format(exn))

    def __eq__(self, other):
        return isinstance(other, CnnSpec) and self.to_json() == other.to_json()

    def __ne__(self, other):
        return not (self == other)

    def __repr__(self):
        return 'CnnSpec({0})'.format(', '.join(
            '{0}={1}'.format(k, v) for k, v in sorted(self.to_json().items())))

class CnnModel(object):
    def __init__(self, spec, params, rng = None):
        self.spec = spec
        self.params = {}
        shapes = spec.shapes()
        for name in PARAM_NAMES:
            if name not in params:
                raise ModelException('missing parameter tensor {0}'.format(name))
            value = np.array(params[name], dtype = np.float64)
            if value.shape != shapes[name]:
                raise ModelException('parameter {0} has shape {1}, expected {2}'.format(
                    name, value.shape, shapes[name]))
            if not np.all(np.isfinite(value)):
                raise ModelException('parameter {0} is not finite'.format(name))
            self.params[name] = value

        # Draws for noise and dropout when no generator is passed to Forward.
        self.rng = rng

        # Bumped by every optimizer update; caches from an older step are stale.
        self.step = 0

# Glorot-uniform weights and zero biases; the output bias starts at |output_bias|.
def BuildModel(spec, seed = 0, output_bias = 0.0):
    spec.validate()
    rng = np.random.default_rng([seed, 0])
    fans = {
        'conv1_w': (spec.f1, spec.k1 * spec.f1),
        'conv2_w': (spec.k1 * spec.f2, spec.k2 * spec.f2),
        'dense_w': (spec.flatten_len, spec.dense_units),
        'output_w': (spec.dense_units, 1),
    }
    params = {}
    for name, shape in spec.shapes().items():
        if name in fans:
            params[name] = layers.GlorotUniform(rng, shape, *fans[name])
        else:
            params[name] = np.zeros(shape)
    params['output_b'][:] = output_bias
    return CnnModel(spec, params, np.random.default_rng([seed, 1]))

class ForwardCache(object):
    def __init__(self, mode, step):
        self.mode = mode
        self.step = step
        self.inputs = None
        self.conv1 = None
        self.conv2 = None
        self.dropout_mask = None
        self.hidden = None
        self.dense = None

def _CheckBatch(model, batch):
    batch = np.asarray(batch, dtype = np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != model.spec.input_len:
        raise ModelException('network expects {0} wavelengths per spectrum, got shape {1}'.format(
            model.spec.input_len, batch.shape))
    return batch

# Gaussian noise (train) -> conv + ReLU -> conv + ReLU -> flatten ->
# inverted dropout (train) -> dense -> scalar output.
def Forward(model, batch, mode = INFER, rng = None):
    batch = _CheckBatch(model, batch)
    spec = model.spec
    p = model.params
    cache = ForwardCache(mode, model.step)

    x = batch
    mask = None
    if mode == TRAIN:
        if rng is None:
            rng = model.rng
        if rng is None:
            raise ModelException('train-mode forward needs a random generator')
        if spec.noise_std > 0:
            x = x + rng.normal(0.0, spec.noise_std, size = x.shape)
        if spec.dropout_rate > 0:
            keep = rng.random((len(x), spec.flatten_len)) >= spec.dropout_rate
            mask = keep / (1.0 - spec.dropout_rate)
    elif mode != INFER:
        raise ModelException('unknown forward mode "{0}"'.format(mode))

    cache.inputs = x[:, None, :]
    cache.conv1 = layers.Relu(layers.ConvForward(cache.inputs, p['conv1_w'], p['conv1_b']))
    cache.conv2 = layers.Relu(layers.ConvForward(cache.conv1, p['conv2_w'], p['conv2_b']))
    hidden = cache.conv2.reshape(len(x), -1)
    if mask is not None:
        hidden = hidden * mask
    cache.dropout_mask = mask
    cache.hidden = hidden
    cache.dense = layers.DenseForward(hidden, p['dense_w'], p['dense_b'])
    out = layers.DenseForward(cache.dense, p['output_w'], p['output_b'])
    return out[:, 0], cache

# Gradients of the mean Huber loss for the batch behind |cache|. The noise and
# dropout draws recorded in the cache are reused as they were.
def Backward(model, cache, target, delta = HUBER_DELTA, predictions = None):
    if cache.mode != TRAIN:
        raise ModelException('backward needs the cache of a train-mode forward')
    if cache.step != model.step:
        raise ModelException('stale forward cache: computed at step {0}, model is at {1}'.format(
            cache.step, model.step))
    target = np.asarray(target, dtype = np.float64).ravel()
    if len(target) != len(cache.dense):
        raise ModelException('batch has {0} spectra but {1} targets'.format(
            len(cache.dense), len(target)))

    p = model.params
    if predictions is None:
        predictions = layers.DenseForward(cache.dense, p['output_w'], p['output_b'])[:, 0]
    dout = HuberGradient(predictions - target, delta)[:, None]

    grads = {}
    ddense, grads['output_w'], grads['output_b'] = layers.DenseBackward(
        cache.dense, p['output_w'], dout)
    dhidden, grads['dense_w'], grads['dense_b'] = layers.DenseBackward(
        cache.hidden, p['dense_w'], ddense)
    if cache.dropout_mask is not None:
        dhidden = dhidden * cache.dropout_mask
    dconv2 = dhidden.reshape(cache.conv2.shape) * (cache.conv2 > 0)
    dconv1, grads['conv2_w'], grads['conv2_b'] = layers.ConvBackward(
        cache.conv1, p['conv2_w'], dconv2)
    dconv1 = dconv1 * (cache.conv1 > 0)
    _, grads['conv1_w'], grads['conv1_b'] = layers.ConvBackward(
        cache.inputs, p['conv1_w'], dconv1)
    return grads

def Predict(model, absorbance, batch_size = 256):
    absorbance = np.asarray(absorbance, dtype = np.float64)
    if absorbance.ndim != 2 or absorbance.shape[1] != model.spec.input_len:
        raise ModelException('network expects {0} wavelengths per spectrum, got shape {1}'.format(
            model.spec.input_len, absorbance.shape))
    if batch_size < 1:
        raise ModelException('batch_size must be >= 1, got {0}'.format(batch_size))
    out = np.empty(len(absorbance))
    for start in range(0, len(absorbance), batch_size):
        out[start:start + batch_size], _ = Forward(model, absorbance[start:start + batch_size])
    return out
