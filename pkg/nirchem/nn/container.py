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
import json
import struct
import numpy as np
from nirchem import util
from nirchem.nn.losses import ModelException
from nirchem.nn.model import PARAM_NAMES, CnnModel, CnnSpec
from nirchem.nn.optimizer import AdadeltaState

# Layout:
#   8 bytes   magic
#   uint32    format version (little endian)
#   uint32    header length in bytes
#   header    canonical JSON: spec, step, tensor names and shapes
#   payload   every tensor as little-endian float64, in header order
MAGIC = b'NIRCNN\x00\x1a'
VERSION = 1

_PREFIX = struct.Struct('<8sII')

def _TensorList(model, state):
    tensors = [(name, model.params[name]) for name in PARAM_NAMES]
    if state is not None:
        tensors += [('grad_sq/' + name, state.grad_sq[name]) for name in PARAM_NAMES]
        tensors += [('update_sq/' + name, state.update_sq[name]) for name in PARAM_NAMES]
    return tensors

def EncodeModel(model, state = None):
    tensors = _TensorList(model, state)
    header = {
        'spec': model.spec.to_json(),
        'step': model.step,
        'tensors': [{'name': name, 'shape': list(value.shape)} for name, value in tensors],
    }
    header_bytes = util.CanonicalJson(header).encode('utf-8')
    chunks = [_PREFIX.pack(MAGIC, VERSION, len(header_bytes)), header_bytes]
    for _, value in tensors:
        chunks.append(np.ascontiguousarray(value, dtype = '<f8').tobytes())
    return b''.join(chunks)

# Returns (model, AdadeltaState or None).
def DecodeModel(data):
    if len(data) < _PREFIX.size:
        raise ModelException('model file is truncated')
    magic, version, header_len = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelException('not a model file (bad magic bytes)')
    if version != VERSION:
        raise ModelException('unsupported model file version {0}'.format(version))

    offset = _PREFIX.size
    try:
        header = json.loads(data[offset:offset + header_len].decode('utf-8'))
    except ValueError as exn:
        raise ModelException('corrupt model header: {0}'.format(exn))
    offset += header_len

    tensors = {}
    for entry in header['tensors']:
        shape = tuple(entry['shape'])
        count = int(np.prod(shape, dtype = np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise ModelException('model file is truncated in tensor {0}'.format(entry['name']))
        tensors[entry['name']] = np.frombuffer(data, dtype = '<f8', count = count,
                                               offset = offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(data):
        raise ModelException('model file has {0} trailing bytes'.format(len(data) - offset))

    model = CnnModel(CnnSpec.from_json(header['spec']), tensors)
    model.step = int(header['step'])
    state = None
    if 'grad_sq/' + PARAM_NAMES[0] in tensors:
        state = AdadeltaState({name: tensors['grad_sq/' + name] for name in PARAM_NAMES},
                              {name: tensors['update_sq/' + name] for name in PARAM_NAMES})
    return model, state

def SaveModel(path, model, state = None):
    try:
        with open(path, 'wb') as fp:
            fp.write(EncodeModel(model, state))
    except OSError as exn:
        raise ModelException('could not write {0}: {1}'.format(path, exn.strerror))

def LoadModel(path):
    try:
        with open(path, 'rb') as fp:
            data = fp.read()
    except OSError as exn:
        raise ModelException('could not read {0}: {1}'.format(path, exn.strerror))
    return DecodeModel(data)
