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
from nirchem import util
from nirchem.nn.model import TUNING_RANGES

class HyperoptException(util.NirchemException):
    def __init__(self, *args, **kwargs):
        super(HyperoptException, self).__init__(*args, **kwargs)

INTEGER = 'integer'
FLOAT = 'float'

class Dimension(object):
    def __init__(self, name, kind, low, high):
        self.name = name
        self.kind = kind
        self.low = low
        self.high = high
        if kind not in (INTEGER, FLOAT):
            raise HyperoptException('dimension {0}: unknown kind "{1}"'.format(name, kind))
        if not low < high:
            raise HyperoptException('dimension {0}: low {1} is not below high {2}'.format(
                name, low, high))
        if kind == INTEGER and (int(low) != low or int(high) != high):
            raise HyperoptException('integer dimension {0} has non-integer bounds'.format(name))

    def __repr__(self):
        return 'Dimension({0}, {1}, {2}, {3})'.format(self.name, self.kind, self.low, self.high)

# Points are float vectors in dimension order; integer coordinates are only
# rounded when a point is about to be evaluated.
class SearchSpace(object):
    def __init__(self, dimensions):
        self.dimensions = list(dimensions)
        if not self.dimensions:
            raise HyperoptException('search space has no dimensions')
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise HyperoptException('search space has duplicate dimension names')
        self.bounds = np.array([[d.low, d.high] for d in self.dimensions], dtype = np.float64)
        self.integer_mask = np.array([d.kind == INTEGER for d in self.dimensions])

    def __len__(self):
        return len(self.dimensions)

    @property
    def names(self):
        return [d.name for d in self.dimensions]

    def clip(self, x):
        return np.clip(np.asarray(x, dtype = np.float64), self.bounds[:, 0], self.bounds[:, 1])

    def round(self, x):
        x = self.clip(x)
        return np.where(self.integer_mask, np.round(x), x)

    def contains(self, x):
        x = np.asarray(x, dtype = np.float64)
        if x.shape != (len(self),) or not np.all(np.isfinite(x)):
            return False
        inside = np.all(x >= self.bounds[:, 0]) and np.all(x <= self.bounds[:, 1])
        return bool(inside and np.all(x[self.integer_mask] == np.round(x[self.integer_mask])))

    # Integer coordinates are drawn uniformly over their closed range.
    def sample(self, rng, count = None):
        size = (len(self),) if count is None else (count, len(self))
        low, high = self.bounds[:, 0], self.bounds[:, 1]
        whole = rng.integers(np.where(self.integer_mask, low, 0).astype(np.int64),
                             np.where(self.integer_mask, high + 1, 1).astype(np.int64),
                             size = size)
        return np.where(self.integer_mask, whole, rng.uniform(low, high, size = size))

    def to_unit(self, x):
        return (np.asarray(x, dtype = np.float64) - self.bounds[:, 0]) / (
            self.bounds[:, 1] - self.bounds[:, 0])

    def from_unit(self, u):
        return self.bounds[:, 0] + np.asarray(u, dtype = np.float64) * (
            self.bounds[:, 1] - self.bounds[:, 0])

    def to_params(self, x):
        params = {}
        for d, value in zip(self.dimensions, self.round(x)):
            params[d.name] = int(value) if d.kind == INTEGER else float(value)
        return params

    def from_params(self, params):
        try:
            return np.array([params[name] for name in self.names], dtype = np.float64)
        except KeyError as exn:
            raise HyperoptException('parameter set is missing {0}'.format(exn))

CNN_DIMENSIONS = ['k1', 'f1', 'k2', 'f2', 'dropout_rate', 'dense_units']

def CnnSearchSpace():
    dimensions = []
    for name in CNN_DIMENSIONS:
        low, high = TUNING_RANGES[name]
        kind = FLOAT if isinstance(low, float) else INTEGER
        dimensions.append(Dimension(name, kind, low, high))
    return SearchSpace(dimensions)
