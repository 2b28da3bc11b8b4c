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
import os
import numpy as np
import pandas as pd
from nirchem import util
from nirchem.nn.losses import HUBER_DELTA, Huber
from nirchem.nn.model import Forward

class ReportException(util.NirchemException):
    def __init__(self, *args, **kwargs):
        super(ReportException, self).__init__(*args, **kwargs)

SUBSETS = ['train', 'validation', 'test']

L1 = 'l1'
MAX = 'max'
STATISTICS = [L1, MAX]

METRICS_CSV = 'metrics.csv'
PREDICTIONS_CSV = 'predictions.csv'
ACTIVATIONS_CSV = 'activations.csv'

METRIC_COLUMNS = ['dataset', 'model', 'subset', 'n_samples', 'r2', 'rmse', 'huber']

class Metrics(object):
    def __init__(self, r2, rmse, huber):
        self.r2 = r2
        self.rmse = rmse
        self.huber = huber

    def __iter__(self):
        return iter((self.r2, self.rmse, self.huber))

    def __repr__(self):
        return 'Metrics(r2={0}, rmse={1}, huber={2})'.format(self.r2, self.rmse, self.huber)

# r2 is the squared Pearson correlation, so it ignores bias and scale of the
# predictions. It is None when either vector is constant.
def Evaluate(y_true, y_pred, huber_delta = HUBER_DELTA):
    y_true = np.asarray(y_true, dtype = np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype = np.float64).ravel()
    if len(y_true) != len(y_pred):
        raise ReportException('{0} reference values but {1} predictions'.format(
            len(y_true), len(y_pred)))
    if len(y_true) == 0:
        raise ReportException('cannot evaluate an empty subset')

    residuals = y_pred - y_true
    rmse = float(np.sqrt(np.mean(residuals * residuals)))
    huber = Huber(residuals, huber_delta)

    r2 = None
    dt = y_true - y_true.mean()
    dp = y_pred - y_pred.mean()
    denom = np.sqrt(np.sum(dt * dt) * np.sum(dp * dp))
    if denom > 0 and np.ptp(y_true) > 0 and np.ptp(y_pred) > 0:
        r2 = float(min((np.sum(dt * dp) / denom)**2, 1.0))
    return Metrics(r2, rmse, huber)

class SubsetResult(object):
    def __init__(self, name, sample_id, y_true, y_pred, metrics):
        self.name = name
        self.sample_id = np.asarray(sample_id, dtype = object)
        self.y_true = np.asarray(y_true, dtype = np.float64)
        self.y_pred = np.asarray(y_pred, dtype = np.float64)
        self.metrics = metrics

class EvalReport(object):
    def __init__(self, dataset, model_kind, huber_delta = HUBER_DELTA):
        self.dataset = dataset
        self.model_kind = model_kind
        self.huber_delta = huber_delta
        self.subsets = []

    def add(self, name, sample_id, y_true, y_pred):
        metrics = None
        if len(y_true):
            metrics = Evaluate(y_true, y_pred, self.huber_delta)
        result = SubsetResult(name, sample_id, y_true, y_pred, metrics)
        self.subsets.append(result)
        return result

    def get(self, name):
        for subset in self.subsets:
            if subset.name == name:
                return subset
        raise ReportException('report has no subset "{0}"'.format(name))

    def metrics_frame(self):
        rows = []
        for subset in self.subsets:
            if subset.metrics is None:
                continue
            rows.append({
                'dataset': self.dataset,
                'model': self.model_kind,
                'subset': subset.name,
                'n_samples': len(subset.y_true),
                'r2': np.nan if subset.metrics.r2 is None else subset.metrics.r2,
                'rmse': subset.metrics.rmse,
                'huber': subset.metrics.huber,
            })
        return pd.DataFrame(rows, columns = METRIC_COLUMNS)

    def predictions_frame(self):
        frames = []
        for subset in self.subsets:
            frames.append(pd.DataFrame({
                'subset': [subset.name] * len(subset.y_true),
                'sample_id': subset.sample_id,
                'y_true': subset.y_true,
                'y_pred': subset.y_pred,
            }))
        columns = ['subset', 'sample_id', 'y_true', 'y_pred']
        if not frames:
            return pd.DataFrame(columns = columns)
        return pd.concat(frames, ignore_index = True)[columns]

class ActivationMap(object):
    def __init__(self, layer, kernel, activation, score, offset):
        self.layer = layer
        self.kernel = kernel
        self.activation = activation
        self.score = score
        # Grid index of activation[0]'s receptive-field center; a half-integer
        # for even filter widths.
        self.offset = offset

    @property
    def label(self):
        return 'layer{0}_kernel{1}'.format(self.layer, self.kernel)

    def centers(self):
        return np.arange(len(self.activation)) + self.offset

# The |count| kernels of |layer| with the largest activity on |spectrum|, in
# descending score order with ties broken by kernel index.
def TopKernelActivations(model, spectrum, layer = 1, count = 5, statistic = L1):
    if layer not in (1, 2):
        raise ReportException('layer must be 1 or 2, got {0}'.format(layer))
    if count < 1:
        raise ReportException('count must be >= 1, got {0}'.format(count))
    if statistic not in STATISTICS:
        raise ReportException('unknown activity statistic "{0}"; expected one of {1}'.format(
            statistic, ', '.join(STATISTICS)))

    _, cache = Forward(model, np.asarray(spectrum, dtype = np.float64)[None, :])
    spec = model.spec
    if layer == 1:
        maps = cache.conv1[0]
        offset = (spec.f1 - 1) / 2.0
    else:
        maps = cache.conv2[0]
        offset = (spec.f1 - 1) / 2.0 + (spec.f2 - 1) / 2.0

    if statistic == L1:
        scores = maps.sum(axis = 1)
    else:
        scores = maps.max(axis = 1)
    order = np.lexsort((np.arange(len(scores)), -scores))[:count]
    return [ActivationMap(layer, int(k), maps[k].copy(), float(scores[k]), offset) for k in order]

# One row per grid wavelength; each map contributes a column holding its
# activation at the grid index nearest below its receptive-field center.
def ActivationFrame(grid, spectrum, maps):
    spectrum = np.asarray(spectrum, dtype = np.float64)
    if len(spectrum) != grid.count:
        raise ReportException('spectrum has {0} points, grid has {1}'.format(
            len(spectrum), grid.count))
    columns = {'wavelength_nm': grid.wavelengths, 'spectrum': spectrum}
    for item in maps:
        column = np.full(grid.count, np.nan)
        start = int(np.floor(item.offset))
        column[start:start + len(item.activation)] = item.activation
        columns[item.label] = column
    return pd.DataFrame(columns)

def _WriteFrame(frame, path):
    try:
        frame.to_csv(path, index = False, float_format = util.TABLE_FLOAT_FORMAT,
                     lineterminator = '\n')
    except OSError as exn:
        raise ReportException('could not write {0}: {1}'.format(path, exn.strerror))
    return path

def ExportActivations(path, grid, spectrum, maps):
    return _WriteFrame(ActivationFrame(grid, spectrum, maps), path)

# Writes metrics.csv and predictions.csv into |directory|, plus
# activations.csv when |activations| is a (grid, spectrum, maps) triple.
def ExportReport(report, directory, activations = None):
    util.MakeDirs(directory)
    paths = [
        _WriteFrame(report.metrics_frame(), os.path.join(directory, METRICS_CSV)),
        _WriteFrame(report.predictions_frame(), os.path.join(directory, PREDICTIONS_CSV)),
    ]
    if activations is not None:
        grid, spectrum, maps = activations
        paths.append(ExportActivations(os.path.join(directory, ACTIVATIONS_CSV), grid, spectrum,
                                       maps))
    return paths

# Reads a metrics CSV back as {subset: Metrics}.
def LoadMetricsCsv(path):
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exn:
        raise ReportException('could not read {0}: {1}'.format(path, exn))
    missing = [c for c in METRIC_COLUMNS if c not in frame.columns]
    if missing:
        raise ReportException('{0} is missing columns {1}'.format(path, ', '.join(missing)))
    out = {}
    for row in frame.itertuples(index = False):
        r2 = None if pd.isna(row.r2) else float(row.r2)
        out[row.subset] = Metrics(r2, float(row.rmse), float(row.huber))
    return out
