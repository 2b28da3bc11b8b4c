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
import csv
import math
import numpy as np
import pandas as pd
from nirchem import util

class DatasetException(util.NirchemException):
    def __init__(self, *args, **kwargs):
        super(DatasetException, self).__init__(*args, **kwargs)

ID_COLUMNS = ['sample_id', 'reference_mg', 'instrument']
INSTRUMENTS = (1, 2)

# Relative tolerance on wavelength spacing when a grid is read back from text.
SPACING_TOLERANCE = 1e-9

class WavelengthGrid(object):
    def __init__(self, start_nm, step_nm, count):
        self.start_nm = float(start_nm)
        self.step_nm = float(step_nm)
        self.count = int(count)
        if not (self.step_nm > 0) or not math.isfinite(self.step_nm):
            raise DatasetException('wavelength step must be positive, got {0}'.format(step_nm))
        if not math.isfinite(self.start_nm):
            raise DatasetException('wavelength start must be finite')
        if self.count < 2:
            raise DatasetException('a wavelength grid needs at least 2 points, got {0}'.format(
                count))

    @property
    def wavelengths(self):
        return self.start_nm + self.step_nm * np.arange(self.count)

    @property
    def stop_nm(self):
        return self.start_nm + self.step_nm * (self.count - 1)

    def __eq__(self, other):
        if not isinstance(other, WavelengthGrid):
            return False
        if self.count != other.count:
            return False
        scale = max(abs(self.step_nm), abs(other.step_nm))
        return (abs(self.step_nm - other.step_nm) <= SPACING_TOLERANCE * scale and
                abs(self.start_nm - other.start_nm) <= SPACING_TOLERANCE * scale)

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return 'WavelengthGrid({0:g}..{1:g} nm, step {2:g}, {3} points)'.format(
            self.start_nm, self.stop_nm, self.step_nm, self.count)

    def to_json(self):
        return {'start_nm': self.start_nm, 'step_nm': self.step_nm, 'count': self.count}

    @staticmethod
    def from_json(obj):
        return WavelengthGrid(obj['start_nm'], obj['step_nm'], obj['count'])

    # Builds a grid from explicit wavelengths, which must be increasing and
    # equally spaced. |names| are used in error messages (CSV header text).
    @staticmethod
    def FromWavelengths(values, names = None):
        values = np.asarray(values, dtype = np.float64)
        if names is None:
            names = ['{0:g}'.format(value) for value in values]
        if len(values) < 2:
            raise DatasetException('a wavelength grid needs at least 2 points')
        diffs = np.diff(values)
        for i, diff in enumerate(diffs):
            if not diff > 0:
                raise DatasetException(
                    'wavelengths must increase: column "{0}" follows "{1}"'.format(
                        names[i + 1], names[i]))
        for i, diff in enumerate(diffs):
            if abs(diff - diffs[0]) > SPACING_TOLERANCE * diffs[0]:
                raise DatasetException(
                    'non-uniform wavelength spacing at column "{0}" ({1:g} nm, expected {2:g})'
                    .format(names[i + 1], diff, diffs[0]))
        step = (values[-1] - values[0]) / (len(values) - 1)
        return WavelengthGrid(values[0], step, len(values))

def _Frozen(array):
    array.setflags(write = False)
    return array

# A matrix of spectra on one grid, with assay values and instrument labels.
# Arrays are copied on construction and made read-only.
class SpectraSet(object):
    def __init__(self, grid, absorbance, reference_mg, instrument, sample_id):
        self.grid = grid
        self.absorbance = _Frozen(np.array(absorbance, dtype = np.float64))
        self.reference_mg = _Frozen(np.array(reference_mg, dtype = np.float64))
        self.instrument = _Frozen(np.array(instrument, dtype = np.int64))
        self.sample_id = _Frozen(np.array([str(s) for s in sample_id], dtype = object))
        self.validate()

    def validate(self):
        n = len(self.reference_mg)
        if n < 1:
            raise DatasetException('no samples')
        if self.absorbance.ndim != 2 or self.absorbance.shape != (n, self.grid.count):
            raise DatasetException('absorbance matrix has shape {0}, expected ({1}, {2})'.format(
                self.absorbance.shape, n, self.grid.count))
        if len(self.instrument) != n or len(self.sample_id) != n:
            raise DatasetException('sample vectors have mismatched lengths')
        bad = ~np.isfinite(self.absorbance)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise DatasetException('non-finite absorbance for sample "{0}" at {1:g} nm'.format(
                self.sample_id[row], self.grid.wavelengths[col]))
        bad = ~(np.isfinite(self.reference_mg) & (self.reference_mg > 0))
        if bad.any():
            row = np.flatnonzero(bad)[0]
            raise DatasetException('reference value for sample "{0}" must be positive, got {1}'
                                   .format(self.sample_id[row], self.reference_mg[row]))
        bad = ~np.isin(self.instrument, INSTRUMENTS)
        if bad.any():
            row = np.flatnonzero(bad)[0]
            raise DatasetException('instrument for sample "{0}" must be 1 or 2, got {1}'.format(
                self.sample_id[row], self.instrument[row]))
        if len(set(self.sample_id)) != n:
            seen = set()
            for name in self.sample_id:
                if name in seen:
                    raise DatasetException('duplicate sample_id "{0}"'.format(name))
                seen.add(name)

    def __len__(self):
        return len(self.reference_mg)

    @property
    def n_samples(self):
        return len(self.reference_mg)

    def subset(self, indices):
        indices = np.asarray(indices, dtype = np.int64)
        return SpectraSet(self.grid, self.absorbance[indices], self.reference_mg[indices],
                          self.instrument[indices], self.sample_id[indices])

    def with_absorbance(self, absorbance, grid = None):
        return SpectraSet(grid or self.grid, absorbance, self.reference_mg, self.instrument,
                          self.sample_id)

    # Global statistics over every absorbance entry (population std).
    def global_mean(self):
        return float(np.mean(self.absorbance))

    def global_std(self):
        return float(np.std(self.absorbance))

    @staticmethod
    def Concat(sets):
        sets = list(sets)
        if not sets:
            raise DatasetException('nothing to concatenate')
        grid = sets[0].grid
        for other in sets[1:]:
            if other.grid != grid:
                raise DatasetException('cannot concatenate sets on different grids: {0} vs {1}'
                                       .format(grid, other.grid))
        return SpectraSet(grid, np.vstack([s.absorbance for s in sets]),
                          np.concatenate([s.reference_mg for s in sets]),
                          np.concatenate([s.instrument for s in sets]),
                          np.concatenate([s.sample_id for s in sets]))

class DataSplits(object):
    def __init__(self, train, validation, test, provenance):
        self.train = train
        self.validation = validation
        self.test = test
        self.provenance = provenance

        names = [('train', train), ('validation', validation), ('test', test)]
        seen = {}
        for name, subset in names:
            for sample_id in subset.sample_id:
                if sample_id in seen:
                    raise DatasetException('sample "{0}" is in both {1} and {2}'.format(
                        sample_id, seen[sample_id], name))
                seen[sample_id] = name

    def sizes(self):
        return {
            'train': len(self.train),
            'validation': len(self.validation),
            'test': len(self.test),
        }

    def to_json(self):
        obj = dict(self.provenance)
        obj['sizes'] = self.sizes()
        return obj

class SyntheticConfig(object):
    def __init__(self,
                 n_samples = 500,
                 n_peaks = 6,
                 concentration_range_mg = (150.0, 250.0),
                 scatter_amplitudes = (0.05, 0.05, 0.05),
                 noise_std = 0.001,
                 seed = 0,
                 start_nm = 600.0,
                 step_nm = 2.0,
                 count = 600,
                 background_scale = 1.0,
                 instrument2_fraction = 0.3,
                 instrument_offset = 0.02,
                 instrument_slope = 0.01):
        self.n_samples = int(n_samples)
        self.n_peaks = int(n_peaks)
        self.concentration_range_mg = tuple(float(v) for v in concentration_range_mg)
        self.scatter_amplitudes = tuple(float(v) for v in scatter_amplitudes)
        self.noise_std = float(noise_std)
        self.seed = int(seed)
        self.start_nm = float(start_nm)
        self.step_nm = float(step_nm)
        self.count = int(count)
        self.background_scale = float(background_scale)
        self.instrument2_fraction = float(instrument2_fraction)
        self.instrument_offset = float(instrument_offset)
        self.instrument_slope = float(instrument_slope)
        self.validate()

    def validate(self):
        if self.n_samples < 1:
            raise DatasetException('n_samples must be at least 1')
        if self.n_peaks < 1:
            raise DatasetException('n_peaks must be at least 1')
        if len(self.concentration_range_mg) != 2:
            raise DatasetException('concentration_range_mg must be (low, high)')
        low, high = self.concentration_range_mg
        if not (0 < low < high):
            raise DatasetException('concentration range must satisfy 0 < low < high')
        if len(self.scatter_amplitudes) != 3 or min(self.scatter_amplitudes) < 0:
            raise DatasetException('scatter amplitudes must be three values >= 0')
        if self.noise_std < 0 or self.background_scale < 0:
            raise DatasetException('noise_std and background_scale must be >= 0')
        if not (0 <= self.instrument2_fraction <= 1):
            raise DatasetException('instrument2_fraction must be in [0, 1]')
        WavelengthGrid(self.start_nm, self.step_nm, self.count)

    @property
    def grid(self):
        return WavelengthGrid(self.start_nm, self.step_nm, self.count)

    def to_json(self):
        obj = dict(vars(self))
        obj['concentration_range_mg'] = list(self.concentration_range_mg)
        obj['scatter_amplitudes'] = list(self.scatter_amplitudes)
        return obj

    @staticmethod
    def from_json(obj):
        try:
            return SyntheticConfig(**obj)
        except TypeError as exn:
            raise DatasetException('bad synthetic config: {0}'.format(exn))

# Rows come back as raw text fields with blank lines dropped, so every row
# keeps its own field count.
def _ReadRaw(path):
    try:
        with open(path, 'r', encoding = 'utf-8', newline = '') as fp:
            rows = [row for row in csv.reader(fp) if row]
    except FileNotFoundError:
        raise DatasetException('file not found: {0}'.format(path))
    except (csv.Error, UnicodeDecodeError) as exn:
        raise DatasetException('could not parse {0}: {1}'.format(path, exn))
    if not rows:
        raise DatasetException('malformed header in {0}: file is empty'.format(path))
    return rows

def _ParseCell(text):
    try:
        return float(text)
    except (TypeError, ValueError):
        return None

# Reads the canonical CSV layout:
#   sample_id,reference_mg,instrument,<wavelength>,<wavelength>,...
# Rows keep file order. Errors name the 1-based data row and the header text
# of the offending column.
def LoadCsv(path):
    rows = _ReadRaw(path)
    header = [name.strip() for name in rows[0]]

    if header[:3] != ID_COLUMNS:
        raise DatasetException('malformed header in {0}: expected columns {1}, found {2}'.format(
            path, ','.join(ID_COLUMNS), ','.join(header[:3])))
    names = header[3:]
    if len(names) < 2:
        raise DatasetException('malformed header in {0}: need at least 2 wavelength columns'
                               .format(path))
    wavelengths = []
    for name in names:
        value = _ParseCell(name)
        if value is None or not math.isfinite(value):
            raise DatasetException('malformed header in {0}: column "{1}" is not a wavelength'
                                   .format(path, name))
        wavelengths.append(value)
    grid = WavelengthGrid.FromWavelengths(wavelengths, names)

    if len(rows) == 1:
        raise DatasetException('no samples in {0}'.format(path))

    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise DatasetException('ragged row in {0}: row {1} has {2} fields, expected {3}'.format(
                path, r + 1, len(row), len(header)))
    body = np.array(rows[1:], dtype = object)

    numeric = body[:, 1:]
    try:
        values = numeric.astype(np.float64)
    except (TypeError, ValueError):
        for r, row in enumerate(numeric):
            for c, cell in enumerate(row):
                if _ParseCell(cell) is None:
                    raise DatasetException('non-numeric value "{0}" at row {1}, column "{2}"'
                                           .format(cell, r + 1, header[c + 1]))
        values = np.array([[_ParseCell(cell) for cell in row] for row in numeric])
    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DatasetException('non-finite value "{0}" at row {1}, column "{2}"'.format(
            numeric[r, c], r + 1, header[c + 1]))

    instrument = values[:, 1]
    if np.any(instrument != np.round(instrument)):
        r = np.flatnonzero(instrument != np.round(instrument))[0]
        raise DatasetException('instrument at row {0} is not an integer'.format(r + 1))

    return SpectraSet(grid, values[:, 2:], values[:, 0], instrument.astype(np.int64),
                      [str(s).strip() for s in body[:, 0]])

def SaveCsv(spectra, path):
    names = [util.DATASET_FLOAT_FORMAT % w for w in spectra.grid.wavelengths]
    frame = pd.DataFrame(spectra.absorbance, columns = names)
    frame.insert(0, 'instrument', spectra.instrument)
    frame.insert(0, 'reference_mg', spectra.reference_mg)
    frame.insert(0, 'sample_id', spectra.sample_id)
    try:
        frame.to_csv(path,
                     index = False,
                     float_format = util.DATASET_FLOAT_FORMAT,
                     encoding = 'utf-8',
                     lineterminator = '\n')
    except OSError as exn:
        raise DatasetException('could not write {0}: {1}'.format(path, exn.strerror))

# Keeps the grid points inside the closed interval [low_nm, high_nm].
def RestrictRegion(spectra, low_nm, high_nm):
    if not low_nm < high_nm:
        raise DatasetException('region must satisfy low < high, got {0} and {1}'.format(
            low_nm, high_nm))
    grid = spectra.grid
    wl = grid.wavelengths
    slack = SPACING_TOLERANCE * grid.step_nm
    columns = np.flatnonzero((wl >= low_nm - slack) & (wl <= high_nm + slack))
    if len(columns) == 0:
        raise DatasetException('region {0:g}-{1:g} nm does not overlap {2}'.format(
            low_nm, high_nm, grid))
    if len(columns) < 2:
        raise DatasetException('region {0:g}-{1:g} nm keeps fewer than 2 grid points'.format(
            low_nm, high_nm))
    new_grid = WavelengthGrid(wl[columns[0]], grid.step_nm, len(columns))
    return spectra.with_absorbance(spectra.absorbance[:, columns], new_grid)

def _FractionCount(fraction, n):
    return int(math.floor(fraction * n + 0.5))

def _RequireBothInstruments(spectra):
    for label in INSTRUMENTS:
        if not np.any(spectra.instrument == label):
            raise DatasetException('split needs samples from both instruments; none from '
                                   'instrument {0}'.format(label))

def _RequireNonEmpty(**subsets):
    for name in ('train', 'validation', 'test'):
        if len(subsets[name]) == 0:
            raise DatasetException('{0} subset would be empty'.format(name))

# Test samples come from instrument 2, validation and training from
# instrument 1. Each draw uses its own substream of |seed|.
def StandardSplit(spectra, test_fraction = 0.2, val_fraction = 0.2, seed = 0):
    for name, value in (('test_fraction', test_fraction), ('val_fraction', val_fraction)):
        if not (0 < value < 1):
            raise DatasetException('{0} must be in (0, 1), got {1}'.format(name, value))
    _RequireBothInstruments(spectra)

    test_stream, val_stream = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    ]
    pool1 = np.flatnonzero(spectra.instrument == 1)
    pool2 = np.flatnonzero(spectra.instrument == 2)

    n_test = _FractionCount(test_fraction, len(pool2))
    test = np.sort(test_stream.permutation(pool2)[:n_test])

    n_val = _FractionCount(val_fraction, len(pool1))
    order = val_stream.permutation(pool1)
    validation = np.sort(order[:n_val])
    train = np.sort(order[n_val:])

    _RequireNonEmpty(train = train, validation = validation, test = test)
    provenance = {
        'scheme': 'standard',
        'test_fraction': float(test_fraction),
        'val_fraction': float(val_fraction),
        'seed': int(seed),
    }
    return DataSplits(spectra.subset(train), spectra.subset(validation), spectra.subset(test),
                      provenance)

# Splits on the assay value: training below |train_below_mg|, validation in the
# closed band up to |val_upper_mg|, test above it on instrument 2.
def ExtrapolationSplit(spectra, train_below_mg = 212.0, val_upper_mg = 228.0):
    if not train_below_mg < val_upper_mg:
        raise DatasetException('thresholds must satisfy train_below_mg < val_upper_mg')
    _RequireBothInstruments(spectra)

    ref = spectra.reference_mg
    first = spectra.instrument == 1
    second = spectra.instrument == 2
    train = np.flatnonzero(first & (ref < train_below_mg))
    validation = np.flatnonzero(first & (ref >= train_below_mg) & (ref <= val_upper_mg))
    test = np.flatnonzero(second & (ref > val_upper_mg))

    _RequireNonEmpty(train = train, validation = validation, test = test)
    provenance = {
        'scheme': 'extrapolation',
        'train_below_mg': float(train_below_mg),
        'val_upper_mg': float(val_upper_mg),
        'seed': None,
    }
    return DataSplits(spectra.subset(train), spectra.subset(validation), spectra.subset(test),
                      provenance)

def _GaussianPeaks(rng, wavelengths, n_peaks, width_range, height_range):
    span = wavelengths[-1] - wavelengths[0]
    centers = rng.uniform(wavelengths[0] + 0.05 * span, wavelengths[-1] - 0.05 * span, n_peaks)
    widths = rng.uniform(width_range[0] * span, width_range[1] * span, n_peaks)
    heights = rng.uniform(height_range[0], height_range[1], n_peaks)
    profile = np.zeros(len(wavelengths))
    for center, width, height in zip(centers, widths, heights):
        profile += height * np.exp(-0.5 * ((wavelengths - center) / width)**2)
    return profile

# Returns (analyte, background): the analyte profile is absorbance per mg, the
# background is the fixed excipient matrix shared by every tablet.
def PeakTemplates(config):
    wavelengths = config.grid.wavelengths
    analyte = _GaussianPeaks(np.random.default_rng([config.seed, 0]), wavelengths,
                             config.n_peaks, (0.01, 0.04), (0.3, 1.0))
    analyte /= config.concentration_range_mg[1]
    background = _GaussianPeaks(np.random.default_rng([config.seed, 1]), wavelengths,
                                config.n_peaks + 2, (0.05, 0.2), (0.2, 0.8))
    return analyte, background

# Beer-Lambert mixing of the analyte and background profiles, followed by
# random offset, multiplicative and slope artifacts and white noise.
# Instrument 2 adds a fixed offset + slope signature.
def Synthesize(config):
    config.validate()
    grid = config.grid
    n = config.n_samples
    analyte, background = PeakTemplates(config)
    ramp = np.linspace(-1.0, 1.0, grid.count)

    rng = np.random.default_rng([config.seed, 2])
    low, high = config.concentration_range_mg
    reference = rng.uniform(low, high, n)

    instrument = np.ones(n, dtype = np.int64)
    n_second = _FractionCount(config.instrument2_fraction, n)
    instrument[rng.permutation(n)[:n_second]] = 2

    offset_amp, mult_amp, slope_amp = config.scatter_amplitudes
    offsets = rng.uniform(-offset_amp, offset_amp, n)
    multipliers = 1.0 + rng.uniform(-mult_amp, mult_amp, n)
    slopes = rng.uniform(-slope_amp, slope_amp, n)
    noise = rng.normal(0.0, config.noise_std, (n, grid.count))

    clean = reference[:, None] * analyte[None, :] + config.background_scale * background[None, :]
    spectra = multipliers[:, None] * clean + offsets[:, None] + slopes[:, None] * ramp[None, :]
    second = instrument == 2
    spectra[second] += config.instrument_offset + config.instrument_slope * ramp[None, :]
    spectra += noise

    sample_id = ['S{0:05d}'.format(i + 1) for i in range(n)]
    return SpectraSet(grid, spectra, reference, instrument, sample_id)
