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
import scipy.linalg
from nirchem import util
from nirchem.dataset import DataSplits, SpectraSet, WavelengthGrid

class PreprocessException(util.NirchemException):
    def __init__(self, *args, **kwargs):
        super(PreprocessException, self).__init__(*args, **kwargs)

# Step names, in the only order they may be applied.
DA = 'DA'
EMSC = 'EMSC'
GS = 'GS'
STEP_ORDER = [DA, EMSC, GS]

# Smallest singular value allowed for the column-normalized EMSC basis.
EMSC_RANK_TOLERANCE = 1e-10

# Spectra whose fitted reference multiplier falls below this are rejected.
EMSC_MIN_MULTIPLIER = 1e-8

def ValidateStepOrder(steps):
    seen = []
    for step in steps:
        if step not in STEP_ORDER:
            raise PreprocessException('unknown preprocessing step "{0}"; expected one of {1}'.format(
                step, ', '.join(STEP_ORDER)))
        if step in seen:
            raise PreprocessException('preprocessing step "{0}" listed twice'.format(step))
        if seen and STEP_ORDER.index(step) < STEP_ORDER.index(seen[-1]):
            raise PreprocessException('preprocessing step "{0}" must come before "{1}"'.format(
                step, seen[-1]))
        seen.append(step)
    return list(steps)

class AugmentConfig(object):
    def __init__(self, offset_scale = 0.10, mult_scale = 0.10, slope_range = (0.95, 1.05),
                 copies = 9, seed = 0):
        self.offset_scale = float(offset_scale)
        self.mult_scale = float(mult_scale)
        self.slope_range = tuple(float(v) for v in slope_range)
        self.copies = int(copies)
        self.seed = int(seed)
        self.validate()

    def validate(self):
        if self.copies < 0:
            raise PreprocessException('copies must be >= 0, got {0}'.format(self.copies))
        if self.offset_scale < 0 or self.mult_scale < 0:
            raise PreprocessException('offset_scale and mult_scale must be >= 0')
        if len(self.slope_range) != 2:
            raise PreprocessException('slope_range must be (low, high)')
        low, high = self.slope_range
        if not (0 < low <= high):
            raise PreprocessException('slope_range must satisfy 0 < low <= high, got {0}'.format(
                self.slope_range))

    def to_json(self):
        return {
            'offset_scale': self.offset_scale,
            'mult_scale': self.mult_scale,
            'slope_range': list(self.slope_range),
            'copies': self.copies,
            'seed': self.seed,
        }

    @staticmethod
    def from_json(obj):
        try:
            return AugmentConfig(**obj)
        except TypeError as exn:
            raise PreprocessException('bad augment config: {0}'.format(exn))

# Per-wavelength slope factor, linear from (2 - slope) to slope; its mean over
# the grid is 1 so slope and intensity stay separable.
def Ramp(slope, count):
    return np.linspace(2.0 - slope, slope, count)

def ApplyVariant(spectrum, offset, multiplier, slope):
    return (spectrum * multiplier) * Ramp(slope, len(spectrum)) + offset

# Draws (offset, multiplier, slope) for one copy of one sample. The stream is
# keyed on (seed, stream, sample, copy) so the result never depends on visiting
# order; |stream| keeps the training and validation draws independent.
def DrawVariant(config, train_std, sample_index, copy_index, stream = 0):
    rng = np.random.default_rng([config.seed, stream, sample_index, copy_index])
    offset_spread = config.offset_scale * train_std
    mult_spread = config.mult_scale * train_std
    offset = rng.uniform(-offset_spread, offset_spread)
    multiplier = rng.uniform(1.0 - mult_spread, 1.0 + mult_spread)
    slope = rng.uniform(config.slope_range[0], config.slope_range[1])
    return offset, multiplier, slope

# Returns the originals followed by |copies| blocks of variants. Copy k of
# sample "x" is named "x#da<k>"; reference values are repeated unchanged.
def Augment(spectra, config, train_std, stream = 0):
    config.validate()
    if not train_std > 0:
        raise PreprocessException('train_std must be positive, got {0}'.format(train_std))

    blocks = [spectra.absorbance]
    names = [spectra.sample_id]
    for copy_index in range(1, config.copies + 1):
        block = np.empty_like(spectra.absorbance)
        for i, spectrum in enumerate(spectra.absorbance):
            offset, multiplier, slope = DrawVariant(config, train_std, i, copy_index, stream)
            block[i] = ApplyVariant(spectrum, offset, multiplier, slope)
        blocks.append(block)
        names.append(np.array(['{0}#da{1}'.format(s, copy_index) for s in spectra.sample_id],
                              dtype = object))

    repeats = config.copies + 1
    return SpectraSet(spectra.grid, np.vstack(blocks), np.tile(spectra.reference_mg, repeats),
                      np.tile(spectra.instrument, repeats), np.concatenate(names))

def EmscAxis(count):
    return np.linspace(-1.0, 1.0, count)

def EmscBasis(reference, order):
    axis = EmscAxis(len(reference))
    columns = [np.ones(len(reference))]
    for power in range(1, order + 1):
        columns.append(axis**power)
    columns.append(reference)
    return np.column_stack(columns)

class EmscModel(object):
    def __init__(self, reference, order):
        self.reference = np.array(reference, dtype = np.float64)
        self.order = int(order)
        if self.order < 0:
            raise PreprocessException('EMSC order must be >= 0, got {0}'.format(order))
        if not np.all(np.isfinite(self.reference)):
            raise PreprocessException('EMSC reference spectrum is not finite')
        self.basis = EmscBasis(self.reference, self.order)

        norms = np.linalg.norm(self.basis, axis = 0)
        if np.any(norms == 0):
            raise PreprocessException('EMSC basis is rank deficient (zero reference spectrum)')
        smallest = scipy.linalg.svdvals(self.basis / norms).min()
        if smallest < EMSC_RANK_TOLERANCE:
            raise PreprocessException(
                'EMSC basis is rank deficient: reference spectrum is collinear with the '
                'order-{0} polynomial (smallest singular value {1:.3g})'.format(
                    self.order, smallest))

    def to_json(self):
        return {'order': self.order, 'reference': self.reference.tolist()}

    @staticmethod
    def from_json(obj):
        return EmscModel(obj['reference'], obj['order'])

def EmscFit(train, order = 1):
    if order < 0:
        raise PreprocessException('EMSC order must be >= 0, got {0}'.format(order))
    return EmscModel(np.mean(train.absorbance, axis = 0), order)

# Returns the fitted coefficients, one column per spectrum:
# rows are [offset, polynomial terms..., reference multiplier].
def EmscCoefficients(model, absorbance):
    coefs, _, _, _ = scipy.linalg.lstsq(model.basis, np.asarray(absorbance).T)
    return coefs

def EmscApply(model, spectra):
    if spectra.grid.count != len(model.reference):
        raise PreprocessException('EMSC model expects {0} wavelengths, set has {1}'.format(
            len(model.reference), spectra.grid.count))
    coefs = EmscCoefficients(model, spectra.absorbance)
    multiplier = coefs[-1]
    bad = np.flatnonzero(np.abs(multiplier) < EMSC_MIN_MULTIPLIER)
    if len(bad):
        raise PreprocessException(
            'EMSC multiplier {0:.3g} is degenerate for sample "{1}"'.format(
                multiplier[bad[0]], spectra.sample_id[bad[0]]))
    baseline = (model.basis[:, :-1] @ coefs[:-1]).T
    corrected = (spectra.absorbance - baseline) / multiplier[:, None]
    return spectra.with_absorbance(corrected)

class Scaler(object):
    def __init__(self, mean, std):
        self.mean = float(mean)
        self.std = float(std)
        if not np.isfinite(self.mean) or not (self.std > 0) or not np.isfinite(self.std):
            raise PreprocessException('global standard deviation must be positive, got {0}'.format(
                std))

    def to_json(self):
        return {'mean': self.mean, 'std': self.std}

    @staticmethod
    def from_json(obj):
        return Scaler(obj['mean'], obj['std'])

def ScalerFit(train):
    return Scaler(train.global_mean(), train.global_std())

def ScalerApply(scaler, spectra):
    return spectra.with_absorbance((spectra.absorbance - scaler.mean) / (2.0 * scaler.std))

# An ordered list of fitted steps. Augmentation only ever applies to the
# training and validation subsets, so transform() replays EMSC and scaling.
class PreprocessChain(object):
    def __init__(self, grid, steps = None, augment = None, train_std = None, emsc = None,
                 scaler = None):
        self.grid = grid
        self.steps = ValidateStepOrder(steps or [])
        self.augment = augment
        self.train_std = train_std
        self.emsc = emsc
        self.scaler = scaler

    def transform(self, spectra):
        if spectra.grid != self.grid:
            raise PreprocessException('preprocessing was fitted on {0}, data is on {1}'.format(
                self.grid, spectra.grid))
        if self.emsc is not None:
            spectra = EmscApply(self.emsc, spectra)
        if self.scaler is not None:
            spectra = ScalerApply(self.scaler, spectra)
        return spectra

    def to_json(self):
        entries = []
        for step in self.steps:
            if step == DA:
                entries.append({
                    'step': DA,
                    'config': self.augment.to_json(),
                    'train_std': self.train_std,
                })
            elif step == EMSC:
                entry = {'step': EMSC}
                entry.update(self.emsc.to_json())
                entries.append(entry)
            elif step == GS:
                entry = {'step': GS}
                entry.update(self.scaler.to_json())
                entries.append(entry)
        return {'grid': self.grid.to_json(), 'steps': entries}

    @staticmethod
    def from_json(obj):
        chain = PreprocessChain(WavelengthGrid.from_json(obj['grid']))
        steps = []
        for entry in obj['steps']:
            step = entry['step']
            if step == DA:
                chain.augment = AugmentConfig.from_json(entry['config'])
                chain.train_std = entry['train_std']
            elif step == EMSC:
                chain.emsc = EmscModel.from_json(entry)
            elif step == GS:
                chain.scaler = Scaler.from_json(entry)
            steps.append(step)
        chain.steps = ValidateStepOrder(steps)
        return chain

# Fits |steps| on the training subset and applies them to all three subsets.
# The test subset is never augmented.
def FitChain(splits, steps, augment = None, emsc_order = 1):
    steps = ValidateStepOrder(steps)
    chain = PreprocessChain(splits.train.grid, steps)
    train, validation, test = splits.train, splits.validation, splits.test

    if DA in steps:
        chain.augment = augment or AugmentConfig()
        chain.train_std = train.global_std()
        train = Augment(train, chain.augment, chain.train_std)
        validation = Augment(validation, chain.augment, chain.train_std, stream = 1)
    if EMSC in steps:
        chain.emsc = EmscFit(train, emsc_order)
        train, validation, test = [EmscApply(chain.emsc, s) for s in (train, validation, test)]
    if GS in steps:
        chain.scaler = ScalerFit(train)
        train, validation, test = [ScalerApply(chain.scaler, s) for s in (train, validation, test)]

    return chain, DataSplits(train, validation, test, splits.provenance)
