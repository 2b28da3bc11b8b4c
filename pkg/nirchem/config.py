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
from nirchem import util
from nirchem.dataset import DatasetException, SyntheticConfig
from nirchem.nn.losses import ModelException
from nirchem.nn.model import NOISE_STD
from nirchem.nn.training import TrainConfig
from nirchem.pls import OUTLIER_SCOPES, STRATEGIES
from nirchem.preprocess import DA, AugmentConfig, PreprocessException, ValidateStepOrder

class ConfigException(util.NirchemException):
    def __init__(self, *args, **kwargs):
        super(ConfigException, self).__init__(*args, **kwargs)

CNN = 'cnn'
PLS = 'pls'
MODEL_KINDS = [CNN, PLS]

STANDARD = 'standard'
EXTRAPOLATION = 'extrapolation'

# Learning rates and epoch budgets with and without augmentation.
LEARNING_RATE = {True: 0.084, False: 0.094}
TUNE_EPOCHS = {True: 40, False: 200}
FINAL_EPOCHS = {True: 100, False: 250}
PATIENCE = {True: 10, False: 25}

# Tuning scores a trial by the mean validation loss of its last epochs.
TUNE_TAIL = 10

TOP_LEVEL_KEYS = [
    'name', 'seed', 'source', 'region', 'outliers', 'split', 'preprocess', 'augment', 'emsc',
    'model', 'hyperopt'
]

def _Section(obj, where, allowed):
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigException('{0} must be an object'.format(where))
    for key in obj:
        if key not in allowed:
            raise ConfigException('unknown key "{0}" in {1}'.format(key, where))
    return obj

def _Typed(value, kind, where):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigException('{0} must be an integer'.format(where))
    if not isinstance(value, kind):
        raise ConfigException('{0} must be {1}'.format(where, {
            int: 'an integer',
            float: 'a number',
            str: 'a string',
            bool: 'true or false',
            list: 'a list',
        }[kind]))
    return value

def _Get(section, key, kind, default, where):
    if key not in section:
        return default
    return _Typed(section[key], kind, '{0}.{1}'.format(where, key))

class OutlierConfig(object):
    def __init__(self, enabled = True, folds = 10, components = (1, 30), sigma_mult = 2.5,
                 scope = 'global'):
        self.enabled = enabled
        self.folds = folds
        self.components = tuple(components)
        self.sigma_mult = sigma_mult
        self.scope = scope

    def to_json(self):
        return {
            'enabled': self.enabled,
            'folds': self.folds,
            'components': list(self.components),
            'sigma_mult': self.sigma_mult,
            'scope': self.scope,
        }

class PlsSettings(object):
    def __init__(self, components = (1, 30), strategy = 'holdout_optimal', folds = 10):
        self.components = tuple(components)
        self.strategy = strategy
        self.folds = folds

    def to_json(self):
        return {
            'components': list(self.components),
            'strategy': self.strategy,
            'folds': self.folds,
        }

class ModelConfig(object):
    def __init__(self, kind, cnn, train, tune_epochs, pls):
        self.kind = kind
        # Network shape without input_len, or None to take it from tuning.
        self.cnn = cnn
        # TrainConfig overrides, applied on top of the derived defaults.
        self.train = train
        self.tune_epochs = tune_epochs
        self.pls = pls

    def to_json(self):
        return {
            'kind': self.kind,
            'cnn': self.cnn,
            'train': self.train,
            'tune_epochs': self.tune_epochs,
            'pls': self.pls.to_json(),
        }

class HyperoptConfig(object):
    def __init__(self, n_init = 20, n_iter = 40, seed = 0):
        self.n_init = n_init
        self.n_iter = n_iter
        self.seed = seed

    def to_json(self):
        return {'n_init': self.n_init, 'n_iter': self.n_iter, 'seed': self.seed}

class PipelineConfig(object):
    def __init__(self):
        self.name = 'dataset'
        self.seed = 0
        self.base_dir = '.'
        self.csv_path = None
        self.synthetic = None
        self.region = (600.0, 1798.0)
        self.outliers = OutlierConfig()
        self.split = {'scheme': STANDARD, 'test_fraction': 0.2, 'val_fraction': 0.2}
        self.preprocess = []
        self.augment = AugmentConfig()
        self.emsc_order = 1
        self.model = None
        self.hyperopt = HyperoptConfig()

    @property
    def augmented(self):
        return DA in self.preprocess

    def source_json(self):
        if self.csv_path is not None:
            return {'csv': self.csv_path}
        return {'synthetic': self.synthetic.to_json()}

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.base_dir, path))

    # Inputs of the prepare stage; everything downstream hashes these too.
    def prepare_json(self):
        return {
            'name': self.name,
            'seed': self.seed,
            'source': self.source_json(),
            'region': None if self.region is None else list(self.region),
            'outliers': self.outliers.to_json(),
            'split': dict(self.split),
            'preprocess': list(self.preprocess),
            'augment': self.augment.to_json() if self.augmented else None,
            'emsc': {'order': self.emsc_order},
        }

    def to_json(self):
        obj = self.prepare_json()
        obj['model'] = self.model.to_json()
        obj['hyperopt'] = self.hyperopt.to_json()
        return obj

    def train_config(self, final = True):
        da = self.augmented
        base = {
            'learning_rate': LEARNING_RATE[da],
            'epochs': FINAL_EPOCHS[da],
            'plateau_patience': PATIENCE[da],
            'seed': self.seed,
        }
        if not final:
            base['epochs'] = TUNE_EPOCHS[da]
            if self.model.tune_epochs is not None:
                base['epochs'] = self.model.tune_epochs
            # Tuning runs keep a constant learning rate.
            base['plateau_patience'] = base['epochs'] + 1
        for key, value in self.model.train.items():
            if not final and key in ('epochs', 'plateau_patience'):
                continue
            base[key] = value
        try:
            return TrainConfig(**base)
        except (TypeError, ModelException) as exn:
            raise ConfigException('model.train: {0}'.format(exn))

def _ParseSource(obj, config):
    source = _Section(obj, 'source', ['csv', 'synthetic'])
    if len(source) != 1:
        raise ConfigException('source must name exactly one of "csv" or "synthetic"')
    if 'csv' in source:
        config.csv_path = _Typed(source['csv'], str, 'source.csv')
        return
    synthetic = dict(_Section(source['synthetic'], 'source.synthetic',
                              SyntheticConfig().to_json().keys()))
    synthetic.setdefault('seed', config.seed)
    try:
        config.synthetic = SyntheticConfig.from_json(synthetic)
    except (DatasetException, TypeError, ValueError) as exn:
        raise ConfigException('source.synthetic: {0}'.format(exn))

def _ParseRegion(obj, config):
    if 'region' in obj and obj['region'] is None:
        config.region = None
        return
    region = _Section(obj.get('region'), 'region', ['low_nm', 'high_nm'])
    low = _Get(region, 'low_nm', float, config.region[0], 'region')
    high = _Get(region, 'high_nm', float, config.region[1], 'region')
    if not low < high:
        raise ConfigException('region must satisfy low_nm < high_nm')
    config.region = (low, high)

def _ParseComponents(section, where, default):
    value = section.get('components', list(default))
    if (not isinstance(value, list) or len(value) != 2 or
            not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise ConfigException('{0}.components must be [low, high] integers'.format(where))
    if value[0] < 1 or value[1] < value[0]:
        raise ConfigException('{0}.components must satisfy 1 <= low <= high'.format(where))
    return tuple(value)

def _ParseOutliers(obj, config):
    section = _Section(obj.get('outliers'), 'outliers',
                       ['enabled', 'folds', 'components', 'sigma_mult', 'scope'])
    out = OutlierConfig(
        enabled = _Get(section, 'enabled', bool, True, 'outliers'),
        folds = _Get(section, 'folds', int, 10, 'outliers'),
        components = _ParseComponents(section, 'outliers', (1, 30)),
        sigma_mult = _Get(section, 'sigma_mult', float, 2.5, 'outliers'),
        scope = _Get(section, 'scope', str, 'global', 'outliers'))
    if out.folds < 2:
        raise ConfigException('outliers.folds must be >= 2')
    if not out.sigma_mult > 0:
        raise ConfigException('outliers.sigma_mult must be positive')
    if out.scope not in OUTLIER_SCOPES:
        raise ConfigException('outliers.scope must be one of {0}'.format(', '.join(OUTLIER_SCOPES)))
    config.outliers = out

def _ParseSplit(obj, config):
    raw = obj.get('split') or {}
    scheme = raw.get('scheme', STANDARD) if isinstance(raw, dict) else None
    if scheme == STANDARD:
        section = _Section(raw, 'split', ['scheme', 'test_fraction', 'val_fraction'])
        split = {
            'scheme': STANDARD,
            'test_fraction': _Get(section, 'test_fraction', float, 0.2, 'split'),
            'val_fraction': _Get(section, 'val_fraction', float, 0.2, 'split'),
        }
        for key in ('test_fraction', 'val_fraction'):
            if not (0 < split[key] < 1):
                raise ConfigException('split.{0} must lie in (0, 1)'.format(key))
    elif scheme == EXTRAPOLATION:
        section = _Section(raw, 'split', ['scheme', 'train_below_mg', 'val_upper_mg'])
        split = {
            'scheme': EXTRAPOLATION,
            'train_below_mg': _Get(section, 'train_below_mg', float, 212.0, 'split'),
            'val_upper_mg': _Get(section, 'val_upper_mg', float, 228.0, 'split'),
        }
        if not split['train_below_mg'] < split['val_upper_mg']:
            raise ConfigException('split.train_below_mg must be below split.val_upper_mg')
    else:
        raise ConfigException('split.scheme must be "{0}" or "{1}"'.format(STANDARD, EXTRAPOLATION))
    config.split = split

def _ParsePreprocess(obj, config):
    steps = _Typed(obj.get('preprocess', []), list, 'preprocess')
    try:
        config.preprocess = ValidateStepOrder(steps)
    except PreprocessException as exn:
        raise ConfigException('preprocess: {0}'.format(exn))

    augment = dict(_Section(obj.get('augment'), 'augment', AugmentConfig().to_json().keys()))
    augment.setdefault('seed', config.seed)
    try:
        config.augment = AugmentConfig.from_json(augment)
    except (PreprocessException, TypeError, ValueError) as exn:
        raise ConfigException('augment: {0}'.format(exn))

    emsc = _Section(obj.get('emsc'), 'emsc', ['order'])
    config.emsc_order = _Get(emsc, 'order', int, 1, 'emsc')
    if config.emsc_order < 0:
        raise ConfigException('emsc.order must be >= 0')

CNN_KEYS = ['k1', 'f1', 'k2', 'f2', 'dense_units', 'dropout_rate', 'noise_std']

def _ParseModel(obj, config):
    section = _Section(obj.get('model'), 'model', ['kind', 'cnn', 'train', 'tune_epochs', 'pls'])
    kind = _Get(section, 'kind', str, CNN, 'model')
    if kind not in MODEL_KINDS:
        raise ConfigException('model.kind must be one of {0}'.format(', '.join(MODEL_KINDS)))

    cnn = None
    if section.get('cnn') is not None:
        cnn = dict(_Section(section['cnn'], 'model.cnn', CNN_KEYS))
        for key in ['k1', 'f1', 'k2', 'f2', 'dense_units']:
            if key not in cnn:
                raise ConfigException('model.cnn is missing "{0}"'.format(key))
            cnn[key] = _Typed(cnn[key], int, 'model.cnn.{0}'.format(key))
        cnn['dropout_rate'] = _Get(cnn, 'dropout_rate', float, 0.0, 'model.cnn')
        cnn['noise_std'] = _Get(cnn, 'noise_std', float, NOISE_STD, 'model.cnn')

    train = dict(_Section(section.get('train'), 'model.train', TrainConfig().to_json().keys()))
    tune_epochs = section.get('tune_epochs')
    if tune_epochs is not None:
        tune_epochs = _Typed(tune_epochs, int, 'model.tune_epochs')
        if tune_epochs < TUNE_TAIL:
            raise ConfigException('model.tune_epochs must be >= {0}'.format(TUNE_TAIL))

    pls_section = _Section(section.get('pls'), 'model.pls', ['components', 'strategy', 'folds'])
    pls = PlsSettings(components = _ParseComponents(pls_section, 'model.pls', (1, 30)),
                      strategy = _Get(pls_section, 'strategy', str, 'holdout_optimal',
                                      'model.pls'),
                      folds = _Get(pls_section, 'folds', int, 10, 'model.pls'))
    if pls.strategy not in STRATEGIES:
        raise ConfigException('model.pls.strategy must be one of {0}'.format(', '.join(STRATEGIES)))
    if pls.folds < 2:
        raise ConfigException('model.pls.folds must be >= 2')

    config.model = ModelConfig(kind, cnn, train, tune_epochs, pls)

def _ParseHyperopt(obj, config):
    section = _Section(obj.get('hyperopt'), 'hyperopt', ['n_init', 'n_iter', 'seed'])
    hyperopt = HyperoptConfig(n_init = _Get(section, 'n_init', int, 20, 'hyperopt'),
                              n_iter = _Get(section, 'n_iter', int, 40, 'hyperopt'),
                              seed = _Get(section, 'seed', int, config.seed, 'hyperopt'))
    if hyperopt.n_init < 2 or hyperopt.n_iter < 0:
        raise ConfigException('hyperopt needs n_init >= 2 and n_iter >= 0')
    config.hyperopt = hyperopt

# Builds a fully resolved PipelineConfig. |seed| overrides the file's seed,
# and every seed that defaults to the run seed follows it.
def ParseConfig(obj, base_dir = '.', seed = None):
    obj = _Section(obj, 'config', TOP_LEVEL_KEYS)
    config = PipelineConfig()
    config.base_dir = base_dir
    config.name = _Get(obj, 'name', str, config.name, 'config')
    config.seed = _Get(obj, 'seed', int, 0, 'config')
    if seed is not None:
        config.seed = int(seed)
    if config.seed < 0:
        raise ConfigException('seed must be >= 0')
    if 'source' not in obj:
        raise ConfigException('config has no "source" section')

    _ParseSource(obj['source'], config)
    _ParseRegion(obj, config)
    _ParseOutliers(obj, config)
    _ParseSplit(obj, config)
    _ParsePreprocess(obj, config)
    _ParseModel(obj, config)
    _ParseHyperopt(obj, config)
    return config

def LoadConfig(path, seed = None):
    try:
        obj = util.ReadJson(path)
    except util.NirchemException as exn:
        raise ConfigException(str(exn))
    return ParseConfig(obj, os.path.dirname(os.path.abspath(path)), seed)
