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
from nirchem import database, util
from nirchem import config as configs
from nirchem import dataset, pls, preprocess, report
from nirchem.hyperopt.optimize import Optimize, SaveConvergenceCsv
from nirchem.hyperopt.space import CnnSearchSpace
from nirchem.nn import container
from nirchem.nn.model import NOISE_STD, BuildModel, CnnSpec, Predict
from nirchem.nn.training import Train

class StageException(util.NirchemException):
    def __init__(self, stage, message):
        super(StageException, self).__init__(message)
        self.stage = stage

PREPARE = 'prepare'
TUNE = 'tune'
TRAIN = 'train'
EVALUATE = 'evaluate'
ACTIVATIONS = 'activations'
SYNTH = 'synth'

SUBSET_FILES = {
    'train': 'train.csv',
    'validation': 'validation.csv',
    'test': 'test.csv',
}
CHAIN_JSON = 'chain.json'
SPLITS_JSON = 'splits.json'
TRACE_JSONL = 'trace.jsonl'
CONVERGENCE_CSV = 'convergence.csv'
BEST_SPEC_JSON = 'best_spec.json'
MODEL_BIN = 'model.bin'
PLS_JSON = 'pls_model.json'
HISTORY_CSV = 'history.csv'
CV_CURVE_CSV = 'cv_curve.csv'
TRAIN_JSON = 'train.json'

class Context(object):
    def __init__(self, config, outPath, options):
        self.config = config
        self.options = options
        self.outPath = os.path.abspath(outPath)
        self.cacheFolder = os.path.join(self.outPath, '.nirchem')
        self.dbpath = os.path.join(self.cacheFolder, 'stages')

        if getattr(options, 'no_color', False):
            util.DisableConsoleColors()

        util.MakeDirs(self.cacheFolder)
        if os.path.exists(self.dbpath):
            self.db = database.Database(self.dbpath)
            self.db.connect()
        else:
            self.db = database.CreateDatabase(self.dbpath)

    def __enter__(self):
        return self

    def __exit__(self, type, value, traceback):
        self.db.close()

    @property
    def jobs(self):
        return max(getattr(self.options, 'jobs', 1) or 1, 1)

    def stage_folder(self, stage):
        return util.MakeDirs(os.path.join(self.outPath, stage))

    def stage_path(self, stage, name):
        return os.path.join(self.outPath, stage, name)

    # Hashes below chain: each stage hashes its own inputs together with the
    # hash of every stage it reads.
    def prepare_hash(self):
        inputs = self.config.prepare_json()
        if self.config.csv_path is not None:
            inputs['source_digest'] = util.HashFile(self.config.resolve(self.config.csv_path))
        return util.HashConfig(inputs)

    def tune_hash(self):
        return util.HashConfig({
            'prepare': self.prepare_hash(),
            'cnn': self.config.model.cnn,
            'tune': self.config.train_config(final = False).to_json(),
            'hyperopt': self.config.hyperopt.to_json(),
        })

    def train_hash(self):
        inputs = {
            'prepare': self.prepare_hash(),
            'model': self.config.model.to_json(),
            'final': self.config.train_config(final = True).to_json(),
        }
        if self.config.model.kind == configs.CNN and self.config.model.cnn is None:
            inputs['tune'] = self.tune_hash()
        return util.HashConfig(inputs)

    def require_stage(self, stage, needed, expected_hash):
        record = self.db.query_stage(needed)
        if record is None:
            raise StageException(stage, 'stage "{0}" has not been run; run "{0}" first'.format(
                needed))
        if record.config_hash != expected_hash:
            raise StageException(stage, 'stale inputs: "{0}" was run with a different '
                                 'configuration; re-run {0}'.format(needed))
        for path in record.outputs:
            if not os.path.exists(path):
                raise StageException(stage, 'output {0} of stage "{1}" is missing; re-run {1}'
                                     .format(path, needed))
        return record

    def finish_stage(self, stage, config_hash, upstream_hash, outputs):
        self.db.record_stage(stage, config_hash, upstream_hash, outputs)
        util.con_out(util.ConsoleGreen, 'Stage ', util.ConsoleBlue, stage, util.ConsoleGreen,
                     ' complete.', util.ConsoleNormal)

    def load_source(self):
        if self.config.csv_path is not None:
            path = self.config.resolve(self.config.csv_path)
            util.con_out(util.ConsoleHeader, 'Reading ', util.ConsoleBlue, path,
                         util.ConsoleNormal)
            return dataset.LoadCsv(path)
        util.con_out(util.ConsoleHeader, 'Synthesizing {0} spectra'.format(
            self.config.synthetic.n_samples), util.ConsoleNormal)
        return dataset.Synthesize(self.config.synthetic)

    def split(self, spectra):
        split = self.config.split
        if split['scheme'] == configs.STANDARD:
            return dataset.StandardSplit(spectra, split['test_fraction'], split['val_fraction'],
                                         self.config.seed)
        return dataset.ExtrapolationSplit(spectra, split['train_below_mg'], split['val_upper_mg'])

    def load_prepared(self):
        folder = os.path.join(self.outPath, PREPARE)
        subsets = {}
        for name, filename in SUBSET_FILES.items():
            subsets[name] = dataset.LoadCsv(os.path.join(folder, filename))
        chain = preprocess.PreprocessChain.from_json(
            util.ReadJson(os.path.join(folder, CHAIN_JSON)))
        provenance = util.ReadJson(os.path.join(folder, SPLITS_JSON))
        splits = dataset.DataSplits(subsets['train'], subsets['validation'], subsets['test'],
                                    provenance)
        return splits, chain

    def Prepare(self):
        config_hash = self.prepare_hash()
        spectra = self.load_source()
        if self.config.region is not None:
            spectra = dataset.RestrictRegion(spectra, *self.config.region)

        removed = []
        outliers = self.config.outliers
        if outliers.enabled:
            spectra, removed = pls.RemoveOutliers(spectra, outliers.folds, outliers.components,
                                                  outliers.sigma_mult, seed = self.config.seed,
                                                  scope = outliers.scope, jobs = self.jobs)
            util.con_out(util.ConsoleHeader,
                         'Removed {0} outliers ({1} scope)'.format(len(removed), outliers.scope),
                         util.ConsoleNormal)

        splits = self.split(spectra)
        chain, prepared = preprocess.FitChain(splits, self.config.preprocess, self.config.augment,
                                              self.config.emsc_order)

        folder = self.stage_folder(PREPARE)
        outputs = []
        for name, filename in SUBSET_FILES.items():
            path = os.path.join(folder, filename)
            dataset.SaveCsv(getattr(prepared, name), path)
            outputs.append(path)
        provenance = dict(splits.provenance)
        provenance['removed_outliers'] = removed
        provenance['raw_sizes'] = splits.sizes()
        provenance['sizes'] = prepared.sizes()
        outputs.append(os.path.join(folder, SPLITS_JSON))
        util.WriteJson(outputs[-1], provenance)
        outputs.append(os.path.join(folder, CHAIN_JSON))
        util.WriteJson(outputs[-1], chain.to_json())

        sizes = prepared.sizes()
        steps = ' + '.join(self.config.preprocess) or 'none'
        util.con_out('{0:<24} {1:<18} {2:>8} {3:>10} {4:>8}'.format('Dataset', 'Preprocessing',
                                                                   'Train', 'Validation', 'Test'))
        util.con_out('{0:<24} {1:<18} {2:>8} {3:>10} {4:>8}'.format(
            self.config.name, steps, sizes['train'], sizes['validation'], sizes['test']))

        self.finish_stage(PREPARE, config_hash, None, outputs)
        return prepared, chain

    def Tune(self):
        prepare_hash = self.prepare_hash()
        self.require_stage(TUNE, PREPARE, prepare_hash)
        if self.config.model.kind != configs.CNN:
            raise StageException(TUNE, 'tuning applies to cnn models only')
        config_hash = self.tune_hash()
        splits, _ = self.load_prepared()
        train_config = self.config.train_config(final = False)
        input_len = splits.train.grid.count
        noise_std = (self.config.model.cnn or {}).get('noise_std', NOISE_STD)
        target_mean = float(np.mean(splits.train.reference_mg))

        folder = self.stage_folder(TUNE)
        trace_path = os.path.join(folder, TRACE_JSONL)
        # A trace written under another configuration cannot be resumed.
        if self.db.query_var('tune_trace') != config_hash and os.path.exists(trace_path):
            os.remove(trace_path)
        self.db.set_var('tune_trace', config_hash)
        self.db.commit()

        util.con_out(util.ConsoleHeader,
                     'Tuning for {0} epochs per trial'.format(train_config.epochs),
                     util.ConsoleNormal)

        def objective(params):
            spec = CnnSpec(input_len = input_len, noise_std = noise_std, **params)
            model = BuildModel(spec, self.config.seed, output_bias = target_mean)
            _, history = Train(model, splits.train, splits.validation, train_config)
            return history.tail_mean(configs.TUNE_TAIL)

        def progress(trial, best):
            if trial.ok:
                util.con_out('trial {0:>3}: {1:.6g} (best {2:.6g})'.format(
                    trial.iteration, trial.objective, best))
            else:
                util.con_err(util.ConsoleRed, 'trial {0:>3} failed: {1}'.format(
                    trial.iteration, trial.message), util.ConsoleNormal)

        space = CnnSearchSpace()
        hyperopt = self.config.hyperopt
        best, trials = Optimize(space, objective, hyperopt.n_init, hyperopt.n_iter, hyperopt.seed,
                                trace_path, progress)

        convergence_path = os.path.join(folder, CONVERGENCE_CSV)
        SaveConvergenceCsv(convergence_path, trials)
        spec = CnnSpec(input_len = input_len, noise_std = noise_std, **best.params)
        spec_path = os.path.join(folder, BEST_SPEC_JSON)
        util.WriteJson(spec_path, {'spec': spec.to_json(), 'objective': best.objective,
                                   'iteration': best.iteration})
        util.con_out(util.ConsoleHeader, 'Best trial {0}: {1}'.format(best.iteration, spec),
                     util.ConsoleNormal)

        self.finish_stage(TUNE, config_hash, prepare_hash,
                          [trace_path, convergence_path, spec_path])
        return spec, trials

    def network_spec(self, input_len):
        if self.config.model.cnn is not None:
            return CnnSpec(input_len = input_len, **self.config.model.cnn)
        self.require_stage(TRAIN, TUNE, self.tune_hash())
        obj = util.ReadJson(self.stage_path(TUNE, BEST_SPEC_JSON))
        spec = CnnSpec.from_json(obj['spec'])
        if spec.input_len != input_len:
            raise StageException(TRAIN, 'tuned network expects {0} wavelengths, data has {1}'.format(
                spec.input_len, input_len))
        return spec

    def Train(self):
        prepare_hash = self.prepare_hash()
        self.require_stage(TRAIN, PREPARE, prepare_hash)
        config_hash = self.train_hash()
        splits, _ = self.load_prepared()
        folder = self.stage_folder(TRAIN)
        if self.config.model.kind == configs.PLS:
            outputs = self.train_pls(splits, folder)
        else:
            outputs = self.train_cnn(splits, folder)
        self.finish_stage(TRAIN, config_hash, prepare_hash, outputs)
        return outputs

    def train_cnn(self, splits, folder):
        spec = self.network_spec(splits.train.grid.count)
        train_config = self.config.train_config(final = True)
        util.con_out(util.ConsoleHeader, 'Training {0} for {1} epochs'.format(
            spec, train_config.epochs), util.ConsoleNormal)

        def progress(epoch, train_loss, val_loss, lr):
            util.con_out('epoch {0:>4}: train {1:.6g}  validation {2:.6g}  lr {3:.4g}'.format(
                epoch, train_loss, val_loss, lr))

        model = BuildModel(spec, self.config.seed,
                           output_bias = float(np.mean(splits.train.reference_mg)))
        model, history = Train(model, splits.train, splits.validation, train_config, progress)

        model_path = os.path.join(folder, MODEL_BIN)
        history_path = os.path.join(folder, HISTORY_CSV)
        meta_path = os.path.join(folder, TRAIN_JSON)
        container.SaveModel(model_path, model)
        history.save_csv(history_path)
        util.WriteJson(meta_path, {
            'kind': configs.CNN,
            'spec': spec.to_json(),
            'train': train_config.to_json(),
            'grid': splits.train.grid.to_json(),
        })
        return [model_path, history_path, meta_path]

    def train_pls(self, splits, folder):
        settings = self.config.model.pls
        pooled = dataset.SpectraSet.Concat([splits.train, splits.validation])
        count, curve = pls.SelectComponents(pooled, splits.test, settings.components,
                                            settings.strategy, settings.folds,
                                            seed = self.config.seed, jobs = self.jobs)
        model = pls.PlsFit(pooled.absorbance, pooled.reference_mg, count)
        util.con_out(util.ConsoleHeader, 'PLS with {0} components ({1})'.format(
            count, settings.strategy), util.ConsoleNormal)

        model_path = os.path.join(folder, PLS_JSON)
        curve_path = os.path.join(folder, CV_CURVE_CSV)
        meta_path = os.path.join(folder, TRAIN_JSON)
        util.WriteJson(model_path, model.to_json())
        curve.save_csv(curve_path)
        util.WriteJson(meta_path, {
            'kind': configs.PLS,
            'components': count,
            'strategy': settings.strategy,
            'grid': splits.train.grid.to_json(),
        })
        return [model_path, curve_path, meta_path]

    # Returns a predict(absorbance) callable for the trained model.
    def load_predictor(self, stage, grid):
        meta = util.ReadJson(self.stage_path(TRAIN, TRAIN_JSON))
        if dataset.WavelengthGrid.from_json(meta['grid']) != grid:
            raise StageException(stage, 'model was trained on a different wavelength grid')
        if meta['kind'] == configs.PLS:
            model = pls.PlsModel.from_json(util.ReadJson(self.stage_path(TRAIN, PLS_JSON)))
            return meta['kind'], model, model.predict
        model, _ = container.LoadModel(self.stage_path(TRAIN, MODEL_BIN))
        return meta['kind'], model, lambda X: Predict(model, X)

    def Evaluate(self):
        prepare_hash = self.prepare_hash()
        self.require_stage(EVALUATE, PREPARE, prepare_hash)
        train_hash = self.train_hash()
        self.require_stage(EVALUATE, TRAIN, train_hash)
        splits, _ = self.load_prepared()
        kind, _, predict = self.load_predictor(EVALUATE, splits.train.grid)

        # The train row covers everything the model saw during fitting or tuning.
        pooled = dataset.SpectraSet.Concat([splits.train, splits.validation])
        result = report.EvalReport(self.config.name, kind)
        for name, subset in (('train', pooled), ('test', splits.test)):
            result.add(name, subset.sample_id, subset.reference_mg, predict(subset.absorbance))

        folder = self.stage_folder(EVALUATE)
        outputs = report.ExportReport(result, folder)
        util.con_out('{0:<8} {1:>8} {2:>8} {3:>8} {4:>8}'.format('Subset', 'N', 'R2', 'RMSE',
                                                                'Huber'))
        for subset in result.subsets:
            r2, rmse, huber = subset.metrics
            util.con_out('{0:<8} {1:>8} {2:>8} {3:>8.3f} {4:>8.3f}'.format(
                subset.name, len(subset.y_true), '-' if r2 is None else '{0:.3f}'.format(r2),
                rmse, huber))

        self.finish_stage(EVALUATE, util.HashConfig({'train': train_hash}), train_hash, outputs)
        return result

    def Activations(self, layer = 1, count = 5, statistic = report.L1, sample = None):
        self.require_stage(ACTIVATIONS, PREPARE, self.prepare_hash())
        self.require_stage(ACTIVATIONS, TRAIN, self.train_hash())
        splits, _ = self.load_prepared()
        kind, model, _ = self.load_predictor(ACTIVATIONS, splits.test.grid)
        if kind != configs.CNN:
            raise StageException(ACTIVATIONS, 'activations need a cnn model, found {0}'.format(kind))

        if sample is None:
            spectrum = np.mean(splits.test.absorbance, axis = 0)
        else:
            rows = np.flatnonzero(splits.test.sample_id == sample)
            if len(rows) == 0:
                raise StageException(ACTIVATIONS, 'no test sample named "{0}"'.format(sample))
            spectrum = splits.test.absorbance[rows[0]]

        maps = report.TopKernelActivations(model, spectrum, layer, count, statistic)
        folder = self.stage_folder(ACTIVATIONS)
        path = report.ExportActivations(os.path.join(folder, report.ACTIVATIONS_CSV),
                                        splits.test.grid, spectrum, maps)
        for item in maps:
            util.con_out('layer {0} kernel {1:>3}: {2:.6g}'.format(item.layer, item.kernel,
                                                                  item.score))
        return maps, path

    def Synth(self, path = None):
        if self.config.synthetic is None:
            raise StageException(SYNTH, 'config source is not synthetic')
        spectra = dataset.Synthesize(self.config.synthetic)
        if path is None:
            path = os.path.join(self.stage_folder(SYNTH), 'dataset.csv')
        dataset.SaveCsv(spectra, path)
        util.con_out(util.ConsoleHeader, 'Wrote {0} spectra to '.format(len(spectra)),
                     util.ConsoleBlue, path, util.ConsoleNormal)
        return path
