# vim: set sts=4 ts=8 sw=4 tw=99 et:
import argparse
import json
import os
import shutil
import tempfile
import unittest
from unittest import mock
import pandas as pd
from nirchem import config, report, run
from nirchem.context import (BEST_SPEC_JSON, CONVERGENCE_CSV, EVALUATE, HISTORY_CSV, MODEL_BIN,
                             PREPARE, TRACE_JSONL, TRAIN, TUNE, Context, StageException)
from nirchem.hyperopt import optimize
from nirchem.nn import training

def PipelineJson(**overrides):
    obj = {
        'name': 'smoke',
        'seed': 3,
        'source': {'synthetic': {'n_samples': 60, 'count': 40, 'n_peaks': 3}},
        'region': None,
        'outliers': {'folds': 5, 'components': [1, 5]},
        'preprocess': ['EMSC', 'GS'],
        'model': {
            'kind': 'cnn',
            'cnn': {'k1': 2, 'f1': 5, 'k2': 2, 'f2': 5, 'dense_units': 8},
            'train': {'epochs': 2, 'batch_size': 16},
            'pls': {'components': [1, 5], 'folds': 5},
        },
    }
    obj.update(overrides)
    return obj

def Options(**kwargs):
    options = argparse.Namespace(jobs = 1, no_color = True)
    for key, value in kwargs.items():
        setattr(options, key, value)
    return options

class PipelineTestCase(unittest.TestCase):
    def setUp(self):
        self.temp = tempfile.mkdtemp()
        self.out = os.path.join(self.temp, 'out')

    def tearDown(self):
        shutil.rmtree(self.temp)

    def context(self, obj):
        return Context(config.ParseConfig(obj, self.temp), self.out, Options())

class CnnPipelineTests(PipelineTestCase):
    def runTest(self):
        obj = PipelineJson()
        with self.context(obj) as cx:
            with self.assertRaises(StageException) as context:
                cx.Train()
            self.assertEqual(context.exception.stage, TRAIN)

            prepared, chain = cx.Prepare()
            self.assertEqual(chain.steps, ['EMSC', 'GS'])
            sizes = prepared.sizes()
            self.assertTrue(all(sizes[name] > 0 for name in ('train', 'validation', 'test')))

            cx.Train()
            result = cx.Evaluate()
            self.assertEqual([s.name for s in result.subsets], ['train', 'test'])
            self.assertEqual(len(result.get('train').y_true), sizes['train'] + sizes['validation'])

            maps, path = cx.Activations(layer = 2, count = 2)
            self.assertEqual(len(maps), 2)
            frame = pd.read_csv(path)
            self.assertEqual(len(frame), 40)

        metrics = report.LoadMetricsCsv(os.path.join(self.out, EVALUATE, report.METRICS_CSV))
        self.assertEqual(sorted(metrics), ['test', 'train'])

        # Changing the training setup makes the trained model stale.
        obj['model']['train']['epochs'] = 3
        with self.context(obj) as cx:
            with self.assertRaises(StageException) as context:
                cx.Evaluate()
            self.assertEqual(context.exception.stage, EVALUATE)

        # So does changing what prepare reads.
        obj['model']['train']['epochs'] = 2
        obj['seed'] = 4
        with self.context(obj) as cx:
            with self.assertRaises(StageException):
                cx.Train()

class PlsPipelineTests(PipelineTestCase):
    def runTest(self):
        obj = PipelineJson()
        obj['model']['kind'] = 'pls'
        with self.context(obj) as cx:
            cx.Prepare()
            outputs = cx.Train()
            self.assertEqual(len(outputs), 3)
            result = cx.Evaluate()
            self.assertIsNotNone(result.get('test').metrics)
            with self.assertRaises(StageException):
                cx.Activations()
            with self.assertRaises(StageException):
                cx.Tune()

        curve = pd.read_csv(os.path.join(self.out, TRAIN, 'cv_curve.csv'))
        self.assertEqual(list(curve['components']), [1, 2, 3, 4, 5])

def TuneJson(**overrides):
    obj = PipelineJson(**overrides)
    obj['source']['synthetic']['n_samples'] = 40
    obj['source']['synthetic']['count'] = 320
    del obj['model']['cnn']
    obj['model']['tune_epochs'] = 10
    obj['hyperopt'] = {'n_init': 2, 'n_iter': 2, 'seed': 0}
    return obj

class TuneTests(PipelineTestCase):
    def runTest(self):
        epochs = []
        calls = []

        def FlakyTrain(model, train, validation, train_config):
            epochs.append(train_config.epochs)
            calls.append(len(calls))
            if len(calls) == 2:
                raise training.TrainingException('loss diverged')
            return training.Train(model, train, validation, train_config)

        with self.context(TuneJson()) as cx:
            cx.Prepare()
            with mock.patch('nirchem.context.Train', side_effect = FlakyTrain):
                spec, trials = cx.Tune()
            self.assertEqual(epochs, [10, 10, 10, 10])
            self.assertEqual(len(trials), 4)
            self.assertEqual(trials[1].status, optimize.FAILED)
            self.assertTrue(trials[0].ok)
            self.assertTrue(set(t.status for t in trials) <= {optimize.OK, optimize.FAILED})
            self.assertEqual(trials[1].message, 'loss diverged')
            best = min((t for t in trials if t.ok), key = lambda t: t.objective)
            self.assertEqual(spec.k1, best.params['k1'])
            self.assertEqual(spec.input_len, 320)

            # Training without a fixed network picks up the tuned one.
            cx.Train()

        folder = os.path.join(self.out, TUNE)
        saved = optimize.ReadTrace(os.path.join(folder, TRACE_JSONL))
        self.assertEqual([t.to_json() for t in saved], [t.to_json() for t in trials])
        self.assertEqual(len(pd.read_csv(os.path.join(folder, CONVERGENCE_CSV))), 4)
        with open(os.path.join(folder, BEST_SPEC_JSON)) as fp:
            self.assertEqual(json.load(fp)['iteration'], best.iteration)

class TuneBudgetTests(PipelineTestCase):
    def budget(self, obj):
        epochs = []

        def CountingTrain(model, train, validation, train_config):
            epochs.append(train_config.epochs)
            history = mock.Mock()
            history.tail_mean.return_value = float(len(epochs))
            return model, history

        with self.context(obj) as cx:
            cx.Prepare()
            with mock.patch('nirchem.context.BuildModel'), \
                 mock.patch('nirchem.context.Train', side_effect = CountingTrain):
                _, trials = cx.Tune()
        shutil.rmtree(self.out)
        self.assertTrue(all(t.ok for t in trials))
        self.assertEqual(len(epochs), 4)
        return set(epochs)

    def runTest(self):
        plain = TuneJson()
        del plain['model']['tune_epochs']
        self.assertEqual(self.budget(plain), {config.TUNE_EPOCHS[False]})

        augmented = TuneJson(preprocess = ['DA', 'EMSC', 'GS'])
        del augmented['model']['tune_epochs']
        self.assertEqual(self.budget(augmented), {config.TUNE_EPOCHS[True]})
        self.assertEqual(config.TUNE_EPOCHS, {True: 40, False: 200})

        # Fixed epoch settings apply to final training only.
        augmented['model']['train']['epochs'] = 3
        augmented['model']['tune_epochs'] = 12
        self.assertEqual(self.budget(augmented), {12})

class SynthTests(PipelineTestCase):
    def runTest(self):
        with self.context(PipelineJson()) as cx:
            path = cx.Synth(os.path.join(self.temp, 'synthetic.csv'))
        data = PipelineJson(source = {'csv': 'synthetic.csv'})
        with self.context(data) as cx:
            prepared, _ = cx.Prepare()
            self.assertEqual(prepared.train.grid.count, 40)
            with self.assertRaises(StageException):
                cx.Synth()
        self.assertTrue(os.path.exists(path))

class ReproducibleRunTests(PipelineTestCase):
    def run_once(self, folder):
        cx = Context(config.ParseConfig(PipelineJson(preprocess = ['DA', 'EMSC', 'GS']),
                                        self.temp),
                     os.path.join(self.temp, folder), Options())
        with cx:
            cx.Prepare()
            cx.Train()
        outputs = {}
        for name in (MODEL_BIN, HISTORY_CSV):
            with open(os.path.join(self.temp, folder, TRAIN, name), 'rb') as fp:
                outputs[name] = fp.read()
        return outputs

    def runTest(self):
        self.assertEqual(self.run_once('first'), self.run_once('second'))

@unittest.skipUnless(os.environ.get('NIRCHEM_SLOW_TESTS'), 'set NIRCHEM_SLOW_TESTS to run')
class AugmentedAccuracyTests(PipelineTestCase):
    def evaluate(self, model):
        obj = PipelineJson(name = 'augmented', seed = 0, source = {'synthetic': {}},
                           preprocess = ['DA', 'EMSC', 'GS'])
        obj['outliers'] = {'folds': 10, 'components': [1, 20]}
        obj['model'] = model
        with self.context(obj) as cx:
            prepared, _ = cx.Prepare()
            self.assertEqual(prepared.train.grid.count, 600)
            cx.Train()
            result = cx.Evaluate()
        shutil.rmtree(self.out)
        return result.get('test').metrics

    def runTest(self):
        pls = self.evaluate({'kind': 'pls', 'pls': {'components': [1, 20], 'folds': 10}})
        self.assertGreater(pls.r2, 0.99)
        self.assertLess(pls.rmse, 5.0)

        cnn = self.evaluate({
            'kind': 'cnn',
            'cnn': {'k1': 14, 'f1': 29, 'k2': 30, 'f2': 22, 'dense_units': 176},
            'train': {'epochs': 50},
        })
        self.assertGreaterEqual(cnn.r2, 0.95)
        # Squared correlation ignores a constant offset; the error does not.
        self.assertLess(cnn.rmse, 10.0)

class CommandLineTests(PipelineTestCase):
    def runTest(self):
        path = os.path.join(self.temp, 'config.json')
        with open(path, 'w') as fp:
            json.dump(PipelineJson(), fp)

        def Command(*args):
            options = run.BuildOptions().parse_args(list(args) + ['-c', path, '-o', self.out,
                                                                  '--no-color'])
            return run.Run(options)

        self.assertFalse(Command('evaluate'))
        self.assertTrue(Command('prepare'))
        self.assertTrue(os.path.isdir(os.path.join(self.out, PREPARE)))
        self.assertTrue(Command('train', '--seed', '3'))
        self.assertFalse(Command('evaluate', '--seed', '5'))
        self.assertTrue(Command('evaluate'))

        with open(path, 'w') as fp:
            json.dump({'source': {'csv': 'x.csv'}, 'bogus': 1}, fp)
        self.assertFalse(Command('prepare'))
