# vim: set sts=4 ts=8 sw=4 tw=99 et:
import json
import os
import shutil
import tempfile
import unittest
from nirchem import config
from nirchem.config import ConfigException, ParseConfig

def Minimal(**extra):
    obj = {'source': {'csv': 'spectra.csv'}}
    obj.update(extra)
    return obj

class DefaultTests(unittest.TestCase):
    def runTest(self):
        cfg = ParseConfig(Minimal(), base_dir = '/data')
        self.assertEqual(cfg.region, (600.0, 1798.0))
        self.assertEqual(cfg.model.kind, config.CNN)
        self.assertIsNone(cfg.model.cnn)
        self.assertEqual(cfg.split['scheme'], config.STANDARD)
        self.assertEqual(cfg.resolve('spectra.csv'), os.path.join('/data', 'spectra.csv'))
        self.assertFalse(cfg.augmented)

        final = cfg.train_config()
        self.assertEqual((final.learning_rate, final.epochs, final.plateau_patience),
                         (0.094, 250, 25))
        self.assertEqual(final.batch_size, 45)
        tune = cfg.train_config(final = False)
        self.assertEqual(tune.epochs, 200)
        self.assertEqual(tune.plateau_patience, 201)

        augmented = ParseConfig(Minimal(preprocess = ['DA', 'EMSC', 'GS']))
        self.assertTrue(augmented.augmented)
        final = augmented.train_config()
        self.assertEqual((final.learning_rate, final.epochs, final.plateau_patience),
                         (0.084, 100, 10))
        self.assertEqual(augmented.train_config(final = False).epochs, 40)

class OverrideTests(unittest.TestCase):
    def runTest(self):
        obj = Minimal(model = {
            'kind': 'cnn',
            'cnn': {'k1': 14, 'f1': 29, 'k2': 30, 'f2': 22, 'dense_units': 176},
            'train': {'epochs': 3, 'batch_size': 8, 'learning_rate': 1},
            'tune_epochs': 12,
        })
        cfg = ParseConfig(obj)
        self.assertEqual(cfg.model.cnn['dropout_rate'], 0.0)
        final = cfg.train_config()
        self.assertEqual((final.epochs, final.batch_size, final.learning_rate), (3, 8, 1.0))
        tune = cfg.train_config(final = False)
        self.assertEqual((tune.epochs, tune.plateau_patience, tune.batch_size), (12, 13, 8))

        bad = Minimal(model = {'train': {'batch_size': 0}})
        with self.assertRaises(ConfigException):
            ParseConfig(bad).train_config()

class SeedTests(unittest.TestCase):
    def runTest(self):
        obj = {'seed': 4, 'source': {'synthetic': {'n_samples': 40}}}
        cfg = ParseConfig(obj)
        self.assertEqual(cfg.synthetic.seed, 4)
        self.assertEqual(cfg.hyperopt.seed, 4)
        self.assertEqual(cfg.augment.seed, 4)

        cfg = ParseConfig(obj, seed = 9)
        self.assertEqual(cfg.seed, 9)
        self.assertEqual(cfg.synthetic.seed, 9)
        self.assertEqual(cfg.train_config().seed, 9)

        pinned = ParseConfig(dict(obj, hyperopt = {'seed': 1}), seed = 9)
        self.assertEqual(pinned.hyperopt.seed, 1)

class RejectTests(unittest.TestCase):
    def runTest(self):
        cases = [
            {'source': {'csv': 'a.csv'}, 'colour': 'red'},
            {'name': 'x'},
            {'source': {'csv': 'a.csv', 'synthetic': {}}},
            Minimal(region = {'low_nm': 900, 'high_nm': 700}),
            Minimal(preprocess = ['GS', 'EMSC']),
            Minimal(preprocess = ['SNV']),
            Minimal(split = {'scheme': 'random'}),
            Minimal(split = {'test_fraction': 1.5}),
            Minimal(split = {'scheme': 'extrapolation', 'train_below_mg': 230}),
            Minimal(outliers = {'scope': 'per_sample'}),
            Minimal(outliers = {'folds': 1}),
            Minimal(model = {'kind': 'svm'}),
            Minimal(model = {'cnn': {'k1': 3}}),
            Minimal(model = {'tune_epochs': 5}),
            Minimal(model = {'pls': {'components': [5, 2]}}),
            Minimal(model = {'pls': {'strategy': 'best'}}),
            Minimal(hyperopt = {'n_init': 1}),
            Minimal(seed = True),
        ]
        for obj in cases:
            with self.assertRaises(ConfigException, msg = json.dumps(obj)):
                ParseConfig(obj)

        cfg = ParseConfig(Minimal(region = None))
        self.assertIsNone(cfg.region)

class LoadTests(unittest.TestCase):
    def setUp(self):
        self.temp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp)

    def runTest(self):
        path = os.path.join(self.temp, 'config.json')
        with open(path, 'w') as fp:
            json.dump(Minimal(name = 'tablets'), fp)
        cfg = config.LoadConfig(path)
        self.assertEqual(cfg.name, 'tablets')
        self.assertEqual(cfg.resolve(cfg.csv_path),
                         os.path.join(os.path.abspath(self.temp), 'spectra.csv'))
        self.assertEqual(cfg.to_json()['model']['kind'], 'cnn')

        with open(path, 'w') as fp:
            fp.write('{"source": ')
        with self.assertRaises(ConfigException):
            config.LoadConfig(path)
        with self.assertRaises(ConfigException):
            config.LoadConfig(os.path.join(self.temp, 'missing.json'))

class SampleConfigTests(unittest.TestCase):
    def runTest(self):
        root = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'tests')
        if not os.path.isdir(root):
            self.skipTest('sample configurations are not installed')
        for name in sorted(os.listdir(root)):
            path = os.path.join(root, name, 'config.json')
            if os.path.exists(path):
                cfg = config.LoadConfig(path)
                self.assertEqual(cfg.to_json()['name'], cfg.name)
