# vim: set ts=8 sts=4 sw=4 tw=99 et:
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
import argparse
import os
import sys
import traceback
from nirchem import util
from nirchem.config import LoadConfig
from nirchem.context import Context
from nirchem.report import STATISTICS, L1

COMMANDS = ['prepare', 'tune', 'train', 'evaluate', 'activations', 'synth']

def BuildOptions():
    parser = argparse.ArgumentParser(prog = 'nirchem')
    parser.add_argument("command", choices = COMMANDS, help = "Pipeline stage to run.")
    parser.add_argument("-c",
                        "--config",
                        dest = "config",
                        required = True,
                        help = "JSON run configuration.")
    parser.add_argument("--seed",
                        dest = "seed",
                        type = int,
                        default = None,
                        help = "Override the configuration's seed.")
    parser.add_argument("-o",
                        "--out",
                        dest = "out",
                        default = "out",
                        help = "Output folder for stage artifacts (default: ./out).")
    parser.add_argument("--no-color",
                        dest = "no_color",
                        action = "store_true",
                        default = False,
                        help = "Disable console colors.")
    parser.add_argument("-j",
                        "--jobs",
                        dest = "jobs",
                        type = int,
                        default = 1,
                        help = "Number of worker processes for cross-validation folds.")

    # Command specific options.
    parser.add_argument("--layer",
                        dest = "layer",
                        type = int,
                        choices = [1, 2],
                        default = 1,
                        help = "activations: convolution layer to inspect.")
    parser.add_argument("--top",
                        dest = "top",
                        type = int,
                        default = 5,
                        help = "activations: number of kernels to export.")
    parser.add_argument("--statistic",
                        dest = "statistic",
                        choices = STATISTICS,
                        default = L1,
                        help = "activations: kernel ranking statistic.")
    parser.add_argument("--sample",
                        dest = "sample",
                        default = None,
                        help = "activations: test sample to inspect (default: mean test spectrum).")
    parser.add_argument("--output",
                        dest = "output",
                        default = None,
                        help = "synth: CSV path to write.")
    return parser

def Run(options):
    stage = 'config'
    try:
        config = LoadConfig(options.config, options.seed)
        stage = options.command
        with Context(config, options.out, options) as cx:
            if options.command == 'prepare':
                cx.Prepare()
            elif options.command == 'tune':
                cx.Tune()
            elif options.command == 'train':
                cx.Train()
            elif options.command == 'evaluate':
                cx.Evaluate()
            elif options.command == 'activations':
                cx.Activations(options.layer, options.top, options.statistic, options.sample)
            elif options.command == 'synth':
                cx.Synth(options.output)
    except util.NirchemException as exn:
        util.con_err(util.ConsoleRed, '[{0}] '.format(getattr(exn, 'stage', stage)),
                     util.ConsoleNormal, str(exn))
        return False
    except Exception:
        traceback.print_exc()
        util.con_err(util.ConsoleRed, '[{0}] unexpected failure.'.format(stage),
                     util.ConsoleNormal)
        return False
    return True

def cli_run(argv = None):
    options = BuildOptions().parse_args(argv)
    if options.no_color:
        util.DisableConsoleColors()
    if options.jobs < 1:
        sys.stderr.write('Error: --jobs must be at least 1.\n')
        sys.exit(1)
    if not os.path.exists(options.config):
        sys.stderr.write('Error: config does not exist: {0}\n'.format(options.config))
        sys.exit(1)
    if not Run(options):
        sys.exit(1)
