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
import errno
import hashlib
import json
import os
import sys

# Base class for every error raised by the library. Commands catch this and
# report it with the stage name instead of a traceback.
class NirchemException(Exception):
    def __init__(self, *args, **kwargs):
        super(NirchemException, self).__init__(*args, **kwargs)

# Console colors are markers passed between the text arguments of con_out and
# con_err; each one writes its escape sequence to the stream.
def _Color(code):
    return lambda fp: fp.write('\033[{0}m'.format(code))

ConsoleGreen = _Color(92)
ConsoleRed = _Color(91)
ConsoleNormal = _Color(0)
ConsoleBlue = _Color(94)
ConsoleHeader = _Color(95)

sConsoleColorsEnabled = True

def DisableConsoleColors():
    global sConsoleColorsEnabled
    sConsoleColorsEnabled = False

def _Write(fp, args):
    colors = sConsoleColorsEnabled and fp.isatty()
    for arg in args:
        if callable(arg):
            if colors:
                arg(fp)
        else:
            fp.write(arg)
    fp.write('\n')

def con_out(*args):
    _Write(sys.stdout, args)

def con_err(*args):
    _Write(sys.stderr, args)

# Canonical JSON: sorted keys, fixed separators. Python's float repr is the
# shortest string that round-trips, so fitted parameters reload bit-exactly.
def CanonicalJson(obj):
    return json.dumps(obj, sort_keys = True, separators = (',', ':'), allow_nan = False)

def HashConfig(obj):
    return hashlib.sha256(CanonicalJson(obj).encode('utf-8')).hexdigest()

def HashFile(path):
    digest = hashlib.sha256()
    try:
        with open(path, 'rb') as fp:
            for chunk in iter(lambda: fp.read(1 << 20), b''):
                digest.update(chunk)
    except OSError as exn:
        raise NirchemException('could not read {0}: {1}'.format(path, exn.strerror))
    return digest.hexdigest()

def WriteJson(path, obj):
    text = json.dumps(obj, sort_keys = True, indent = 2, allow_nan = False)
    try:
        with open(path, 'w', encoding = 'utf-8', newline = '\n') as fp:
            fp.write(text)
            fp.write('\n')
    except OSError as exn:
        raise NirchemException('could not write {0}: {1}'.format(path, exn.strerror))

def ReadJson(path):
    try:
        with open(path, 'r', encoding = 'utf-8') as fp:
            return json.load(fp)
    except OSError as exn:
        raise NirchemException('could not read {0}: {1}'.format(path, exn.strerror))
    except ValueError as exn:
        raise NirchemException('malformed JSON in {0}: {1}'.format(path, exn))

def MakeDirs(path):
    try:
        os.makedirs(path)
    except OSError as exn:
        if exn.errno != errno.EEXIST:
            raise NirchemException('could not create folder {0}: {1}'.format(
                path, exn.strerror))
    return path

# Floats in exported tables are written with 12 significant digits.
TABLE_FLOAT_FORMAT = '%.12g'

# Dataset CSVs keep full double precision so spectra survive a save/load cycle.
DATASET_FLOAT_FORMAT = '%.17g'
