#!/usr/bin/env python
# vim: set ts=4 sw=4 tw=99 et:

import sys

# This if statement is supposedly required by multiprocessing.
if __name__ == '__main__':
    from setuptools import setup, find_packages
    try:
        import sqlite3
    except:
        raise SystemError('py-sqlite3 must be installed')

    setup(name = 'nirchem',
          version = '1.0',
          description = 'Convolutional and PLS calibration of near-infrared spectra',
          packages = find_packages(exclude = ['tests', 'tests.*']),
          python_requires = '>=3.8',
          install_requires = [
              'numpy>=1.20',
              'scipy>=1.7',
              'pandas>=1.5',
          ],
          entry_points = {'console_scripts': ['nirchem = nirchem.run:cli_run']},
          zip_safe = False)
