#!/usr/bin/env python
from setuptools import setup

setup(name='fbst',
      version='0.1',
      description='Fast broadband beamspace transformation for wideband arrays',
      packages=['fbst', 'fbst.baselines', 'fbst.tools'],
      install_requires=['finufft',
                        'matplotlib',
                        'numpy',
                        'scipy',
                        'tqdm'],
      extras_require={'test': ['pytest']},
      entry_points={'console_scripts': ['fbst=fbst.cli:main']},
      python_requires='>=3.7')
