"""
    Sphinx configuration, API pages are generated from the package docstrings
"""
import os
import re
import sys

ROOT = os.path.abspath('..')
sys.path.insert(0, ROOT)

with open(os.path.join(ROOT, 'keyframe_bc', '__init__.py'), 'r') as fh:
    release = re.search(r'^__version__ = [\"\']([\d\w.]+)[\"\']', fh.read(), re.M).group(1)
version = '.'.join(release.split('.')[:2])

project = 'keyframe_bc'
author = 'keyframe_bc developers'
copyright = f'2026, {author}'

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.autosummary'
]
autodoc_member_order = 'bysource'
autodoc_mock_imports = ['dask', 'humanize', 'tqdm']

master_doc = 'index'
exclude_patterns = ['_build']

html_theme = 'sphinx_rtd_theme'
