# -*- coding: utf-8 -*-
#
# Sphinx configuration for the persist-flow documentation.

import os
import sys
sys.path.insert(0, os.path.abspath('../persist-flow'))

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
]
autodoc_member_order = 'bysource'

source_suffix = '.rst'
master_doc = 'index'

project = 'persist-flow'
copyright = '2026, persist-flow developers'
author = 'persist-flow developers'
version = '0.1'
release = '0.1'

exclude_patterns = ['_build']
pygments_style = 'sphinx'

import sphinx_rtd_theme  # type: ignore
html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
