#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# spheremimo documentation build configuration file.

import datetime
import os
import sys

sys.path.insert(0, os.path.abspath('../'))

import spheremimo

extensions = [
    'sphinx.ext.autodoc',
    'sphinx_autodoc_typehints',
    'sphinx.ext.viewcode',
    'sphinx.ext.doctest',
    'myst_parser',
]

source_suffix = {
    ".rst": "restructuredtext",
    ".md": "markdown",
}
master_doc = 'index'

project = "spheremimo"
copyright = "{d}, spheremimo contributors".format(d=datetime.datetime.utcnow().strftime("%Y"))
author = "spheremimo contributors"

release = spheremimo.__version__
version = '.'.join(release.split('.')[:2])

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'

# -- HTML output ----------------------------------------------------------

html_theme = 'alabaster'
html_theme_options = {
    'fixed_sidebar': False,
    'page_width': '1200px',
    'sidebar_width': '300px',
}
html_last_updated_fmt = "%Y/%m/%d"
html_sidebars = {
    '**': [
        'about.html',
        'globaltoc.html',
        'searchbox.html',
    ]
}
