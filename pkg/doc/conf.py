#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# hypou documentation build configuration file.
#
# This file is execfiled with the current directory set to its
# containing dir.
import os
import re
import sys

# The package lives under frontend/, not at the repository root.
sys.path.insert(0, os.path.abspath(""))
sys.path.insert(0, os.path.join(os.getcwd(), "frontend"))
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "frontend"))

# -- General configuration ------------------------------------------------

needs_sphinx = "3.3"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
    "sphinx.ext.viewcode",
    "sphinx_automodapi.automodapi",
    "sphinx_automodapi.smart_resolver",
    "m2r2",
]

intersphinx_mapping = {
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}

autosummary_generate = True
autosummary_imported_members = False
automodapi_toctreedirnm = "code/api"
automodsumm_inherited_members = True

source_suffix = ".rst"
master_doc = "index"

project = "hypou"
copyright = "2023, hypou developers"
author = "hypou developers"

add_module_names = False

import hypou  # pylint: disable=wrong-import-position

release = hypou.__version__
version = re.match(r"^(\d+\.\d+)", release).expand(r"\1")

language = None
today_fmt = "%Y-%m-%d"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = "sphinx"

# -- Options for HTML output ----------------------------------------------

html_theme = "sphinx_rtd_theme"

autodoc_member_order = "bysource"
