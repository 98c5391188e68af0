# Sphinx configuration for the retinakit documentation.

import os
import re
import sys

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, ROOT)

project = "retinakit"
author = "retinakit developers"
copyright = "2026, retinakit developers"

# Read the version without importing the package (cv2 may be absent on doc builders)
with open(os.path.join(ROOT, "retinakit", "version.py")) as f:
    match = re.search(r"VERSION = ['\"]([^'\"]*)['\"]", f.read())
version = release = match.group(1) if match else "0.0.0"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx.ext.viewcode",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx_rtd_theme",
]

templates_path = ["_templates"]
exclude_patterns = ["_build"]

html_theme = "sphinx_rtd_theme"
html_title = f"retinakit {version}"

# Docstrings are Google style
napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_include_init_with_doc = True

autodoc_member_order = "bysource"
autodoc_typehints = "description"
autodoc_mock_imports = ["cv2"]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
    "skimage": ("https://scikit-image.org/docs/stable/", None),
    "pydantic": ("https://docs.pydantic.dev/latest/", None),
}
