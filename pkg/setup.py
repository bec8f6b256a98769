# Copyright 2023 The hypou developers

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at

#     http://www.apache.org/licenses/LICENSE-2.0

# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from os import path

from setuptools import find_namespace_packages, setup

with open(path.join("frontend", "hypou", "_version.py")) as f:
    version = f.readlines()[-1].split()[-1].strip("\"'")

requirements = [
    "numpy>=1.22",
    "scipy",
    "jax>=0.4.14",
    "jaxlib>=0.4.14",
    "dataclasses-json>=0.6.0",
    "pandas",
]

classifiers = [
    "Environment :: Console",
    "Natural Language :: English",
    "Intended Audience :: Science/Research",
    "Development Status :: 3 - Alpha",
    "Operating System :: POSIX",
    "Operating System :: POSIX :: Linux",
    "Programming Language :: Python :: 3",
    "Programming Language :: Python :: 3.9",
    "Programming Language :: Python :: 3.10",
    "Programming Language :: Python :: 3.11",
    "Programming Language :: Python :: 3 :: Only",
    "Topic :: Scientific/Engineering :: Mathematics",
]

description = {
    "description": "Numerical Schauder estimates for hypoelliptic Ornstein-Uhlenbeck equations",
    "long_description": open("README.md").read(),
    "long_description_content_type": "text/markdown",
    "license": "Apache License 2.0",
}

setup(
    classifiers=classifiers,
    name="hypou",
    provides=["hypou"],
    version=version,
    python_requires=">=3.9",
    entry_points={"console_scripts": ["hypou = hypou.cli:main"]},
    install_requires=requirements,
    packages=find_namespace_packages(where="frontend", include=["hypou", "hypou.*"]),
    package_dir={"": "frontend"},
    include_package_data=True,
    **description,
)
