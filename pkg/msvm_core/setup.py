#!/usr/bin/env python

from setuptools import setup

setup(
    name="msvm_core",
    version="0.1.0",
    description="M-SVM² training, margins and radius-margin model selection.",
    packages=["msvm_core"],
    package_dir={"": "src"},
    python_requires=">=3.8",
    install_requires=["numpy>=1.21.5", "scipy>=1.10.0", "pyyaml>=5.3", "joblib>=1.1"],
)
