#!/usr/bin/env python

from setuptools import setup

setup(
    name="msvm_cmd",
    version="0.1.0",
    description="Command-line interface of msvm_core.",
    packages=["msvm_cmd"],
    package_dir={"": "src"},
    python_requires=">=3.8",
    install_requires=["msvm_core"],
    entry_points={"console_scripts": ["msvm2 = msvm_cmd.cli:main"]},
)
