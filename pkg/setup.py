#!/usr/bin/env python
# Root manifest: installs both packages (msvm_core, msvm_cmd) from their src trees.

from setuptools import setup

setup(
    name="msvm2",
    version="0.1.0",
    description="M-SVM² training, margins and radius-margin model selection, with CLI.",
    packages=["msvm_core", "msvm_cmd"],
    package_dir={
        "msvm_core": "msvm_core/src/msvm_core",
        "msvm_cmd": "msvm_cmd/src/msvm_cmd",
    },
    python_requires=">=3.8",
    install_requires=["numpy>=1.21.5", "scipy>=1.10.0", "pyyaml>=5.3", "joblib>=1.1"],
    entry_points={"console_scripts": ["msvm2 = msvm_cmd.cli:main"]},
)
