#!/usr/bin/env python3
"""
Setup script for SafeCharge
Joint pricing and port-wise charging control for EV charging stations
"""

from setuptools import setup
import os


# Read the README file
def read_readme():
    with open("README.md", "r", encoding="utf-8") as fh:
        return fh.read()


# Read requirements
def read_requirements():
    with open("requirements.txt", "r", encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip() and not line.startswith("#")]


# Get version from the CLI module
def get_version():
    version_file = os.path.join(os.path.dirname(os.path.abspath(__file__)), "experiments.py")
    with open(version_file, "r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("__version__"):
                return line.split("=")[1].strip().strip('"').strip("'")
    return "0.1.0"


setup(
    name="safecharge",
    version=get_version(),
    description="Joint pricing and safe port-wise charging for EV stations with soft actor-critic",
    long_description=read_readme(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
    ],
    keywords="ev charging pricing reinforcement-learning soft-actor-critic scheduling",
    py_modules=[
        "station_env",
        "safe_layer",
        "dense_net",
        "sac_agent",
        "fleet_baselines",
        "scenario_data",
        "experiments",
        "export_tools",
        "examples",
    ],
    python_requires=">=3.9",
    install_requires=read_requirements(),
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "pytest-cov>=4.0.0",
            "coverage>=7.0.0",
            "flake8>=6.0.0",
            "black>=23.0.0",
            "mypy>=1.0.0",
        ],
        "test": [
            "pytest>=7.0.0",
            "pytest-cov>=4.0.0",
            "coverage>=7.0.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "safecharge=experiments:main",
            "safecharge-examples=examples:main",
        ],
    },
    data_files=[
        ("share/safecharge", [
            "README.md",
            "requirements.txt",
            "requirements-dev.txt",
        ]),
        ("share/safecharge/sample_data", [
            "sample_data/README.md",
            "sample_data/prices_hourly.csv",
            "sample_data/arrivals.csv",
        ]),
        ("share/safecharge/sample_data/configs", [
            "sample_data/configs/quick.json",
            "sample_data/configs/full.json",
            "sample_data/configs/csv.json",
        ]),
        ("share/safecharge/docs", [
            "docs/README.md",
        ]),
    ],
    zip_safe=False,
    license="MIT",
    test_suite="tests",
)
