from pathlib import Path

import setuptools
from setuptools import setup

this_dir = Path(__file__).parent
module_dir = this_dir / "turing_hopf"

requirements = []
requirements_path = this_dir / "requirements.txt"
if requirements_path.is_file():
    with open(requirements_path, encoding="utf-8") as requirements_file:
        requirements = requirements_file.read().splitlines()

data_files = [module_dir / "data" / "holling_tanner.toml"]

# -----------------------------------------------------------------------------

setup(
    name="turing_hopf",
    version="0.4.0",
    description="Turing-Hopf bifurcation analysis of delayed reaction-diffusion systems",
    license="MIT",
    packages=setuptools.find_packages(exclude=["tests"]),
    package_data={
        "turing_hopf": [str(p.relative_to(module_dir)) for p in data_files]
    },
    install_requires=requirements,
    entry_points={"console_scripts": ["turing-hopf = turing_hopf.__main__:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.13",
    ],
    keywords="bifurcation turing hopf delay reaction-diffusion normal-form",
)
