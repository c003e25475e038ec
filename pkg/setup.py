import setuptools
from setuptools import setup

setup(
    name="corner",
    version="0.1.0",
    description="Corner growth model with competing clusters, its competition interface and "
                "the coupled exclusion process with a second-class particle",
    python_requires=">=3.8",
    install_requires=[
        "setuptools",
        "numpy",
        "numba",
        "scipy",
    ],
    setup_requires=["pytest-runner"],
    tests_require=["pytest", "hypothesis"],
    extras_require={"test": ["pytest", "hypothesis"]},
    packages=setuptools.find_packages(exclude=("tests", "examples")),
    entry_points={"console_scripts": ["corner = corner.cli:main"]},
)
