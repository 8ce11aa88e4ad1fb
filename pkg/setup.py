from setuptools import setup, find_packages

setup(
    name="carleman_lbm",
    version="0.1.0",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "typer",
        "pydantic>=2",
        "rich",
        "pandas",
        "numpy",
        "scipy",
    ],
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "carleman-lbm=carleman_lbm.main:app",
        ],
    },
)
