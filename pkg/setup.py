from setuptools import setup, find_packages

setup(
    name="tb_stigma",
    version="0.1.0",
    packages=find_packages(exclude=["test", "test.*"]),
    install_requires=[
        "numpy>=1.26.0",
        "scipy>=1.11.0",
        "pandas>=2.2.0",
        "plotly>=5.19.0",
        "toml>=0.10.2",
    ],
    entry_points={
        "console_scripts": [
            "tb-stigma=app.app:main",
        ],
    },
)
