from setuptools import find_packages, setup

with open("requirements.txt") as f:
    requirements = [
        line.strip() for line in f if line.strip() and not line.startswith("#")
    ]

setup(
    name="collapsesim",
    version="0.1.0",
    packages=find_packages(include=["collapsesim", "collapsesim.*"]),
    include_package_data=True,
    keywords="quantum, interferometry, wave-function collapse, stochastic schrodinger equation",
    python_requires=">=3.10, <4",
    install_requires=requirements,
    extras_require={
        "test": ["pytest==8.4.1", "hypothesis==6.136.6"],
    },
    entry_points={
        "console_scripts": ["collapsesim=collapsesim.cli:main"],
    },
    description="Thought-experiment simulator for wave-function collapse",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
)
