from setuptools import setup, find_packages

setup(
    name="jacobicast",
    version="0.3.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.9",
        "pandas>=1.4",
        "python-dotenv>=1.0.0",
    ],
    entry_points={
        "console_scripts": ["jacobicast=jacobicast.cli:main"],
    },
    description="Calibration and simulation of bounded, derivative-tracking forecast-error diffusions",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
)
