"""
Setup script for twoport_fit package.
"""
from setuptools import setup, find_packages


def read_requirements():
    with open('requirements.txt') as f:
        return f.read().splitlines()


setup(
    name="twoport_fit",
    version="1.0.0",
    description="Two-port linear analog circuit design from a target power spectrum",
    author="Two-Port Fit Team",
    packages=find_packages(exclude=['examples', 'examples.*']),
    package_data={'twoport_fit': ['config/default_config.ini']},
    install_requires=read_requirements(),
    entry_points={
        'console_scripts': [
            'twoport-fit=twoport_fit.cli.commands:main',
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Intended Audience :: Developers",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Topic :: Scientific/Engineering :: Electronic Design Automation (EDA)",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.10",
)
