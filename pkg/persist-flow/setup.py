#!/usr/bin/env python
from setuptools import setup, find_packages

setup(
    name='persist-flow',
    version='0.1',
    description='Two-phase, two-component porous media flow in persistent '
                'variables, with checks of the discrete estimates',
    # long_description=open('README.rst').read(),
    author='persist-flow developers',
    license='MIT',
    packages=find_packages(exclude=['tests']),
    include_package_data=True,
    zip_safe=False,
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Scientific/Engineering :: Physics',
    ],
    install_requires=[
        'numpy',
        'scipy >= 1.12',
        'scikit-learn',
        'joblib',
        'psutil',
        'docopt',
        'tqdm',
    ],
)
