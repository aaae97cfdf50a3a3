# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

import setuptools

with open('README.rst', 'r') as f:
    long_description = f.read()

with open('consult/version.py', 'r') as f:
    exec(f.read())

setuptools.setup(
    name='consult',
    version=__version__,
    description='Two-state investment problems with costly consultants',
    long_description=long_description,
    # http://docutils.sourceforge.net/FAQ.html#what-s-the-official-mime-type-for-restructuredtext-data
    long_description_content_type="text/x-rst",
    packages=setuptools.find_packages(where='.', exclude=('tests',)),
    include_package_data=True,
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: Apache Software License',
        'Operating System :: POSIX :: Linux',
        'Operating System :: MacOS :: MacOS X',
        'Operating System :: Microsoft :: Windows',
    ],
    install_requires=[
        'typing-extensions;python_version<"3.8"',
        'numpy>=1.17',
    ],
    extras_require={
        'test': ['pytest', 'hypothesis'],
    },

    entry_points={'console_scripts': ('consult = consult.cli:main',)},
    python_requires='>=3.7',
)
