# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

# This is the Python 3 version of option 3 in:
# https://packaging.python.org/guides/single-sourcing-package-version/#single-sourcing-the-version
__version__ = '0.1.0'
