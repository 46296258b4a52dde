#!/usr/bin/env python3
"""
dispflow 包的入口点，支持 python -m dispflow 调用
"""

import sys

from dispflow.cli import main

if __name__ == '__main__':
    sys.exit(main())
