#!/usr/bin/env python3
"""
Entry point for TrajForge.
"""

import sys

from trajforge.main import main

if __name__ == "__main__":
    sys.exit(main())
