#!/usr/bin/env python3
"""Entry point: python extract.py <video> -o <out.bmsq> [flags]."""
import sys

from faceextract.cli import main

if __name__ == "__main__":
    sys.exit(main())
