#!/usr/bin/env python3
"""
Dense U-Net Landmarks - Main Entry Point

Stacked scale-aggregation networks for facial landmark heatmap regression,
trained with a transform-coherence objective. Run with --help for commands.
"""

import sys
import os

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
