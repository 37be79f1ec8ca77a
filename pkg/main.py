#!/usr/bin/env python3.12
"""
SNA Lab - Main Entry Point
SNA实验室 - 主入口程序

Numerical laboratory for pinched skew products: bounding lines, condition
checks, dimension and Lyapunov estimates.
夹点斜积映射数值实验：上界线、条件检验、维数与李雅普诺夫指数估计。
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

# Add src to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from sna_lab.cli import run


def main():
    """Main entry point"""
    load_dotenv()
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
