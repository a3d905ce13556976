"""
Start point for running the conns command line
"""
import sys

from dotenv import load_dotenv

load_dotenv()

from app.conns.cli import main  # noqa: E402
from app.conns.logging_config import global_exception_handler  # noqa: E402

sys.excepthook = global_exception_handler

if __name__ == "__main__":
    sys.exit(main())
