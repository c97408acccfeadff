"""
Speaker/accent disentanglement toolkit
Main entry point for the command-line application
"""
import sys

from cli.commands import main


if __name__ == "__main__":
    sys.exit(main())
