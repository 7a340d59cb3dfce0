import logging
import os
import sys

from dotenv import load_dotenv

from hpfnav.cli import main

# Explicitly load .env from the script's directory
env_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), '.env')
loaded = load_dotenv(env_path)
if not loaded:
    logging.debug(f"No .env file at {env_path}; using the process environment")

if __name__ == "__main__":
    sys.exit(main())
