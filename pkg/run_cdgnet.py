"""Простой запуск CLI без установки пакета, локально и из скриптов."""

import sys

from cdgnet.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
