import sys

from corrsel.cli import main

sys.exit(main())
