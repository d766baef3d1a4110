from tilerepair.cli import main
import sys

sys.exit(main())
