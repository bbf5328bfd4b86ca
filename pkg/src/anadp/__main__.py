from anadp.cli import main
import sys

sys.exit(main())
