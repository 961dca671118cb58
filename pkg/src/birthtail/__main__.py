from birthtail.cli import main
import sys
sys.exit(main())
