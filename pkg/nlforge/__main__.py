import sys

from pydantic import ValidationError

try:
    from nlforge.cli import main
except ValidationError as e:
    # settings are validated on import
    sys.stderr.write(f"invalid configuration: {e}\n")
    sys.exit(2)

sys.exit(main())
