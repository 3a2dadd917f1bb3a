import sys
from typing import List, Optional

from src.config.settings import settings
from src.ui.cli.formatter import CLIFormatter
from src.ui.cli.interface import CLIInterface
from src.utils.errors import HedgeScopeError
from src.utils.logger import configure_logging, get_logger

logger = get_logger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    try:
        if settings.app.debug:
            logger.info("Starting %s v%s (%s)", settings.app.app_name, settings.app.version, settings.app.environment)

        return CLIInterface().run(argv)

    except HedgeScopeError as e:
        print(CLIFormatter.format_error(str(e)), file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\nInterrupted by user.", file=sys.stderr)
        return 130
    except Exception as e:
        print(CLIFormatter.format_error(f"Fatal error: {str(e)}"), file=sys.stderr)
        if settings.app.debug:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
