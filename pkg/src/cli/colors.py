from colorama import Fore, Style, init
from typing import Any

# Initialize colorama
init(autoreset=True)


class Colors:
    """
    Color configurations for run summaries.

    Usage:
        print(Colors.outcome("timeout", 12))
        print(f"{Colors.PRIMARY}Running...{Colors.RESET}")
    """
    PRIMARY = Fore.CYAN
    SUCCESS = Fore.GREEN
    ERROR = Fore.RED
    WARNING = Fore.YELLOW
    HIGHLIGHT = Fore.MAGENTA
    RESET = Style.RESET_ALL
    BOLD = Style.BRIGHT

    OUTCOME_COLORS = {
        "success": SUCCESS,
        "failure": ERROR,
        "timeout": WARNING,
        "short_circuited": HIGHLIGHT,
    }

    @staticmethod
    def paint(color: str, text: Any) -> str:
        """Wrap text in a color and reset after it"""
        return f"{color}{text}{Colors.RESET}"

    @staticmethod
    def primary(text: Any) -> str:
        """Format text with primary color"""
        return Colors.paint(Colors.PRIMARY, text)

    @staticmethod
    def success(text: Any) -> str:
        """Format text with success color"""
        return Colors.paint(Colors.SUCCESS, text)

    @staticmethod
    def error(text: Any) -> str:
        """Format text with error color"""
        return Colors.paint(Colors.ERROR, text)

    @staticmethod
    def warning(text: Any) -> str:
        """Format text with warning color"""
        return Colors.paint(Colors.WARNING, text)

    @staticmethod
    def bold(text: Any) -> str:
        """Format text with bold style"""
        return Colors.paint(Colors.BOLD, text)

    @staticmethod
    def outcome(kind: str, text: Any) -> str:
        """Color ``text`` by call outcome kind"""
        return Colors.paint(Colors.OUTCOME_COLORS.get(kind, Colors.PRIMARY), text)

    @staticmethod
    def running(count: int, total: int) -> str:
        """Instance count colored green when all run, red when none do"""
        color = Colors.SUCCESS if count == total else Colors.ERROR if count == 0 else Colors.WARNING
        return Colors.paint(color, f"{count}/{total}")
