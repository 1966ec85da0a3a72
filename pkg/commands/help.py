import argparse

# Shown last, like a catch-all section
GENERAL = "General"


def format_command_list(subparsers) -> str:
    """Group registered subcommands by category and list them alphabetically."""
    categories: dict[str, list[tuple[str, str]]] = {}
    helps = {action.dest: action.help or "" for action in subparsers._choices_actions}

    for name, parser in subparsers.choices.items():
        category = parser.get_default("category") or GENERAL
        categories.setdefault(category, []).append((name, helps.get(name, "")))

    # Sort categories, but put "General" last
    sorted_categories = sorted(categories, key=lambda x: (x == GENERAL, x))

    lines = ["Available commands:"]
    for category in sorted_categories:
        commands = sorted(categories[category])
        width = max(len(name) for name, _ in commands)
        lines.append("")
        lines.append(f"{category}:")
        lines.extend(f"  {name.ljust(width)}  {desc}" for name, desc in commands)
    lines.append("")
    lines.append("Use '<command> --help' for the options of one command.")
    return "\n".join(lines)


def setup_help_command(subparsers, common: argparse.ArgumentParser) -> None:
    """Set up the help command that auto-discovers all commands."""
    parser = subparsers.add_parser("help", parents=[common], help="Show all available commands")

    def handle_help(args, config) -> int:
        print(format_command_list(subparsers))
        return 0

    parser.set_defaults(category=GENERAL, handler=handle_help)
