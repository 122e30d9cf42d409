import argparse
import logging
import sys
from typing import List, Optional

from src.cli.commands import (
    EXIT_INPUT, cmd_aggregate, cmd_check, cmd_simulate, cmd_solve, cmd_sweep
)
from src.core.config import settings
from src.core.logging_config import setup_app_logging

logger = logging.getLogger(__name__)


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robuststop",
        description="Робастная оптимальная остановка диффузий с переключением режимов",
    )
    parser.add_argument("--log-level", default=settings.log_level, help="Уровень логирования")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Решить HJB-неравенство и извлечь пороги")
    solve.add_argument("--config", required=True, help="JSON-конфигурация запуска")
    solve.add_argument("--out", required=True, help="CSV решения")

    sweep = sub.add_parser("sweep", help="Серия решений по theta или epsilon")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", default="theta", choices=["theta", "epsilon"])
    sweep.add_argument("--values", required=True, type=_float_list, help="Например 0.01,0.1,1")
    sweep.add_argument("--out", required=True, help="Каталог результатов")

    aggregate = sub.add_parser("aggregate", help="Нормы ошибок двухмасштабного агрегирования")
    aggregate.add_argument("--config", required=True)
    aggregate.add_argument("--out", required=True, help="CSV норм ошибок")
    aggregate.add_argument("--write-solutions", action="store_true",
                           help="Сохранить решения для каждого epsilon и предельной задачи")

    simulate = sub.add_parser("simulate", help="Монте-Карло проверка правила остановки")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--solution", required=True, help="CSV решения (из solve)")
    simulate.add_argument("--out", required=True, help="CSV отчёта")

    check = sub.add_parser("check", help="Проверить сохранённое решение")
    check.add_argument("--config", required=True)
    check.add_argument("--solution", required=True)
    check.add_argument("--analytic", action="store_true",
                       help="Сравнить с замкнутой формулой (m=1, theta=0)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else 0

    setup_app_logging(level=args.log_level, log_to_file=settings.log_to_file,
                      json_format=settings.log_json, log_file=settings.log_file_path)
    logger.debug(f"robuststop {args.command}, threads={settings.threads}")

    if args.command == "solve":
        return cmd_solve(args.config, args.out)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.param, args.values, args.out)
    if args.command == "aggregate":
        return cmd_aggregate(args.config, args.out, args.write_solutions)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.solution, args.out)
    return cmd_check(args.config, args.solution, args.analytic)


if __name__ == "__main__":
    sys.exit(main())
