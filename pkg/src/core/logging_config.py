import logging
import sys
from logging.handlers import RotatingFileHandler
import os
from datetime import datetime
from typing import Optional

from pythonjsonlogger import jsonlogger

DEFAULT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _make_formatter(log_format: str, json_format: bool) -> logging.Formatter:
    if json_format:
        return jsonlogger.JsonFormatter('%(asctime)s %(name)s %(levelname)s %(message)s')
    return logging.Formatter(log_format)


def setup_logging(
        name: Optional[str] = None,
        level: str = "INFO",
        log_file: Optional[str] = None,
        log_to_console: bool = True,
        log_format: Optional[str] = None,
        json_format: bool = False
):
    """
    Настройка логирования для модуля

    Args:
        name: Имя логгера
        level: Уровень логирования
        log_file: Путь к файлу логов (опционально)
        log_to_console: Выводить ли логи в консоль
        log_format: Формат логов
        json_format: Писать логи как JSON-строки
    """
    if log_format is None:
        log_format = DEFAULT_FORMAT

    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper()))

    # Удаляем существующие handlers чтобы избежать дублирования
    logger.handlers = []

    formatter = _make_formatter(log_format, json_format)

    # Console handler
    if log_to_console:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(getattr(logging, level.upper()))
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    # File handler
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)

        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=10 * 1024 * 1024,  # 10MB
            backupCount=5
        )
        file_handler.setLevel(getattr(logging, level.upper()))
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def setup_app_logging(
        service_name: str = "robuststop",
        level: str = "INFO",
        log_to_file: bool = False,
        json_format: bool = False,
        log_file: Optional[str] = None
):
    """
    Настройка логирования для всего приложения

    Args:
        service_name: Имя приложения (префикс файла логов)
        level: Уровень логирования
        log_to_file: Писать ли логи в файл (по умолчанию logs/<service>_YYYYMMDD.log)
        json_format: JSON-формат записей
        log_file: Явный путь к файлу логов
    """
    log_filename = None
    if log_to_file:
        log_filename = log_file or f"logs/{service_name}_{datetime.now().strftime('%Y%m%d')}.log"

    # Все модули пакета логируют в дерево 'src'
    setup_logging(
        name='src',
        level=level,
        log_file=log_filename,
        log_to_console=True,
        json_format=json_format
    )
    logging.getLogger('src').propagate = False

    # Уровни для сторонних библиотек
    logging.getLogger('numba').setLevel(logging.WARNING)
    logging.getLogger('asyncio').setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging configured for {service_name}")
    logger.debug(f"Log level: {level}")
    if log_filename:
        logger.debug(f"Log file: {log_filename}")

    return logger
