"""
日志管理模块
统一的日志配置，控制台输出到 stderr，同时写入滚动日志文件
"""
import logging
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path


class NumpyWarningFilter(logging.Filter):
    """控制台不显示 numpy 的浮点溢出 RuntimeWarning（文件日志仍保留）"""

    def filter(self, record):
        if record.name == 'py.warnings' and record.levelno == logging.WARNING:
            msg = record.getMessage()
            if 'RuntimeWarning' in msg and ('overflow' in msg or 'invalid value' in msg):
                return False
        return True


def get_log_dir() -> Path:
    """返回跨平台日志目录，并确保它存在"""
    from platformdirs import user_log_dir
    d = Path(user_log_dir("apkit", appauthor=False))
    d.mkdir(parents=True, exist_ok=True)
    return d


class LogManager:
    """日志管理器

    导入时不创建任何 handler，只有 CLI 调用 setup() 后才写文件，
    库方式使用时日志由调用方自己配置。
    """

    _instance = None
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not self._initialized:
            self._file_handler = None
            self._console_handler = None
            self.logger = logging.getLogger('apkit')
            self.logger.addHandler(logging.NullHandler())
            LogManager._initialized = True

    def setup(self, console_level: str = 'INFO', file_level: str = 'WARNING',
              log_dir: Path | None = None):
        """安装控制台与文件 handler，可重复调用"""
        self._clear_handlers()
        self.logger.setLevel(logging.DEBUG)

        detailed_formatter = logging.Formatter(
            '[%(asctime)s] [%(levelname)s] [%(name)s:%(lineno)d] - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        simple_formatter = logging.Formatter(
            '[%(asctime)s] [%(levelname)s] %(message)s',
            datefmt='%H:%M:%S'
        )

        # stdout 留给 CSV/JSON 输出
        self._console_handler = logging.StreamHandler(sys.stderr)
        self._console_handler.setLevel(_level(console_level, logging.INFO))
        self._console_handler.setFormatter(simple_formatter)
        self._console_handler.addFilter(NumpyWarningFilter())
        self.logger.addHandler(self._console_handler)

        try:
            log_dir = log_dir or get_log_dir()
            stamp = datetime.now().strftime('%Y%m%d')
            self._file_handler = RotatingFileHandler(
                log_dir / f"apkit_{stamp}.log", maxBytes=10 * 1024 * 1024, backupCount=3,
                encoding='utf-8'
            )
            self._file_handler.setLevel(_level(file_level, logging.WARNING))
            self._file_handler.setFormatter(detailed_formatter)
            self.logger.addHandler(self._file_handler)

            error_file_handler = RotatingFileHandler(
                log_dir / f"apkit_error_{stamp}.log", maxBytes=10 * 1024 * 1024, backupCount=3,
                encoding='utf-8'
            )
            error_file_handler.setLevel(logging.ERROR)
            error_file_handler.setFormatter(detailed_formatter)
            self.logger.addHandler(error_file_handler)
        except OSError as e:
            self._file_handler = None
            self.logger.warning(f"File logging disabled: {e}")

        logging.captureWarnings(True)
        warnings_logger = logging.getLogger('py.warnings')
        warnings_logger.handlers.clear()
        for handler in self.logger.handlers:
            warnings_logger.addHandler(handler)

    def _clear_handlers(self):
        for handler in list(self.logger.handlers):
            if not isinstance(handler, logging.NullHandler):
                handler.close()
                self.logger.removeHandler(handler)

    def get_logger(self, name: str = None) -> logging.Logger:
        if not name:
            return self.logger
        if name == 'apkit' or name.startswith('apkit.'):
            return logging.getLogger(name)
        return logging.getLogger(f'apkit.{name}')


def _level(name: str, default: int) -> int:
    return getattr(logging, str(name).upper(), default)


# 全局日志管理器实例
log_manager = LogManager()


def get_logger(name: str = None) -> logging.Logger:
    return log_manager.get_logger(name)


def setup_logging(console_level: str = 'INFO', file_level: str = 'WARNING',
                  log_dir: Path | None = None):
    log_manager.setup(console_level, file_level, log_dir)


logger = get_logger()
