import json
import logging
import os
from datetime import datetime
from typing import Dict, Optional

from platformdirs import user_log_dir

APP_NAME = "dense-unet"


class ColoredFormatter(logging.Formatter):
    """Custom formatter with colors for terminal output"""

    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[35m', # Magenta
    }
    RESET = '\033[0m'

    def format(self, record):
        # colour a copy so file handlers sharing the record stay plain
        record = logging.makeLogRecord(record.__dict__)
        log_color = self.COLORS.get(record.levelname, self.RESET)
        record.levelname = f"{log_color}{record.levelname}{self.RESET}"
        return super().format(record)


def default_log_dir() -> str:
    return user_log_dir(APP_NAME)


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None):
    """Configure the root logger: colour console handler plus optional file"""
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, log_level.upper(), logging.INFO))
    root_logger.handlers.clear()

    # stderr keeps stdout free for JSON command output
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(ColoredFormatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%H:%M:%S'
    ))
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        root_logger.addHandler(file_handler)


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance"""
    return logging.getLogger(name)


class TrainingLogger:
    """Per-run logger: a human-readable log file plus a JSON-lines step log"""

    def __init__(self, run_id: str, log_dir: str = None):
        self.run_id = run_id
        self.logger = get_logger(f"train.{run_id}")

        if log_dir is None:
            log_dir = default_log_dir()
        os.makedirs(log_dir, exist_ok=True)

        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.log_file = os.path.join(log_dir, f"train_{run_id}_{timestamp}.log")
        self.jsonl_file = os.path.join(log_dir, f"train_{run_id}_{timestamp}.jsonl")

        self._file_handler = logging.FileHandler(self.log_file)
        self._file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        self.logger.addHandler(self._file_handler)

        self.start_time = datetime.now()
        self.steps_logged = 0
        self.last_record: Optional[Dict] = None
        self.errors = []

    def log_start(self, description: str, total_steps: int, start_step: int = 0):
        self.logger.info(f"Starting run {self.run_id}: {description}")
        if start_step:
            self.logger.info(f"Resuming at step {start_step} of {total_steps}")
        else:
            self.logger.info(f"Training for {total_steps} steps")

    def log_step(self, record: Dict, echo: bool = True):
        """Append one step record (step, lr, L_pp, L_pg1, L_pg2, loss, grad_norm, wall_ms)"""
        self.steps_logged += 1
        self.last_record = record
        with open(self.jsonl_file, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record) + "\n")
        if echo:
            self.logger.info(f"step {record['step']}: loss {record['loss']:.5f} "
                             f"(pp {record['L_pp']:.5f}, pg1 {record['L_pg1']:.5f}, "
                             f"pg2 {record['L_pg2']:.5f}) lr {record['lr']:.2e}")
        else:
            self.logger.debug(f"step {record['step']}: loss {record['loss']:.5f}")

    def log_error(self, error: str):
        self.errors.append(error)
        self.logger.error(error)

    def log_complete(self, success: bool, message: str = ""):
        duration = (datetime.now() - self.start_time).total_seconds()
        if success:
            self.logger.info(f"Run completed in {duration:.1f} seconds")
        else:
            self.logger.error(f"Run failed after {duration:.1f} seconds: {message}")
        self.logger.info(f"Steps logged: {self.steps_logged}")
        if self.errors:
            self.logger.warning(f"Errors encountered: {len(self.errors)}")
            for error in self.errors:
                self.logger.warning(f"  - {error}")
        self.close()

    def close(self):
        self.logger.removeHandler(self._file_handler)
        self._file_handler.close()

    def get_summary(self) -> dict:
        return {
            'run_id': self.run_id,
            'start_time': self.start_time.isoformat(),
            'duration': (datetime.now() - self.start_time).total_seconds(),
            'steps_logged': self.steps_logged,
            'last': self.last_record,
            'errors': self.errors,
            'log_file': self.log_file,
            'jsonl_file': self.jsonl_file
        }
