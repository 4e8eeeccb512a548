import json
import logging
import os

from src.utils.logger import ColoredFormatter, TrainingLogger, get_logger, setup_logging


def record(step, loss=1.0):
    return {'step': step, 'lr': 2.5e-4, 'loss': loss, 'L_pp': 0.0, 'L_pg1': loss / 2,
            'L_pg2': loss / 2, 'grad_norm': 1.0, 'wall_ms': 5.0}


def test_step_records_are_json_lines(tmp_log_dir):
    log = TrainingLogger("unit", log_dir=tmp_log_dir)
    log.log_start("two steps", total_steps=2)
    log.log_step(record(1, 0.9))
    log.log_step(record(2, 0.8), echo=False)
    log.log_complete(True)
    with open(log.jsonl_file, encoding='utf-8') as f:
        lines = [json.loads(line) for line in f]
    assert [r['step'] for r in lines] == [1, 2]
    assert lines[1]['loss'] == 0.8
    assert os.path.exists(log.log_file)


def test_summary_tracks_errors(tmp_log_dir):
    log = TrainingLogger("errs", log_dir=tmp_log_dir)
    log.log_step(record(1))
    log.log_error("loss went non-finite")
    summary = log.get_summary()
    log.close()
    assert summary['run_id'] == "errs"
    assert summary['steps_logged'] == 1
    assert summary['last']['step'] == 1
    assert summary['errors'] == ["loss went non-finite"]
    assert summary['jsonl_file'].endswith(".jsonl")


def test_file_log_has_no_colour_codes(tmp_path):
    path = tmp_path / "run.log"
    root = logging.getLogger()
    saved_handlers, saved_level = list(root.handlers), root.level
    try:
        setup_logging("DEBUG", str(path))
        get_logger("unit.colour").warning("plain text please")
        for handler in root.handlers:
            handler.flush()
    finally:
        for handler in root.handlers:
            if isinstance(handler, logging.FileHandler):
                handler.close()
        root.handlers[:] = saved_handlers
        root.setLevel(saved_level)
    text = path.read_text()
    assert "plain text please" in text
    assert "\033[" not in text


def test_coloured_formatter_leaves_record_untouched():
    rec = logging.LogRecord("x", logging.ERROR, __file__, 1, "boom", None, None)
    out = ColoredFormatter('%(levelname)s %(message)s').format(rec)
    assert "\033[31m" in out
    assert rec.levelname == "ERROR"
