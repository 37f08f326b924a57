"""
Unit tests for logging setup
"""
import json

from loguru import logger

from app.core.logging import get_run_logger, loss_fields, setup_logging


class TestLogging:
    """Tests for setup_logging and run loggers"""

    def test_training_events(self, log_dir):
        """Test only records bound to a run reach training.jsonl"""
        setup_logging(level="INFO", log_dir=log_dir)
        get_run_logger("run-1", frames=4).info("epoch 0")
        logger.info("not a training event")
        logger.remove()

        lines = (log_dir / "training.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])["record"]
        assert record["extra"]["run_id"] == "run-1"
        assert record["extra"]["frames"] == 4
        assert record["message"] == "epoch 0"

    def test_generated_run_id(self):
        """Test a fresh id when none is given"""
        bound = get_run_logger()

        assert bound is not logger

    def test_loss_fields(self):
        """Test six significant digits"""
        assert loss_fields({"recon": 0.123456789, "lr": 1e-3}) == {"recon": 0.123457, "lr": 0.001}
