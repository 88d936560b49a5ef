import datetime

import numpy as np
import pytest
import yaml
import msvm_core as core


def test_data_logger(tmp_path):
    config = {"logging": {"log_dir": str(tmp_path)}, "solver": {"tol": 1e-8}}
    logger = core.logging.DataLogger(config)

    logger.add("C", 1.0)
    with pytest.raises(ValueError):
        logger.add("C", 2.0)

    logger.append("bound", 3.0)
    logger.append("bound", 4.0)
    logger.append("scores", [1.0, 2.0])
    with pytest.raises(ValueError):
        logger.append("scores", [1.0, 2.0, 3.0])

    timestamp = datetime.datetime(2024, 5, 6, 7, 8, 9)
    path = logger.save(timestamp, name="grid")
    assert path == tmp_path / "grid_2024-05-06_07-08-09"

    data = np.load(path / "data.npz")
    assert np.allclose(data["bound"], [3, 4])
    assert data["scores"].shape == (1, 2)
    assert data["C"] == 1.0

    with open(path / "config.yaml") as f:
        assert yaml.safe_load(f) == config
