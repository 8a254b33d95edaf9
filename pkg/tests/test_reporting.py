import os

from deconas import reporting, training

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def make_records(n=6):
    records = []
    for i in range(n):
        records.append(training.RewardRecord(
            epoch=i // 2, step=i % 2, psnr=20.0 + i, n_params=1000 + 100 * i,
            cb=0.5, reward=20.0 + i, baseline=19.5 + i, digits=(1, 2, 3),
            local_fusion=(1, 1), global_fusion=(1,)))
    return records


def read_magic(path):
    with open(path, "rb") as fh:
        return fh.read(8)


def test_reward_figure(tmp_path):
    path = tmp_path / "reward.png"
    reporting.save_reward_figure(make_records(), path)
    assert read_magic(path) == PNG_MAGIC


def test_param_scatter(tmp_path):
    path = tmp_path / "scatter.png"
    reporting.save_param_scatter(make_records(), path)
    assert read_magic(path) == PNG_MAGIC


def test_history_figure(tmp_path):
    history = [training.TrainPoint(step=s, loss=1.0 / (s + 1), val_psnr=20.0 + s)
               for s in range(5)]
    path = tmp_path / "history.png"
    reporting.save_history_figure(history, path)
    assert read_magic(path) == PNG_MAGIC
