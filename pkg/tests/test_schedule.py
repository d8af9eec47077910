import pytest

from detkit.schedule import ScheduleConfig, lr_at


def default_cfg(**kw):
    kw.setdefault("iters_per_epoch", 1000)
    return ScheduleConfig(**kw)


class TestDefaults:
    def test_base_rate_after_warmup(self):
        cfg = default_cfg()
        assert lr_at(cfg.warmup_iters, cfg) == 0.005
        assert lr_at(3000, cfg) == 0.005  # epoch 4

    def test_first_drop(self):
        cfg = default_cfg()
        assert lr_at(8 * 1000, cfg) == 0.0005  # inside epoch 9
        assert lr_at(7 * 1000, cfg) == 0.0005  # first iteration of epoch 8
        assert lr_at(7 * 1000 - 1, cfg) == 0.005  # last iteration of epoch 7

    def test_second_drop(self):
        cfg = default_cfg()
        assert lr_at(11 * 1000, cfg) == 0.0001  # inside epoch 12
        assert lr_at(10 * 1000, cfg) == 0.0001  # first iteration of epoch 11

    def test_warmup_start(self):
        cfg = default_cfg()
        assert lr_at(0, cfg) == pytest.approx(0.005 / 3)

    def test_warmup_is_linear_and_continuous(self):
        cfg = default_cfg()
        quarter = lr_at(125, cfg)
        half = lr_at(250, cfg)
        start = lr_at(0, cfg)
        assert half - start == pytest.approx(2 * (quarter - start))
        assert lr_at(499, cfg) == pytest.approx(0.005, rel=1e-2)
        assert lr_at(500, cfg) == 0.005


class TestShape:
    def test_non_increasing_after_warmup(self):
        cfg = default_cfg()
        rates = [lr_at(i, cfg) for i in range(500, 13_000, 37)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))

    def test_piecewise_constant_between_drops(self):
        cfg = default_cfg()
        assert len({lr_at(i, cfg) for i in range(1000, 7000, 100)}) == 1
        assert len({lr_at(i, cfg) for i in range(7000, 10_000, 100)}) == 1

    def test_exactly_one_distinct_rate_per_segment(self):
        cfg = default_cfg()
        rates = sorted({lr_at(i, cfg) for i in range(500, 13_000)},
                       reverse=True)
        assert rates == [0.005, 0.0005, 0.0001]

    def test_gamma_path_multiplicative_drops(self):
        cfg = default_cfg(step_lrs=None)
        before = lr_at(6_999, cfg)
        after_first = lr_at(7_000, cfg)
        after_second = lr_at(10_000, cfg)
        assert after_first == pytest.approx(before * cfg.gamma)
        assert after_second == pytest.approx(before * cfg.gamma ** 2)

    def test_no_warmup(self):
        cfg = default_cfg(warmup_iters=0)
        assert lr_at(0, cfg) == 0.005


class TestValidation:
    def test_negative_iteration(self):
        with pytest.raises(ValueError):
            lr_at(-1, default_cfg())

    def test_bad_base_lr(self):
        with pytest.raises(ValueError):
            default_cfg(base_lr=0.0)

    def test_bad_gamma(self):
        with pytest.raises(ValueError):
            default_cfg(gamma=1.0)

    def test_step_epochs_increasing(self):
        with pytest.raises(ValueError):
            default_cfg(step_epochs=(11, 8), step_lrs=(0.0005, 0.0001))

    def test_step_lrs_length(self):
        with pytest.raises(ValueError):
            default_cfg(step_lrs=(0.0005,))

    def test_step_lrs_must_decrease(self):
        with pytest.raises(ValueError):
            default_cfg(step_lrs=(0.0005, 0.001))

    def test_bad_iters_per_epoch(self):
        with pytest.raises(ValueError):
            ScheduleConfig(iters_per_epoch=0)
