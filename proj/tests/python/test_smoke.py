import math

import numpy as np
import pytest

import mvrlab


def test_scalar_examples():
    assert mvrlab.h_vid(1.0, 0.0) == pytest.approx(0.73106, abs=1e-5)
    assert mvrlab.h_vid(0.3, 0.9, 4.0) + mvrlab.h_vid(0.9, 0.3, 4.0) == pytest.approx(1.0, abs=1e-12)
    assert mvrlab.log_sigmoid(2.0) == pytest.approx(-0.12693, abs=1e-5)
    assert mvrlab.r_mvr(1.0, -0.69315, 0.1) == pytest.approx(0.930685)
    lhs, rhs = mvrlab.jensen_gap([0.0, 1.0], [0.0])
    assert lhs == pytest.approx(-0.47408, abs=1e-5)
    assert rhs == pytest.approx(-0.50320, abs=1e-5)


def test_relevance_model_bounded_and_batched():
    m = mvrlab.RelevanceModel.init(4, 32, 3)
    states = np.random.default_rng(0).normal(size=(50, 4)) * 10
    f = m.f_batch(states)
    assert f.shape == (50,)
    assert np.all(np.abs(f) <= 1 + 1e-9)
    assert f[7] == m.f(states[7])
    assert len(m.flat()) == m.num_params()
    assert np.linalg.norm(m.encode_seq_mean(states[:1])) == pytest.approx(1.0)


def test_environment_step():
    s = mvrlab.env_reset("cycler")
    s2, r = mvrlab.env_step("cycler", s, np.array([1.0, 0.0]))
    assert s2[0] == pytest.approx(0.3)
    assert 0.0 <= r <= 1.0
    seated = np.tile([0.7, 0.78, 0.0, 0.0], (20, 1))
    assert mvrlab.env_success("seat", seated)


def test_config_errors_raise():
    assert "w = 0.5" in mvrlab.resolve_config("[shaping]\nw = 0.5\n")
    with pytest.raises(ValueError):
        mvrlab.resolve_config("[shaping]\nw = -1\n")
    with pytest.raises(ValueError):
        mvrlab.resolve_config("", {"shaping.bogus": "1"})


def test_short_training_run_is_deterministic():
    overrides = {
        "schedule.total_steps": "2000",
        "schedule.update_every": "1000",
        "schedule.render_every": "1",
        "agent.warmup_steps": "500",
        "relevance.max_epochs": "5",
        "run.eval_episodes": "2",
    }
    a = mvrlab.train("[env]\nname = seat\n", overrides)
    b = mvrlab.train("[env]\nname = seat\n", overrides)
    assert len(a["rows"]) == 2
    assert a["rows"] == b["rows"] or all(
        (x == y) or (isinstance(x, float) and math.isnan(x) and math.isnan(y))
        for ra, rb in zip(a["rows"], b["rows"])
        for x, y in zip(ra.values(), rb.values())
    )
    assert all(v <= 0.0 for v in a["r_vlm_history"])
