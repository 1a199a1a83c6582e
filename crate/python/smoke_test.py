"""Smoke test for the compiled bindings.

Build first:  maturin develop -m crates/py/Cargo.toml
Then run:     python python/smoke_test.py
"""

import math
import os
import tempfile

import vlascale_py as vs


def check_actions():
    poses = [[0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [0.1, 0.0, 0.2, 0.0, 0.3, 0.0], [0.2, -0.1, 0.2, 0.5, 0.3, -0.2]]
    for mode in ("world_rel", "world_delta", "eef_rel", "eef_delta"):
        acts = vs.encode_actions(poses, mode)
        back = vs.decode_actions(acts, poses[0], mode)
        err = max(abs(a - b) for p, q in zip(poses, back) for a, b in zip(p, q))
        assert err < 1e-9, (mode, err)
    values, mask = vs.embed_action("franka", [0.1] * 6 + [0.5])
    assert len(values) == 42 and sum(mask) == 7
    assert vs.extract_action("franka", values, mask) == [0.1] * 6 + [0.5]


def check_mixture():
    assert vs.mix_report().rstrip().endswith("182.49M")
    counts = vs.effective_counts()
    assert len(counts) == 20
    assert len(vs.effective_counts(mixture="d1")) == 6
    draws = vs.mix_sample(3, 100)
    assert draws == vs.mix_sample(3, 100)


def check_policy():
    cfg = """
[model]
sem_hidden = 16
act_hidden = 16
heads = 2
head_dim = 8
layers = 1
horizon = 4
action_dim = 2
proprio_dim = 2
vis_feat_dim = 2
patches_per_view = 1
max_views = 1
text_tokens = 2
vocab = 16

[train]
batch_size = 4
eval_batch_size = 4
"""
    policy = vs.Policy(cfg)
    assert policy.num_params() > 0
    records = policy.train(6, seed=1)
    assert [r["step"] for r in records] == list(range(1, 7))
    assert [r["stage"] for r in records] == [1, 1, 1, 2, 2, 2]
    chunk = policy.sample([0.0, 0.0], [1, 2], seed=5)
    assert len(chunk) == 4 and all(len(row) == 2 for row in chunk)
    assert all(math.isfinite(v) for row in chunk for v in row)


def check_eval():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "session.jsonl")
        models = ["alpha_ckpt", "beta_ckpt"]
        s = vs.EvalSession.create(path, models, group_size=2, trials=2, seed=7)
        while (queue := s.current_queue()) is not None:
            ticket = s.next_trial(*queue)
            assert not any(m in str(ticket) for m in models)
            s.record(ticket["task"], ticket["group"], ticket["alias"], [1] * len(ticket["rubric"]))
        assert s.is_complete()
        reopened = vs.EvalSession.open(path)
        report = reopened.report(deanonymize=True)
        assert not report["partial"]
        assert all(row["percentage"] == 100.0 for row in report["rows"])
        assert {row["model"] for row in report["rows"]} == set(models)
        try:
            vs.EvalSession.create(path, models)
        except RuntimeError as e:
            assert "io" in str(e)
        else:
            raise AssertionError("existing log was overwritten")


if __name__ == "__main__":
    check_actions()
    check_mixture()
    check_policy()
    check_eval()
    print("smoke test passed")
