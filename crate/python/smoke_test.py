"""Smoke test for the toolseq Python module.

Build and install first, e.g. `maturin develop --release -m crates/py/Cargo.toml`.
"""

import json
import os
import tempfile

import toolseq


def main():
    clean = toolseq.scene(48, 48, 3)
    assert (clean.width, clean.height) == (48, 48)
    assert all(0.0 <= v <= 1.0 for v in clean.data())

    a = toolseq.Image.filled(16, 16, [0.5, 0.5, 0.5])
    b = toolseq.Image.filled(16, 16, [0.6, 0.6, 0.6])
    assert abs(toolseq.psnr(a, b) - 20.0) < 1e-9
    assert abs(toolseq.ssim(clean, clean) - 1.0) < 1e-9

    degraded, params = toolseq.synth_case(clean, 1, 7)
    assert len(json.loads(params)) == 2

    reg = toolseq.Registry()
    names = reg.names()
    assert len(names) == 11 and names[-1] == "STOP"
    feats = toolseq.features(degraded)
    assert all(0.0 <= v <= 1.0 for v in feats)

    before = toolseq.score(degraded)
    seq, best, restored = toolseq.best_sequence(degraded, reg, l_max=2)
    assert best >= before
    assert abs(toolseq.score(reg.apply_sequence(seq, degraded)) - best) < 1e-12
    oracle_seq, _, _ = toolseq.best_sequence(degraded, reg, 1, "oracle", clean)
    assert len(oracle_seq) <= 1

    corpus = toolseq.make_corpus(4, 48, 10)
    pairs = [(toolseq.synth_case(c, 1, i)[0], None) for i, c in enumerate(corpus)]
    cfg = json.dumps({"updates": 2, "episodes_per_update": 4, "minibatch": 4, "t_max": 2})
    policy = toolseq.Policy.train(pairs, cfg)
    assert policy.updates_done == 2
    plan, out = policy.plan(degraded, t_max=2)
    assert len(plan) <= 2 and "STOP" not in plan

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "checkpoint.json")
        policy.save(path)
        again, _ = toolseq.Policy.load(path).plan(degraded, t_max=2)
        assert again == plan
        png = os.path.join(tmp, "out.png")
        out.save_png(png)
        assert toolseq.Image.load_png(png).width == 48

    print(f"ok: oracle plan {seq} score {best:.3f}; policy plan {plan}")


if __name__ == "__main__":
    main()
