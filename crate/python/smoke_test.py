"""Smoke test for the `sagan` extension module.

Build and install first, e.g.
    pip install maturin
    pip install --no-build-isolation ./crates/python
then run `python python/smoke_test.py`.
"""

import math
import os
import tempfile

import sagan


def check_metrics():
    assert abs(sagan.weighted_f1([[5, 0], [0, 5]]) - 1.0) < 1e-12
    w = sagan.weighted_f1([[8, 2], [1, 9]])
    assert 0.0 < w < 1.0


def check_distance():
    a = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]
    shifted = [[x + 3.0, y + 4.0] for x, y in a]
    cost, pairing = sagan.w1_exact(a, shifted)
    assert abs(cost - 5.0) < 1e-12, cost
    assert pairing == [0, 1, 2]
    est = sagan.w1_estimate(a, shifted, n_sub=2, n_repeats=4, seed=1)
    assert est >= 0.0


def check_windows():
    w = sagan.window_len_for(3.0, 30.0)
    s = sagan.stride_for(w, 0.7)
    assert (w, s) == (90, 27)
    assert sagan.window_count(300, w, s) == (300 - 90) // 27 + 1


def check_config():
    cfg = sagan.RunConfig()
    digest = cfg.digest()
    assert len(digest) == 64
    cfg.set("trainer.epochs", "3")
    assert cfg.digest() != digest
    assert sagan.RunConfig(cfg.canonical()).digest() == cfg.digest()
    try:
        cfg.set("trainer.nope", "1")
    except sagan.SaganError as e:
        assert "nope" in str(e)
    else:
        raise AssertionError("unknown key accepted")


def check_training():
    pair = sagan.translated_pair(seed=0, magnitude=1.0, samples_per_class=30)
    src, tgt, test = pair["source_train"], pair["target_train"], pair["target_test"]
    assert src.dim == 16 and src.n_classes == 6 and len(src) == 180
    cfg = sagan.RunConfig()
    for key, value in [("trainer.epochs", "2"), ("trainer.batch_size", "32"), ("model.g_f", "8"),
                       ("model.c_f", "8"), ("model.d_base_filters", "4")]:
        cfg.set(key, value)
    cfg.seed = 3
    result = sagan.fit(src, tgt, cfg)
    assert len(result.curve) == 2
    assert all(math.isfinite(score) for _, score in result.curve)
    report = result.classifier.evaluate(test)
    assert 0.0 <= report.weighted_f1 <= 1.0
    assert sum(map(sum, report.confusion)) == len(test)
    fake = result.generate(src.features[:4])
    assert len(fake) == 4 and all(abs(v) < 1.0 for row in fake for v in row)
    baseline = sagan.train_classifier(src, cfg, epochs=2)
    assert len(baseline.predict(test.features)) == len(test)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.ck")
        result.save(path)
        assert os.path.getsize(path) > 0
    return report.weighted_f1


def main():
    check_metrics()
    check_distance()
    check_windows()
    check_config()
    f1 = check_training()
    print(f"smoke test ok (weighted F1 after 2 epochs: {f1:.3f})")


if __name__ == "__main__":
    main()
