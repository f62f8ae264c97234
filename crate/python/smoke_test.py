"""Smoke test for the batchedit_py extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math
import os
import tempfile

import batchedit_py as be


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    gen = be.Generator(seed=0)
    assert (gen.d, gen.h, gen.k) == (32, 64, 5)
    w = be.sample_latents(1, 1, gen.d)[0]
    assert len(gen.features(w)) == 5
    assert gen.render_png(w)[:8] == b"\x89PNG\r\n\x1a\n"
    assert gen.render_pgm(w).startswith(b"P5\n64 64\n255\n")

    # geometry: a landed latent sits on the target hyperplane
    target, probe = be.sample_latents(2, 2, gen.d)
    delta = be.sample_latents(3, 1, gen.d)[0]
    alpha = be.compute_alpha(target, probe, delta)
    landed = be.apply_edit(probe, alpha, delta)
    assert close(be.signed_distance(landed, target, delta), 0.0)
    unit, mag = be.normalize_direction(delta)
    assert close(math.fsum(u * u for u in unit), 1.0)
    assert mag > 0

    start, end, err = be.solve_edit(gen, w, [("pose", 0.0)], anchors=["all"])
    assert err < 0.1, err

    session = be.Session(seed=0, id="smoke")
    session.set_example(start, end)
    session.sample(7, 50)
    report = session.fit(iterations=300)
    assert len(report["trace"]) == 300
    alphas = session.transfer()
    assert len(alphas) == len(session) == 50
    moved = session.rescale(0.5)
    assert len(moved) == 50
    stats = session.evaluate("orientation")
    assert math.isfinite(stats["std_ratio"])
    assert session.render(0, "post")[:4] == b"\x89PNG"

    try:
        session.render(50)
    except IndexError:
        pass
    else:
        raise AssertionError("out-of-range render must raise IndexError")

    fresh = be.Session(id="unfitted")
    fresh.sample(1, 4)
    try:
        fresh.rescale(1.0)
    except RuntimeError:
        pass
    else:
        raise AssertionError("rescale before fit must raise RuntimeError")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "smoke.json")
        session.save(path)
        again = be.Session.load(path)
        assert again.alphas == session.alphas
        assert again.direction == session.direction

    print("smoke test passed:", session)


if __name__ == "__main__":
    main()
