"""Smoke test for the pfsmooth extension module.

Build and install first, e.g.
    pip install maturin && maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pfsmooth-*.whl
then run `python python/smoke_test.py`.
"""

import math
import pathlib
import tempfile

import pfsmooth


def check_linear_gaussian():
    model = pfsmooth.Model.linear_gaussian(phi=0.9, obs_noise_var=1.0)
    _, ys = model.simulate(8, seed=1)
    exact_means, exact_ll = model.exact_smoothing(ys)

    trace = pfsmooth.run_filter(model, ys, 2000, seed=2)
    assert trace.horizon == 7 and trace.n_particles == 2000
    assert abs(trace.log_z - exact_ll) < 0.5, (trace.log_z, exact_ll)
    assert abs(sum(trace.weights(3)) - 1.0) < 1e-12

    means = pfsmooth.backward_smoothing_means(model, trace)
    assert max(abs(a - b) for a, b in zip(means, exact_means)) < 0.2

    paths, indices, stats = pfsmooth.sample_backward(model, trace, 50, seed=3)
    assert len(paths) == 50 and len(indices[0]) == 8
    assert stats["is_accepts"] + stats["fallbacks"] == 50 * 7

    chain = pfsmooth.run_imh(model, ys, 20, 400, seed=4, modes=["gt", "bs:5", "bsm"], timing=False)
    assert chain.sweeps == 400 and 0.0 < chain.acceptance_rate <= 1.0
    assert len(chain.series("bsm", 0)) == 400
    rows = chain.variance_report()
    assert {r["method"] for r in rows} == {"gt", "bs:5", "bsm"}
    print("linear-gaussian ok: acceptance", round(chain.acceptance_rate, 3))


def check_hmm():
    model = pfsmooth.Model.hmm(
        initial=[0.6, 0.4],
        transition=[[0.9, 0.1], [0.2, 0.8]],
        emission=[[0.8, 0.2], [0.3, 0.7]],
    )
    ys = [0.0, 1.0, 1.0, 0.0]
    exact = model.hmm_marginals(ys)
    trace = pfsmooth.run_filter(model, ys, 3000, seed=5)
    weights = pfsmooth.backward_smoothing_weights(model, trace)
    for k in range(len(ys)):
        p1 = sum(w for w, s in zip(weights[k], trace.positions(k)) if s == 1.0)
        assert abs(p1 - exact[k][1]) < 0.03, (k, p1, exact[k][1])
    degenerate = pfsmooth.Model.hmm([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]])
    try:
        pfsmooth.run_filter(degenerate, [1.0], 10, seed=0)
    except pfsmooth.NumericalError:
        pass
    else:
        raise AssertionError("expected NumericalError")
    print("hmm ok")


def check_analysis():
    assert pfsmooth.j_opt(8.0, 1.0, 0.5, 0.25) == 2.0
    assert pfsmooth.estimator_variance(3.0, 1.5, 4, 10) == 0.225
    assert math.isclose(pfsmooth.efficiency(0.5, 4.0), 0.5)
    assert pfsmooth.tavc([1.0, 2.0] * 50) >= 0.0
    print("analysis ok")


def check_commands():
    with tempfile.TemporaryDirectory() as tmp:
        root = pathlib.Path(tmp)
        seed = pfsmooth.simulate("growth", root / "data", n_obs=12, seed=7)
        assert seed == 7
        config = {
            "data": str(root / "data" / "observations.csv"),
            "out": str(root / "run"),
            "particles": "50",
            "sweeps": "30",
            "traj": "4",
            "seed": "8",
        }
        seed, lines = pfsmooth.run(config)
        assert seed == 8 and "acceptance rate" in lines[0]
        comparison, recommended = pfsmooth.analyze(root / "run")
        assert "bs:4 vs gt" in comparison
        assert (root / "run" / "variance_report.csv").exists()
    print("commands ok")


if __name__ == "__main__":
    check_linear_gaussian()
    check_hmm()
    check_analysis()
    check_commands()
    print("smoke test passed")
