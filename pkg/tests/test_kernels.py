import numpy as np
import pytest

from fedbatch import kernels
from fedbatch.kernels import pure


def test_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")


compiled = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="extension not built")


@compiled
def test_minmax_parity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        K = int(rng.integers(1, 5))
        B = int(rng.integers(K, 40))
        c, q = rng.uniform(0, 2, K), rng.uniform(0.1, 1, K)
        a = kernels.minmax_compositions(c, q, B)
        b = pure.minmax_compositions(c, q, B)
        assert a[0] == b[0] and np.array_equal(a[1], b[1])


@compiled
def test_greedy_parity():
    rng = np.random.default_rng(1)
    for _ in range(200):
        K = int(rng.integers(1, 8))
        c, q = rng.uniform(0, 2, K), rng.uniform(0.1, 1, K)
        cap = float(np.max(c + q)) * rng.uniform(1, 3)
        counts = np.ones(K, dtype=np.int64)
        extra = int(rng.integers(0, 50))
        assert np.array_equal(kernels.greedy_fill(c, q, counts, extra, cap),
                              pure.greedy_fill(c, q, counts, extra, cap))


@compiled
def test_local_sgd_parity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        K, H, D = (int(x) for x in rng.integers(1, 6, 3))
        w, c = rng.normal(size=D), rng.uniform(0.1, 1, D)
        s, z = rng.uniform(0, 1, K), rng.normal(size=(K, H, D))
        assert np.array_equal(kernels.local_sgd_devices(w, c, 0.3, s, z),
                              pure.local_sgd_devices(w, c, 0.3, s, z))


def test_minmax_small_case():
    lat, b = pure.minmax_compositions([0.0, 1.0], [0.5, 1.0], 8)
    assert lat == 3.0 and list(b) == [6, 2]


def test_greedy_overflow_goes_to_cheapest():
    counts = pure.greedy_fill([0.0, 0.0], [1.0, 2.0], np.ones(2, dtype=np.int64), 3, 2.0)
    assert list(counts) == [3, 2] or list(counts) == [4, 1]


def _run(code, **env):
    import os
    import subprocess
    import sys
    return subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                          check=True, env={**os.environ, **env}).stdout


def test_fallback_selected_without_extension():
    code = ("import sys; sys.modules['fedbatch._kernels'] = None\n"
            "import fedbatch.kernels as k; print(k.BACKEND)")
    assert _run(code).strip() == "python"
    assert _run("import fedbatch.kernels as k; print(k.BACKEND)",
                FEDBATCH_PURE_PYTHON="1").strip() == "python"


@compiled
def test_trainer_traces_identical_across_backends(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"system": {"flops_per_sample": 1e8}, "device_sampling": {"count": 4},'
                   ' "law": {"alpha": 34.5, "beta": 23.2, "epsilon": 0.5}, "max_rounds": 2000,'
                   ' "trainer": {"learning_rate": 0.05}}')
    outs = []
    for flag in ("0", "1"):
        d = tmp_path / flag
        _run("from fedbatch.cli import main; main(['simulate', '--config', %r, '--out', %r,"
             " '--mode', 'trainer', '--policy', 'proposed', '--policy', 'fixed-16'])"
             % (str(cfg), str(d)), FEDBATCH_PURE_PYTHON=flag)
        outs.append((d / "traces.csv").read_bytes())
    assert outs[0] == outs[1]
