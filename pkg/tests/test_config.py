import json

import pytest

from fedbatch.config import (DEFAULT_POLICIES, ConfigError, PolicySpec, config_from_dict,
                             parse_config)


def base(**over):
    raw = {"system": {"flops_per_sample": 1e8}, "device_sampling": {"count": 10},
           "law": {"alpha": 34.5, "beta": 23.2, "epsilon": 0.5}}
    raw.update(over)
    return raw


def test_defaults_filled():
    c = config_from_dict(base())
    assert c.n_samples == 10_000 and c.B_max is None and c.rounding == "conserve"
    assert c.fading == "fast" and c.seeds == (0,) and c.K == 10
    assert c.system.bandwidth_per_device == 1e7 and c.system.local_steps == 5
    assert len(c.policies) == len(DEFAULT_POLICIES)
    for d in c.devices:
        assert 1e9 <= d.compute_speed <= 3e10
        assert 0.01 <= d.tx_power <= 0.1 and 0.2 <= d.fading_scale <= 0.5


def test_paper_settings_accepted(tmp_path):
    raw = base(system={"bandwidth_per_device": 1e7, "bits_per_param": 32,
                       "noise_density": 1e-10, "local_steps": 5, "flops_per_sample": 1e8})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(raw))
    assert parse_config(p).K == 10


def test_explicit_devices():
    c = config_from_dict(base(device_sampling=None) | {
        "devices": [{"compute_speed": 1e9, "tx_power": 0.1, "fading_scale": 0.3}]}
        if False else {k: v for k, v in base().items() if k != "device_sampling"}
        | {"devices": [{"compute_speed": 1e9, "tx_power": 0.1, "fading_scale": 0.3}]})
    assert c.K == 1 and c.devices[0].compute_speed == 1e9


VIOLATIONS = [
    ({"system": {"flops_per_sample": 1e8, "bandwidth_per_device": -1}},
     "system.bandwidth_per_device"),
    ({"system": {"flops_per_sample": 1e8, "noise_density": 0}}, "system.noise_density"),
    ({"system": {"flops_per_sample": 0}}, "system.flops_per_sample"),
    ({"system": {}}, "system.flops_per_sample"),
    ({"system": {"flops_per_sample": 1e8, "local_steps": 0}}, "system.local_steps"),
    ({"system": {"flops_per_sample": 1e8, "bits_per_param": 2.5}}, "system.bits_per_param"),
    ({"system": {"flops_per_sample": 1e8, "learning_rate": -0.1}}, "system.learning_rate"),
    ({"system": {"flops_per_sample": 1e8, "bogus": 1}}, "system.bogus"),
    ({"device_sampling": {"count": 0}}, "device_sampling.count"),
    ({"device_sampling": {"count": 3, "tx_power": [0.0, 0.1]}}, "device_sampling.tx_power"),
    ({"law": {"alpha": 0, "beta": 1, "epsilon": 0.5}}, "law.alpha"),
    ({"law": {"alpha": 1, "beta": -1, "epsilon": 0.5}}, "law.beta"),
    ({"law": {"alpha": 1, "beta": 1, "epsilon": 0}}, "law.epsilon"),
    ({"law": {"alpha": 1, "beta": 1}}, "law.epsilon"),
    ({"policies": []}, "policies"),
    ({"policies": [{"kind": "fixed", "b": 0}]}, "policies[0].b"),
    ({"policies": [{"kind": "fixed"}]}, "policies[0].b"),
    ({"policies": [{"kind": "dbfl", "rho": 1.0}]}, "policies[0].rho"),
    ({"policies": [{"kind": "dbfl", "b0": 0}]}, "policies[0].b0"),
    ({"policies": [{"kind": "magic"}]}, "policies[0].kind"),
    ({"policies": [{"kind": "proposed"}, {"kind": "proposed"}]}, "policies"),
    ({"seeds": []}, "seeds"),
    ({"seeds": [-1]}, "seeds"),
    ({"max_rounds": 0}, "max_rounds"),
    ({"n_samples": 0}, "n_samples"),
    ({"fading": "medium"}, "fading"),
    ({"rounding": "up"}, "rounding"),
    ({"B_max": -5}, "B_max"),
    ({"trainer": {"threshold": 0}}, "trainer.threshold"),
    ({"unknown_top": 1}, "unknown_top"),
]


@pytest.mark.parametrize("over,key", VIOLATIONS, ids=[k for _, k in VIOLATIONS])
def test_rejections_name_the_key(over, key):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(base(**over))
    assert exc.value.key == key
    assert str(exc.value).startswith(key)


def test_device_list_rejections():
    raw = {k: v for k, v in base().items() if k != "device_sampling"}
    for bad, key in (({"compute_speed": 0, "tx_power": 0.1, "fading_scale": 0.3},
                      "devices[0].compute_speed"),
                     ({"compute_speed": 1e9, "tx_power": -1, "fading_scale": 0.3},
                      "devices[0].tx_power"),
                     ({"compute_speed": 1e9, "tx_power": 0.1}, "devices[0].fading_scale")):
        with pytest.raises(ConfigError) as exc:
            config_from_dict(raw | {"devices": [bad]})
        assert exc.value.key == key
    with pytest.raises(ConfigError):
        config_from_dict(base() | {"devices": [{"compute_speed": 1, "tx_power": 1,
                                                 "fading_scale": 1}]})


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "bad.json")


def test_fit_from_samples(tmp_path):
    (tmp_path / "s.csv").write_text("global_batch,rounds\n60,276.0\n100,128.7\n300,78.0\n")
    (tmp_path / "c.json").write_text(json.dumps(
        base(law={"fit_from": "s.csv", "epsilon": 0.5})))
    c = parse_config(tmp_path / "c.json")
    assert c.law.alpha > 0 and c.law.epsilon == 0.5
    (tmp_path / "c2.json").write_text(json.dumps(
        base(law={"fit_from": "nope.csv", "epsilon": 0.5})))
    with pytest.raises(ConfigError) as exc:
        parse_config(tmp_path / "c2.json")
    assert exc.value.key == "law.fit_from"


def test_policy_names():
    assert PolicySpec.parse("fixed-16") == PolicySpec("fixed", b=16)
    assert PolicySpec.parse("dbfl").rho == 1.1
    assert PolicySpec.parse("proposed").name == "proposed"
    for bad in ("fixed-x", "fixed-0", "random"):
        with pytest.raises(ConfigError):
            PolicySpec.parse(bad)
