import json

import numpy as np
import pytest

from omnimav.params import (Actuation, ParameterError, VehicleParams, VehicleType, load_params,
                            preset)


def test_presets_masses():
    main = preset("main-paper")
    assert main.m_tot == pytest.approx(10.0)
    assert (main.m_b, main.m_p) == (6.0, 2.0)
    nom = preset("report-nominal")
    assert nom.m_b == 5.0 and nom.m_tot == pytest.approx(9.0)


def test_type2_last_link_has_no_offset_or_friction():
    p = preset("report-nominal", "type2", 3)
    assert p.d[-1] == 0.0 and p.b_f[-1] == 0.0
    assert p.d[0] == 0.5 and p.b_f[0] == 0.9
    assert p.n_inputs == 4 and p.n_coords == 6


def test_type1_input_count():
    p = preset("report-nominal", "type1", 3)
    assert p.n_inputs == 3 and not p.is_type2


def test_hover_thrust():
    p = preset("main-paper")
    assert p.hover_thrust == p.gravity * p.m_tot / 2


def test_joint_offsets_symmetric():
    p = preset("report-nominal", "type1", 3)
    assert np.allclose(p.joint_offsets, [0.5, 0.0, -0.5])
    assert p.joint_offsets.sum() == pytest.approx(0.0)


@pytest.mark.parametrize("change", [dict(m_b=-1.0), dict(I_p=0.0), dict(a=float("nan")),
                                    dict(d=(0.5,)), dict(n_links=1)])
def test_invalid_values_rejected(change):
    with pytest.raises(ParameterError):
        preset("report-nominal", **change)


def test_unknown_preset():
    with pytest.raises(ParameterError):
        preset("nope")


def test_round_trip_dict_and_file(tmp_path):
    p = preset("report-nominal", "type2", 2, "servo")
    assert VehicleParams.from_dict(p.to_dict()) == p
    path = tmp_path / "p.json"
    path.write_text(json.dumps(p.to_dict()))
    assert load_params(path) == p
    assert p.actuation is Actuation.SERVO and p.vehicle_type is VehicleType.TYPE2


def test_unknown_key_rejected():
    with pytest.raises(ParameterError):
        VehicleParams.from_dict({"preset": "main-paper", "mass": 3})


def test_digest_stable_and_sensitive():
    a, b = preset("report-nominal"), preset("report-nominal")
    assert a.digest() == b.digest()
    assert a.digest() != a.replace(m_b=5.1).digest()
