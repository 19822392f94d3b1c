"""Bundled models, their frozen flow tables, and the seeded generator."""

from fractions import Fraction

import pytest

from fkforest import (
    DOCUMENTED_FLOW,
    FKModel,
    InvalidParameter,
    bundled_model,
    bundled_names,
    bundled_summary,
    check_documented_flow,
    exact_eta_tensor_oracle,
    flow,
    format_scalar,
    function_from_vector,
    load_model,
    model_sha256,
    random_rational_model,
)


def test_bundled_names_and_summaries():
    names = bundled_names()
    assert set(names) == {"drift2", "flat2", "skew2", "cycle3", "blend3"}
    for name in names:
        assert isinstance(bundled_summary(name), str)
        assert bundled_summary(name)
    with pytest.raises(InvalidParameter):
        bundled_summary("nope")


@pytest.mark.parametrize("name", ["drift2", "flat2", "skew2", "cycle3",
                                  "blend3"])
def test_documented_flow_is_reproduced(name):
    check_documented_flow(name)
    fl = flow(bundled_model(name))
    doc = DOCUMENTED_FLOW[name]
    assert tuple(format_scalar(v) for v in fl.gnorm) == doc["gamma_mass"]
    for k, vec in enumerate(fl.eta_vec):
        assert tuple(format_scalar(v) for v in vec) == doc["eta"][k]


def test_unknown_bundled_model_lists_choices():
    with pytest.raises(InvalidParameter) as err:
        bundled_model("typo3")
    assert "drift2" in str(err.value)


def test_load_model_resolves_names_and_files(tmp_path, cycle3):
    assert load_model("cycle3") == cycle3
    path = tmp_path / "m.json"
    path.write_text(cycle3.to_json(), encoding="utf-8")
    again = load_model(str(path))
    assert again == cycle3
    floated = load_model(str(path), field="float")
    assert floated.field == "float"
    assert floated.eta0[0] == pytest.approx(float(cycle3.eta0[0]))
    with pytest.raises(InvalidParameter) as err:
        load_model(str(tmp_path / "missing.json"))
    assert "blend3" in str(err.value)


def test_model_hash_is_stable_and_discriminating():
    seen = set()
    for name in bundled_names():
        h1 = model_sha256(bundled_model(name))
        h2 = model_sha256(bundled_model(name))
        assert h1 == h2
        assert len(h1) == 64 and set(h1) <= set("0123456789abcdef")
        seen.add(h1)
    assert len(seen) == len(bundled_names())


def test_random_model_is_seed_deterministic():
    a = random_rational_model(7)
    b = random_rational_model(7)
    assert a == b
    assert model_sha256(a) == model_sha256(b)
    c = random_rational_model(8)
    assert a != c
    sized = random_rational_model(3, sizes=(3, 2, 2))
    assert tuple(sized.size(k) for k in range(3)) == (3, 2, 2)
    assert sized.horizon == 2
    deep = random_rational_model(3, horizon=4)
    assert deep.horizon == 4
    with pytest.raises(InvalidParameter):
        random_rational_model(1, sizes=(0, 2))
    with pytest.raises(InvalidParameter):
        random_rational_model(1, sizes=(30,))


def test_random_models_are_valid_rational_models():
    for seed in range(10):
        m = random_rational_model(seed)
        assert m.field == "rational"
        assert sum(m.eta0) == 1
        for mk in m.M:
            for row in mk:
                assert sum(row) == 1
        fl = flow(m)
        for k in range(m.horizon + 1):
            assert sum(fl.eta_vec[k]) == 1
            assert fl.gnorm[k] > 0


def test_skew2_finite_ensemble_bias_witness(skew2):
    """The normalized one-particle marginal at finite N is genuinely biased
    here; these two gaps pin the model down as a regression anchor."""
    fl = flow(skew2)
    f = function_from_vector(skew2, 1, [1, 0])
    gap2 = exact_eta_tensor_oracle(skew2, 2, n=1, q=1, F=f) - fl.eta_vec[1][0]
    gap3 = exact_eta_tensor_oracle(skew2, 3, n=1, q=1, F=f) - fl.eta_vec[1][0]
    assert gap2 == Fraction(-49, 200)
    assert gap3 == Fraction(-749, 4180)
    # shrinking with N, and nonzero: the plain flow is not the N-particle law
    assert abs(gap3) < abs(gap2)


def test_json_preserves_field_and_shape(drift2):
    text = drift2.to_json()
    m = FKModel.from_json(text)
    assert m.field == "rational"
    assert m.states == drift2.states
    assert m.M == drift2.M and m.G == drift2.G
