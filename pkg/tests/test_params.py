import pytest
from pydantic import ValidationError

from src.core.errors import InvalidArgumentError
from src.core.params import (
    ModelStructure,
    default_free_mask,
    model_to_vector,
    parameter_names,
    structure_of,
    vector_to_model,
)


def test_parameter_names_follow_vector_layout():
    structure = ModelStructure(jump_family="discrete", n_shocks=2, n_support=2, n_covariates=1)
    assert parameter_names(structure, ["strike"]) == [
        "mu", "sigma", "lambda_1", "lambda_2", "nu_1", "nu_2", "beta_strike", "v_1", "v_2", "pi_1", "pi_2",
    ]
    assert structure.n_params == 11
    gamma = ModelStructure(jump_family="gamma")
    assert parameter_names(gamma) == ["mu", "sigma", "lambda", "omega", "tau", "v_1", "pi_1"]


def test_structure_of_fixtures(discrete_model, gamma_model):
    assert structure_of(discrete_model) == ModelStructure(
        jump_family="discrete", n_shocks=2, n_support=2, n_covariates=1
    )
    assert structure_of(gamma_model).n_jump_params == 3


def test_vector_round_trip(discrete_model, gamma_model, brownian):
    for model in (discrete_model, gamma_model, brownian):
        assert vector_to_model(model_to_vector(model), structure_of(model)) == model


def test_free_mask_tracks_normalization():
    assert default_free_mask(ModelStructure()).tolist() == [False, True, True, True]
    assert default_free_mask(ModelStructure(normalization="dispersion")).tolist() == [True, False, True, True]


def test_inadmissible_vectors(discrete_model):
    structure = structure_of(discrete_model)
    theta = model_to_vector(discrete_model)
    bad = theta.copy()
    bad[4] = 0.5  # positive shock size
    with pytest.raises(InvalidArgumentError):
        vector_to_model(bad, structure)
    with pytest.raises(InvalidArgumentError):
        vector_to_model(theta[:-1], structure)
    unnormalized = theta.copy()
    unnormalized[0] = 2.0
    with pytest.raises(InvalidArgumentError):
        vector_to_model(unnormalized, structure)


def test_structure_validation():
    with pytest.raises(ValidationError):
        ModelStructure(jump_family="discrete")
    with pytest.raises(ValidationError):
        ModelStructure(jump_family="gamma", n_shocks=2)
    with pytest.raises(ValidationError):
        ModelStructure(n_support=0)
    assert default_free_mask(ModelStructure(n_support=3)).sum() == 7
