import pytest

from pointcert_harness import ModelRecipe, export_model


@pytest.fixture(scope="session")
def trained_janet(tmp_path_factory):
    out = tmp_path_factory.mktemp("models") / "full_janet.json"
    info = export_model(ModelRecipe("full-janet", width_div=8, n_points=64,
                                    n_classes=4, seed=5),
                        trained=True, out_path=out,
                        n_train_per_class=48, epochs=40)
    return out, info


@pytest.fixture(scope="session")
def trained_no_janet(tmp_path_factory):
    out = tmp_path_factory.mktemp("models") / "no_janet_12.json"
    info = export_model(ModelRecipe("no-janet-12", width_div=8, n_points=64,
                                    n_classes=4, seed=5),
                        trained=True, out_path=out,
                        n_train_per_class=48, epochs=40)
    return out, info
