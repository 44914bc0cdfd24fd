import pytest

from dotkit import selftest


@pytest.fixture(scope="session")
def full_campaign():
    """The 100-field synthetic localization campaign shared by the module
    ensemble tests and the acceptance suite (it is the expensive fixture)."""
    return selftest.localization_campaign(n_fields=100, emitters_per_field=7,
                                          seed0=0)
