import numpy as np
import pytest

from restock.env import ProductCatalog


def make_catalog(p=2, volume=None, weight=None, spoilage=None, critical=None,
                 v_max=1.0, c_max=1.0):
    return ProductCatalog(
        unit_volume=np.full(p, 1.0) if volume is None else np.asarray(volume, float),
        unit_weight=np.full(p, 1.0) if weight is None else np.asarray(weight, float),
        max_shelf=np.full(p, 100.0),
        spoilage_rate=np.full(p, 0.1) if spoilage is None else np.asarray(spoilage, float),
        critical_level=np.full(p, 0.05) if critical is None else np.asarray(critical, float),
        v_max=v_max,
        c_max=c_max,
    )


@pytest.fixture
def catalog2():
    return make_catalog(p=2)
