import numpy as np
import pytest

from hpplast.benchmarks import elastic_limit_benchmark, plastic_benchmark
from hpplast.assembly import assemble_blocks
from hpplast.solver import newton_solve


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def plastic_run():
    pb = plastic_benchmark(8, 1)
    sys = assemble_blocks(pb.mesh, pb.material, pb.loads)
    return pb, newton_solve(sys)


@pytest.fixture(scope="session")
def elastic_run():
    pb = elastic_limit_benchmark(8, 1)
    sys = assemble_blocks(pb.mesh, pb.material, pb.loads)
    return pb, newton_solve(sys)


@pytest.fixture(scope="session")
def plastic_study():
    from hpplast.analysis import run_convergence_study

    return run_convergence_study(plastic_benchmark(2, 1), 3, reference="overkill")
