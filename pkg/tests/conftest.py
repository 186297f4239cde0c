import pytest


@pytest.fixture(scope="session", autouse=True)
def _single_thread_blas():
    # small-matrix workloads; avoids BLAS/kernel thread contention
    from icl_lab.harness import _limit_blas_threads

    _limit_blas_threads()
