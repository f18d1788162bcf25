import numpy as np
import pytest

from rismimo.channel import BsRisLinkStats, SetupStatistics, VectorLinkStats
from rismimo.linalg import complex_normal, herm


def rand_psd(rng, n, scale=1.0):
    a = complex_normal(rng, (n, n))
    return herm(a @ a.conj().T) * (scale / n)


def toy_stats(rng, K=2, L=2, M=4, N=4, s_h=1, s_f=1, s_g=2, gain=1.0):
    """Random link statistics, O(1) gains, for estimator and sampler tests."""
    direct = [
        VectorLinkStats(specular=np.sqrt(gain) * complex_normal(rng, (s_h, M)),
                        corr=rand_psd(rng, M, gain))
        for _ in range(K)
    ]
    ue_ris = [
        [VectorLinkStats(specular=np.sqrt(gain) * complex_normal(rng, (s_f, N)),
                         corr=rand_psd(rng, N, gain))
         for _ in range(L)]
        for _ in range(K)
    ]
    bs_ris = [
        BsRisLinkStats(specular=np.sqrt(gain) * complex_normal(rng, (s_g, M, N)),
                       bs_corr=rand_psd(rng, M, gain), ris_corr=rand_psd(rng, N))
        for _ in range(L)
    ]
    return SetupStatistics(direct=direct, ue_ris=ue_ris, bs_ris=bs_ris,
                           ue_positions=np.zeros((K, 3)),
                           direct_los=np.ones(K, dtype=bool),
                           ris_ue_los=np.ones((K, L), dtype=bool))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
