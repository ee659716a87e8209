import numpy as np
import pytest

from conftest import snapshot_from_adjacency
from tgl import ad
from tgl.ad import Tensor, backward, gradcheck
from tgl.errors import ConfigError, ShapeError
from tgl.gae import (
    GaeModel, bernoulli_nll, embed_graph, embed_sequence, gae_loss, kl_diag_gaussian,
    latent_bound, pair_mask, reparameterize, train_gae,
)
from tgl.graph import GraphSnapshot, TemporalGraph
from tgl.harness.generators import two_cluster_graphs


def triangle_snapshot(x):
    return GraphSnapshot(t=0, nodes=[0, 1, 2], edges=[(0, 1), (1, 2)], x=x)


class TestReparameterization:
    def test_vanishing_variance(self):
        mu = np.array([0.3, -1.2])
        z = reparameterize(mu, np.full(2, -1e6), seed=0).data
        np.testing.assert_allclose(z, mu, atol=1e-6)

    def test_sample_mean(self):
        N = 100_000
        mu, logvar = np.array([0.5, -2.0, 1.0]), np.array([0.0, 1.0, -1.0])
        z = reparameterize(np.tile(mu, (N, 1)), np.tile(logvar, (N, 1)), seed=1).data
        sigma = np.exp(0.5 * logvar)
        assert np.all(np.abs(z.mean(axis=0) - mu) < 3 * sigma / np.sqrt(N))

    def test_gradient_wrt_mean_is_identity(self):
        mu = Tensor(np.zeros(3), requires_grad=True)
        logvar = Tensor(np.zeros(3), requires_grad=True)
        g = backward(ad.sum(reparameterize(mu, logvar, eps=np.ones(3)) * np.array([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(g[mu], [1, 2, 3])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            reparameterize(np.zeros(2), np.zeros(3))


class TestKL:
    def test_standard_normal_zero(self):
        assert kl_diag_gaussian(np.zeros(4), np.zeros(4)).item() == 0.0

    def test_nonnegative(self, rng):
        for _ in range(100):
            assert kl_diag_gaussian(rng.normal(0, 2, 3), rng.normal(0, 2, 3)).item() >= 0

    def test_monte_carlo(self, rng):
        mu, logvar = np.array([0.8, -0.5]), np.array([0.6, -0.9])
        sigma = np.exp(0.5 * logvar)
        z = mu + sigma * rng.standard_normal((1_000_000, 2))
        log_q = -0.5 * (((z - mu) / sigma) ** 2 + logvar + np.log(2 * np.pi)).sum(axis=1)
        log_p = -0.5 * (z ** 2 + np.log(2 * np.pi)).sum(axis=1)
        mc = np.mean(log_q - log_p)
        assert abs(kl_diag_gaussian(mu, logvar).item() - mc) < 0.01 * mc


class TestLikelihood:
    def test_bernoulli_matches_formula(self, rng):
        logits, y = rng.standard_normal(6), (rng.random(6) < 0.5).astype(float)
        p = 1 / (1 + np.exp(-logits))
        expected = -np.sum(y * np.log(p) + (1 - y) * np.log(1 - p))
        assert bernoulli_nll(logits, y).item() == pytest.approx(expected)

    def test_pair_mask(self):
        m = pair_mask(4, 3)
        assert m.sum() == 3 and np.all(np.tril(m) == 0) and m[:, 3].sum() == 0
        assert pair_mask(3, 3, directed=True).sum() == 6

    def test_latent_bound(self):
        assert latent_bound(4, 2, 3, 1) == 21


class TestLoss:
    def test_perfect_reconstruction(self):
        model = GaeModel(2, 1, 1, rng=0)
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        g = snapshot_from_adjacency(A, x=np.zeros((2, 1)))
        for p in model.decoder.parameters():
            p.data[...] = 0.0
        model.decoder.l2.b.data[:4] = 60.0 * (2 * np.array([0, 1, 1, 0]) - 1)
        for p in (model.to_mu, model.to_logvar):
            p.W.data[...] = 0.0
            p.b.data[...] = 0.0
        total, recon, kl = gae_loss(model, g, seed=0)
        assert kl.item() == 0.0 and total.item() < 1e-20

    def test_loss_dominates_kl(self, rng):
        model = GaeModel(5, 2, 3, rng=1)
        for s in range(5):
            g = triangle_snapshot(rng.standard_normal((3, 2)))
            total, recon, kl = gae_loss(model, g, seed=s)
            assert recon.item() >= 0 and total.item() >= kl.item()

    def test_dim_mismatch(self):
        model = GaeModel(2, 2, 1, rng=0)
        with pytest.raises(ShapeError):
            gae_loss(model, triangle_snapshot(np.zeros((3, 2))))
        with pytest.raises(ShapeError):
            gae_loss(GaeModel(3, 1, 1), triangle_snapshot(np.zeros((3, 2))))

    def test_gradcheck(self, rng):
        model = GaeModel(3, 2, 2, hidden=4, rng=2)
        g = triangle_snapshot(rng.standard_normal((3, 2)))
        eps = rng.standard_normal((1, 2))
        assert gradcheck(lambda: gae_loss(model, g, eps=eps)[0], model.parameters()) < 1e-4

    def test_bound_against_quadrature(self):
        # two nodes, one latent dimension: -log p(G) by quadrature on a dense grid
        model = GaeModel(2, 1, 1, hidden=3, rng=4)
        g = GraphSnapshot(t=0, nodes=[0, 1], edges=[(0, 1)], x=[[0.3], [-0.2]])
        A, X = model.pad(g)
        mu, logvar = (t.data.item() for t in model.encode(A, X))
        kl = kl_diag_gaussian(mu, logvar).item()
        zs = np.linspace(-12, 12, 4001)
        dz = zs[1] - zs[0]
        recon = np.array([gae_loss(model, g, z=np.array([[z]]))[1].item() for z in zs])
        log_prior = -0.5 * (zs ** 2 + np.log(2 * np.pi))
        log_joint = log_prior - recon
        shift = log_joint.max()
        neg_log_marginal = -(shift + np.log(np.sum(np.exp(log_joint - shift)) * dz))
        sd = np.exp(0.5 * logvar)
        q = np.exp(-0.5 * ((zs - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
        neg_elbo = np.sum(q * recon) * dz + kl
        assert neg_elbo >= neg_log_marginal
        # the bound's slack is exactly KL(q || posterior)
        log_post = log_joint + neg_log_marginal
        log_q = -0.5 * ((zs - mu) / sd) ** 2 - np.log(sd * np.sqrt(2 * np.pi))
        gap = np.sum(q * (log_q - log_post)) * dz
        assert neg_elbo - neg_log_marginal == pytest.approx(gap, rel=0.01)
        mc = np.mean([gae_loss(model, g, seed=s)[0].item() for s in range(4000)])
        assert mc == pytest.approx(neg_elbo, rel=0.01)


class TestEmbedding:
    def test_deterministic_and_permutation_invariant(self, rng):
        model = GaeModel(4, 2, 3, rng=5)
        x = rng.standard_normal((4, 2))
        g = GraphSnapshot(t=0, nodes=[0, 1, 2, 3], edges=[(0, 1), (1, 2), (2, 3)], x=x)
        np.testing.assert_array_equal(embed_graph(model, g), embed_graph(model, g))
        perm = [2, 0, 3, 1]
        inv = {old: new for new, old in enumerate(perm)}
        h = GraphSnapshot(t=0, nodes=[0, 1, 2, 3], edges=[(inv[u], inv[v]) for u, v in g.edges], x=x[perm])
        np.testing.assert_allclose(embed_graph(model, h), embed_graph(model, g), atol=1e-12)

    def test_bound_enforced(self):
        model = GaeModel(2, 1, 6, rng=0)
        with pytest.raises(ConfigError):
            embed_graph(model, GraphSnapshot(t=0, nodes=[0, 1], edges=[], x=[[0.0], [1.0]]))

    def test_sequence(self, rng):
        model = GaeModel(3, 2, 2, rng=6)
        tg = TemporalGraph([GraphSnapshot(t=t, nodes=[0, 1, 2], edges=[(0, 1)], x=rng.standard_normal((3, 2)))
                            for t in range(4)])
        out = embed_sequence(model, tg)
        assert out.shape == (2,)
        h = model.seq_gru.zero_state()
        for g in tg:
            h = model.seq_gru(h, Tensor(embed_graph(model, g)))
        np.testing.assert_allclose(out, h.data)
        with pytest.raises(ValueError):
            embed_sequence(model, tg, temporal="lstm")

    def test_training_halves_reconstruction(self):
        graphs = two_cluster_graphs(50, 6, seed=0)
        model = GaeModel(6, 2, 4, rng=0)
        history = train_gae(model, graphs, epochs=150, lr=1e-2, seed=0)
        assert history[-1] <= 0.5 * history[0]
