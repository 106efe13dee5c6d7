"""Conditional VAE over the numeric columns.

Same conditioning scheme as the GAN: the discrete one-hot vector is fed to
both encoder and decoder. Sampling decodes the latent prior through the
decoder mean; no observation noise is added, so draws are smoother than the
training data but respect the conditional location and scale learned per
discrete cell. Training stops on a plateau of the total loss.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .train import stabilized

DEFAULTS = {
    "epochs": 300,
    "batch_size": 64,
    "latent_dim": 16,
    "hidden": 128,
    "lr": 1e-3,
    "window": 50,
    "plateau_tol": 0.01,
}


class _Vae(nn.Module):
    def __init__(self, q: int, cond_dim: int, latent_dim: int, hidden: int):
        super().__init__()
        self.enc = nn.Sequential(nn.Linear(q + cond_dim, hidden), nn.ReLU())
        self.enc_mu = nn.Linear(hidden, latent_dim)
        self.enc_logvar = nn.Linear(hidden, latent_dim)
        self.dec = nn.Sequential(
            nn.Linear(latent_dim + cond_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, q),
        )

    def encode(self, x, c):
        h = self.enc(torch.cat([x, c], dim=1))
        return self.enc_mu(h), self.enc_logvar(h)

    def decode(self, z, c):
        return self.dec(torch.cat([z, c], dim=1))


def fit_vae(numeric: np.ndarray, cond: np.ndarray, hyper: dict, seed: int):
    """Train on standardized numerics; returns (state, epochs_run, stopped_early)."""
    m, q = numeric.shape
    if q == 0:
        return None, 0, False
    torch.manual_seed(seed)
    x_all = torch.from_numpy(numeric.astype(np.float32))
    c_all = torch.from_numpy(cond.astype(np.float32))
    net = _Vae(q, c_all.shape[1], hyper["latent_dim"], hyper["hidden"])
    opt = torch.optim.Adam(net.parameters(), lr=hyper["lr"])
    batch = hyper["batch_size"]
    history: list[float] = []
    stopped = False
    epochs_run = 0
    for _ in range(hyper["epochs"]):
        order = torch.randperm(m)
        epoch_losses: list[float] = []
        for lo in range(0, m, batch):
            idx = order[lo:lo + batch]
            x, c = x_all[idx], c_all[idx]
            b = len(idx)
            mu, logvar = net.encode(x, c)
            z = mu + torch.exp(0.5 * logvar) * torch.randn_like(mu)
            recon = net.decode(z, c)
            rec_loss = nn.functional.mse_loss(recon, x, reduction="sum") / b
            kl = -0.5 * torch.sum(1 + logvar - mu.pow(2) - logvar.exp()) / b
            loss = rec_loss + kl
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        history.append(sum(epoch_losses) / len(epoch_losses))
        epochs_run += 1
        if stabilized(history, hyper["window"], hyper["plateau_tol"]):
            stopped = True
            break
    return net.state_dict(), epochs_run, stopped


def sample_vae(state: dict, q: int, cond: np.ndarray, hyper: dict) -> np.ndarray:
    """Decode prior draws for the given conditions; torch RNG must be seeded."""
    n = len(cond)
    net = _Vae(q, cond.shape[1], hyper["latent_dim"], hyper["hidden"])
    net.load_state_dict(state)
    net.eval()
    with torch.no_grad():
        z = torch.randn(n, hyper["latent_dim"])
        c = torch.from_numpy(cond.astype(np.float32))
        out = net.decode(z, c)
    return out.numpy().astype(np.float64)
