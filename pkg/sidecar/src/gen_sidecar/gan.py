"""Conditional GAN over the numeric columns.

Both networks receive the discrete one-hot vector as conditioning input.
During training the condition is teacher-forced from the real minibatch;
at sampling time conditions come from the empirical discrete joint. Training
stops when the 50-epoch moving average of the generator loss changes by
less than one percent, per `stabilized`.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .train import stabilized

DEFAULTS = {
    "epochs": 300,
    "batch_size": 64,
    "z_dim": 32,
    "hidden": 128,
    "lr": 2e-4,
    "window": 50,
    "plateau_tol": 0.01,
}


def _generator(z_dim: int, cond_dim: int, hidden: int, q: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(z_dim + cond_dim, hidden), nn.ReLU(),
        nn.Linear(hidden, hidden), nn.ReLU(),
        nn.Linear(hidden, q),
    )


def _discriminator(q: int, cond_dim: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(q + cond_dim, hidden), nn.LeakyReLU(0.2),
        nn.Linear(hidden, hidden), nn.LeakyReLU(0.2),
        nn.Linear(hidden, 1),
    )


def fit_gan(numeric: np.ndarray, cond: np.ndarray, hyper: dict, seed: int):
    """Train on standardized numerics; returns (state, epochs_run, stopped_early)."""
    m, q = numeric.shape
    if q == 0:
        return None, 0, False
    torch.manual_seed(seed)
    x_all = torch.from_numpy(numeric.astype(np.float32))
    c_all = torch.from_numpy(cond.astype(np.float32))
    z_dim, hidden = hyper["z_dim"], hyper["hidden"]
    gen = _generator(z_dim, c_all.shape[1], hidden, q)
    dis = _discriminator(q, c_all.shape[1], hidden)
    betas = (0.5, 0.999)
    opt_g = torch.optim.Adam(gen.parameters(), lr=hyper["lr"], betas=betas)
    opt_d = torch.optim.Adam(dis.parameters(), lr=hyper["lr"], betas=betas)
    loss_fn = nn.BCEWithLogitsLoss()
    batch = hyper["batch_size"]
    history: list[float] = []
    stopped = False
    epochs_run = 0
    for _ in range(hyper["epochs"]):
        order = torch.randperm(m)
        epoch_g: list[float] = []
        for lo in range(0, m, batch):
            idx = order[lo:lo + batch]
            x, c = x_all[idx], c_all[idx]
            b = len(idx)
            ones = torch.ones(b, 1)
            zeros = torch.zeros(b, 1)

            z = torch.randn(b, z_dim)
            fake = gen(torch.cat([z, c], dim=1))
            d_loss = (loss_fn(dis(torch.cat([x, c], dim=1)), ones)
                      + loss_fn(dis(torch.cat([fake.detach(), c], dim=1)), zeros))
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

            g_loss = loss_fn(dis(torch.cat([fake, c], dim=1)), ones)
            opt_g.zero_grad()
            g_loss.backward()
            opt_g.step()
            epoch_g.append(float(g_loss.detach()))
        history.append(sum(epoch_g) / len(epoch_g))
        epochs_run += 1
        if stabilized(history, hyper["window"], hyper["plateau_tol"]):
            stopped = True
            break
    return gen.state_dict(), epochs_run, stopped


def sample_gan(state: dict, q: int, cond: np.ndarray, hyper: dict) -> np.ndarray:
    """Draw standardized numerics for the given conditions; torch RNG must be seeded."""
    n = len(cond)
    gen = _generator(hyper["z_dim"], cond.shape[1], hyper["hidden"], q)
    gen.load_state_dict(state)
    gen.eval()
    with torch.no_grad():
        z = torch.randn(n, hyper["z_dim"])
        c = torch.from_numpy(cond.astype(np.float32))
        out = gen(torch.cat([z, c], dim=1))
    return out.numpy().astype(np.float64)
