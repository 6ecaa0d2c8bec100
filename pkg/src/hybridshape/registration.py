"""Optimization-based diffeomorphic surface registration.

A stationary velocity field (Fourier-feature sinusoidal network) is fitted so
that source surface samples, flowed through the field from t=0 to t=1 with
RK4, minimize the squared chamfer distance to target surface samples.  Fresh
samples are drawn from both surfaces every iteration.  The deformed surface
keeps the source connectivity: only vertices move, and trajectories of a
smooth flow cannot cross, so topology is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.base import BaseEstimator

from .errors import NumericalDivergenceError
from .fields import VelocityField
from .flow import integrate, integrate_grad
from .grids import OrientedPointCloud
from .meshing import Contour, SurfaceMesh, sample_surface
from .metrics import chamfer_gradient, normal_distance
from .optim import Adam

__all__ = ["RegistrationConfig", "DiffeomorphicRegistration", "register_surfaces"]


@dataclass
class RegistrationConfig:
    """Loop hyperparameters; defaults are the reference values at desk-scale sampling.

    dtype picks the field compute precision: float32 (default) roughly
    quadruples single-core throughput on the large sample batches and is still
    bit-deterministic; float64 is available for gradient studies.
    """

    iterations: int = 75
    lr: float = 3e-4
    samples: int = 20_000
    step_size: float = 0.2
    seed: int = 0
    normal_weight: float = 0.0
    fourier_scale: float = 5.0
    embedding_length: int = 128
    hidden_size: int = 256
    n_hidden: int = 2
    grad_mode: str = "backprop"
    dtype: str = "float32"


class DiffeomorphicRegistration(BaseEstimator):
    """Estimator wrapper: fit(source, target) learns the field, transform flows geometry.

    Fitted attributes: field_ (VelocityField), deformed_ (source with flowed
    vertices), loss_history_ (per-iteration chamfer), n_iter_.
    """

    def __init__(
        self,
        iterations: int = 75,
        lr: float = 3e-4,
        samples: int = 20_000,
        step_size: float = 0.2,
        seed: int = 0,
        normal_weight: float = 0.0,
        fourier_scale: float = 5.0,
        embedding_length: int = 128,
        hidden_size: int = 256,
        n_hidden: int = 2,
        grad_mode: str = "backprop",
        dtype: str = "float32",
    ):
        self.iterations = iterations
        self.lr = lr
        self.samples = samples
        self.step_size = step_size
        self.seed = seed
        self.normal_weight = normal_weight
        self.fourier_scale = fourier_scale
        self.embedding_length = embedding_length
        self.hidden_size = hidden_size
        self.n_hidden = n_hidden
        self.grad_mode = grad_mode
        self.dtype = dtype

    def _config(self) -> RegistrationConfig:
        return RegistrationConfig(**{k: getattr(self, k) for k in RegistrationConfig.__dataclass_fields__})

    def fit(self, source, target, log=None):
        cfg = self._config()
        dim = 3 if isinstance(source, SurfaceMesh) else 2
        streams = np.random.SeedSequence(cfg.seed).spawn(2)
        field_seed = int(np.random.default_rng(streams[0]).integers(2**31))
        iteration_seeds = streams[1].spawn(cfg.iterations)

        vfield = VelocityField(
            dim,
            fourier_scale=cfg.fourier_scale,
            embedding_length=cfg.embedding_length,
            hidden_size=cfg.hidden_size,
            n_hidden=cfg.n_hidden,
            seed=field_seed,
            dtype=np.dtype(cfg.dtype),
        )
        opt = Adam(lr=cfg.lr)
        history = []
        for it in range(cfg.iterations):
            # common random numbers: the same stream samples both surfaces, so
            # the sampling noise floor vanishes as the surfaces align
            src = sample_surface(source, cfg.samples, np.random.default_rng(iteration_seeds[it]))
            tgt = sample_surface(target, cfg.samples, np.random.default_rng(iteration_seeds[it]))
            traj = integrate(vfield, src.positions, 0.0, 1.0, cfg.step_size, record=True)
            loss, grad_moved = chamfer_gradient(traj.final, tgt.positions)
            if cfg.normal_weight > 0:
                # reported only: source normals are not transported through the flow
                moved = OrientedPointCloud(np.clip(traj.final, 0.0, 1.0), src.normals)
                loss = loss + cfg.normal_weight * normal_distance(moved, tgt)
            if not np.isfinite(loss):
                raise NumericalDivergenceError(
                    f"registration diverged at iteration {it}", iteration=it
                )
            theta_bar, _ = integrate_grad(
                vfield, grad_moved, trajectory=traj, mode=cfg.grad_mode
            )
            vfield.set_parameters(opt.update(vfield.parameters, theta_bar))
            history.append(float(loss))
            if log is not None:
                log(stage="register", iter=it, loss=float(loss))

        self.field_ = vfield
        self.loss_history_ = history
        self.n_iter_ = cfg.iterations
        self.deformed_ = self.transform(source)
        return self

    def transform(self, obj):
        """Flow a mesh, contour, point cloud, or raw point array through the fitted field."""
        vfield = self.field_
        h = self.step_size

        def flow(pts):
            return integrate(vfield, pts, 0.0, 1.0, h).final

        if isinstance(obj, SurfaceMesh):
            return obj.with_vertices(flow(obj.vertices))
        if isinstance(obj, Contour):
            return Contour([flow(loop) for loop in obj.loops])
        if isinstance(obj, OrientedPointCloud):
            return OrientedPointCloud(np.clip(flow(obj.positions), 0.0, 1.0), obj.normals)
        return flow(np.asarray(obj, dtype=np.float64))


def register_surfaces(source, target, cfg: RegistrationConfig | None = None, log=None):
    """Fit a stationary velocity field mapping source onto target.

    Returns (field, deformed_source); the deformed surface has the source's
    connectivity with vertices flowed through the fitted field.
    """
    cfg = cfg or RegistrationConfig()
    reg = DiffeomorphicRegistration(**asdict(cfg))
    reg.fit(source, target, log=log)
    return reg.field_, reg.deformed_
