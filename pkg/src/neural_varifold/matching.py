"""Shape matching by training a displacement MLP against a similarity loss.

A 3-64-128-3 ReLU network predicts per-vertex offsets of the source mesh.
Each step rebuilds the face-center cloud (positions and cross-product
normals) of the deformed mesh, evaluates the chosen loss against a fixed
target cloud and takes one Adam step.  Gradients come from torch autograd
in double precision; the arc-cosine recursion uses a custom backward that
keeps the derivative finite when two features are parallel.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .geometry import OrientedPointCloud, TriangleMesh, sample_face_centers
from .metrics import chamfer, emd_exact
from .ntk import DIAG_FLOOR, _check_depth
from .varifold import DEFAULT_DEPTH, KernelConfig, varifold_distance

__all__ = [
    "LOSSES",
    "DeformationNet",
    "MatchConfig",
    "MatchTrace",
    "DivergenceError",
    "deform",
    "face_center_cloud_torch",
    "ntk_mlp_torch",
    "loss_and_grad",
    "match_shapes",
    "cross_evaluate",
    "save_trace_csv",
    "reference_loss",
]

LOSSES = ("cd", "emd", "ct", "ntk1", "ntk2")
HIDDEN = (64, 128)
# backward-only clamp for the arccos derivative
OMEGA_GRAD_CLAMP = 1.0 - 1e-7
NORMAL_EPS = 1e-12

DTYPE = torch.float64


class DivergenceError(RuntimeError):
    pass


class DeformationNet(torch.nn.Module):
    """3 -> 64 -> 128 -> 3 MLP with ReLU hidden activations."""

    def __init__(self, seed: int = 0, hidden=HIDDEN, output_scale: float = 0.0):
        super().__init__()
        sizes = (3, *hidden, 3)
        self.layers = torch.nn.ModuleList(
            torch.nn.Linear(n_in, n_out, dtype=DTYPE) for n_in, n_out in zip(sizes[:-1], sizes[1:])
        )
        self.reset_parameters(seed, output_scale)

    def reset_parameters(self, seed: int = 0, output_scale: float = 0.0):
        """Hidden weights ~ N(0, 1/fan_in), zero biases.

        The output layer is drawn the same way and multiplied by
        ``output_scale``; the default 0 makes the initial deformation the
        identity.
        """
        rng = np.random.default_rng(seed)
        with torch.no_grad():
            for k, layer in enumerate(self.layers):
                n_out, n_in = layer.weight.shape
                w = rng.standard_normal((n_out, n_in)) / math.sqrt(n_in)
                b = np.zeros(n_out)
                if k == len(self.layers) - 1:
                    w = w * output_scale
                    b = rng.standard_normal(n_out) * output_scale
                layer.weight.copy_(torch.from_numpy(w))
                layer.bias.copy_(torch.from_numpy(b))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = torch.relu(layer(x))
        return self.layers[-1](x)

    def numpy_parameters(self) -> list[np.ndarray]:
        return [p.detach().numpy().copy() for p in self.parameters()]

    def numpy_forward(self, x: np.ndarray) -> np.ndarray:
        params = self.numpy_parameters()
        for k in range(0, len(params), 2):
            x = x @ params[k].T + params[k + 1]
            if k < len(params) - 2:
                x = np.maximum(x, 0.0)
        return x


@dataclass(frozen=True)
class MatchConfig:
    loss: str = "ntk1"
    iterations: int = 2000
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    depth: int | None = None
    ct_sigma: float = 0.3

    def __post_init__(self):
        loss = self.loss.lower()
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        object.__setattr__(self, "loss", loss)
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.depth is None and loss in DEFAULT_DEPTH:
            object.__setattr__(self, "depth", DEFAULT_DEPTH[loss])

    @property
    def kernel(self) -> KernelConfig | None:
        if self.loss in ("cd", "emd"):
            return None
        return KernelConfig(self.loss, self.depth, self.ct_sigma, "mean")


@dataclass
class MatchTrace:
    losses: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    mesh: TriangleMesh | None = None
    net: DeformationNet | None = None

    def __len__(self):
        return len(self.losses)


# ---------------------------------------------------------------- torch kernels


class _ArcCos(torch.autograd.Function):
    """(1 - arccos(w)/pi, sqrt(1-w^2) + (pi - arccos w) w) with a clamped backward."""

    @staticmethod
    def forward(ctx, omega):
        w = omega.clamp(-1.0, 1.0)
        angle = torch.arccos(w)
        ctx.save_for_backward(w, angle)
        f0 = 1.0 - angle / math.pi
        f1 = torch.sqrt(1.0 - w * w) + (math.pi - angle) * w
        return f0, f1

    @staticmethod
    def backward(ctx, g0, g1):
        w, angle = ctx.saved_tensors
        wc = w.clamp(-OMEGA_GRAD_CLAMP, OMEGA_GRAD_CLAMP)
        d0 = 1.0 / (math.pi * torch.sqrt(1.0 - wc * wc))
        d1 = math.pi - angle
        return g0 * d0 + g1 * d1


def ntk_mlp_torch(x: torch.Tensor, xhat: torch.Tensor, depth: int) -> torch.Tensor:
    """Differentiable twin of :func:`neural_varifold.ntk.ntk_mlp`."""
    depth = _check_depth(depth)
    same = x.shape == xhat.shape and torch.equal(x.detach(), xhat.detach())
    eye = torch.eye(len(x), dtype=torch.bool) if same else None
    sigma = x @ xhat.T
    theta = sigma
    d_x = (x * x).sum(1)
    d_xhat = (xhat * xhat).sum(1)
    live = (d_x > DIAG_FLOOR)[:, None] & (d_xhat > DIAG_FLOOR)[None, :]
    for _ in range(depth):
        scale = torch.sqrt(d_x.clamp_min(DIAG_FLOOR)[:, None] * d_xhat.clamp_min(DIAG_FLOOR)[None, :])
        omega = sigma / scale
        if same:
            omega = torch.where(eye, torch.ones_like(omega), omega)
        f0, f1 = _ArcCos.apply(omega)
        sigma = scale / (2.0 * math.pi) * f1
        theta = sigma + theta * f0
        d_x, d_xhat = 0.5 * d_x, 0.5 * d_xhat
    return torch.where(live, theta, torch.zeros_like(theta))


def _pointwise_torch(xa, za, xb, zb, kernel: KernelConfig) -> torch.Tensor:
    if kernel.family == "ntk1":
        return ntk_mlp_torch(xa, xb, kernel.depth) * ntk_mlp_torch(za, zb, kernel.depth)
    if kernel.family == "ntk2":
        return ntk_mlp_torch(torch.cat([xa, za], 1), torch.cat([xb, zb], 1), kernel.depth)
    sq = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(-1)
    return torch.exp(-sq / kernel.ct_sigma**2) * (za @ zb.T) ** 2


def _cloud_kernel_torch(xa, za, xb, zb, kernel: KernelConfig) -> torch.Tensor:
    block = _pointwise_torch(xa, za, xb, zb, kernel)
    return block.mean() if kernel.aggregation == "mean" else block.sum()


def face_center_cloud_torch(vertices: torch.Tensor, faces: torch.Tensor):
    """Barycenters and unit cross-product normals, differentiable in vertices."""
    tri = vertices[faces]
    centers = tri.mean(1)
    cross = torch.linalg.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0], dim=1)
    norm = torch.sqrt((cross * cross).sum(1, keepdim=True))
    return centers, cross / (norm + NORMAL_EPS)


def _chamfer_torch(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return sq.min(1).values.mean() + sq.min(0).values.mean()


def _emd_torch(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    # envelope theorem: differentiate the cost with the optimal plan held fixed
    plan = emd_exact(a.detach().numpy(), b.detach().numpy())
    idx = torch.from_numpy(plan.assignment)
    return torch.sqrt(((a - b[idx]) ** 2).sum(1)).mean()


class _Objective:
    """Loss of a deformed source against a fixed target cloud."""

    def __init__(self, source: TriangleMesh, target: OrientedPointCloud, config: MatchConfig):
        self.config = config
        self.kernel = config.kernel
        self.vertices = torch.from_numpy(source.vertices)
        self.faces = torch.from_numpy(source.faces)
        self.tx = torch.from_numpy(target.positions)
        self.tz = torch.from_numpy(target.normals)
        if config.loss == "emd" and len(target) != source.n_faces:
            raise ValueError(
                f"EMD loss needs as many target points ({len(target)}) as source faces ({source.n_faces})"
            )
        self.k_tt = None
        if self.kernel is not None:
            with torch.no_grad():
                self.k_tt = _cloud_kernel_torch(self.tx, self.tz, self.tx, self.tz, self.kernel)

    def __call__(self, net: DeformationNet) -> torch.Tensor:
        moved = self.vertices + net(self.vertices)
        x, z = face_center_cloud_torch(moved, self.faces)
        loss = self.config.loss
        if loss == "cd":
            return _chamfer_torch(x, self.tx)
        if loss == "emd":
            return _emd_torch(x, self.tx)
        k_ss = _cloud_kernel_torch(x, z, x, z, self.kernel)
        k_st = _cloud_kernel_torch(x, z, self.tx, self.tz, self.kernel)
        return k_ss - 2.0 * k_st + self.k_tt


def deform(net: DeformationNet, mesh: TriangleMesh) -> TriangleMesh:
    """Displace every vertex by the network output; faces are kept."""
    with torch.no_grad():
        offsets = net(torch.from_numpy(mesh.vertices)).numpy()
    return mesh.with_vertices(mesh.vertices + offsets)


def loss_and_grad(
    net: DeformationNet, source: TriangleMesh, target_cloud: OrientedPointCloud, config: MatchConfig
) -> tuple[float, list[np.ndarray]]:
    """Loss value and its gradient for every network parameter."""
    objective = _Objective(source, target_cloud, config)
    net.zero_grad()
    loss = objective(net)
    if not torch.isfinite(loss):
        raise DivergenceError(f"non-finite {config.loss} loss")
    loss.backward()
    return loss.item(), [p.grad.detach().numpy().copy() for p in net.parameters()]


def reference_loss(params: list[np.ndarray], source: TriangleMesh, target: OrientedPointCloud, config: MatchConfig) -> float:
    """Same objective as :func:`loss_and_grad`, evaluated with the numpy code path."""
    x = source.vertices
    for k in range(0, len(params), 2):
        x = x @ params[k].T + params[k + 1]
        if k < len(params) - 2:
            x = np.maximum(x, 0.0)
    cloud = sample_face_centers(source.with_vertices(source.vertices + x))
    if config.loss == "cd":
        return chamfer(cloud.positions, target.positions)
    if config.loss == "emd":
        return emd_exact(cloud.positions, target.positions).cost / len(cloud)
    from .varifold import cloud_kernel

    k = config.kernel
    return cloud_kernel(cloud, cloud, k) - 2.0 * cloud_kernel(cloud, target, k) + cloud_kernel(target, target, k)


def match_shapes(source: TriangleMesh, target: TriangleMesh, config: MatchConfig | None = None) -> MatchTrace:
    """Train a fresh deformation network to carry ``source`` onto ``target``.

    The target face-center cloud is computed once.  ``trace.losses[i]`` is
    the loss before the i-th Adam step.  A non-finite loss stops the run and
    raises :class:`DivergenceError` with the partial trace attached.
    """
    config = config or MatchConfig()
    torch.manual_seed(config.seed)
    net = DeformationNet(seed=config.seed)
    trace = MatchTrace(net=net)
    objective = _Objective(source, sample_face_centers(target), config)
    optim = torch.optim.Adam(net.parameters(), lr=config.lr, betas=config.betas, eps=config.eps)
    for it in range(config.iterations):
        start = time.perf_counter()
        optim.zero_grad()
        loss = objective(net)
        if not torch.isfinite(loss):
            trace.mesh = deform(net, source)
            err = DivergenceError(f"non-finite loss at iteration {it}")
            err.trace = trace
            raise err
        loss.backward()
        optim.step()
        trace.losses.append(loss.item())
        trace.seconds.append(time.perf_counter() - start)
    trace.mesh = deform(net, source)
    return trace


def cross_evaluate(result: TriangleMesh, target: TriangleMesh, depths: dict | None = None, ct_sigma: float = 0.3) -> dict:
    """All similarity metrics between the face-center clouds of two meshes.

    Varifold entries are distances (square roots).  EMD is the total cost of
    the optimal matching and is NaN when the face counts differ.
    """
    depths = {**DEFAULT_DEPTH, **(depths or {})}
    a, b = sample_face_centers(result), sample_face_centers(target)
    table = {"cd": chamfer(a.positions, b.positions)}
    table["emd"] = emd_exact(a.positions, b.positions).cost if len(a) == len(b) else float("nan")
    table["ct"] = varifold_distance(a, b, KernelConfig("ct", ct_sigma=ct_sigma))
    table["ntk1"] = varifold_distance(a, b, KernelConfig("ntk1", depths["ntk1"]))
    table["ntk2"] = varifold_distance(a, b, KernelConfig("ntk2", depths["ntk2"]))
    return table


def save_trace_csv(trace: MatchTrace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss", "seconds"])
        for i, (loss, sec) in enumerate(zip(trace.losses, trace.seconds)):
            writer.writerow([i, f"{loss:.17g}", f"{sec:.6f}"])
