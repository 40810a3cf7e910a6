"""12-layer GCN with group norm, input skip connections and hand-derived
gradients, plus a small Adam optimizer with per-step exponential lr decay.

Layer rule: Z = Ltilde @ E_in @ W, then per-node group normalization with
learned scale/shift, then ReLU. The input E0 is concatenated (feature axis)
to the running activation before layers 6 and 12. Layer 12 is linear (no
norm, no activation); its output rows are normalized to unit Euclidean norm
(exactly-zero rows are left at zero). Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, FormatError, SpecError, StaleCache
from .graph import _fmt
from .synthgen import STREAM_INIT, make_rng

N_LAYERS = 12
SKIP_AT = (6, 12)  # 1-based; E0 concatenated to the input of these layers
GN_EPS = 1e-5

DEFAULT_HIDDEN = 64
DEFAULT_GROUPS = 4
DEFAULT_LR0 = 1e-4
DEFAULT_DECAY = 0.9999


@dataclass
class GcnLayer:
    W: np.ndarray
    gn_scale: np.ndarray
    gn_shift: np.ndarray
    groups: int

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.gn_scale = np.asarray(self.gn_scale, dtype=np.float64)
        self.gn_shift = np.asarray(self.gn_shift, dtype=np.float64)
        if self.W.ndim != 2:
            raise DimensionMismatch("W must be 2-D")
        m_out = self.W.shape[1]
        if self.gn_scale.shape != (m_out,) or self.gn_shift.shape != (m_out,):
            raise DimensionMismatch("gn_scale/gn_shift must have length m_out")
        if self.groups < 1 or m_out % self.groups != 0:
            raise DimensionMismatch("groups must divide m_out")


@dataclass
class GcnModel:
    layers: list
    input_dim: int
    hidden_dim: int
    output_dim: int
    use_gn: bool = True

    def __post_init__(self):
        if len(self.layers) != N_LAYERS:
            raise DimensionMismatch("model must have %d layers" % N_LAYERS)
        for idx, layer in enumerate(self.layers, start=1):
            want_in = _layer_in_dim(idx, self.input_dim, self.hidden_dim)
            want_out = self.output_dim if idx == N_LAYERS else self.hidden_dim
            if layer.W.shape != (want_in, want_out):
                raise DimensionMismatch(
                    "layer %d: W is %s, expected %s"
                    % (idx, layer.W.shape, (want_in, want_out)))

    @property
    def skip_at(self):
        return SKIP_AT


def _layer_in_dim(idx: int, m0: int, h: int) -> int:
    if idx == 1:
        return m0
    if idx in SKIP_AT:
        return h + m0
    return h


def parameters(model: GcnModel) -> list:
    """All trainable arrays in checkpoint order: (W, gn_scale, gn_shift) per
    layer. Layer 12's norm parameters are carried but never receive gradient."""
    out = []
    for layer in model.layers:
        out.extend([layer.W, layer.gn_scale, layer.gn_shift])
    return out


def init_model(input_dim: int, output_dim: int, hidden_dim: int = DEFAULT_HIDDEN,
               groups: int = DEFAULT_GROUPS, seed: int = 0,
               use_gn: bool = True) -> GcnModel:
    """Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), unit scale,
    zero shift. Weight draws consume the (seed, STREAM_INIT) stream layer by
    layer in order."""
    if input_dim < 1 or output_dim < 1 or hidden_dim < 1:
        raise SpecError("dims must be positive")
    if groups < 1 or hidden_dim % groups != 0:
        raise SpecError("groups must divide hidden_dim")
    rng = make_rng(seed, STREAM_INIT)
    layers = []
    for idx in range(1, N_LAYERS + 1):
        m_in = _layer_in_dim(idx, input_dim, hidden_dim)
        m_out = output_dim if idx == N_LAYERS else hidden_dim
        bound = np.sqrt(6.0 / (m_in + m_out))
        W = rng.uniform(-bound, bound, size=(m_in, m_out))
        g = 1 if idx == N_LAYERS else groups
        layers.append(GcnLayer(W=W, gn_scale=np.ones(m_out),
                               gn_shift=np.zeros(m_out), groups=g))
    return GcnModel(layers=layers, input_dim=input_dim, hidden_dim=hidden_dim,
                    output_dim=output_dim, use_gn=use_gn)


def group_norm(x: np.ndarray, groups: int, scale: np.ndarray, shift: np.ndarray,
               eps: float = GN_EPS) -> np.ndarray:
    """Standardize each group of channels to zero mean / unit variance, then
    apply per-channel scale and shift. Accepts a vector or a stack of rows."""
    x = np.asarray(x, dtype=np.float64)
    vec = x.ndim == 1
    rows = x[None, :] if vec else x
    m = rows.shape[1]
    scale = np.asarray(scale, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if groups < 1 or m % groups != 0:
        raise DimensionMismatch("groups must divide channel count")
    if scale.shape != (m,) or shift.shape != (m,):
        raise DimensionMismatch("scale/shift must have length m")
    y, _, _ = _gn_rows(rows, groups, scale, shift, eps)
    return y[0] if vec else y


def _gn_rows(rows: np.ndarray, groups: int, scale: np.ndarray, shift: np.ndarray,
             eps: float):
    """Vectorized group norm over rows; returns (out, xhat, inv_std) where
    xhat is (n, groups, c) and inv_std is (n, groups)."""
    n, m = rows.shape
    c = m // groups
    g = rows.reshape(n, groups, c)
    mean = g.mean(axis=2, keepdims=True)
    var = g.var(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (g - mean) * inv_std
    out = xhat.reshape(n, m) * scale + shift
    return out, xhat, inv_std[:, :, 0]


def _gn_backward(dy: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray,
                 scale: np.ndarray, groups: int):
    """Gradients through _gn_rows. dy is (n, m); returns (dx, dscale, dshift)."""
    n, m = dy.shape
    c = m // groups
    dshift = dy.sum(axis=0)
    dscale = (dy * xhat.reshape(n, m)).sum(axis=0)
    dxh = (dy * scale).reshape(n, groups, c)
    mean_dxh = dxh.mean(axis=2, keepdims=True)
    mean_dxh_xh = (dxh * xhat).mean(axis=2, keepdims=True)
    dx = inv_std[:, :, None] * (dxh - mean_dxh - xhat * mean_dxh_xh)
    return dx.reshape(n, m), dscale, dshift


def layer_forward(layer: GcnLayer, Ltilde: np.ndarray, E_in: np.ndarray,
                  use_gn: bool = True, linear: bool = False):
    """One layer: Z = Ltilde @ E_in @ W, group norm, ReLU. With ``linear``
    the norm and activation are skipped (final layer). Returns (out, cache)."""
    E_in = np.asarray(E_in, dtype=np.float64)
    n = E_in.shape[0]
    if Ltilde.shape != (n, n):
        raise DimensionMismatch("operator and activations disagree on n")
    if E_in.shape[1] != layer.W.shape[0]:
        raise DimensionMismatch(
            "layer expects width %d, got %d" % (layer.W.shape[0], E_in.shape[1]))
    M = Ltilde @ E_in
    Z = M @ layer.W
    cache = {"M": M, "in_width": E_in.shape[1]}
    if linear:
        cache.update(xhat=None, inv_std=None, mask=None)
        return Z, cache
    if use_gn:
        h, xhat, inv_std = _gn_rows(Z, layer.groups, layer.gn_scale,
                                    layer.gn_shift, GN_EPS)
    else:
        h, xhat, inv_std = Z, None, None
    mask = h > 0.0
    cache.update(xhat=xhat, inv_std=inv_std, mask=mask)
    return h * mask, cache


def _layer_backward(layer: GcnLayer, Ltilde: np.ndarray, cache: dict,
                    dout: np.ndarray, use_gn: bool, linear: bool):
    """Returns (dE_in, dW, dscale, dshift) for one layer."""
    if linear:
        dZ = dout
        dscale = np.zeros_like(layer.gn_scale)
        dshift = np.zeros_like(layer.gn_shift)
    else:
        dh = dout * cache["mask"]
        if use_gn:
            dZ, dscale, dshift = _gn_backward(dh, cache["xhat"], cache["inv_std"],
                                              layer.gn_scale, layer.groups)
        else:
            dZ = dh
            dscale = np.zeros_like(layer.gn_scale)
            dshift = np.zeros_like(layer.gn_shift)
    dW = cache["M"].T @ dZ
    dE_in = Ltilde.T @ (dZ @ layer.W.T)
    return dE_in, dW, dscale, dshift


def model_forward(model: GcnModel, Ltilde: np.ndarray, E0: np.ndarray,
                  want_cache: bool = False):
    """Full forward pass; output rows unit-normalized (zero rows stay zero)."""
    E0 = np.asarray(E0, dtype=np.float64)
    if E0.ndim != 2 or E0.shape[1] != model.input_dim:
        raise DimensionMismatch("E0 must be n x %d" % model.input_dim)
    n = E0.shape[0]
    if Ltilde.shape != (n, n):
        raise DimensionMismatch("operator must be n x n")
    act = E0
    layer_caches = []
    for idx, layer in enumerate(model.layers, start=1):
        if idx in SKIP_AT:
            act = np.hstack([act, E0])
        act, cache = layer_forward(layer, Ltilde, act,
                                   use_gn=model.use_gn, linear=idx == N_LAYERS)
        layer_caches.append(cache)
    raw = act
    norms = np.linalg.norm(raw, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    E = raw / safe[:, None]
    if not want_cache:
        return E
    cache = {
        "Ltilde": Ltilde,
        "shapes": tuple(l.W.shape for l in model.layers),
        "use_gn": model.use_gn,
        "layers": layer_caches,
        "E": E,
        "norms": norms,
    }
    return E, cache


def model_backward(model: GcnModel, cache: dict, dE: np.ndarray) -> list:
    """Gradients of a scalar loss w.r.t. every parameter, given dLoss/dE at
    the normalized output. Returned list aligns with parameters(model)."""
    if cache.get("shapes") != tuple(l.W.shape for l in model.layers):
        raise StaleCache("forward cache does not match this model")
    if cache.get("use_gn") != model.use_gn:
        raise StaleCache("forward cache was built with a different gn setting")
    E = cache["E"]
    if np.shape(dE) != E.shape:
        raise StaleCache("upstream gradient shape %s, expected %s"
                         % (np.shape(dE), E.shape))
    norms = cache["norms"]
    Ltilde = cache["Ltilde"]
    # Through row normalization: d_raw = (dE - (E.dE) E) / |raw|; zero rows
    # were mapped to zero with zero local gradient.
    proj = (E * dE).sum(axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    dact = (dE - proj * E) / safe[:, None]
    dact[norms == 0.0] = 0.0

    grads = [None] * (3 * N_LAYERS)
    for idx in range(N_LAYERS, 0, -1):
        layer = model.layers[idx - 1]
        lcache = cache["layers"][idx - 1]
        dE_in, dW, dscale, dshift = _layer_backward(
            layer, Ltilde, lcache, dact,
            use_gn=model.use_gn, linear=idx == N_LAYERS)
        grads[3 * (idx - 1):3 * idx] = [dW, dscale, dshift]
        if idx in SKIP_AT:
            dE_in = dE_in[:, :lcache["in_width"] - model.input_dim]
        dact = dE_in
    return grads


@dataclass
class AdamState:
    m: list
    v: list
    t: int
    lr0: float
    beta1: float
    beta2: float
    eps: float
    decay: float

    @property
    def lr(self) -> float:
        """Rate the next step will use: lr0 * decay^t."""
        return self.lr0 * self.decay ** self.t


def init_adam(params: list, lr0: float = DEFAULT_LR0, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              decay: float = DEFAULT_DECAY) -> AdamState:
    return AdamState(m=[np.zeros_like(p) for p in params],
                     v=[np.zeros_like(p) for p in params],
                     t=0, lr0=lr0, beta1=beta1, beta2=beta2, eps=eps,
                     decay=decay)


def adam_step(state: AdamState, params: list, grads: list):
    """One bias-corrected Adam update, in place on params and state.

    The step uses lr(t) = lr0 * decay^t with t the number of completed steps,
    then increments t."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise DimensionMismatch("params/grads/state length mismatch")
    lr = state.lr
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


GCNM_MAGIC = "GCNM 1"
ADAM_MAGIC = "ADAM 1"


def _param_lines(arr: np.ndarray) -> list:
    rows = arr if arr.ndim == 2 else arr[None, :]
    return [_fmt(row) for row in rows]


def save_model(model: GcnModel, path: str, adam: AdamState | None = None) -> None:
    lines = [GCNM_MAGIC,
             "m0 %d h %d d %d groups %d gn %d skip %s" % (
                 model.input_dim, model.hidden_dim, model.output_dim,
                 model.layers[0].groups, int(model.use_gn),
                 " ".join(str(s) for s in SKIP_AT))]
    for idx, layer in enumerate(model.layers, start=1):
        lines.append("L %d %d %d" % (idx, layer.W.shape[0], layer.W.shape[1]))
        lines.extend(_param_lines(layer.W))
        lines.extend(_param_lines(layer.gn_scale))
        lines.extend(_param_lines(layer.gn_shift))
    if adam is not None:
        lines.append(ADAM_MAGIC)
        lines.append("t %d lr0 %s beta1 %s beta2 %s eps %s decay %s" % (
            adam.t, _fmt([adam.lr0]), _fmt([adam.beta1]), _fmt([adam.beta2]),
            _fmt([adam.eps]), _fmt([adam.decay])))
        for m, v in zip(adam.m, adam.v):
            lines.extend(_param_lines(m))
            lines.extend(_param_lines(v))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, lines, path):
        self.lines = lines
        self.pos = 0
        self.path = path

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise FormatError("%s: truncated checkpoint" % self.path)
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def reals(self, count: int) -> np.ndarray:
        parts = self.next().split()
        if len(parts) != count:
            raise FormatError("%s: expected %d reals on line %d"
                              % (self.path, count, self.pos))
        try:
            return np.array([float(x) for x in parts])
        except ValueError:
            raise FormatError("%s: unparseable real on line %d"
                              % (self.path, self.pos))

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        return np.vstack([self.reals(cols) for _ in range(rows)])


def load_model(path: str):
    """Returns (model, adam) where adam is None if no state block follows."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    rd = _LineReader(lines, path)
    if rd.next() != GCNM_MAGIC:
        raise FormatError("%s: not a GCNM file" % path)
    tok = rd.next().split()
    try:
        if tok[0::2][:5] != ["m0", "h", "d", "groups", "gn"] or tok[10] != "skip":
            raise IndexError
        m0, h, d, groups, gn = (int(tok[i]) for i in (1, 3, 5, 7, 9))
        skip = tuple(int(x) for x in tok[11:])
    except (IndexError, ValueError):
        raise FormatError("%s: malformed GCNM header" % path)
    if skip != SKIP_AT:
        raise FormatError("%s: unsupported skip layout %s" % (path, skip))
    layers = []
    for idx in range(1, N_LAYERS + 1):
        tok = rd.next().split()
        if len(tok) != 4 or tok[0] != "L" or int(tok[1]) != idx:
            raise FormatError("%s: bad layer header at layer %d" % (path, idx))
        m_in, m_out = int(tok[2]), int(tok[3])
        W = rd.matrix(m_in, m_out)
        scale = rd.reals(m_out)
        shift = rd.reals(m_out)
        g = 1 if idx == N_LAYERS else groups
        layers.append(GcnLayer(W=W, gn_scale=scale, gn_shift=shift, groups=g))
    try:
        model = GcnModel(layers=layers, input_dim=m0, hidden_dim=h,
                         output_dim=d, use_gn=bool(gn))
    except DimensionMismatch as exc:
        raise FormatError("%s: inconsistent dims: %s" % (path, exc))
    adam = None
    if rd.pos < len(lines) and lines[rd.pos] == ADAM_MAGIC:
        rd.next()
        tok = rd.next().split()
        try:
            t = int(tok[1])
            lr0, beta1, beta2, eps, decay = (float(tok[i]) for i in (3, 5, 7, 9, 11))
        except (IndexError, ValueError):
            raise FormatError("%s: malformed ADAM header" % path)
        m_list, v_list = [], []
        for p in parameters(model):
            rows, cols = (p.shape if p.ndim == 2 else (1, p.shape[0]))
            m_list.append(rd.matrix(rows, cols).reshape(p.shape))
            v_list.append(rd.matrix(rows, cols).reshape(p.shape))
        adam = AdamState(m=m_list, v=v_list, t=t, lr0=lr0, beta1=beta1,
                         beta2=beta2, eps=eps, decay=decay)
    if rd.pos != len(lines) and any(s.strip() for s in lines[rd.pos:]):
        raise FormatError("%s: trailing content after checkpoint" % path)
    return model, adam
