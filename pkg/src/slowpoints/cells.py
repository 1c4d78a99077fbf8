"""Forward dynamics and analytic Jacobians for UGRNN, GRU, and LSTM cells.

Conventions
-----------
* A hidden state is a length-n float64 vector.  For the LSTM the exposed
  state is the concatenation [memory ; gated-output], so n is twice the
  gate width and all Jacobians are taken with respect to the full
  concatenated state.
* Weight matrices map (input-dim,) -> (output-dim,) as ``W @ v``; batched
  code uses row-major batches, i.e. states of shape (B, n) and ``H @ W.T``.
* All gates use the sigmoid; candidate/output squashing uses tanh where the
  cell calls for it.  The LSTM's memory candidate is sigmoidal, matching the
  update equations this toolkit implements throughout (training, fixed-point
  finding, and linearization must agree exactly).

The batched ``*_forward`` / ``*_backward`` pairs are shared by the trainer
(backprop through time) and the fixed-point finder (vector-Jacobian products
of a single step), so there is exactly one implementation of F per
architecture.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

KINDS = ("ugrnn", "gru", "lstm")

# Weight-key tables; *h matrices act on the previous state, *x on the input.
_UGRNN_SHAPES = {
    "W_ch": ("n", "n"), "W_cx": ("n", "d"), "b_c": ("n",),
    "W_gh": ("n", "n"), "W_gx": ("n", "d"), "b_g": ("n",),
}
_GRU_SHAPES = dict(_UGRNN_SHAPES)
_GRU_SHAPES.update({"W_rh": ("n", "n"), "W_rx": ("n", "d"), "b_r": ("n",)})
# LSTM: m = gate width = n // 2.  The memory-candidate matrix W_ch sees only
# the gated-output half of the previous state; the three gates see all of it.
_LSTM_SHAPES = {
    "W_ih": ("m", "n"), "W_ix": ("m", "d"), "b_i": ("m",),
    "W_fh": ("m", "n"), "W_fx": ("m", "d"), "b_f": ("m",),
    "W_ch": ("m", "m"), "W_cx": ("m", "d"), "b_c": ("m",),
    "W_hh": ("m", "n"), "W_hx": ("m", "d"), "b_h": ("m",),
}
_SHAPE_TABLES = {"ugrnn": _UGRNN_SHAPES, "gru": _GRU_SHAPES, "lstm": _LSTM_SHAPES}


def _sigmoid(x):
    # 0.5*(tanh(x/2)+1) == logistic, without overflow for large |x|.
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


@dataclass(frozen=True)
class Architecture:
    """Cell kind plus state and input widths.

    ``hidden_dim`` is the full exposed state dimension; for LSTMs it must be
    even (memory half + gated-output half).
    """

    kind: str
    hidden_dim: int
    input_dim: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cell kind {self.kind!r}; expected one of {KINDS}")
        if self.hidden_dim <= 0 or self.input_dim <= 0:
            raise ValueError("hidden_dim and input_dim must be positive")
        if self.kind == "lstm" and self.hidden_dim % 2:
            raise ValueError("lstm hidden_dim must be even (memory + output halves)")

    @property
    def gate_dim(self):
        return self.hidden_dim // 2 if self.kind == "lstm" else self.hidden_dim

    def weight_shapes(self) -> dict:
        """Required weight-array shapes, keyed by canonical name."""
        dims = {"n": self.hidden_dim, "m": self.gate_dim, "d": self.input_dim}
        return {
            name: tuple(dims[s] for s in spec)
            for name, spec in _SHAPE_TABLES[self.kind].items()
        }


@dataclass
class RnnParams:
    """Named cell weights plus the linear readout.

    ``weights`` maps the canonical names from ``Architecture.weight_shapes``
    to float64 arrays.  ``readout_w`` has one row per class; ``readout_b``
    may be None (synthetic runs use no readout bias).
    """

    arch: Architecture
    weights: dict = field(default_factory=dict)
    readout_w: np.ndarray | None = None
    readout_b: np.ndarray | None = None

    @property
    def num_classes(self):
        return 0 if self.readout_w is None else self.readout_w.shape[0]

    def validate(self):
        for name, shape in self.arch.weight_shapes().items():
            if name not in self.weights:
                raise DimensionError(f"missing weight array {name!r} for {self.arch.kind}")
            got = self.weights[name].shape
            if got != shape:
                raise DimensionError(f"{name} has shape {got}, expected {shape}")
            if not np.all(np.isfinite(self.weights[name])):
                raise DimensionError(f"{name} contains non-finite entries")
        if self.readout_w is not None:
            if self.readout_w.ndim != 2 or self.readout_w.shape[1] != self.arch.hidden_dim:
                raise DimensionError(
                    f"readout_w has shape {self.readout_w.shape}, expected "
                    f"(num_classes, {self.arch.hidden_dim})"
                )
            if self.readout_b is not None and self.readout_b.shape != (self.num_classes,):
                raise DimensionError(f"readout_b has shape {self.readout_b.shape}")
        return self

    def all_arrays(self) -> dict:
        """Every trainable array, readout included, keyed by name."""
        out = dict(self.weights)
        if self.readout_w is not None:
            out["W_out"] = self.readout_w
        if self.readout_b is not None:
            out["b_out"] = self.readout_b
        return out

    def copy(self):
        return RnnParams(
            self.arch,
            {k: v.copy() for k, v in self.weights.items()},
            None if self.readout_w is None else self.readout_w.copy(),
            None if self.readout_b is None else self.readout_b.copy(),
        )


def init_params(arch: Architecture, num_classes: int, rng, readout_bias=False) -> RnnParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases.

    ``rng`` is a ``numpy.random.Generator`` (or an int seed).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    weights = {}
    for name, shape in arch.weight_shapes().items():
        if len(shape) == 1:
            weights[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[1])
            weights[name] = rng.uniform(-bound, bound, size=shape)
    bound = 1.0 / np.sqrt(arch.hidden_dim)
    readout_w = rng.uniform(-bound, bound, size=(num_classes, arch.hidden_dim))
    readout_b = np.zeros(num_classes) if readout_bias else None
    return RnnParams(arch, weights, readout_w, readout_b).validate()


def zero_state(arch: Architecture) -> np.ndarray:
    return np.zeros(arch.hidden_dim)


# --------------------------------------------------------------------------
# Batched single-step forward/backward, one pair per architecture.
# States H: (B, n); inputs X: (B, d).  Caches hold what backward needs.
# --------------------------------------------------------------------------

def _ugrnn_forward(w, H, X):
    C = np.tanh(H @ w["W_ch"].T + X @ w["W_cx"].T + w["b_c"])
    G = _sigmoid(H @ w["W_gh"].T + X @ w["W_gx"].T + w["b_g"])
    Hn = G * H + (1.0 - G) * C
    return Hn, (H, X, C, G)


def _ugrnn_backward(w, cache, dHn, grads=None):
    H, X, C, G = cache
    dG = dHn * (H - C)
    dAc = dHn * (1.0 - G) * (1.0 - C * C)
    dAg = dG * G * (1.0 - G)
    dH = dHn * G + dAc @ w["W_ch"] + dAg @ w["W_gh"]
    if grads is not None:
        grads["W_ch"] += dAc.T @ H
        grads["W_cx"] += dAc.T @ X
        grads["b_c"] += dAc.sum(axis=0)
        grads["W_gh"] += dAg.T @ H
        grads["W_gx"] += dAg.T @ X
        grads["b_g"] += dAg.sum(axis=0)
    return dH


def _gru_forward(w, H, X):
    R = _sigmoid(H @ w["W_rh"].T + X @ w["W_rx"].T + w["b_r"])
    G = _sigmoid(H @ w["W_gh"].T + X @ w["W_gx"].T + w["b_g"])
    RH = R * H
    C = np.tanh(RH @ w["W_ch"].T + X @ w["W_cx"].T + w["b_c"])
    Hn = G * H + (1.0 - G) * C
    return Hn, (H, X, R, G, C, RH)


def _gru_backward(w, cache, dHn, grads=None):
    H, X, R, G, C, RH = cache
    dG = dHn * (H - C)
    dAc = dHn * (1.0 - G) * (1.0 - C * C)
    dRH = dAc @ w["W_ch"]
    dAg = dG * G * (1.0 - G)
    dAr = dRH * H * R * (1.0 - R)
    dH = dHn * G + dRH * R + dAg @ w["W_gh"] + dAr @ w["W_rh"]
    if grads is not None:
        grads["W_ch"] += dAc.T @ RH
        grads["W_cx"] += dAc.T @ X
        grads["b_c"] += dAc.sum(axis=0)
        grads["W_gh"] += dAg.T @ H
        grads["W_gx"] += dAg.T @ X
        grads["b_g"] += dAg.sum(axis=0)
        grads["W_rh"] += dAr.T @ H
        grads["W_rx"] += dAr.T @ X
        grads["b_r"] += dAr.sum(axis=0)
    return dH


def _lstm_forward(w, H, X):
    m = w["b_c"].shape[0]
    Cp, Hp = H[:, :m], H[:, m:]
    I = _sigmoid(H @ w["W_ih"].T + X @ w["W_ix"].T + w["b_i"])
    F = _sigmoid(H @ w["W_fh"].T + X @ w["W_fx"].T + w["b_f"])
    U = _sigmoid(Hp @ w["W_ch"].T + X @ w["W_cx"].T + w["b_c"])
    O = _sigmoid(H @ w["W_hh"].T + X @ w["W_hx"].T + w["b_h"])
    Cn = F * Cp + I * U
    Tc = np.tanh(Cn)
    Hn = np.concatenate([Cn, Tc * O], axis=1)
    return Hn, (H, X, I, F, U, O, Tc)


def _lstm_backward(w, cache, dHn, grads=None):
    H, X, I, F, U, O, Tc = cache
    m = I.shape[1]
    Cp, Hp = H[:, :m], H[:, m:]
    dCn = dHn[:, :m] + dHn[:, m:] * O * (1.0 - Tc * Tc)
    dAo = dHn[:, m:] * Tc * O * (1.0 - O)
    dAi = dCn * U * I * (1.0 - I)
    dAf = dCn * Cp * F * (1.0 - F)
    dAu = dCn * I * U * (1.0 - U)
    dH = dAi @ w["W_ih"] + dAf @ w["W_fh"] + dAo @ w["W_hh"]
    dH[:, :m] += dCn * F
    dH[:, m:] += dAu @ w["W_ch"]
    if grads is not None:
        grads["W_ih"] += dAi.T @ H
        grads["W_ix"] += dAi.T @ X
        grads["b_i"] += dAi.sum(axis=0)
        grads["W_fh"] += dAf.T @ H
        grads["W_fx"] += dAf.T @ X
        grads["b_f"] += dAf.sum(axis=0)
        grads["W_ch"] += dAu.T @ Hp
        grads["W_cx"] += dAu.T @ X
        grads["b_c"] += dAu.sum(axis=0)
        grads["W_hh"] += dAo.T @ H
        grads["W_hx"] += dAo.T @ X
        grads["b_h"] += dAo.sum(axis=0)
    return dH


_FORWARD = {"ugrnn": _ugrnn_forward, "gru": _gru_forward, "lstm": _lstm_forward}
_BACKWARD = {"ugrnn": _ugrnn_backward, "gru": _gru_backward, "lstm": _lstm_backward}


def step_batch(params: RnnParams, H: np.ndarray, X: np.ndarray):
    """One update for a batch of states; returns (next states, cache)."""
    return _FORWARD[params.arch.kind](params.weights, H, X)


def backward_batch(params: RnnParams, cache, dH_next: np.ndarray, grads=None):
    """Vector-Jacobian product of one step: dH_next -> dH_prev.

    When ``grads`` (a name->array dict) is given, weight gradients for the
    step are accumulated into it in place.
    """
    return _BACKWARD[params.arch.kind](params.weights, cache, dH_next, grads)


def _check_vec(v, length, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (length,):
        raise DimensionError(f"{name} has shape {v.shape}, expected ({length},)")
    return v


def step(params: RnnParams, h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply the cell update once: h_next = F(h, x)."""
    arch = params.arch
    h = _check_vec(h, arch.hidden_dim, "hidden state")
    x = _check_vec(x, arch.input_dim, "input")
    out, _ = step_batch(params, h[None, :], x[None, :])
    return out[0]


def run(params: RnnParams, h0: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Trajectory of states from h0 through a sequence of inputs.

    Returns an array of shape (T+1, n); row 0 is h0, row T feeds the readout.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[0] == 0:
        raise DimensionError("run needs a nonempty input sequence")
    arch = params.arch
    h0 = _check_vec(h0, arch.hidden_dim, "initial state")
    if inputs.shape[1] != arch.input_dim:
        raise DimensionError(
            f"inputs have width {inputs.shape[1]}, expected {arch.input_dim}"
        )
    traj = np.empty((inputs.shape[0] + 1, arch.hidden_dim))
    traj[0] = h0
    H = h0[None, :]
    for t, x in enumerate(inputs):
        H, _ = step_batch(params, H, x[None, :])
        traj[t + 1] = H[0]
    return traj


def logits(params: RnnParams, h: np.ndarray) -> np.ndarray:
    """Readout y = W h (+ b) of a hidden state."""
    if params.readout_w is None:
        raise DimensionError("params carry no readout layer")
    h = _check_vec(h, params.arch.hidden_dim, "hidden state")
    y = params.readout_w @ h
    if params.readout_b is not None:
        y = y + params.readout_b
    return y


def logits_batch(params: RnnParams, H: np.ndarray) -> np.ndarray:
    y = H @ params.readout_w.T
    if params.readout_b is not None:
        y = y + params.readout_b
    return y


def jacobians(params: RnnParams, h: np.ndarray, x: np.ndarray):
    """Analytic recurrent and input Jacobians of F at (h, x).

    Returns (J_rec, J_inp) with J_rec[i, j] = dF_i/dh_j and
    J_inp[i, j] = dF_i/dx_j, matching ``step`` exactly.
    """
    arch = params.arch
    h = _check_vec(h, arch.hidden_dim, "hidden state")
    x = _check_vec(x, arch.input_dim, "input")
    w = params.weights
    if arch.kind == "ugrnn":
        c = np.tanh(w["W_ch"] @ h + w["W_cx"] @ x + w["b_c"])
        g = _sigmoid(w["W_gh"] @ h + w["W_gx"] @ x + w["b_g"])
        dg = (h - c) * g * (1.0 - g)
        dc = (1.0 - g) * (1.0 - c * c)
        j_rec = np.diag(g) + dg[:, None] * w["W_gh"] + dc[:, None] * w["W_ch"]
        j_inp = dg[:, None] * w["W_gx"] + dc[:, None] * w["W_cx"]
        return j_rec, j_inp
    if arch.kind == "gru":
        r = _sigmoid(w["W_rh"] @ h + w["W_rx"] @ x + w["b_r"])
        g = _sigmoid(w["W_gh"] @ h + w["W_gx"] @ x + w["b_g"])
        c = np.tanh(w["W_ch"] @ (r * h) + w["W_cx"] @ x + w["b_c"])
        dg = (h - c) * g * (1.0 - g)
        dc = (1.0 - g) * (1.0 - c * c)
        drh = h * r * (1.0 - r)  # d(r*h)/d(pre-activation of r)
        j_rec = (
            np.diag(g)
            + dg[:, None] * w["W_gh"]
            + dc[:, None] * (w["W_ch"] * r[None, :] + (w["W_ch"] * drh[None, :]) @ w["W_rh"])
        )
        j_inp = dg[:, None] * w["W_gx"] + dc[:, None] * (
            w["W_cx"] + (w["W_ch"] * drh[None, :]) @ w["W_rx"]
        )
        return j_rec, j_inp
    # lstm
    m = arch.gate_dim
    cp, hp = h[:m], h[m:]
    i = _sigmoid(w["W_ih"] @ h + w["W_ix"] @ x + w["b_i"])
    f = _sigmoid(w["W_fh"] @ h + w["W_fx"] @ x + w["b_f"])
    u = _sigmoid(w["W_ch"] @ hp + w["W_cx"] @ x + w["b_c"])
    o = _sigmoid(w["W_hh"] @ h + w["W_hx"] @ x + w["b_h"])
    cn = f * cp + i * u
    tc = np.tanh(cn)
    # Memory rows: dC'/ds and dC'/dx.
    jc = (cp * f * (1.0 - f))[:, None] * w["W_fh"] + (u * i * (1.0 - i))[:, None] * w["W_ih"]
    jc[:, :m] += np.diag(f)
    jc[:, m:] += (i * u * (1.0 - u))[:, None] * w["W_ch"]
    jc_x = (
        (cp * f * (1.0 - f))[:, None] * w["W_fx"]
        + (u * i * (1.0 - i))[:, None] * w["W_ix"]
        + (i * u * (1.0 - u))[:, None] * w["W_cx"]
    )
    # Gated-output rows chain through tanh(C') and the output gate.
    do = o * (1.0 - tc * tc)
    jh = do[:, None] * jc + (tc * o * (1.0 - o))[:, None] * w["W_hh"]
    jh_x = do[:, None] * jc_x + (tc * o * (1.0 - o))[:, None] * w["W_hx"]
    return np.vstack([jc, jh]), np.vstack([jc_x, jh_x])


def encode_onehot(token_indices, vocab_size: int) -> np.ndarray:
    """One-hot rows for a sequence of token indices; pad index -1 maps to 0."""
    idx = np.asarray(token_indices, dtype=int)
    out = np.zeros((idx.shape[0], vocab_size))
    valid = idx >= 0
    out[np.nonzero(valid)[0], idx[valid]] = 1.0
    return out
