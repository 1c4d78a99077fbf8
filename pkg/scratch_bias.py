import sys, time, json, os
sys.path.insert(0, "src")
import numpy as np
from slowpoints import cells, synth_data, training, persistence
from scratch_calibrate3 import probe


def train_with_bias(tag, L, steps, seed, gate_bias):
    path = f"scratch_nets/{tag}.json"
    ds = synth_data.gen_categorical(3, L, 3000, seed=seed * 1000 + 1)
    test = synth_data.gen_categorical(3, L, 600, seed=seed * 1000 + 2)
    if os.path.exists(path):
        return persistence.load_params(path), test
    t0 = time.time()
    arch = cells.Architecture("gru", 128, 4)
    orig = cells.init_params

    def patched(a, ncls, rng, readout_bias=False):
        p = orig(a, ncls, rng, readout_bias)
        p.weights["b_g"][:] = gate_bias
        return p

    cells.init_params = patched
    try:
        rep = training.train(arch, ds, training.TrainConfig(steps=steps, seed=seed), test_dataset=test)
    finally:
        cells.init_params = orig
    m = {"acc": rep.test_accuracy, "loss_tail": float(np.mean(rep.losses[-100:])), "t": round(time.time() - t0)}
    print(json.dumps({"tag": tag, **m}), flush=True)
    persistence.save_checkpoint(persistence.Checkpoint.from_params(rep.params, metrics=m), path)
    return rep.params, test


if __name__ == "__main__":
    p, test = train_with_bias("c3-uni-6k-bias1", 40, 6000, 21, 1.0)
    probe("c3-uni-6k-bias1", p, test, 2, 40.0)
    p, test = train_with_bias("c3-L20-6k-bias1", 20, 6000, 21, 1.0)
    probe("c3-L20-6k-bias1", p, test, 2, 20.0)
    p, test = train_with_bias("c3-L20-6k-bias0", 20, 6000, 21, 0.0)
    probe("c3-L20-6k-bias0", p, test, 2, 20.0)
