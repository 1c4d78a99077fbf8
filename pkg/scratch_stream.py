import sys, time, json, os
sys.path.insert(0, "src")
import numpy as np
from slowpoints import cells, synth_data, training, persistence
from scratch_calibrate3 import probe


def run(tag, arch_kind, hidden, steps, seed, train_count, gate_bias=1.0):
    path = f"scratch_nets/{tag}.json"
    ds = synth_data.gen_categorical(3, 40, train_count, seed=seed * 1000 + 1)
    test = synth_data.gen_categorical(3, 40, 600, seed=seed * 1000 + 2)
    if os.path.exists(path):
        return persistence.load_params(path), test
    t0 = time.time()
    arch = cells.Architecture(arch_kind, hidden, 4)
    orig = cells.init_params

    def patched(a, ncls, rng, readout_bias=False):
        p = orig(a, ncls, rng, readout_bias)
        key = "b_f" if a.kind == "lstm" else "b_g"
        p.weights[key][:] = gate_bias
        return p

    cells.init_params = patched
    try:
        rep = training.train(arch, ds, training.TrainConfig(steps=steps, seed=seed), test_dataset=test)
    finally:
        cells.init_params = orig
    m = {"acc": rep.test_accuracy, "loss_tail": float(np.mean(rep.losses[-100:])),
         "t": round(time.time() - t0)}
    print(json.dumps({"tag": tag, **m}), flush=True)
    persistence.save_checkpoint(persistence.Checkpoint.from_params(rep.params, metrics=m), path)
    return rep.params, test


if __name__ == "__main__":
    which = sys.argv[1]
    if which == "stream":
        p, test = run("c3-stream50k-6k", "gru", 128, 6000, 21, 50000)
        probe("c3-stream50k-6k", p, test, 2, 40.0, tol=(1 / (2 * 40.0)) ** 2 / 128)
    elif which == "lstm":
        p, test = run("c3-lstm256-6k", "lstm", 256, 6000, 21, 50000)
        probe("c3-lstm256-6k", p, test, 2, 40.0, tol=(1 / (2 * 40.0)) ** 2 / 256)
