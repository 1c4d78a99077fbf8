"""Calibration v3: integration-regime diagnosis.

Compares sampling modes and training lengths by the slow-mode time constants
at manifold points, which criterion 5 depends on.
"""
import sys, time, json, os
sys.path.insert(0, "src")
import numpy as np
from slowpoints import cells, synth_data, training, linalg, fixed_points, spectra, geometry, persistence


def train_or_load(tag, gen, gen_kwargs, steps, train_seed, hidden=128, loss_kind="softmax_xent", warm=None):
    path = f"scratch_nets/{tag}.json"
    ds = gen(**gen_kwargs, count=3000, seed=train_seed * 1000 + 1)
    test = gen(**gen_kwargs, count=600, seed=train_seed * 1000 + 2)
    if os.path.exists(path):
        return persistence.load_params(path), ds, test
    t0 = time.time()
    arch = cells.Architecture("gru", hidden, ds.vocabulary.size)
    cfg = training.TrainConfig(steps=steps, seed=train_seed, loss_kind=loss_kind)
    rep = training.train(arch, ds, cfg, test_dataset=test)
    m = {"acc": rep.test_accuracy, "shuf": rep.shuffled_test_accuracy,
         "loss_tail": float(np.mean(rep.losses[-100:])), "t": round(time.time() - t0)}
    print(json.dumps({"tag": tag, **m}), flush=True)
    persistence.save_checkpoint(persistence.Checkpoint.from_params(rep.params, metrics=m), path)
    return rep.params, ds, test


def probe(tag, params, test, k_plane, t_av, tol=1e-7):
    tokens = test.token_matrix()
    H = np.zeros((len(tokens), params.arch.hidden_dim)); states = []
    for t in range(tokens.shape[1]):
        X = training._onehot_step(tokens[:, t], params.arch.input_dim)
        H, _ = cells.step_batch(params, H, X)
        states.append(H.copy())
    states = np.concatenate(states, 0)
    hb = linalg.pca(states); hv = hb.variances
    rng = np.random.default_rng(17)
    seeds_h = states[rng.choice(len(states), 256, replace=False)]
    fps = fixed_points.find_fixed_points(
        params, seeds_h, fixed_points.FixedPointConfig(tol=tol, max_iters=5000), rng_seed=18)
    conv = fps.converged_points
    out = {"tag": tag, "h_top2": round(float(hv[:2].sum()/hv.sum()), 4),
           "kept": len(fps), "conv_kept": len(conv), "conv_raw": fps.n_converged}
    if len(conv) >= 5:
        st = np.vstack([p.h_star for p in conv])
        fb = linalg.pca(st); fv = fb.variances
        out["fp_top2"] = round(float(fv[:2].sum()/fv.sum()), 4)
        out["fp_dim95"] = geometry.variance_threshold_dim(fb, 0.95)
        reports = [spectra.linearize(params, p, basis=fb, plane_dim=k_plane, tau_threshold=t_av) for p in conv]
        cnt = spectra.count_integration_modes(reports, t_av)
        out["im_median"] = cnt.median
        out["im_hist"] = np.bincount(cnt.per_point, minlength=6)[:6].tolist()
        tau_top2 = np.array([[m.time_constant for m in r.modes[:2]] for r in reports])
        out["tau1_med"] = round(float(np.median(tau_top2[:, 0])), 1)
        out["tau2_med"] = round(float(np.median(tau_top2[:, 1])), 1)
        proj = fb.project(st, 2); emb = fb.embed(proj, 2)
        sp = fixed_points.speed_batch(params, emb)
        out["contour_frac"] = round(float(np.mean(sp < 1.0 / t_av)), 3)
    print(json.dumps(out), flush=True)


if __name__ == "__main__":
    which = sys.argv[1]
    if which == "modes":
        # uniform vs iid sampling at matched budget
        p, ds, test = train_or_load("c3-iid-6k", synth_data.gen_categorical,
                                    dict(n_classes=3, length=40, mode="iid_words"), 6000, 21)
        probe("c3-iid-6k", p, test, 2, 40.0)
        p, ds, test = train_or_load("c3-uni-6k", synth_data.gen_categorical,
                                    dict(n_classes=3, length=40, mode="uniform_over_scores"), 6000, 21)
        probe("c3-uni-6k", p, test, 2, 40.0)
    elif which == "long":
        p, ds, test = train_or_load("c3-uni-20k", synth_data.gen_categorical,
                                    dict(n_classes=3, length=40, mode="uniform_over_scores"), 20000, 21)
        probe("c3-uni-20k", p, test, 2, 40.0)
