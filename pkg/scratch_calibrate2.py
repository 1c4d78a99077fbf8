"""Calibration v2: longer training, saved nets, retuned fixed-point search."""
import sys, time, json, os
sys.path.insert(0, "src")
import numpy as np
from slowpoints import cells, synth_data, training, linalg, fixed_points, spectra, geometry, lsa, persistence


def get_net(tag, grammar, N, L, steps, seed, loss_kind="softmax_xent", l2=5e-4, hidden=128):
    path = f"scratch_nets/{tag}.json"
    if grammar == "categorical":
        ds = synth_data.gen_categorical(N, L, 3000, seed=seed * 1000 + 1)
        test = synth_data.gen_categorical(N, L, 600, seed=seed * 1000 + 2)
    elif grammar == "intensity":
        ds = synth_data.gen_ordered_sentiment_intensity(L, 3000, seed=seed * 1000 + 1)
        test = synth_data.gen_ordered_sentiment_intensity(L, 600, seed=seed * 1000 + 2)
    else:
        ds = synth_data.gen_multilabel(N, L, 3000, seed=seed * 1000 + 1)
        test = synth_data.gen_multilabel(N, L, 600, seed=seed * 1000 + 2)
    if os.path.exists(path):
        params = persistence.load_params(path)
        ck = persistence.load_checkpoint(path)
        return params, ds, test, ck.metrics
    t0 = time.time()
    arch = cells.Architecture("gru", hidden, ds.vocabulary.size)
    cfg = training.TrainConfig(steps=steps, seed=seed, loss_kind=loss_kind, l2_penalty=l2)
    rep = training.train(arch, ds, cfg, test_dataset=test)
    metrics = {"test_accuracy": rep.test_accuracy, "shuffled": rep.shuffled_test_accuracy,
               "final_loss": float(rep.losses[-1]), "t_train": round(time.time() - t0)}
    persistence.save_checkpoint(persistence.Checkpoint.from_params(rep.params, metrics=metrics), path)
    return rep.params, ds, test, metrics


def states_of(params, test):
    tokens = test.token_matrix()
    H = np.zeros((len(tokens), params.arch.hidden_dim)); out = []
    for t in range(tokens.shape[1]):
        X = training._onehot_step(tokens[:, t], params.arch.input_dim)
        H, _ = cells.step_batch(params, H, X)
        out.append(H.copy())
    return np.concatenate(out, 0)


def fp_analysis(tag, params, ds, test, k_plane, L, tol, max_iters=5000):
    states = states_of(params, test)
    hb = linalg.pca(states); hv = hb.variances
    rng = np.random.default_rng(17)
    seeds_h = states[rng.choice(len(states), 256, replace=False)]
    t0 = time.time()
    cfg = fixed_points.FixedPointConfig(tol=tol, max_iters=max_iters)
    fps = fixed_points.find_fixed_points(params, seeds_h, cfg, rng_seed=18)
    conv = fps.converged_points
    out = {"tag": tag, "tol": tol, "h_top2": float(hv[:2].sum()/hv.sum()),
           "h_top3": float(hv[:3].sum()/hv.sum()),
           "n_kept": len(fps), "n_conv_kept": len(conv), "n_conv_raw": fps.n_converged,
           "t_fp": round(time.time() - t0)}
    if len(conv) >= 5:
        st = np.vstack([p.h_star for p in conv])
        fb = linalg.pca(st); fv = fb.variances
        out["fp_top2"] = float(fv[:2].sum()/fv.sum())
        out["fp_dim95"] = geometry.variance_threshold_dim(fb, 0.95)
        reports = [spectra.linearize(params, p, basis=fb, plane_dim=k_plane, tau_threshold=float(L)) for p in conv]
        cnt = spectra.count_integration_modes(reports, float(L))
        out["im_median"] = cnt.median
        out["im_hist"] = np.bincount(cnt.per_point, minlength=6)[:6].tolist()
        proj = fb.project(st, 2); emb = fb.embed(proj, 2)
        sp = fixed_points.speed_batch(params, emb)
        out["contour_frac"] = float(np.mean(sp < 1.0/L))
    print(json.dumps(out), flush=True)
    return out


if __name__ == "__main__":
    which = sys.argv[1]
    if which == "cat3":
        for seed, steps in ((11, 10000), (14, 10000), (15, 10000)):
            tag = f"cat3-s{seed}-{steps}"
            params, ds, test, m = get_net(tag, "categorical", 3, 40, steps, seed)
            print(json.dumps({"tag": tag, **m}), flush=True)
            for tol in (1e-7, 1e-8):
                fp_analysis(tag, params, ds, test, 2, 40, tol)
    elif which == "others":
        params, ds, test, m = get_net("cat4-s11", "categorical", 4, 40, 10000, 11)
        print(json.dumps({"tag": "cat4", **m}), flush=True)
        fp_analysis("cat4", params, ds, test, 3, 40, 1e-7)
        params, ds, test, m = get_net("ord5-s11", "intensity", 5, 40, 10000, 11)
        print(json.dumps({"tag": "ord5", **m}), flush=True)
        fp_analysis("ord5", params, ds, test, 2, 40, 1e-7)
        rep = lsa.lsa_analyze(lsa.build_count_matrix(ds))
        print(json.dumps({"tag": "ord5-lsa", "top2": rep.top_k_fraction(2)}), flush=True)
        params, ds, test, m = get_net("ml2-s11", "multilabel", 2, 30, 10000, 11, loss_kind="sigmoid_bce")
        print(json.dumps({"tag": "ml2", **m}), flush=True)
        fp_analysis("ml2", params, ds, test, 2, 30, 1e-7)
        d = geometry.deflection_stats(params, test)
        g1 = d.per_token["good_1"].mean; g2 = d.per_token["good_2"].mean
        b1 = d.per_token["bad_1"].mean; b2 = d.per_token["bad_2"].mean
        cos = lambda a, b: float(a @ b/(np.linalg.norm(a)*np.linalg.norm(b)))
        print(json.dumps({"tag": "ml2-defl", "cos_g1_g2": cos(g1, g2), "cos_g1_b2": cos(g1, b2),
                          "cos_g1_b1": cos(g1, b1)}), flush=True)
