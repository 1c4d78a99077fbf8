"""Calibration sweep for acceptance-criteria thresholds (dev scratch, not shipped)."""
import sys, time, json
sys.path.insert(0, "src")
import numpy as np
from slowpoints import cells, synth_data, training, linalg, fixed_points, spectra, geometry, lsa


def harvest_states(params, ds):
    tokens = ds.token_matrix()
    H = np.zeros((len(tokens), params.arch.hidden_dim))
    states = []
    for t in range(tokens.shape[1]):
        X = training._onehot_step(tokens[:, t], params.arch.input_dim)
        H, _ = cells.step_batch(params, H, X)
        states.append(H.copy())
    return np.concatenate(states, 0)


def analyze(tag, grammar, N, L, steps, seed, loss_kind="softmax_xent", l2=5e-4):
    t0 = time.time()
    if grammar == "categorical":
        ds = synth_data.gen_categorical(N, L, 3000, seed=seed * 1000 + 1)
        test = synth_data.gen_categorical(N, L, 600, seed=seed * 1000 + 2)
    elif grammar == "intensity":
        ds = synth_data.gen_ordered_sentiment_intensity(L, 3000, seed=seed * 1000 + 1)
        test = synth_data.gen_ordered_sentiment_intensity(L, 600, seed=seed * 1000 + 2)
    else:
        ds = synth_data.gen_multilabel(N, L, 3000, seed=seed * 1000 + 1)
        test = synth_data.gen_multilabel(N, L, 600, seed=seed * 1000 + 2)
    arch = cells.Architecture("gru", 128, ds.vocabulary.size)
    cfg = training.TrainConfig(steps=steps, seed=seed, loss_kind=loss_kind, l2_penalty=l2)
    rep = training.train(arch, ds, cfg, test_dataset=test)
    params = rep.params
    t_train = time.time() - t0

    states = harvest_states(params, test)
    hbasis = linalg.pca(states)
    hv = hbasis.variances
    topk = lambda v, k: float(v[:k].sum() / v.sum())

    rng = np.random.default_rng(17)
    seeds_h = states[rng.choice(len(states), 256, replace=False)]
    t0 = time.time()
    fps = fixed_points.find_fixed_points(params, seeds_h, fixed_points.FixedPointConfig(), rng_seed=18)
    t_fp = time.time() - t0
    conv = fps.converged_points
    out = {
        "tag": tag, "acc": rep.test_accuracy, "shuf_acc": rep.shuffled_test_accuracy,
        "h_top2": topk(hv, 2), "h_top3": topk(hv, 3),
        "n_fp": len(fps), "n_conv_kept": len(conv), "n_conv_raw": fps.n_converged,
        "t_train": round(t_train), "t_fp": round(t_fp),
    }
    if len(conv) >= 5:
        fpstates = np.vstack([p.h_star for p in conv])
        fbasis = linalg.pca(fpstates)
        fv = fbasis.variances
        out["fp_top2"] = topk(fv, 2)
        out["fp_top3"] = topk(fv, 3)
        out["fp_dim95"] = geometry.variance_threshold_dim(fbasis, 0.95)
        k = N - 1 if grammar == "categorical" else 2
        reports = [spectra.linearize(params, p, basis=fbasis, plane_dim=k, tau_threshold=float(L)) for p in conv]
        cnt = spectra.count_integration_modes(reports, float(L))
        out["int_modes_median"] = cnt.median
        out["int_modes_hist"] = np.bincount(cnt.per_point, minlength=6)[:6].tolist()
        # speed contour containment
        proj = fbasis.project(fpstates, 2)
        emb = fbasis.embed(proj, 2)
        sp = fixed_points.speed_batch(params, emb)
        out["contour_frac"] = float(np.mean(sp < 1.0 / L))
        out["q_median_conv"] = float(np.median([p.q_loss for p in conv]))
    qs = [p.q_loss for p in fps.points]
    out["q_min"] = float(min(qs)); out["q_max"] = float(max(qs))
    if not ds.multilabel:
        ro = geometry.readout_geometry(params)
        out["angles"] = [round(a, 1) for a in ro.pairwise_angles.values()]
        out["subspace_pct"] = round(ro.subspace_percentage, 4)
        rep_lsa = lsa.lsa_analyze(lsa.build_count_matrix(ds))
        out["lsa_top2"] = rep_lsa.top_k_fraction(2)
    else:
        d = geometry.deflection_stats(params, test)
        fam = {}
        for names, key in (("good_1", "g1"), ("bad_1", "b1"), ("good_2", "g2"), ("bad_2", "b2")):
            fam[key] = d.per_token[names].mean
        cos = lambda a, b: float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        out["cos_g1_g2"] = round(cos(fam["g1"], fam["g2"]), 3)
        out["cos_g1_b1"] = round(cos(fam["g1"], fam["b1"]), 3)
        prh = geometry.participation_ratio(hv)
        out["h_pr"] = round(prh, 3)
    print(json.dumps(out), flush=True)


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    if which in ("all", "cat3"):
        for seed in (11, 14, 15):
            analyze(f"cat3-s{seed}-6000", "categorical", 3, 40, 6000, seed)
    if which in ("all", "others"):
        analyze("cat4-s11-6000", "categorical", 4, 40, 6000, 11)
        analyze("ord5-s11-6000", "intensity", 5, 40, 6000, 11)
        analyze("ml2-s11-6000", "multilabel", 2, 30, 6000, 11, loss_kind="sigmoid_bce")
