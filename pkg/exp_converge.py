"""Scratch experiment: SGD convergence behavior on scheme-1 style data."""
import numpy as np, time, sys
import simodal as sm


def scheme1(n, seed):
    rng = sm.RngStream(seed)
    g = rng.generator
    x1 = (g.uniform(0, 1, n) < 0.5).astype(float)
    x2 = np.where(x1 == 0, g.uniform(-3, 0, n), g.uniform(0, 3, n))
    x3 = g.uniform(-3.5, 2.5, n)
    X = np.column_stack([x1, x2, x3])
    beta = np.ones(3) / np.sqrt(3)
    u = X @ beta
    gtrue = 10 * sm.normal_cdf(u * 2.5)
    e = sm.st_sample(rng, sm.STParams(0.6, 0.0, 1.5, 6.0), n)
    return sm.Dataset(gtrue + e, X), u, gtrue, beta


def run(lr, epochs, seed=11, widths=(64, 64), n=1000, family="st"):
    data, u, gtrue, beta = scheme1(n, seed)
    spec = sm.ModelSpec(link="gx-d", error_family=family, widths=widths)
    cfg = sm.TrainConfig(epochs=epochs, batch=128, lr=lr, seed=0)
    t0 = time.time()
    fit = sm.sgd_fit(spec, data, cfg, sm.RngStream(cfg.seed))
    dt = time.time() - t0
    c = fit.learning_curve
    marks = [0, 1, 5, 20, 50, 100, 200, 400, 700, epochs - 1]
    print("curve:", {m: round(c[m], 1) for m in marks if m < len(c)})
    ghat = sm.predict_mode(fit, data.X)
    print(f"lr={lr} ep={epochs} t={dt:.1f}s beta {np.round(fit.beta,4)} "
          f"w {fit.w:.4f} sig {fit.sigma:.4f} del {fit.delta:.2f} "
          f"gMSE {np.mean((ghat-gtrue)**2):.4f} beta_err {np.abs(fit.beta-beta).max():.4f}")
    return fit


if __name__ == "__main__":
    mode = sys.argv[1] if len(sys.argv) > 1 else "base"
    if mode == "base":
        run(1e-3, 1000)
    elif mode == "seeds":
        for s in range(6):
            run(1e-3, 1000, seed=100 + s)
    elif mode == "lr3":
        run(3e-3, 1000)
    elif mode == "lr03":
        run(3e-4, 1000)
    elif mode == "long":
        run(1e-3, 3000)
