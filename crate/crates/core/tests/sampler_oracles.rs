use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use volising::stats::{connected_corr, corr_slope, magnetizations};
use volising::synth::{simulate_asynchronous, simulate_synchronous, IsingModel};

fn spins_of(state: usize, n: usize) -> Vec<f64> {
    (0..n).map(|k| if state >> k & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// Exact stationary magnetizations and one-step connected correlations of
/// the parallel-update chain, by enumerating all states.
fn synchronous_exact(j: &DMatrix<f64>, h: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = h.len();
    let states = 1 << n;
    let transition = |from: usize, to: usize| {
        let s = spins_of(from, n);
        let next = spins_of(to, n);
        (0..n)
            .map(|i| {
                let field = h[i] + (0..n).map(|k| j[(i, k)] * s[k]).sum::<f64>();
                0.5 * (1.0 + next[i] * field.tanh())
            })
            .product::<f64>()
    };
    let p = DMatrix::from_fn(states, states, transition);
    let mut pi = DVector::from_element(states, 1.0 / states as f64);
    for _ in 0..10_000 {
        pi = p.transpose() * &pi;
    }
    let m = DVector::from_fn(n, |i, _| (0..states).map(|s| pi[s] * spins_of(s, n)[i]).sum());
    let c1 = DMatrix::from_fn(n, n, |i, k| {
        let mut acc = 0.0;
        for a in 0..states {
            for b in 0..states {
                acc += pi[a] * p[(a, b)] * spins_of(b, n)[i] * spins_of(a, n)[k];
            }
        }
        acc - m[i] * m[k]
    });
    (m, c1)
}

#[test]
fn synchronous_chain_matches_enumeration() {
    let j = dmatrix![0.1, 0.6; -0.4, 0.0];
    let h = dvector![0.2, -0.3];
    let (m_exact, c1_exact) = synchronous_exact(&j, &h);
    let model = IsingModel::new(j, h, 31).unwrap();
    let sm = simulate_synchronous(&model, 400_000).unwrap();
    let m = magnetizations(&sm);
    let c1 = connected_corr(&sm, 1).unwrap();
    // a few standard errors at 4e5 weakly correlated samples
    assert!((m - m_exact).amax() < 0.01);
    assert!((c1 - c1_exact).amax() < 0.01);
}

#[test]
fn asynchronous_single_spin_decay() {
    // one spin in field h: m = tanh(h) and C(t) = (1 - m^2) e^{-t}
    let h = 0.4f64;
    let model = IsingModel::new(dmatrix![0.0], dvector![h], 17).unwrap();
    let interval = 0.05;
    let sm = simulate_asynchronous(&model, 100_000.0, interval).unwrap();
    let m = h.tanh();
    assert!((magnetizations(&sm)[0] - m).abs() < 0.02);
    for lag in [0usize, 10, 20, 40] {
        let exact = (1.0 - m * m) * (-(lag as f64) * interval).exp();
        let c = connected_corr(&sm, lag).unwrap()[(0, 0)];
        assert!((c - exact).abs() < 0.02, "lag {lag}: {c} vs {exact}");
    }
    // least-squares line through the exact curve at the four fitted lags; it is
    // shallower than the tangent -(1 - m^2) because of the curvature
    let ts: Vec<f64> = (0..4).map(|k| k as f64 * interval).collect();
    let cs: Vec<f64> = ts.iter().map(|t| (1.0 - m * m) * (-t).exp()).collect();
    let t_mean = ts.iter().sum::<f64>() / 4.0;
    let c_mean = cs.iter().sum::<f64>() / 4.0;
    let exact_slope = ts.iter().zip(&cs).map(|(t, c)| (t - t_mean) * (c - c_mean)).sum::<f64>()
        / ts.iter().map(|t| (t - t_mean).powi(2)).sum::<f64>();
    let slope = corr_slope(&sm, &[0, 1, 2, 3], interval).unwrap()[(0, 0)];
    assert!((slope - exact_slope).abs() < 0.02 * exact_slope.abs(), "{slope} vs {exact_slope}");
}
