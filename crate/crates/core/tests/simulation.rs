use ehrenfest::asymptotics::{chi_square_test, two_sample_ks};
use ehrenfest::laplace::{descent_coef, mean_hitting_time};
use ehrenfest::model::stationary_distribution;
use ehrenfest::numeric::ln_binomial;
use ehrenfest::sim::{
    simulate_hitting, simulate_horizon, simulate_particles_hitting, simulate_path_ends, PathOutcome, SimConfig,
    StopRule,
};
use ehrenfest::ModelParams;

fn hit(p: ModelParams, from: usize, to: usize, horizon: Option<f64>, paths: usize, seed: u64) -> SimConfig {
    SimConfig::new(p, from, StopRule::HitState { target: to, horizon }, paths, seed).unwrap()
}

#[test]
fn stopped_integrated_martingale_has_constant_mean() {
    // I(x,t) = e^{−αt} B_x(α) stopped at T_0
    let p = ModelParams::ehrenfest(3, 0.4).unwrap();
    let alpha = 1.0;
    let b: Vec<f64> = (0..=3).map(|x| descent_coef(&p, x, alpha).unwrap().to_f64()).collect();
    let start = 2;
    for (k, t) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let ends = simulate_path_ends(&hit(p, start, 0, Some(t), 100_000, 300 + k as u64), None).unwrap();
        let vals: Vec<f64> = ends
            .iter()
            .map(|e| {
                assert_ne!(e.outcome, PathOutcome::EventCap);
                (-alpha * e.time).exp() * b[e.state]
            })
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let z = (mean - b[start]) / (sd / n.sqrt());
        assert!(z.abs() <= 4.0, "t={t}: mean {mean} vs {} (z = {z})", b[start]);
    }
}

#[test]
fn particle_construction_matches_birth_death_chain() {
    let p = ModelParams::ehrenfest(10, 0.35).unwrap();
    let chain = simulate_hitting(&hit(p, 0, 7, None, 20_000, 1), None).unwrap();
    let particles = simulate_particles_hitting(&hit(p, 0, 7, None, 20_000, 2), None).unwrap();
    let ks = two_sample_ks(&chain.times, &particles.times).unwrap();
    assert!(ks.p_value > 1e-3, "{ks:?}");
    let exact = mean_hitting_time(&p, 0, 7).unwrap();
    for s in [&chain, &particles] {
        let m = s.summary();
        assert!((m.mean.unwrap() - exact).abs() <= 4.0 * m.std_error.unwrap(), "{m:?} vs {exact}");
    }
}

#[test]
fn hitting_means_match_ladder_formula() {
    for (p, from, to) in [
        (ModelParams::engset(12, 7, 0.45).unwrap(), 7, 0),
        (ModelParams::engset(12, 7, 0.45).unwrap(), 2, 6),
        (ModelParams::ehrenfest(8, 0.6).unwrap(), 8, 1),
    ] {
        let s = simulate_hitting(&hit(p, from, to, None, 40_000, 17), None).unwrap();
        let m = s.summary();
        let exact = mean_hitting_time(&p, from, to).unwrap();
        assert!((m.mean.unwrap() - exact).abs() <= 4.0 * m.std_error.unwrap(), "{from}->{to}: {m:?} vs {exact}");
    }
}

/// Law of X(t) from x0: Bin(x0, ν + μe^{−t}) + Bin(N − x0, ν(1 − e^{−t})).
fn ehrenfest_marginal(p: &ModelParams, x0: usize, t: f64) -> Vec<f64> {
    let n = p.n();
    let e = (-t).exp();
    let (p1, p0) = (p.nu() + p.mu() * e, p.nu() * (1.0 - e));
    let bin = |m: usize, q: f64| -> Vec<f64> {
        (0..=m)
            .map(|k| (ln_binomial(m, k) + k as f64 * q.ln() + (m - k) as f64 * (1.0 - q).ln()).exp())
            .collect()
    };
    let (a, b) = (bin(x0, p1), bin(n - x0, p0));
    let mut out = vec![0.0; n + 1];
    for (i, pa) in a.iter().enumerate() {
        for (j, pb) in b.iter().enumerate() {
            out[i + j] += pa * pb;
        }
    }
    out
}

fn terminal_histogram(p: ModelParams, x0: usize, t: f64, paths: usize, seed: u64) -> Vec<usize> {
    let c = SimConfig::new(p, x0, StopRule::TimeHorizon { t_max: t, grid_points: 1 }, paths, seed).unwrap();
    let set = simulate_horizon(&c, None).unwrap();
    assert_eq!(set.censored_by_events, 0);
    let mut counts = vec![0usize; p.capacity() + 1];
    for x in set.terminal_states() {
        counts[x] += 1;
    }
    counts
}

#[test]
fn ehrenfest_marginal_chi_square() {
    let p = ModelParams::ehrenfest(50, 0.3).unwrap();
    for (x0, t) in [(10, 10.0), (45, 0.7)] {
        let counts = terminal_histogram(p, x0, t, 20_000, 8);
        let test = chi_square_test(&counts, &ehrenfest_marginal(&p, x0, t)).unwrap();
        assert!(test.p_value > 1e-3, "x0={x0} t={t}: {test:?}");
    }
}

#[test]
fn engset_relaxes_to_truncated_binomial() {
    let p = ModelParams::engset(30, 12, 0.4).unwrap();
    let counts = terminal_histogram(p, 0, 30.0, 20_000, 9);
    let test = chi_square_test(&counts, &stationary_distribution(&p)).unwrap();
    assert!(test.p_value > 1e-3, "{test:?}");
}
