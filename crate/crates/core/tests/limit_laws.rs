use ehrenfest::asymptotics::*;
use ehrenfest::laplace::{hitting_lt_log, mean_hitting_time, LaplaceQuery};
use ehrenfest::sim::{simulate_hitting, SimConfig, StopRule};
use ehrenfest::ModelParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn decreasing(gaps: &[(usize, f64)]) -> bool {
    gaps.windows(2).all(|w| w[1].1 < w[0].1)
}

#[test]
fn full_law_converges() {
    let f = LawFamily::new(LawKind::SubCritFullExp, 0.5, 1.0);
    let t = convergence_study(&f, &[30, 60, 120], &[0.5, 1.0, 2.0], None).unwrap();
    for a in [0.5, 1.0, 2.0] {
        assert!(decreasing(&t.gaps(a)), "{:?}", t.gaps(a));
    }
    assert!(t.gaps(1.0)[2].1 <= 5e-2);
    // E[T_N] N ν^N → 1/(1−ν)
    let scaled: Vec<f64> = [30usize, 60, 120]
        .iter()
        .map(|&n| {
            let p = ModelParams::ehrenfest(n, 0.5).unwrap();
            mean_hitting_time(&p, 0, n).unwrap() * n as f64 * 0.5f64.powi(n as i32)
        })
        .collect();
    assert!(scaled.windows(2).all(|w| (w[1] - 2.0).abs() < (w[0] - 2.0).abs()), "{scaled:?}");
    assert!((scaled[2] - 2.0).abs() < 2e-2);
}

#[test]
fn entropy_law_converges() {
    let f = LawFamily::new(LawKind::SubCritEntropyExp, 0.3, 0.5);
    let t = convergence_study(&f, &[50, 100, 200], &[0.5, 1.0, 2.0], None).unwrap();
    for a in [0.5, 1.0, 2.0] {
        assert!(decreasing(&t.gaps(a)), "{:?}", t.gaps(a));
    }
    assert!(t.gaps(1.0)[2].1 < 1e-2);
}

#[test]
fn empty_law_matches_exchanged_ehrenfest() {
    let f = LawFamily::new(LawKind::SubCritEmptyExp, 0.4, 0.6);
    let t = convergence_study(&f, &[40, 80], &[0.5, 1.0, 2.0], None).unwrap();
    for a in [0.5, 1.0, 2.0] {
        assert!(decreasing(&t.gaps(a)));
    }
    // Ehrenfest with no reflection, T_0 from N, same N(1−ν)^N scale
    let n = 80;
    let e = ModelParams::ehrenfest(n, 0.4).unwrap();
    let engset = f.limit_at(n).unwrap();
    for alpha in [0.5, 1.0, 2.0] {
        let a = alpha * engset.scaling.scale();
        let free = hitting_lt_log(&LaplaceQuery::new(e, n, 0, a).unwrap()).unwrap().exp();
        let reflected = engset.exact_lt(alpha).unwrap();
        let limit = 0.4 / (0.4 + alpha);
        assert!((free - limit).abs() < 1e-2 && (free - reflected).abs() < 1e-2, "{free} {reflected} {limit}");
    }
}

#[test]
fn critical_empty_is_twice_as_fast() {
    let f = LawFamily::critical(LawKind::CriticalEmptyExp, 0.4, 0.0);
    let t = convergence_study(&f, &[40, 80], &[0.5, 1.0, 2.0], None).unwrap();
    for a in [0.5, 1.0, 2.0] {
        assert!(decreasing(&t.gaps(a)));
        let lim = t.rows.iter().find(|r| r.alpha == a).unwrap().limit_lt;
        assert!((lim - 2.0 / (2.0 + a / 0.4)).abs() < 1e-15);
    }
}

#[test]
fn critical_saturation_with_offset() {
    // C = νN + δ√N with δ = 0.5 at N = 10^4
    let n = 10_000;
    let p = ModelParams::engset(n, 5050, 0.5).unwrap();
    let lim = critical_saturation_law(&p, 0.5).unwrap();
    for alpha in [0.5, 1.0, 2.0] {
        let exact = lim.exact_lt(alpha).unwrap();
        let limit = lim.limit_lt(alpha).unwrap();
        assert!((exact / limit - 1.0).abs() < 2e-2, "alpha={alpha}: {exact} vs {limit}");
    }
}

#[test]
fn ks_of_exact_normal_samples() {
    let law = LimitLaw::new(LawKind::SuperCriticalNormal, LawShape::Normal { variance: 7.0 / 3.0 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = Normal::new(0.0, (7.0f64 / 3.0).sqrt()).unwrap();
    let xs: Vec<f64> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
    let ks = ks_statistic(&xs, |x| law.cdf(x).unwrap()).unwrap();
    assert!(ks < 1.63 / 100.0, "{ks}");
}

#[test]
fn supercritical_samples_against_normal_law() {
    let p = ModelParams::engset(400, 120, 0.6).unwrap();
    let lim = supercritical_law(&p).unwrap();
    let c = SimConfig::new(p, 0, StopRule::HitState { target: 120, horizon: None }, 10_000, 21).unwrap();
    let s = simulate_hitting(&c, None).unwrap();
    let ks = ks_distance(&s, &lim.law, &lim.scaling).unwrap();
    assert!(ks < 0.05, "{ks}");
    let wide = LimitLaw::new(LawKind::SuperCriticalNormal, LawShape::Normal { variance: 4.0 * 7.0 / 3.0 }).unwrap();
    assert!(ks_distance(&s, &wide, &lim.scaling).unwrap() > 0.1);
}

#[test]
fn ks_refuses_censored_samples() {
    let p = ModelParams::engset(400, 120, 0.6).unwrap();
    let lim = supercritical_law(&p).unwrap();
    let c = SimConfig::new(p, 0, StopRule::HitState { target: 120, horizon: Some(0.1) }, 50, 2).unwrap();
    let s = simulate_hitting(&c, None).unwrap();
    assert_eq!(ks_distance(&s, &lim.law, &lim.scaling).unwrap_err().code(), "censored");
}

#[test]
fn convergence_table_serializes() {
    let f = LawFamily::new(LawKind::SubCritFullExp, 0.5, 1.0);
    let t = convergence_study(&f, &[30, 60], &[1.0], Some(2)).unwrap();
    let csv = t.to_csv_string().unwrap();
    assert_eq!(csv.lines().next(), Some("n,alpha,ln_scale,shift,exact_lt,limit_lt,gap"));
    assert_eq!(t.to_json()["rows"].as_array().unwrap().len(), 2);
    let again = convergence_study(&f, &[30, 60], &[1.0], Some(1)).unwrap();
    assert_eq!(again, t);
}
