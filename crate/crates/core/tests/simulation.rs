use plnc::analytics::SystemParams;
use plnc::monte_carlo::{derive_trial_rng, run_trial, Payload, Runner};
use plnc::protocol::ProtocolConfig;

#[test]
fn useful_fraction_concentrates_on_busy_probability() {
    let params = SystemParams::new(3, 0.3, 100.0).unwrap().with_blocks(200);
    let config = ProtocolConfig::derive(params, 0.8).unwrap().with_payload_width(1).unwrap();
    let trials = 100;
    let est = Runner::new(1).estimate_success(&config, trials, 5).unwrap();
    let busy = params.busy_prob();
    let se = (busy * (1.0 - busy) / (params.blocks * trials) as f64).sqrt();
    let mean = est.mean_useful_fraction();
    assert!((mean - busy).abs() <= 3.0 * se, "mean U/N {mean} vs {busy} (se {se})");
}

#[test]
fn success_rate_falls_across_threshold() {
    let params = SystemParams::new(4, 0.4, 100.0).unwrap().with_blocks(160);
    let scales = [0.6, 0.8, 1.0, 1.2, 1.4];
    let sweep = Runner::new(2).threshold_sweep(&params, &scales, 60, 17, Payload::Unit).unwrap();
    let est: Vec<_> = sweep.rows.iter().map(|r| r.estimate().unwrap().clone()).collect();
    for i in 0..est.len() {
        for j in i + 1..est.len() {
            let sigma = (est[i].std_error().powi(2) + est[j].std_error().powi(2)).sqrt();
            assert!(est[i].success_rate >= est[j].success_rate - 3.0 * sigma);
        }
    }
    assert!(est[0].success_rate > 0.9);
    assert_eq!(est[4].success_rate, 0.0);
    for e in &est {
        assert!(e.successes <= e.trials);
        assert_eq!(e.success_rate, e.successes as f64 / e.trials as f64);
    }
}

#[test]
fn full_payload_matches_unit_payload_decisions() {
    // success depends on the coefficient matrix only
    let params = SystemParams::new(2, 0.6, 100.0).unwrap().with_blocks(60);
    let full = ProtocolConfig::derive(params, 1.0).unwrap();
    let unit = full.clone().with_payload_width(1).unwrap();
    for t in 0..30 {
        let a = run_trial(&full, &mut derive_trial_rng(1, t));
        let b = run_trial(&unit, &mut derive_trial_rng(1, t));
        // the traces and generators are drawn before the messages
        assert_eq!(a.success, b.success);
        assert_eq!(a.useful_blocks, b.useful_blocks);
        assert_eq!(a.rank_achieved, b.rank_achieved);
    }
}

#[test]
fn empirical_throughput_uses_rate_accounting() {
    let params = SystemParams::new(2, 0.5, 100.0).unwrap().with_blocks(120);
    let config = ProtocolConfig::derive(params, 0.7).unwrap().with_payload_width(1).unwrap();
    let est = Runner::new(1).estimate_success(&config, 40, 2).unwrap();
    let per_success = 2.0 * config.substrings as f64 * config.symbols as f64 * 257f64.log2() / (120.0 * 100.0);
    assert!((est.empirical_throughput - est.success_rate * per_success).abs() < 1e-12);
}
