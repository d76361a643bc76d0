//! Reproducible Monte-Carlo estimation of decoding success.
//!
//! Trial `t` under master seed `s` draws from ChaCha8 keyed by `s` (expanded
//! with `seed_from_u64`) on stream `t`. Streams are disjoint counter ranges of
//! the same cipher, so a trial's randomness depends only on `(s, t)` and
//! never on which worker runs it or in what order. Aggregation uses integer
//! counts, which keeps results bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analytics::SystemParams;
use crate::protocol::{
    assemble_system, attempt_decode, build_generators, sample_states, DecodeOutcome, MessageSet,
    ProtocolConfig, ProtocolError,
};

pub type TrialRng = ChaCha8Rng;

/// Acceptance-run default.
pub const DEFAULT_TRIALS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error("at least one ratio scale is required")]
    NoScales,
    #[error("ratio scale {0} must be a positive finite number")]
    RatioScale(f64),
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

/// Independent generator for one trial.
pub fn derive_trial_rng(master_seed: u64, trial_index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Master seed of row `row` in a sweep (SplitMix64 finalizer over the
/// master seed offset by the row's golden-ratio increment).
pub fn row_seed(master_seed: u64, row: usize) -> u64 {
    let mut z = master_seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(row as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub success: bool,
    /// Equations received, `U`.
    pub useful_blocks: usize,
    pub rank_achieved: usize,
    pub realized_ratio: f64,
}

/// One full protocol run: activity, generators, messages, channel, decode.
///
/// Panics if a decode reports success but returns messages other than the
/// ones sent; that can only be an arithmetic bug.
pub fn run_trial(config: &ProtocolConfig, rng: &mut TrialRng) -> TrialOutcome {
    let trace = sample_states(&config.params, rng);
    let generators = build_generators(config, rng);
    let messages = MessageSet::random(config, rng);
    let system = assemble_system(config, &trace, &generators, &messages)
        .expect("shapes come from a validated config");
    let useful_blocks = system.equations();
    let outcome = attempt_decode(&system, config).expect("system built from consistent messages");
    let (success, rank_achieved) = match outcome {
        DecodeOutcome::Decoded(recovered) => {
            assert_eq!(recovered, messages, "decoded messages differ from transmitted ones");
            (true, config.unknowns())
        }
        DecodeOutcome::RankDeficient { rank } => (false, rank),
    };
    TrialOutcome { success, useful_blocks, rank_achieved, realized_ratio: config.ratio }
}

/// Aggregate over independently seeded trials of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessEstimate {
    pub substrings: usize,
    pub symbols: usize,
    pub blocks: usize,
    pub realized_ratio: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// `success_rate * K L_b L_c log2(q) / (N B)`.
    pub empirical_throughput: f64,
    /// Summed over trials; see [`SuccessEstimate::mean_useful_fraction`].
    pub total_useful_blocks: usize,
}

impl SuccessEstimate {
    /// Binomial standard error of `success_rate`.
    pub fn std_error(&self) -> f64 {
        let p = self.success_rate;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Empirical mean of `U / N`.
    pub fn mean_useful_fraction(&self) -> f64 {
        self.total_useful_blocks as f64 / (self.trials * self.blocks) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepRow {
    Completed { ratio_scale: f64, estimate: SuccessEstimate },
    Skipped { ratio_scale: f64, reason: ProtocolError },
}

impl SweepRow {
    pub fn ratio_scale(&self) -> f64 {
        match self {
            SweepRow::Completed { ratio_scale, .. } | SweepRow::Skipped { ratio_scale, .. } => *ratio_scale,
        }
    }

    pub fn estimate(&self) -> Option<&SuccessEstimate> {
        match self {
            SweepRow::Completed { estimate, .. } => Some(estimate),
            SweepRow::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub blocks: usize,
    pub trials: usize,
    pub rows: Vec<SweepRow>,
}

/// Width of the simulated message payload in rank experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Payload {
    /// One symbol per substring; success depends only on the coefficient
    /// matrix, so this is the cheap default.
    #[default]
    Unit,
    /// The full `L_c` symbols.
    Full,
}

/// Trial executor with a fixed worker count.
#[derive(Debug, Clone, Copy)]
pub struct Runner {
    workers: usize,
}

impl Default for Runner {
    fn default() -> Self {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self { workers }
    }
}

impl Runner {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    fn run_trials(
        &self,
        config: &ProtocolConfig,
        trials: usize,
        master_seed: u64,
    ) -> Result<Vec<TrialOutcome>, MonteCarloError> {
        let one = |t: usize| run_trial(config, &mut derive_trial_rng(master_seed, t as u64));
        if self.workers == 1 {
            return Ok((0..trials).map(one).collect());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| MonteCarloError::Pool(e.to_string()))?;
        Ok(pool.install(|| (0..trials).into_par_iter().map(one).collect()))
    }

    /// Success rate of `config` over `trials` trials seeded from
    /// `master_seed`.
    pub fn estimate_success(
        &self,
        config: &ProtocolConfig,
        trials: usize,
        master_seed: u64,
    ) -> Result<SuccessEstimate, MonteCarloError> {
        if trials == 0 {
            return Err(MonteCarloError::NoTrials);
        }
        let outcomes = self.run_trials(config, trials, master_seed)?;
        let successes = outcomes.iter().filter(|o| o.success).count();
        let total_useful_blocks = outcomes.iter().map(|o| o.useful_blocks).sum();
        let success_rate = successes as f64 / trials as f64;
        Ok(SuccessEstimate {
            substrings: config.substrings,
            symbols: config.symbols,
            blocks: config.params.blocks,
            realized_ratio: config.ratio,
            trials,
            successes,
            success_rate,
            empirical_throughput: success_rate * config.throughput_on_success(),
            total_useful_blocks,
        })
    }

    /// One success estimate per ratio scale around the full-rank threshold.
    /// Row `r` uses master seed [`row_seed`]`(master_seed, r)`. Scales whose
    /// configuration cannot be built are reported as skipped rows.
    pub fn threshold_sweep(
        &self,
        params: &SystemParams,
        ratio_scales: &[f64],
        trials: usize,
        master_seed: u64,
        payload: Payload,
    ) -> Result<SweepResult, MonteCarloError> {
        if ratio_scales.is_empty() {
            return Err(MonteCarloError::NoScales);
        }
        if let Some(&bad) = ratio_scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(MonteCarloError::RatioScale(bad));
        }
        if trials == 0 {
            return Err(MonteCarloError::NoTrials);
        }
        let mut rows = Vec::with_capacity(ratio_scales.len());
        for (r, &ratio_scale) in ratio_scales.iter().enumerate() {
            let config = ProtocolConfig::derive(*params, ratio_scale).and_then(|c| match payload {
                Payload::Unit => c.with_payload_width(1),
                Payload::Full => Ok(c),
            });
            rows.push(match config {
                Ok(config) => SweepRow::Completed {
                    ratio_scale,
                    estimate: self.estimate_success(&config, trials, row_seed(master_seed, r))?,
                },
                Err(reason) => SweepRow::Skipped { ratio_scale, reason },
            });
        }
        Ok(SweepResult { blocks: params.blocks, trials, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore};

    fn params(k: usize, a: f64, n: usize) -> SystemParams {
        SystemParams::new(k, a, 100.0).unwrap().with_blocks(n)
    }

    #[test]
    fn trial_rng_determinism_and_distinctness() {
        let draw = |s, t| {
            let mut r = derive_trial_rng(s, t);
            (0..64).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        let (a, b) = (draw(7, 0), draw(7, 1));
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
        assert_ne!(draw(7, 0), draw(8, 0));
    }

    #[test]
    fn pooled_draws_are_uniform() {
        // 10^6 draws over 100 bins, 1000 per trial stream
        let mut counts = [0u64; 100];
        for t in 0..1000 {
            let mut r = derive_trial_rng(42, t);
            for _ in 0..1000 {
                counts[r.random_range(0..100usize)] += 1;
            }
        }
        let expected = 10_000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p_value = 1.0 - ChiSquared::new(99.0).unwrap().cdf(chi2);
        assert!(p_value > 0.001, "chi2 = {chi2}, p = {p_value}");
    }

    #[test]
    fn row_seeds_differ() {
        let seeds: std::collections::HashSet<_> = (0..100).map(|r| row_seed(1, r)).collect();
        assert_eq!(seeds.len(), 100);
    }

    #[test]
    fn square_single_user_usually_succeeds() {
        let c = ProtocolConfig::derive(params(1, 1.0, 30).with_field_order(257), 1.0).unwrap();
        assert_eq!(c.substrings, 30);
        let est = Runner::new(1).estimate_success(&c, 200, 5).unwrap();
        // Pr[singular] <= N / q ~ 0.12
        assert!(est.success_rate >= 0.8, "{}", est.success_rate);
        assert_eq!(est.mean_useful_fraction(), 1.0);
    }

    #[test]
    fn silent_users_never_decode() {
        let p = params(2, 0.0, 20);
        let c = ProtocolConfig::with_lengths(p, 3, 1).unwrap();
        let out = run_trial(&c, &mut derive_trial_rng(1, 0));
        assert!(!out.success);
        assert_eq!(out.useful_blocks, 0);
        assert_eq!(out.rank_achieved, 0);
    }

    #[test]
    fn more_unknowns_than_blocks_never_decodes() {
        let c = ProtocolConfig::with_lengths(params(2, 1.0, 10), 6, 1).unwrap();
        let est = Runner::new(1).estimate_success(&c, 50, 3).unwrap();
        assert_eq!(est.successes, 0);
        assert_eq!(est.empirical_throughput, 0.0);
    }

    #[test]
    fn trial_outcome_invariants() {
        let c = ProtocolConfig::derive(params(3, 0.4, 60), 1.0).unwrap().with_payload_width(2).unwrap();
        for t in 0..40 {
            let o = run_trial(&c, &mut derive_trial_rng(9, t));
            assert!(o.rank_achieved <= o.useful_blocks.min(c.unknowns()));
            if o.success {
                assert_eq!(o.rank_achieved, c.unknowns());
                assert!(o.useful_blocks >= c.unknowns());
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let p = params(2, 0.5, 60);
        let scales = [0.6, 1.0, 1.4];
        let one = Runner::new(1).threshold_sweep(&p, &scales, 30, 11, Payload::Unit).unwrap();
        let four = Runner::new(4).threshold_sweep(&p, &scales, 30, 11, Payload::Unit).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn sweep_validation_and_skips() {
        let r = Runner::new(1);
        let p = params(2, 0.5, 10);
        assert_eq!(r.threshold_sweep(&p, &[], 5, 0, Payload::Unit), Err(MonteCarloError::NoScales));
        assert_eq!(
            r.threshold_sweep(&p, &[1.0, -1.0], 5, 0, Payload::Unit),
            Err(MonteCarloError::RatioScale(-1.0))
        );
        assert_eq!(r.threshold_sweep(&p, &[1.0], 0, 0, Payload::Unit), Err(MonteCarloError::NoTrials));
        // threshold = 3.75; scale 0.1 leaves L_b < 1
        let res = r.threshold_sweep(&p, &[0.1, 1.0], 5, 0, Payload::Unit).unwrap();
        assert!(matches!(res.rows[0], SweepRow::Skipped { .. }));
        assert_eq!(res.rows[1].estimate().unwrap().substrings, 3);
    }
}
