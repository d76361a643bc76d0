//! Closed-form throughput of the random-access strategies on the symmetric
//! Gaussian MAC with on-off user activity.
//!
//! Every function here depends only on the user count `K`, the access
//! probability `a` and the average power `P`. Throughput is the sum rate in
//! bits per channel use. Active users transmit at power `P / a` except in the
//! CSI-ignorant strategy, which spends power `P` in every block.
//!
//! At `a = 0` every strategy is defined to have zero throughput.

use thiserror::Error;

/// Default prime field size for the protocol.
pub const DEFAULT_FIELD_ORDER: u64 = 257;
pub const DEFAULT_BLOCK_LEN: usize = 100;
pub const DEFAULT_BLOCKS: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("user count must be at least 1")]
    NoUsers,
    #[error("access probability {0} is outside [0, 1]")]
    AccessProbability(f64),
    #[error("power {0} must be a positive finite number")]
    Power(f64),
    #[error("block length must be at least 1")]
    BlockLen,
    #[error("block count must be at least 1")]
    Blocks,
    #[error("binomial index {i} is outside [0, {k}]")]
    Domain { k: usize, i: usize },
}

/// The scenario under study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Number of users `K`.
    pub users: usize,
    /// Per-block activity probability `a`.
    pub access_prob: f64,
    /// Average transmit power `P` (noise has unit variance).
    pub power: f64,
    /// Field size `q`; protocol only.
    pub field_order: u64,
    /// Channel uses per block `B`; rate accounting only.
    pub block_len: usize,
    /// Number of blocks `N`; protocol only.
    pub blocks: usize,
}

impl SystemParams {
    /// Validated parameters with default protocol settings
    /// (`q = 257`, `B = 100`, `N = 400`).
    pub fn new(users: usize, access_prob: f64, power: f64) -> Result<Self, AnalyticsError> {
        let p = Self {
            users,
            access_prob,
            power,
            field_order: DEFAULT_FIELD_ORDER,
            block_len: DEFAULT_BLOCK_LEN,
            blocks: DEFAULT_BLOCKS,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_field_order(mut self, q: u64) -> Self {
        self.field_order = q;
        self
    }

    pub fn with_block_len(mut self, block_len: usize) -> Self {
        self.block_len = block_len;
        self
    }

    pub fn with_blocks(mut self, blocks: usize) -> Self {
        self.blocks = blocks;
        self
    }

    /// Checks the analytic and structural invariants. Primality of `q` is
    /// checked where a field is actually built.
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.users == 0 {
            return Err(AnalyticsError::NoUsers);
        }
        if !(0.0..=1.0).contains(&self.access_prob) {
            return Err(AnalyticsError::AccessProbability(self.access_prob));
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(AnalyticsError::Power(self.power));
        }
        if self.block_len == 0 {
            return Err(AnalyticsError::BlockLen);
        }
        if self.blocks == 0 {
            return Err(AnalyticsError::Blocks);
        }
        Ok(())
    }

    /// Power used by an active user under power control, `P / a`.
    pub fn active_power(&self) -> f64 {
        self.power / self.access_prob
    }

    /// Probability that at least one user is active in a block.
    pub fn busy_prob(&self) -> f64 {
        if self.users == 1 {
            // 1 - (1 - a) is not always a in floating point
            return self.access_prob;
        }
        1.0 - (1.0 - self.access_prob).powi(self.users as i32)
    }
}

/// Per-strategy throughput at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputReport {
    pub access_prob: f64,
    pub users: usize,
    pub power: f64,
    pub aloha: f64,
    pub mpr: f64,
    pub mpr_kstar: usize,
    pub ignore_csi: f64,
    pub plnc: f64,
    pub upper: f64,
}

impl ThroughputReport {
    pub fn strategies(&self) -> [(&'static str, f64); 4] {
        [
            ("aloha", self.aloha),
            ("mpr", self.mpr),
            ("ignore_csi", self.ignore_csi),
            ("plnc", self.plnc),
        ]
    }
}

/// `C(n, k)` as a float, correctly rounded from an exact integer for
/// `n <= 100`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n <= 100 {
        // c * (n - j) = C(n, j + 1) * (j + 1) < 2^103 for n <= 100
        let mut c: u128 = 1;
        for j in 0..k {
            c = c * (n - j) as u128 / (j + 1) as u128;
        }
        c as f64
    } else {
        (0..k).fold(1.0, |c, j| c * (n - j) as f64 / (j + 1) as f64)
    }
}

/// Probability that exactly `i` of `k` users are active.
pub fn binom_pmf(k: usize, i: usize, a: f64) -> Result<f64, AnalyticsError> {
    if i > k {
        return Err(AnalyticsError::Domain { k, i });
    }
    Ok(pmf(k, i, a))
}

fn pmf(k: usize, i: usize, a: f64) -> f64 {
    binomial(k, i) * a.powi(i as i32) * (1.0 - a).powi((k - i) as i32)
}

/// Gaussian capacity `½ log2(1 + snr)`.
fn capacity(snr: f64) -> f64 {
    0.5 * (1.0 + snr).log2()
}

/// Per-user rate at which `K` users can have the sum of their codewords
/// decoded, `½ log2(1/K + P_eff)`.
///
/// Negative when `P_eff < 1 - 1/K`; callers doing rate selection clamp.
pub fn computation_rate(users: usize, effective_power: f64) -> f64 {
    0.5 * (1.0 / users as f64 + effective_power).log2()
}

/// Slotted ALOHA: a block carries data only when exactly one user is active.
pub fn aloha_throughput(p: &SystemParams) -> f64 {
    let a = p.access_prob;
    if a == 0.0 {
        return 0.0;
    }
    let k = p.users;
    k as f64 * a * (1.0 - a).powi(k as i32 - 1) * capacity(p.active_power())
}

/// Multipacket reception value for a fixed design load `k_tilde`.
fn mpr_candidate(p: &SystemParams, k_tilde: usize) -> f64 {
    let rate_scale = (1.0 + k_tilde as f64 * p.active_power()).log2() / (2 * k_tilde) as f64;
    (1..=k_tilde)
        .map(|i| pmf(p.users, i, p.access_prob) * i as f64)
        .sum::<f64>()
        * rate_scale
}

/// Multipacket reception with the rate tuned so up to `K̃` simultaneous
/// packets decode; returns the best throughput and the smallest maximizing
/// `K̃`.
pub fn mpr_throughput(p: &SystemParams) -> (f64, usize) {
    if p.access_prob == 0.0 {
        return (0.0, 1);
    }
    let mut best = (f64::NEG_INFINITY, 1);
    for k_tilde in 1..=p.users {
        let t = mpr_candidate(p, k_tilde);
        if t > best.0 {
            best = (t, k_tilde);
        }
    }
    best
}

/// Ergodic sum capacity when the transmitters ignore their state and spend
/// power `P` in every block.
pub fn ignore_csi_throughput(p: &SystemParams) -> f64 {
    (1..=p.users)
        .map(|i| pmf(p.users, i, p.access_prob) * capacity(i as f64 * p.power))
        .sum()
}

/// Physical-layer network coding: every busy block yields one decodable
/// equation at the computation rate. Clamped at zero when the computation
/// rate is negative.
pub fn plnc_throughput(p: &SystemParams) -> f64 {
    if p.access_prob == 0.0 {
        return 0.0;
    }
    let rate = computation_rate(p.users, p.active_power());
    (p.busy_prob() * rate).max(0.0)
}

/// Sum-rate bound with full state knowledge at every transmitter.
pub fn upper_bound(p: &SystemParams) -> f64 {
    if p.access_prob == 0.0 {
        return 0.0;
    }
    (1..=p.users)
        .map(|i| pmf(p.users, i, p.access_prob) * capacity(i as f64 * p.active_power()))
        .sum()
}

pub fn evaluate_all(p: &SystemParams) -> ThroughputReport {
    let (mpr, mpr_kstar) = mpr_throughput(p);
    ThroughputReport {
        access_prob: p.access_prob,
        users: p.users,
        power: p.power,
        aloha: aloha_throughput(p),
        mpr,
        mpr_kstar,
        ignore_csi: ignore_csi_throughput(p),
        plnc: plnc_throughput(p),
        upper: upper_bound(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 40-digit arithmetic (mpmath) directly
    // from the closed forms.
    const ALOHA_2_HALF_100: f64 = 1.912_762_922_794_732;
    const MPR_2_HALF_100: f64 = 2.161_864_606_613_730;
    const IGNORE_2_HALF_100: f64 = 2.620_934_332_085_315;
    const PLNC_2_HALF_100: f64 = 2.867_796_909_920_595;
    const UPPER_2_HALF_100: f64 = 2.993_695_226_101_597;

    fn params(k: usize, a: f64, p: f64) -> SystemParams {
        SystemParams::new(k, a, p).unwrap()
    }

    fn close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol
    }

    #[test]
    fn validation() {
        assert_eq!(SystemParams::new(0, 0.5, 1.0), Err(AnalyticsError::NoUsers));
        assert!(matches!(SystemParams::new(2, 1.5, 1.0), Err(AnalyticsError::AccessProbability(_))));
        assert!(matches!(SystemParams::new(2, -0.1, 1.0), Err(AnalyticsError::AccessProbability(_))));
        assert!(matches!(SystemParams::new(2, f64::NAN, 1.0), Err(AnalyticsError::AccessProbability(_))));
        assert!(matches!(SystemParams::new(2, 0.5, 0.0), Err(AnalyticsError::Power(_))));
        assert!(matches!(SystemParams::new(2, 0.5, f64::INFINITY), Err(AnalyticsError::Power(_))));
        assert_eq!(params(2, 0.5, 1.0).with_blocks(0).validate(), Err(AnalyticsError::Blocks));
        assert_eq!(params(2, 0.5, 1.0).with_block_len(0).validate(), Err(AnalyticsError::BlockLen));
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial(10, 3), 120.0);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534u64 as f64);
        assert_eq!(binomial(5, 6), 0.0);
        assert_eq!(binomial(0, 0), 1.0);
        assert!(close(binomial(200, 3), 1_313_400.0, 1e-6));
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(binom_pmf(2, 1, 0.5).unwrap(), 0.5);
        assert_eq!(binom_pmf(7, 0, 0.0).unwrap(), 1.0);
        let v = binom_pmf(10, 3, 0.2).unwrap();
        assert!((v - 0.201_326_592).abs() / 0.201_326_592 <= 1e-12, "{v}");
        assert_eq!(binom_pmf(3, 4, 0.5), Err(AnalyticsError::Domain { k: 3, i: 4 }));
        let total: f64 = (0..=64).map(|i| binom_pmf(64, i, 0.37).unwrap()).sum();
        assert!(close(total, 1.0, 1e-12));
    }

    #[test]
    fn computation_rate_examples() {
        assert_eq!(computation_rate(1, 1.0), 0.5);
        assert!(close(computation_rate(2, 200.0), 3.823_729_213_227_46, 1e-12));
        assert_eq!(computation_rate(2, 0.5), 0.0);
        assert!(computation_rate(4, 0.1) < 0.0);
    }

    #[test]
    fn aloha_examples() {
        assert!(close(aloha_throughput(&params(1, 1.0, 3.0)), 1.0, 1e-15));
        assert!(close(aloha_throughput(&params(2, 0.5, 100.0)), ALOHA_2_HALF_100, 1e-12));
        assert_eq!(aloha_throughput(&params(5, 0.0, 100.0)), 0.0);
    }

    #[test]
    fn mpr_examples() {
        let (t, k) = mpr_throughput(&params(1, 1.0, 3.0));
        assert!(close(t, 1.0, 1e-15));
        assert_eq!(k, 1);
        let (t, k) = mpr_throughput(&params(2, 0.5, 100.0));
        assert!(close(t, MPR_2_HALF_100, 1e-12), "{t}");
        assert_eq!(k, 2);
        // K̃ = 1 is plain ALOHA
        assert!(close(mpr_candidate(&params(2, 0.5, 100.0), 1), ALOHA_2_HALF_100, 1e-12));
        // only i = 2 survives: ½ log2(1 + 2 * 100)
        let (t, k) = mpr_throughput(&params(2, 1.0, 100.0));
        assert!(close(t, 0.5 * 201f64.log2(), 1e-12));
        assert_eq!(k, 2);
        assert_eq!(mpr_throughput(&params(4, 0.0, 100.0)), (0.0, 1));
    }

    #[test]
    fn ignore_csi_examples() {
        assert!(close(ignore_csi_throughput(&params(1, 1.0, 3.0)), 1.0, 1e-15));
        assert!(close(ignore_csi_throughput(&params(2, 0.5, 100.0)), IGNORE_2_HALF_100, 1e-12));
        assert_eq!(ignore_csi_throughput(&params(3, 0.0, 100.0)), 0.0);
    }

    #[test]
    fn plnc_examples() {
        assert!(close(plnc_throughput(&params(1, 1.0, 3.0)), 1.0, 1e-15));
        assert!(close(plnc_throughput(&params(2, 0.5, 100.0)), PLNC_2_HALF_100, 1e-12));
        assert!(close(plnc_throughput(&params(2, 1.0, 100.0)), 0.5 * 100.5f64.log2(), 1e-12));
        assert!(close(plnc_throughput(&params(2, 1.0, 100.0)), 3.3253, 1e-3));
        assert_eq!(plnc_throughput(&params(2, 0.0, 100.0)), 0.0);
        // negative computation rate clamps to zero
        assert_eq!(plnc_throughput(&params(4, 1.0, 0.1)), 0.0);
    }

    #[test]
    fn upper_examples() {
        assert!(close(upper_bound(&params(1, 1.0, 3.0)), 1.0, 1e-15));
        assert!(close(upper_bound(&params(2, 0.5, 100.0)), UPPER_2_HALF_100, 1e-12));
        assert!(close(upper_bound(&params(2, 1.0, 100.0)), 3.825_525_845_589_464, 1e-12));
    }

    #[test]
    fn report_examples() {
        let r = evaluate_all(&params(2, 0.5, 100.0));
        assert!(close(r.aloha, ALOHA_2_HALF_100, 1e-12));
        assert!(close(r.mpr, MPR_2_HALF_100, 1e-12));
        assert_eq!(r.mpr_kstar, 2);
        assert!(close(r.ignore_csi, IGNORE_2_HALF_100, 1e-12));
        assert!(close(r.plnc, PLNC_2_HALF_100, 1e-12));
        assert!(close(r.upper, UPPER_2_HALF_100, 1e-12));

        for a in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let r = evaluate_all(&params(1, a, 7.0));
            assert_eq!(r.aloha, r.plnc);
        }
        let r = evaluate_all(&params(2, 1.0, 100.0));
        assert!(close(r.mpr, r.upper, 1e-12));
    }

    fn grid() -> impl Iterator<Item = SystemParams> {
        [1usize, 2, 3, 5, 10, 30, 64].into_iter().flat_map(|k| {
            [0.5, 1.0, 10.0, 1e2, 1e6].into_iter().flat_map(move |p| {
                (0..=20).map(move |j| params(k, j as f64 / 20.0, p))
            })
        })
    }

    #[test]
    fn dominance_and_nonnegativity() {
        for p in grid() {
            let r = evaluate_all(&p);
            for (name, v) in r.strategies() {
                assert!(v.is_finite() && v >= 0.0, "{name} = {v} at {p:?}");
                assert!(v <= r.upper + 1e-9, "{name} = {v} > upper {} at {p:?}", r.upper);
            }
            if p.access_prob == 0.0 {
                assert_eq!(r.upper, 0.0);
                assert_eq!(r.plnc, 0.0);
                assert_eq!(r.ignore_csi, 0.0);
            }
        }
    }

    #[test]
    fn single_user_collapse() {
        for p in grid().filter(|p| p.users == 1) {
            let r = evaluate_all(&p);
            assert_eq!(r.aloha, r.plnc);
            assert!(close(r.mpr, r.aloha, 1e-12));
            assert!(close(r.upper, r.aloha, 1e-12));
            assert!(r.ignore_csi <= r.upper + 1e-12);
        }
    }

    #[test]
    fn full_activity_pinch_and_plnc_ceiling() {
        for p in grid() {
            let r = evaluate_all(&p);
            if p.access_prob == 1.0 {
                assert!(close(r.mpr, r.upper, 1e-9), "{p:?}");
            }
            if p.access_prob > 0.0 {
                assert!(r.plnc <= capacity(p.active_power()) + 1e-12);
            }
        }
    }

    #[test]
    fn strictly_increasing_in_power() {
        for k in [1usize, 2, 5, 10] {
            for a in [0.05, 0.3, 0.7, 1.0] {
                let lo = evaluate_all(&params(k, a, 10.0));
                let hi = evaluate_all(&params(k, a, 11.0));
                for ((name, x), (_, y)) in lo.strategies().into_iter().zip(hi.strategies()) {
                    if name == "aloha" && k > 1 && a == 1.0 {
                        // every block is a collision
                        assert_eq!((x, y), (0.0, 0.0));
                        continue;
                    }
                    assert!(y > x, "{name} not increasing at K={k} a={a}");
                }
                assert!(hi.upper > lo.upper);
            }
        }
    }
}
