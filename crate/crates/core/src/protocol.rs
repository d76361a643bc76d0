//! Equation-level simulation of the network-coded random access scheme.
//!
//! Each user splits its message into `L_b` substrings of `L_c` field symbols
//! and, in block `n`, sends the mix `sum_l g_i(n, l) M_i(l)` with a
//! computation code. The computation code is modeled as ideal: the receiver
//! learns the field sum of the mixes of all active users whenever the code
//! rate `L_c log2(q) / B` does not exceed the computation rate
//! `½ log2(1/K + P/a)`. Every busy block therefore yields one linear equation
//! in the `K L_b` unknown substrings, and the receiver solves the stacked
//! system once all `N` blocks are in.

use rand::Rng;
use thiserror::Error;

use crate::analytics::{computation_rate, AnalyticsError, SystemParams};
use crate::field::{FieldElement, FieldError, FieldMatrix, PrimeField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Params(#[from] AnalyticsError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("access probability must be positive to derive a protocol configuration")]
    ZeroAccess,
    #[error("ratio scale {0} must be a positive finite number")]
    RatioScale(f64),
    #[error("degenerate configuration: {what} = {value:.4} < 1 (increase N, B or P)")]
    DegenerateConfig { what: &'static str, value: f64 },
    #[error("{substrings} substrings per user exceed the {blocks} available blocks")]
    TooManySubstrings { substrings: usize, blocks: usize },
    #[error("payload width {width} must be in 1..={symbols}")]
    PayloadWidth { width: usize, symbols: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Per-user, per-block activity `S_i(n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityTrace {
    users: usize,
    blocks: usize,
    // user-major: states[i * blocks + n]
    states: Vec<bool>,
}

impl ActivityTrace {
    pub fn new(users: usize, blocks: usize, states: Vec<bool>) -> Result<Self, ProtocolError> {
        if states.len() != users * blocks {
            return Err(ProtocolError::Shape(format!(
                "{} states for {users} users and {blocks} blocks",
                states.len()
            )));
        }
        Ok(Self { users, blocks, states })
    }

    /// One row per user; nonzero entries are active.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, ProtocolError> {
        let blocks = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != blocks) {
            return Err(ProtocolError::Shape("ragged activity rows".into()));
        }
        let states = rows.iter().flatten().map(|&s| s != 0).collect();
        Self::new(rows.len(), blocks, states)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    #[inline]
    pub fn is_active(&self, user: usize, block: usize) -> bool {
        self.states[user * self.blocks + block]
    }

    pub fn active_users(&self, block: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.users).filter(move |&i| self.is_active(i, block))
    }

    pub fn is_busy(&self, block: usize) -> bool {
        self.active_users(block).next().is_some()
    }

    pub fn busy_blocks(&self) -> usize {
        (0..self.blocks).filter(|&n| self.is_busy(n)).count()
    }

    pub fn active_count(&self) -> usize {
        self.states.iter().filter(|&&s| s).count()
    }
}

/// Message structure and rate selection for one protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub params: SystemParams,
    pub field: PrimeField,
    /// Substrings per user, `L_b`.
    pub substrings: usize,
    /// Symbols per substring used for rate accounting, `L_c`.
    pub symbols: usize,
    /// Symbols per substring actually simulated (`1..=symbols`). Decoding
    /// success does not depend on it, since each symbol position is an
    /// independent right-hand side of the same system.
    pub payload_width: usize,
    /// Realized `L_b / N`.
    pub ratio: f64,
}

impl ProtocolConfig {
    /// Chooses `L_b` at `ratio_scale` times the full-rank threshold
    /// `N (1 - (1-a)^K) / K`, and the largest `L_c` whose code rate does not
    /// exceed the computation rate at power `P / a`.
    pub fn derive(params: SystemParams, ratio_scale: f64) -> Result<Self, ProtocolError> {
        params.validate()?;
        if params.access_prob == 0.0 {
            return Err(ProtocolError::ZeroAccess);
        }
        if !(ratio_scale.is_finite() && ratio_scale > 0.0) {
            return Err(ProtocolError::RatioScale(ratio_scale));
        }
        let field = PrimeField::new(params.field_order)?;
        let k = params.users as f64;

        let threshold = params.blocks as f64 * params.busy_prob() / k;
        let substrings_raw = floor_tolerant(threshold * ratio_scale);
        if substrings_raw < 1.0 {
            return Err(ProtocolError::DegenerateConfig { what: "L_b", value: threshold * ratio_scale });
        }

        let rate = computation_rate(params.users, params.active_power());
        let symbols_exact = params.block_len as f64 * rate / field.symbol_bits();
        // plain floor: rounding up would break the rate condition
        let symbols_raw = symbols_exact.floor();
        if symbols_raw < 1.0 {
            return Err(ProtocolError::DegenerateConfig { what: "L_c", value: symbols_exact });
        }

        Self::with_lengths(params, substrings_raw as usize, symbols_raw as usize)
    }

    /// Explicit `L_b` and `L_c`. The code rate is not checked against the
    /// computation rate here; blocks fail to decode instead.
    pub fn with_lengths(
        params: SystemParams,
        substrings: usize,
        symbols: usize,
    ) -> Result<Self, ProtocolError> {
        params.validate()?;
        let field = PrimeField::new(params.field_order)?;
        if substrings == 0 {
            return Err(ProtocolError::DegenerateConfig { what: "L_b", value: 0.0 });
        }
        if symbols == 0 {
            return Err(ProtocolError::DegenerateConfig { what: "L_c", value: 0.0 });
        }
        if substrings > params.blocks {
            return Err(ProtocolError::TooManySubstrings { substrings, blocks: params.blocks });
        }
        Ok(Self {
            params,
            field,
            substrings,
            symbols,
            payload_width: symbols,
            ratio: substrings as f64 / params.blocks as f64,
        })
    }

    pub fn with_payload_width(mut self, width: usize) -> Result<Self, ProtocolError> {
        if !(1..=self.symbols).contains(&width) {
            return Err(ProtocolError::PayloadWidth { width, symbols: self.symbols });
        }
        self.payload_width = width;
        Ok(self)
    }

    /// Total unknown substrings, `K L_b`.
    pub fn unknowns(&self) -> usize {
        self.params.users * self.substrings
    }

    /// Per-user code rate `L_c log2(q) / B` in bits per channel use.
    pub fn code_rate(&self) -> f64 {
        self.symbols as f64 * self.field.symbol_bits() / self.params.block_len as f64
    }

    /// Whether the computation code can carry the chosen rate.
    pub fn rate_supported(&self) -> bool {
        self.code_rate() <= computation_rate(self.params.users, self.params.active_power())
    }

    /// Sum rate delivered when decoding succeeds, `K L_b L_c log2(q) / (N B)`.
    pub fn throughput_on_success(&self) -> f64 {
        let p = &self.params;
        self.unknowns() as f64 * self.symbols as f64 * self.field.symbol_bits()
            / (p.blocks as f64 * p.block_len as f64)
    }
}

// Products like 0.9 * 150 land a few ulps above or below an integer.
fn floor_tolerant(x: f64) -> f64 {
    (x + 1e-9).floor()
}

/// Message substrings of every user: `per_user[i]` is `L_b x width`, row `l`
/// holding `M_i(l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSet {
    per_user: Vec<FieldMatrix>,
}

impl MessageSet {
    pub fn new(per_user: Vec<FieldMatrix>) -> Result<Self, ProtocolError> {
        if let Some(first) = per_user.first() {
            if per_user.iter().any(|m| m.shape() != first.shape()) {
                return Err(ProtocolError::Shape("message shapes differ across users".into()));
            }
        }
        Ok(Self { per_user })
    }

    /// Uniform random messages of shape `L_b x payload_width`, users in index
    /// order.
    pub fn random<R: Rng + ?Sized>(config: &ProtocolConfig, rng: &mut R) -> Self {
        let per_user = (0..config.params.users)
            .map(|_| FieldMatrix::random(config.field, config.substrings, config.payload_width, rng))
            .collect();
        Self { per_user }
    }

    pub fn users(&self) -> usize {
        self.per_user.len()
    }

    pub fn user(&self, i: usize) -> &FieldMatrix {
        &self.per_user[i]
    }

    /// The stacked unknown vector `[M_1; ...; M_K]`.
    pub fn stacked(&self) -> Result<FieldMatrix, ProtocolError> {
        let Some(first) = self.per_user.first() else {
            return Err(ProtocolError::Shape("empty message set".into()));
        };
        let (rows, cols) = first.shape();
        let values: Vec<u64> = self
            .per_user
            .iter()
            .flat_map(|m| m.entries().iter().map(|e| e.value()))
            .collect();
        Ok(FieldMatrix::from_values(first.field(), rows * self.per_user.len(), cols, &values)?)
    }

    fn from_stacked(stacked: &FieldMatrix, users: usize, substrings: usize) -> Result<Self, ProtocolError> {
        let cols = stacked.cols();
        let per_user = (0..users)
            .map(|i| {
                let values: Vec<u64> = (i * substrings..(i + 1) * substrings)
                    .flat_map(|r| stacked.row(r).iter().map(|e| e.value()))
                    .collect();
                FieldMatrix::from_values(stacked.field(), substrings, cols, &values)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { per_user })
    }
}

/// One received linear equation: coefficients over all `K L_b` unknowns and
/// the decoded sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equation {
    pub coefficients: Vec<FieldElement>,
    pub rhs: Vec<FieldElement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockOutcome {
    /// Nobody transmitted.
    Idle,
    Decoded(Equation),
    /// The code rate exceeds what the computation code supports.
    DecodeFailure,
}

/// The stacked system `A M = b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquationSystem {
    /// `U x K L_b`
    pub coefficients: FieldMatrix,
    /// `U x width`
    pub rhs: FieldMatrix,
    /// Originating block of each equation row.
    pub block_index: Vec<usize>,
    /// Busy blocks whose sum could not be decoded.
    pub failed_blocks: Vec<usize>,
}

impl EquationSystem {
    pub fn equations(&self) -> usize {
        self.block_index.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    Decoded(MessageSet),
    RankDeficient { rank: usize },
}

/// Draws `S_i(n) ~ Bernoulli(a)` independently, user-major then block.
pub fn sample_states<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> ActivityTrace {
    let states = (0..params.users * params.blocks)
        .map(|_| rng.random_bool(params.access_prob))
        .collect();
    ActivityTrace { users: params.users, blocks: params.blocks, states }
}

/// Uniform `N x L_b` mixing matrices `G_i`, users in index order.
pub fn build_generators<R: Rng + ?Sized>(config: &ProtocolConfig, rng: &mut R) -> Vec<FieldMatrix> {
    (0..config.params.users)
        .map(|_| FieldMatrix::random(config.field, config.params.blocks, config.substrings, rng))
        .collect()
}

/// The substring mix user `i` sends in `block`: row `block` of `G_i M_i`.
pub fn mix_messages(
    generator: &FieldMatrix,
    messages: &FieldMatrix,
    block: usize,
) -> Result<Vec<FieldElement>, ProtocolError> {
    if generator.cols() != messages.rows() || block >= generator.rows() {
        return Err(ProtocolError::Shape(format!(
            "generator {}x{} cannot mix {}x{} messages in block {block}",
            generator.rows(),
            generator.cols(),
            messages.rows(),
            messages.cols()
        )));
    }
    let f = generator.field();
    let mut out = vec![f.zero(); messages.cols()];
    for (l, &g) in generator.row(block).iter().enumerate() {
        if g.is_zero() {
            continue;
        }
        for (o, &m) in out.iter_mut().zip(messages.row(l)) {
            *o = f.add(*o, f.mul(g, m));
        }
    }
    Ok(out)
}

/// What the receiver obtains from block `n`. `mixed[i]` is user `i`'s
/// transmitted mix; entries of inactive users are ignored.
pub fn channel_decode_block(
    config: &ProtocolConfig,
    trace: &ActivityTrace,
    generators: &[FieldMatrix],
    mixed: &[&[FieldElement]],
    block: usize,
) -> BlockOutcome {
    if !trace.is_busy(block) {
        return BlockOutcome::Idle;
    }
    if !config.rate_supported() {
        return BlockOutcome::DecodeFailure;
    }
    let f = config.field;
    let lb = config.substrings;
    let width = mixed.iter().map(|m| m.len()).max().unwrap_or(0);
    let mut coefficients = vec![f.zero(); config.unknowns()];
    let mut rhs = vec![f.zero(); width];
    for i in trace.active_users(block) {
        coefficients[i * lb..(i + 1) * lb].copy_from_slice(generators[i].row(block));
        for (acc, &x) in rhs.iter_mut().zip(mixed[i]) {
            *acc = f.add(*acc, x);
        }
    }
    BlockOutcome::Decoded(Equation { coefficients, rhs })
}

/// Runs every block through the channel and stacks the decoded equations in
/// block order.
pub fn assemble_system(
    config: &ProtocolConfig,
    trace: &ActivityTrace,
    generators: &[FieldMatrix],
    messages: &MessageSet,
) -> Result<EquationSystem, ProtocolError> {
    let k = config.params.users;
    let n_blocks = config.params.blocks;
    if trace.users() != k || trace.blocks() != n_blocks {
        return Err(ProtocolError::Shape("activity trace does not match parameters".into()));
    }
    if generators.len() != k || messages.users() != k {
        return Err(ProtocolError::Shape("need one generator and one message per user".into()));
    }
    if generators.iter().any(|g| g.shape() != (n_blocks, config.substrings)) {
        return Err(ProtocolError::Shape("generator shape is not N x L_b".into()));
    }
    let width = messages.user(0).cols();

    // Row n of G_i M_i is user i's transmission in block n.
    let transmissions = generators
        .iter()
        .zip(&messages.per_user)
        .map(|(g, m)| g.mul(m))
        .collect::<Result<Vec<_>, _>>()?;

    let mut coefficients = Vec::new();
    let mut rhs = Vec::new();
    let mut block_index = Vec::new();
    let mut failed_blocks = Vec::new();
    for n in 0..n_blocks {
        let mixed: Vec<&[FieldElement]> = transmissions.iter().map(|t| t.row(n)).collect();
        match channel_decode_block(config, trace, generators, &mixed, n) {
            BlockOutcome::Idle => {}
            BlockOutcome::DecodeFailure => failed_blocks.push(n),
            BlockOutcome::Decoded(eq) => {
                coefficients.extend(eq.coefficients.iter().map(|e| e.value()));
                rhs.extend(eq.rhs.iter().map(|e| e.value()));
                block_index.push(n);
            }
        }
    }
    let u = block_index.len();
    Ok(EquationSystem {
        coefficients: FieldMatrix::from_values(config.field, u, config.unknowns(), &coefficients)?,
        rhs: FieldMatrix::from_values(config.field, u, width, &rhs)?,
        block_index,
        failed_blocks,
    })
}

/// Solves the stacked system for every user's substrings.
pub fn attempt_decode(
    system: &EquationSystem,
    config: &ProtocolConfig,
) -> Result<DecodeOutcome, ProtocolError> {
    if system.coefficients.cols() != config.unknowns() {
        return Err(ProtocolError::Shape("system width is not K L_b".into()));
    }
    if system.equations() < config.unknowns() {
        return Ok(DecodeOutcome::RankDeficient { rank: system.coefficients.rank() });
    }
    match system.coefficients.solve(&system.rhs) {
        Ok(x) => Ok(DecodeOutcome::Decoded(MessageSet::from_stacked(
            &x,
            config.params.users,
            config.substrings,
        )?)),
        Err(FieldError::RankDeficient { rank, .. }) => Ok(DecodeOutcome::RankDeficient { rank }),
        Err(e) => Err(e.into()),
    }
}
