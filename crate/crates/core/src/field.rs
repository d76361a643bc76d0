//! Exact arithmetic over a prime field `F_q` and dense matrices over it.
//!
//! Elements are stored as machine integers in `[0, q)`. The modulus is limited
//! to `q < 2^32` so that a product of two reduced elements plus one more
//! reduced element always fits in a `u64`; reduction uses a precomputed
//! Barrett constant instead of a hardware divide.

use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Largest modulus accepted by [`PrimeField::new`].
pub const MAX_MODULUS: u64 = u32::MAX as u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("field modulus {0} is not prime")]
    CompositeModulus(u64),
    #[error("field modulus {0} is out of range [2, {MAX_MODULUS}]")]
    ModulusOutOfRange(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("entry {value} at index {index} is not reduced modulo {modulus}")]
    UnreducedEntry { index: usize, value: u64, modulus: u64 },
    #[error("matrix data has {len} entries, expected {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrices belong to different fields (q = {0} and q = {1})")]
    FieldMismatch(u64, u64),
    #[error("system is rank deficient: rank {rank} < {cols} unknowns")]
    RankDeficient { rank: usize, cols: usize },
    #[error("system is inconsistent")]
    Inconsistent,
}

/// An element of `F_q`. The modulus is carried by the [`PrimeField`] it was
/// created from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);

    #[inline]
    pub const fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Descriptor of the prime field `F_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    q: u64,
    // floor(2^64 / q)
    barrett: u64,
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if !(2..=MAX_MODULUS).contains(&q) {
            return Err(FieldError::ModulusOutOfRange(q));
        }
        if !is_prime(q) {
            return Err(FieldError::CompositeModulus(q));
        }
        let barrett = ((1u128 << 64) / q as u128) as u64;
        Ok(Self { q, barrett })
    }

    #[inline]
    pub const fn order(&self) -> u64 {
        self.q
    }

    /// Bits carried by one field symbol, `log2(q)`.
    pub fn symbol_bits(&self) -> f64 {
        (self.q as f64).log2()
    }

    /// Maps an arbitrary integer onto its residue class.
    #[inline]
    pub fn elem(&self, value: u64) -> FieldElement {
        FieldElement(self.reduce(value))
    }

    /// Checked construction: rejects values that are not already reduced.
    pub fn try_elem(&self, value: u64) -> Option<FieldElement> {
        (value < self.q).then_some(FieldElement(value))
    }

    #[inline]
    pub const fn zero(&self) -> FieldElement {
        FieldElement(0)
    }

    #[inline]
    pub const fn one(&self) -> FieldElement {
        FieldElement(1)
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 + b.0;
        FieldElement(if s >= self.q { s - self.q } else { s })
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.q - b.0 })
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        FieldElement(if a.0 == 0 { 0 } else { self.q - a.0 })
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(self.reduce(a.0 * b.0))
    }

    pub fn pow(&self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = 1u64;
        let mut b = base.0;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.reduce(acc * b);
            }
            b = self.reduce(b * b);
            exp >>= 1;
        }
        FieldElement(acc)
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, FieldError> {
        if a.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(a, self.q - 2))
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.random_range(0..self.q))
    }

    /// Barrett reduction, valid for any `x < 2^64`.
    #[inline(always)]
    fn reduce(&self, x: u64) -> u64 {
        let quot = ((x as u128 * self.barrett as u128) >> 64) as u64;
        let r = x - quot * self.q;
        if r >= self.q {
            r - self.q
        } else {
            r
        }
    }

    /// `(acc + f * x) mod q` for reduced operands.
    #[inline(always)]
    fn mul_add(&self, acc: u64, f: u64, x: u64) -> u64 {
        self.reduce(acc + f * x)
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Dense row-major matrix over a prime field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<FieldElement>,
}

impl FieldMatrix {
    /// Builds a matrix from row-major values, each of which must already be
    /// reduced modulo `q`.
    pub fn from_values(
        field: PrimeField,
        rows: usize,
        cols: usize,
        values: &[u64],
    ) -> Result<Self, FieldError> {
        if values.len() != rows * cols {
            return Err(FieldError::DataLength { rows, cols, len: values.len() });
        }
        let data = values
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                field.try_elem(value).ok_or(FieldError::UnreducedEntry {
                    index,
                    value,
                    modulus: field.order(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { field, rows, cols, data })
    }

    pub fn from_rows(field: PrimeField, rows: &[Vec<u64>]) -> Result<Self, FieldError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(FieldError::ShapeMismatch("ragged rows".into()));
        }
        let flat: Vec<u64> = rows.iter().flatten().copied().collect();
        Self::from_values(field, rows.len(), cols, &flat)
    }

    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Self { field, rows, cols, data: vec![FieldElement::ZERO; rows * cols] }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = field.one();
        }
        m
    }

    /// Matrix with i.i.d. uniform entries (zero included), drawn in
    /// row-major order.
    pub fn random<R: Rng + ?Sized>(field: PrimeField, rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| field.random(rng)).collect();
        Self { field, rows, cols, data }
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> FieldElement {
        assert!(row < self.rows && col < self.cols, "index ({row}, {col}) out of bounds");
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: FieldElement) {
        assert!(row < self.rows && col < self.cols, "index ({row}, {col}) out of bounds");
        assert!(value.0 < self.field.q, "element {value} not in F_{}", self.field.q);
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[FieldElement] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn entries(&self) -> &[FieldElement] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|e| e.is_zero())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    pub fn scale_row(&mut self, row: usize, factor: FieldElement) {
        let f = self.field;
        for e in &mut self.data[row * self.cols..(row + 1) * self.cols] {
            *e = f.mul(*e, factor);
        }
    }

    /// `row[dst] += factor * row[src]`
    pub fn add_row_multiple(&mut self, dst: usize, src: usize, factor: FieldElement) {
        assert_ne!(dst, src);
        let cols = self.cols;
        let f = self.field;
        let (d, s) = two_rows_mut(&mut self.data, cols, dst, src);
        for (x, y) in d.iter_mut().zip(s.iter()) {
            x.0 = f.mul_add(x.0, factor.0, y.0);
        }
    }

    pub fn mul(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, FieldError> {
        self.check_field(rhs)?;
        if self.cols != rhs.rows {
            return Err(FieldError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let f = self.field;
        let mut out = Self::zeros(f, self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k].0;
                if a == 0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    o.0 = f.mul_add(o.0, a, b.0);
                }
            }
        }
        Ok(out)
    }

    /// Rank over `F_q` by Gaussian elimination on a copy.
    pub fn rank(&self) -> usize {
        let mut work = self.data.clone();
        row_echelon(self.field, &mut work, self.rows, self.cols, self.cols)
    }

    /// Solves `self * X = rhs` for `X`.
    ///
    /// Requires full column rank; an overdetermined but consistent system is
    /// accepted. Fails with [`FieldError::RankDeficient`] when the solution is
    /// not unique.
    pub fn solve(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, FieldError> {
        self.check_field(rhs)?;
        if rhs.rows != self.rows {
            return Err(FieldError::ShapeMismatch(format!(
                "left side has {} rows, right side has {}",
                self.rows, rhs.rows
            )));
        }
        let n = self.cols;
        let w = rhs.cols;
        let width = n + w;
        let f = self.field;

        let mut aug = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            aug.extend_from_slice(self.row(r));
            aug.extend_from_slice(rhs.row(r));
        }
        let rank = row_echelon(f, &mut aug, self.rows, width, n);
        if rank < n {
            return Err(FieldError::RankDeficient { rank, cols: n });
        }
        // Rows past the pivots have a zero left part; a nonzero right part
        // means no solution exists.
        if aug[n * width..].iter().any(|e| !e.is_zero()) {
            return Err(FieldError::Inconsistent);
        }
        // Pivots sit on the diagonal with unit value. Back-substitute from the
        // last pivot up; row c is already clear to the right of its pivot, so
        // only the right-hand columns of row r change (entry (r, c) is read as
        // the factor and left in place).
        for c in (0..n).rev() {
            for r in 0..c {
                let factor = aug[r * width + c];
                if factor.is_zero() {
                    continue;
                }
                let neg = f.neg(factor).0;
                let (dst, src) = two_rows_mut(&mut aug, width, r, c);
                for (x, y) in dst[n..].iter_mut().zip(&src[n..]) {
                    x.0 = f.mul_add(x.0, neg, y.0);
                }
            }
        }
        let mut x = Self::zeros(f, n, w);
        for r in 0..n {
            x.data[r * w..(r + 1) * w].copy_from_slice(&aug[r * width + n..(r + 1) * width]);
        }
        Ok(x)
    }

    fn check_field(&self, other: &FieldMatrix) -> Result<(), FieldError> {
        if self.field.q != other.field.q {
            return Err(FieldError::FieldMismatch(self.field.q, other.field.q));
        }
        Ok(())
    }
}

fn two_rows_mut(
    data: &mut [FieldElement],
    cols: usize,
    a: usize,
    b: usize,
) -> (&mut [FieldElement], &[FieldElement]) {
    if a < b {
        let (lo, hi) = data.split_at_mut(b * cols);
        (&mut lo[a * cols..(a + 1) * cols], &hi[..cols])
    } else {
        let (lo, hi) = data.split_at_mut(a * cols);
        (&mut hi[..cols], &lo[b * cols..(b + 1) * cols])
    }
}

/// Forward elimination with first-nonzero pivoting over the leading
/// `pivot_cols` columns. Pivot rows are normalized to a leading one and end up
/// in the top `rank` rows; every entry is reduced on return. Returns the rank
/// of the leading block.
fn row_echelon(
    f: PrimeField,
    data: &mut [FieldElement],
    rows: usize,
    width: usize,
    pivot_cols: usize,
) -> usize {
    // A row is updated at most once per pivot, each time by less than q^2.
    // When that total cannot overflow, updates skip the reduction and rows
    // are reduced only when they become pivots.
    let q = f.q as u128;
    let lazy = q + pivot_cols as u128 * (q - 1) * (q - 1) <= u64::MAX as u128;

    let mut rank = 0;
    for col in 0..pivot_cols {
        if rank == rows {
            break;
        }
        let Some(pivot) = (rank..rows).find(|&r| {
            let e = &mut data[r * width + col];
            e.0 = f.reduce(e.0);
            e.0 != 0
        }) else {
            continue;
        };
        if pivot != rank {
            for c in col..width {
                data.swap(pivot * width + c, rank * width + c);
            }
        }
        let inv = f.inv(data[rank * width + col]).expect("pivot is nonzero");
        for e in &mut data[rank * width + col..(rank + 1) * width] {
            e.0 = f.reduce(f.reduce(e.0) * inv.0);
        }
        for r in rank + 1..rows {
            let lead = &mut data[r * width + col];
            lead.0 = f.reduce(lead.0);
            if lead.0 == 0 {
                continue;
            }
            let neg = f.q - lead.0;
            let (dst, src) = two_rows_mut(data, width, r, rank);
            if lazy {
                for (x, y) in dst[col..].iter_mut().zip(&src[col..]) {
                    x.0 += neg * y.0;
                }
            } else {
                for (x, y) in dst[col..].iter_mut().zip(&src[col..]) {
                    x.0 = f.mul_add(x.0, neg, y.0);
                }
            }
        }
        rank += 1;
    }
    if lazy {
        for e in data[rank * width..].iter_mut() {
            e.0 = f.reduce(e.0);
        }
    }
    rank
}
