//! Moulin–Koetter Reed–Solomon identification codes.
//!
//! A code is an ordered tuple of `n` distinct evaluation points
//! `(alpha_1, ..., alpha_n)` in GF(q). The identity `P` (a polynomial with `k`
//! coefficients) is encoded as a uniformly random pair `(j, P(alpha_j))`, and a
//! received pair is accepted for `P` iff it lies in the same set.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, FieldElement, Polynomial};

/// Cap on how often one device may be interrogated at the reference parameters.
pub const INTERROGATION_CAP: usize = 2048;

/// Trials evaluated against one sampled code in [`estimate_lambda2`].
const TRIALS_PER_CODE: u64 = 4096;

/// The `(q, n, k)` triple of a code family with `k <= n <= q - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodeParams {
    field: Field,
    n: usize,
    k: usize,
}

impl CodeParams {
    pub fn new(field: Field, n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::parameter("message dimension k must be at least 1"));
        }
        if k > n {
            return Err(Error::parameter(format!("k <= n violated: k = {k}, n = {n}")));
        }
        if n as u128 > field.order() - 1 {
            return Err(Error::parameter(format!(
                "n <= q - 1 violated: n = {n}, q = {}",
                field.order()
            )));
        }
        Ok(CodeParams { field, n, k })
    }

    /// `q = 2^64`, `n = 2^11`, `k = 2^8`.
    pub fn rfid_2_64() -> Self {
        CodeParams { field: Field::gf2_64(), n: 2048, k: 256 }
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn q(&self) -> u128 {
        self.field.order()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Bits per encoded message, `log2 n + log2 q`.
    pub fn eta_bits(&self) -> f64 {
        (self.n as f64).log2() + self.field.log2_order()
    }

    /// `log2 N` for `N = q^k` identities. `N` itself is never formed.
    pub fn log2_message_count(&self) -> f64 {
        self.k as f64 * self.field.log2_order()
    }

    /// First-kind error on the noiseless channel.
    pub fn lambda1(&self) -> f64 {
        0.0
    }

    /// Second-kind error `(k - 1) / n`.
    pub fn lambda2(&self) -> f64 {
        (self.k - 1) as f64 / self.n as f64
    }

    /// Fraction of the `n q` possible messages that encode one identity: `1/q`.
    pub fn tau(&self) -> f64 {
        1.0 / self.q() as f64
    }

    /// Size of the encoding set, `tau * n * q = n`.
    pub fn encoding_set_size(&self) -> usize {
        self.n
    }

    pub fn interrogation_cap(&self) -> usize {
        self.n.min(INTERROGATION_CAP)
    }
}

/// One transmitted symbol `(j, v)` with a 1-based index `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedMessage {
    pub index: usize,
    pub value: FieldElement,
}

impl EncodedMessage {
    pub fn new(index: usize, value: FieldElement) -> Self {
        EncodedMessage { index, value }
    }
}

/// A concrete code: the ordered evaluation domain.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IdCode {
    field: Field,
    points: Vec<FieldElement>,
}

impl IdCode {
    pub fn new(params: &CodeParams, points: Vec<FieldElement>) -> Result<Self> {
        if points.len() != params.n {
            return Err(Error::parameter(format!(
                "evaluation domain has {} points, expected n = {}",
                points.len(),
                params.n
            )));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for &p in &points {
            params.field.element(p.value())?;
            if !seen.insert(p) {
                return Err(Error::parameter(format!("evaluation point {p} repeated")));
            }
        }
        Ok(IdCode { field: params.field, points })
    }

    /// Uniform over the `C(q, n) n!` ordered tuples of distinct elements.
    pub fn sample<R: Rng + ?Sized>(params: &CodeParams, rng: &mut R) -> Self {
        let mut seen = HashSet::with_capacity(params.n);
        let mut points = Vec::with_capacity(params.n);
        while points.len() < params.n {
            let a = params.field.random_element(rng);
            if seen.insert(a) {
                points.push(a);
            }
        }
        IdCode { field: params.field, points }
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[FieldElement] {
        &self.points
    }

    /// `alpha_j` for a 1-based index.
    pub fn alpha(&self, index: usize) -> Result<FieldElement> {
        index
            .checked_sub(1)
            .and_then(|i| self.points.get(i))
            .copied()
            .ok_or_else(|| Error::parameter(format!("index {index} outside 1..={}", self.n())))
    }

    /// `A_{F,P}`: all `n` pairs `(j, P(alpha_j))`.
    pub fn encoding_set(&self, p: &Polynomial) -> Vec<EncodedMessage> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, &a)| EncodedMessage::new(i + 1, p.eval(&self.field, a)))
            .collect()
    }

    /// Draws one element of the encoding set uniformly.
    pub fn encode<R: Rng + ?Sized>(&self, p: &Polynomial, rng: &mut R) -> EncodedMessage {
        let index = rng.gen_range(1..=self.n());
        EncodedMessage::new(index, p.eval(&self.field, self.points[index - 1]))
    }

    /// Decoding-set membership: `x.value == P(alpha_{x.index})`.
    pub fn in_decoding_set(&self, p: &Polynomial, x: &EncodedMessage) -> Result<bool> {
        Ok(p.eval(&self.field, self.alpha(x.index)?) == x.value)
    }

    /// `P + prod (X - alpha_i)` over the given 1-based indices: a polynomial that
    /// collides with `p` exactly on those indices.
    pub fn colliding_partner(&self, p: &Polynomial, root_indices: &[usize]) -> Result<Polynomial> {
        let roots = root_indices.iter().map(|&i| self.alpha(i)).collect::<Result<Vec<_>>>()?;
        let distinct: HashSet<_> = root_indices.iter().collect();
        if distinct.len() != root_indices.len() {
            return Err(Error::parameter("collision indices must be distinct"));
        }
        let diff = Polynomial::from_roots(&self.field, &roots, p.dimension())?;
        Ok(p.add(&self.field, &diff))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lambda2Mode {
    /// `P' != P` drawn uniformly.
    Random,
    /// `P'` agrees with `P` on the first `k - 1` domain points.
    Adversarial,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambda2Estimate {
    pub trials: u64,
    pub accepted: u64,
    /// Set for `k = 1` in adversarial mode, where no collision is possible.
    pub degenerate: bool,
}

impl Lambda2Estimate {
    pub fn rate(&self) -> f64 {
        self.accepted as f64 / self.trials as f64
    }

    /// Binomial standard error at probability `p`.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Monte Carlo estimate of the second-kind error: encode `P'`, test the result
/// against the decoding set of `P`.
///
/// A fresh code is sampled for every block of 4096 trials.
pub fn estimate_lambda2<R: Rng + ?Sized>(
    params: &CodeParams,
    trials: u64,
    mode: Lambda2Mode,
    rng: &mut R,
) -> Result<Lambda2Estimate> {
    if trials == 0 {
        return Err(Error::parameter("trials must be at least 1"));
    }
    let field = params.field;
    let roots: Vec<usize> = (1..params.k).collect();
    let mut accepted = 0;
    let mut done = 0;
    while done < trials {
        let code = IdCode::sample(params, rng);
        let diff = Polynomial::from_roots(
            &field,
            &roots.iter().map(|&i| code.points[i - 1]).collect::<Vec<_>>(),
            params.k,
        )?;
        let batch = TRIALS_PER_CODE.min(trials - done);
        for _ in 0..batch {
            let p = field.random_poly(params.k, rng);
            let partner = match mode {
                Lambda2Mode::Adversarial => p.add(&field, &diff),
                Lambda2Mode::Random => loop {
                    let candidate = field.random_poly(params.k, rng);
                    if candidate != p {
                        break candidate;
                    }
                },
            };
            let x = code.encode(&partner, rng);
            if code.in_decoding_set(&p, &x)? {
                accepted += 1;
            }
        }
        done += batch;
    }
    Ok(Lambda2Estimate {
        trials,
        accepted,
        degenerate: mode == Lambda2Mode::Adversarial && params.k == 1,
    })
}
