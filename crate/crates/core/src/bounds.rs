//! Closed-form lower bounds on `H(C | x_1, ..., x_M)`, the eavesdropper's
//! remaining uncertainty about the code after `M` messages.
//!
//! Every quantity is in bits. The family size `C(q, n) n!` is only ever
//! handled through its logarithm, accumulated as a compensated sum so that
//! `q = 2^64`, `n = 2^11` keeps sub-microbit accuracy. Negative bounds are
//! returned as-is: a negative value means the bound says nothing.

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance for the two algebraic forms of the per-message leak to agree.
pub const FORM_AGREEMENT_TOLERANCE: f64 = 1e-9;

fn log2_u128(x: u128) -> f64 {
    (x as f64).log2()
}

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `log2(C(q, n) n!) = sum_{j < n} log2(q - j)`.
pub fn log2_family_size(q: u128, n: u64) -> Result<f64> {
    if u128::from(n) > q {
        return Err(Error::parameter(format!("n = {n} exceeds q = {q}")));
    }
    let mut acc = CompensatedSum::default();
    if q < 1 << 53 {
        for j in 0..u128::from(n) {
            acc.add(log2_u128(q - j));
        }
        return Ok(acc.value());
    }
    // log2(q - j) = log2 q + log2(1 - j/q); the second term is tiny and would be
    // lost if q - j were rounded to f64 first
    let qf = q as f64;
    for j in 0..n {
        acc.add((-(j as f64) / qf).ln_1p() / std::f64::consts::LN_2);
    }
    Ok(n as f64 * log2_u128(q) + acc.value())
}

/// Stirling estimate `q log2(q/(q-n)) + n log2(q-n) - n log2 e` of
/// [`log2_family_size`]. Its error is at most half a bit for `n <= q/2`.
pub fn stirling_family_size(q: u128, n: u64) -> Result<f64> {
    if u128::from(n) >= q {
        return Err(Error::parameter(format!("Stirling estimate needs n < q (n = {n}, q = {q})")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let qf = q as f64;
    let nf = n as f64;
    // log2(q - n) - log2 q, accurate even when n/q is tiny
    let shrink = (-nf / qf).ln_1p() / std::f64::consts::LN_2;
    Ok(-qf * shrink + nf * (log2_u128(q) + shrink) - nf * std::f64::consts::LOG2_E)
}

/// Mutual-information form of the per-message leak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MutualInformationTerms {
    /// `I(i; x)`
    pub i_ix: f64,
    /// `I(x; C | i)`
    pub i_xc_given_i: f64,
    /// `I(i; x | C)`
    pub i_ix_given_c: f64,
}

impl MutualInformationTerms {
    pub fn leak(&self) -> f64 {
        self.i_ix + self.i_xc_given_i - self.i_ix_given_c
    }
}

/// Entropies of the message `i` and the received word `x`, jointly with the code `C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyTerms {
    pub h_x: f64,
    pub h_i: f64,
    pub h_i_given_cx: f64,
    pub h_x_given_ci: f64,
    pub mutual: Option<MutualInformationTerms>,
}

impl EntropyTerms {
    pub fn new(h_x: f64, h_i: f64, h_i_given_cx: f64, h_x_given_ci: f64) -> Result<Self> {
        let terms = EntropyTerms { h_x, h_i, h_i_given_cx, h_x_given_ci, mutual: None };
        terms.validate()?;
        Ok(terms)
    }

    pub fn with_mutual_information(mut self, mutual: MutualInformationTerms) -> Self {
        self.mutual = Some(mutual);
        self
    }

    fn validate(&self) -> Result<()> {
        let slack = 1e-9;
        for (name, v) in [
            ("H(x)", self.h_x),
            ("H(i)", self.h_i),
            ("H(i|C,x)", self.h_i_given_cx),
            ("H(x|C,i)", self.h_x_given_ci),
        ] {
            if !(v >= -slack) {
                return Err(Error::parameter(format!("{name} = {v} is negative")));
            }
        }
        if self.h_i_given_cx > self.h_i + slack {
            return Err(Error::parameter(format!(
                "H(i|C,x) = {} exceeds H(i) = {}",
                self.h_i_given_cx, self.h_i
            )));
        }
        Ok(())
    }

    /// `H(x) - H(i) + H(i|C,x) - H(x|C,i)`.
    pub fn leak(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        acc.add(self.h_x);
        acc.add(-self.h_i);
        acc.add(self.h_i_given_cx);
        acc.add(-self.h_x_given_ci);
        acc.value()
    }
}

/// `log2 #C - M (H(x) - H(i) + H(i|C,x) - H(x|C,i))` for `M` independently
/// chosen messages.
///
/// When mutual-information terms are attached, the leak is also evaluated as
/// `I(i;x) + I(x;C|i) - I(i;x|C)` and the two forms must agree.
pub fn independent_messages_bound(family_bits: f64, messages: f64, terms: &EntropyTerms) -> Result<f64> {
    terms.validate()?;
    let leak = terms.leak();
    if let Some(mi) = terms.mutual {
        let other = mi.leak();
        if (other - leak).abs() > FORM_AGREEMENT_TOLERANCE {
            return Err(Error::parameter(format!(
                "entropy form leaks {leak} bits per message but mutual-information form leaks {other}"
            )));
        }
    }
    Ok(family_bits - messages * leak)
}

/// The grouped bound `log2 #C - (H(x̄) - H(ī) + H(ī|C,x̄) - H(x̄|C,ī))` over a
/// whole transcript, without assuming independent messages.
pub fn grouped_bound(family_bits: f64, terms: &EntropyTerms) -> Result<f64> {
    independent_messages_bound(family_bits, 1.0, terms)
}

/// Per-message terms of the Reed–Solomon identification code for unlinkable
/// messages. They leak exactly nothing.
pub fn unlinkable_entropy_terms(q: u128, n: u64, k: u64) -> EntropyTerms {
    let lq = log2_u128(q);
    let ln = (n as f64).log2();
    EntropyTerms {
        h_x: ln + lq,
        h_i: k as f64 * lq,
        h_i_given_cx: (k - 1) as f64 * lq,
        h_x_given_ci: ln,
        mutual: None,
    }
}

/// Exact entropy for unlinkable messages: the whole family entropy, for every `M`.
pub fn unlinkable_entropy(q: u128, n: u64) -> Result<f64> {
    log2_family_size(q, n)
}

/// `log2 #C - M log2(1/tau)` when each identity is encoded by a `tau` fraction
/// of all possible messages.
pub fn support_size_bound(family_bits: f64, messages: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::parameter(format!("tau = {tau} outside (0, 1]")));
    }
    Ok(family_bits - messages * (1.0 / tau).log2())
}

/// [`support_size_bound`] with `tau = 1/q`: `log2 #C - M log2 q`.
pub fn symbol_leak_bound(q: u128, n: u64, messages: f64) -> Result<f64> {
    Ok(log2_family_size(q, n)? - messages * log2_u128(q))
}

/// `log2 #C - M H(x)` with `H(x) = log2 n + log2 q`; valid with no
/// independence assumption at all.
pub fn message_entropy_bound(q: u128, n: u64, messages: f64) -> Result<f64> {
    Ok(log2_family_size(q, n)? - messages * ((n as f64).log2() + log2_u128(q)))
}

fn check_repetition(n: u64, messages: u64, l: u64) -> Result<()> {
    if l == 0 || l > n {
        return Err(Error::parameter(format!("repetition l = {l} must satisfy 1 <= l <= n = {n}")));
    }
    if messages % l != 0 {
        return Err(Error::parameter(format!("l = {l} does not divide M = {messages}")));
    }
    Ok(())
}

/// Grouped entropy terms when every identity is sent exactly `l` times with
/// distinct indices.
pub fn repetition_entropy_terms(q: u128, n: u64, k: u64, messages: u64, l: u64) -> Result<EntropyTerms> {
    check_repetition(n, messages, l)?;
    let blocks = (messages / l) as f64;
    let lq = log2_u128(q);
    let mut index_bits = CompensatedSum::default();
    for j in 0..l {
        index_bits.add(((n - j) as f64).log2());
    }
    let index_bits = index_bits.value();
    EntropyTerms::new(
        blocks * (index_bits + l as f64 * lq),
        blocks * k as f64 * lq,
        if l <= k { blocks * (k - l) as f64 * lq } else { 0.0 },
        blocks * index_bits,
    )
}

/// Entropy lower bound for `M` messages in blocks of `l` repetitions: the full
/// family entropy for `l <= k`, and `log2 #C - (M/l)(l - k) log2 q` beyond.
pub fn repetition_bound(q: u128, n: u64, k: u64, messages: u64, l: u64) -> Result<f64> {
    check_repetition(n, messages, l)?;
    let family = log2_family_size(q, n)?;
    if l <= k {
        return Ok(family);
    }
    Ok(family - (messages / l) as f64 * (l - k) as f64 * log2_u128(q))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FanoEstimate {
    /// Roughly `messages` observations identify the code.
    Messages { messages: f64, ceil: u64 },
    /// Nothing leaks, so no number of messages suffices.
    Unbounded,
}

/// `M ~ log2 #C / leak`: how many messages identify the code with vanishing error.
pub fn fano_message_estimate(family_bits: f64, leak_bits: f64) -> Result<FanoEstimate> {
    if leak_bits < 0.0 || leak_bits.is_nan() {
        return Err(Error::parameter(format!("per-message leak {leak_bits} must be >= 0")));
    }
    if leak_bits == 0.0 {
        return Ok(FanoEstimate::Unbounded);
    }
    let messages = family_bits / leak_bits;
    Ok(FanoEstimate::Messages { messages, ceil: messages.ceil().max(0.0) as u64 })
}

/// The bounds that decrease linearly in `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinearBound {
    /// [`symbol_leak_bound`]
    SymbolLeak,
    /// [`message_entropy_bound`]
    MessageEntropy,
    /// [`repetition_bound`] for blocks of `l`.
    Repetition { l: u64 },
}

impl LinearBound {
    pub fn name(&self) -> &'static str {
        match self {
            LinearBound::SymbolLeak => "symbol_leak",
            LinearBound::MessageEntropy => "message_entropy",
            LinearBound::Repetition { .. } => "repetition",
        }
    }

    /// Bits lost per observed message.
    pub fn slope(&self, q: u128, n: u64, k: u64) -> Result<f64> {
        let lq = log2_u128(q);
        match *self {
            LinearBound::SymbolLeak => Ok(lq),
            LinearBound::MessageEntropy => Ok((n as f64).log2() + lq),
            LinearBound::Repetition { l } => {
                if l == 0 || l > n {
                    return Err(Error::parameter(format!("repetition l = {l} must satisfy 1 <= l <= n = {n}")));
                }
                if l <= k {
                    return Ok(0.0);
                }
                Ok((l - k) as f64 / l as f64 * lq)
            }
        }
    }
}

/// Where a linear bound reaches zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    /// Real `M` at which the bound is exactly zero.
    pub crossing: f64,
    /// Largest integer `M` at which the bound is not negative.
    pub last_informative: u64,
}

/// Solves `log2 #C - M * slope = 0`. Errors when the bound does not decrease.
pub fn threshold_m(bound: LinearBound, q: u128, n: u64, k: u64) -> Result<Threshold> {
    let slope = bound.slope(q, n, k)?;
    if !(slope > 0.0) {
        return Err(Error::parameter(format!(
            "{} bound does not decrease with M for these parameters",
            bound.name()
        )));
    }
    let crossing = log2_family_size(q, n)? / slope;
    Ok(Threshold { crossing, last_informative: crossing.floor() as u64 })
}

/// One evaluated bound, as tabulated by the command-line front end.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound: String,
    pub log2_family_size: f64,
    pub bound_bits: f64,
    pub messages: u64,
    pub l: Option<u64>,
    pub threshold: Option<Threshold>,
}

impl BoundReport {
    /// True once the bound has gone negative.
    pub fn exhausted(&self) -> bool {
        self.bound_bits < 0.0
    }
}
