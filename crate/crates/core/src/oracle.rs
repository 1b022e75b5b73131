//! The eavesdropper's side: capture of encoded messages under a hidden code,
//! and the exact posterior over the whole code family by exhaustive
//! enumeration.
//!
//! The family is every ordered `n`-tuple of distinct elements of GF(q), ranked
//! lexicographically. Enumeration is only feasible for tiny fields; the budget
//! guard rejects anything larger than [`DEFAULT_BUDGET`] codes by default.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::log2_family_size;
use crate::error::{Error, Result};
use crate::field::{lagrange_eval, Field, FieldElement};
use crate::idcode::{CodeParams, EncodedMessage, IdCode};
use crate::protocol::{ChannelModel, Direction, Transcript, TranscriptRecord};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Upper limit on `q^k * n!/(n-l)!` summands per block for noisy likelihoods.
const NOISY_TERM_LIMIT: u64 = 1 << 22;

/// Log-likelihoods within this distance of the maximum count as maximal.
const MAP_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaptureMode {
    /// Every message encodes a fresh uniform polynomial.
    Unlinkable,
    /// Messages come in blocks of exactly `repetitions` encodings of one
    /// polynomial, with distinct indices inside a block.
    Linkable { repetitions: usize },
}

impl CaptureMode {
    pub fn block_len(&self) -> usize {
        match *self {
            CaptureMode::Unlinkable => 1,
            CaptureMode::Linkable { repetitions } => repetitions,
        }
    }

    fn validate(&self, params: &CodeParams, messages: usize) -> Result<()> {
        if let CaptureMode::Linkable { repetitions: l } = *self {
            if l == 0 || l > params.n() {
                return Err(Error::parameter(format!("block length l = {l} must satisfy 1 <= l <= n = {}", params.n())));
            }
            if messages % l != 0 {
                return Err(Error::parameter(format!("l = {l} does not divide M = {messages}")));
            }
        }
        Ok(())
    }
}

/// Samples a hidden code and returns only what an eavesdropper sees.
pub fn collect<R: Rng + ?Sized>(
    params: &CodeParams,
    mode: CaptureMode,
    messages: usize,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<Transcript> {
    mode.validate(params, messages)?;
    let code = IdCode::sample(params, rng);
    collect_for_code(params, &code, mode, messages, channel, rng)
}

/// As [`collect`], for a caller-chosen code.
pub fn collect_for_code<R: Rng + ?Sized>(
    params: &CodeParams,
    code: &IdCode,
    mode: CaptureMode,
    messages: usize,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<Transcript> {
    mode.validate(params, messages)?;
    let field = params.field();
    let linkable = matches!(mode, CaptureMode::Linkable { .. });
    let mut transcript = Transcript::new(linkable);
    let l = mode.block_len();
    let mut indices: Vec<usize> = (1..=params.n()).collect();
    for block in 0..messages / l {
        let p = field.random_poly(params.k(), rng);
        let chosen: Vec<usize> = if linkable {
            indices.partial_shuffle(rng, l).0.to_vec()
        } else {
            vec![code.encode(&p, rng).index]
        };
        for (t, &j) in chosen.iter().enumerate() {
            let sent = EncodedMessage::new(j, p.eval(field, code.alpha(j)?));
            let (got, noise) = channel.apply(params, sent, rng);
            transcript.push(TranscriptRecord {
                session_id: (block * l + t) as u64,
                cld_id: linkable.then_some(block as u64),
                direction: Direction::ReaderToCld,
                j: Some(got.index),
                v: Some(got.value.value()),
                noise,
            });
        }
    }
    Ok(transcript)
}

/// A block checked once against the parameters, reusable across codes.
#[derive(Clone, Debug)]
struct PreparedBlock {
    msgs: Vec<EncodedMessage>,
    /// `ln prod 1/(n - t)`
    index_log: f64,
    /// `ln q^-min(l, k)`
    value_log: f64,
}

impl PreparedBlock {
    /// Received indices may repeat only when the channel can corrupt them.
    fn new(params: &CodeParams, block: &[EncodedMessage], distinct: bool) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::parameter("empty block"));
        }
        let mut seen = HashSet::with_capacity(block.len());
        for m in block {
            if m.index == 0 || m.index > params.n() {
                return Err(Error::parameter(format!("index {} outside 1..={}", m.index, params.n())));
            }
            params.field().element(m.value.value())?;
            if distinct && !seen.insert(m.index) {
                return Err(Error::parameter(format!("index {} repeated within a block", m.index)));
            }
        }
        let n = params.n();
        let l = block.len();
        let index_log = -(0..l).map(|t| ((n - t) as f64).ln()).sum::<f64>();
        let value_log = -(l.min(params.k()) as f64) * (params.q() as f64).ln();
        Ok(PreparedBlock { msgs: block.to_vec(), index_log, value_log })
    }

    /// Noiseless `ln Pr[block | code]`; `-inf` when no polynomial of dimension
    /// `k` passes through the block's points.
    fn log_likelihood(&self, field: &Field, points: &[FieldElement], k: usize) -> Result<f64> {
        let fixed = self.msgs.len().min(k);
        let xs: Vec<FieldElement> = self.msgs[..fixed].iter().map(|m| points[m.index - 1]).collect();
        let ys: Vec<FieldElement> = self.msgs[..fixed].iter().map(|m| m.value).collect();
        for m in &self.msgs[fixed..] {
            if lagrange_eval(field, &xs, &ys, points[m.index - 1])? != m.value {
                return Ok(f64::NEG_INFINITY);
            }
        }
        Ok(self.index_log + self.value_log)
    }
}

/// `Pr[block | code]` on the noiseless channel, for a uniform polynomial and
/// indices drawn without replacement.
pub fn block_likelihood(params: &CodeParams, code: &IdCode, block: &[EncodedMessage]) -> Result<f64> {
    Ok(block_log_likelihood(params, code, block)?.exp())
}

/// Natural log of [`block_likelihood`]. Stays finite where the probability underflows.
pub fn block_log_likelihood(params: &CodeParams, code: &IdCode, block: &[EncodedMessage]) -> Result<f64> {
    PreparedBlock::new(params, block, true)?.log_likelihood(params.field(), code.points(), params.k())
}

/// `Pr[delivered block | code]` through `channel`, summing over every sent
/// polynomial and every ordered choice of distinct sent indices.
pub fn noisy_block_likelihood(
    params: &CodeParams,
    code: &IdCode,
    block: &[EncodedMessage],
    channel: &ChannelModel,
) -> Result<f64> {
    let prepared = PreparedBlock::new(params, block, channel.eps() == 0.0)?;
    let table = EvaluationTable::new(params)?;
    check_noisy_cost(params, block.len())?;
    Ok(noisy_likelihood(params, &table, code.points(), &prepared.msgs, channel))
}

fn check_noisy_cost(params: &CodeParams, l: usize) -> Result<()> {
    let polys = (params.q() as u64).checked_pow(params.k() as u32);
    let tuples = (0..l).try_fold(1u64, |acc, t| acc.checked_mul((params.n() - t) as u64));
    match (polys, tuples) {
        (Some(a), Some(b)) if a.saturating_mul(b) <= NOISY_TERM_LIMIT => Ok(()),
        _ => Err(Error::parameter(format!(
            "noisy likelihood for q = {}, k = {}, l = {l} needs more than {NOISY_TERM_LIMIT} terms per block",
            params.q(),
            params.k()
        ))),
    }
}

/// Every polynomial of dimension `k` as a coefficient list.
struct EvaluationTable {
    polys: Vec<Vec<FieldElement>>,
}

impl EvaluationTable {
    fn new(params: &CodeParams) -> Result<Self> {
        let q = params.q() as u64;
        let count = q
            .checked_pow(params.k() as u32)
            .filter(|&c| c <= NOISY_TERM_LIMIT)
            .ok_or_else(|| Error::parameter("too many polynomials to enumerate"))?;
        let polys = (0..count)
            .map(|mut idx| {
                (0..params.k())
                    .map(|_| {
                        let c = idx % q;
                        idx /= q;
                        FieldElement::from_raw(c)
                    })
                    .collect()
            })
            .collect();
        Ok(EvaluationTable { polys })
    }
}

fn noisy_likelihood(
    params: &CodeParams,
    table: &EvaluationTable,
    points: &[FieldElement],
    block: &[EncodedMessage],
    channel: &ChannelModel,
) -> f64 {
    let field = params.field();
    let n = params.n();
    let q = params.q();
    let l = block.len();
    let poly_weight = 1.0 / table.polys.len() as f64;
    let index_weight: f64 = (0..l).map(|t| 1.0 / (n - t) as f64).product();
    let mut total = 0.0;
    let mut values = vec![FieldElement::ZERO; n];
    let mut chosen = Vec::with_capacity(l);
    let mut used = vec![false; n];
    for coeffs in &table.polys {
        for (i, &a) in points.iter().enumerate() {
            values[i] = coeffs.iter().rev().fold(FieldElement::ZERO, |acc, &c| field.add(field.mul(acc, a), c));
        }
        let mut sum = 0.0;
        sum_index_tuples(n, l, &mut chosen, &mut used, &mut |sent: &[usize]| {
            let mut w = 1.0;
            for (t, &j) in sent.iter().enumerate() {
                w *= channel.index_transition(n, j + 1, block[t].index)
                    * channel.value_transition(q, values[j], block[t].value);
            }
            sum += w;
        });
        total += poly_weight * index_weight * sum;
    }
    total
}

fn sum_index_tuples(n: usize, l: usize, chosen: &mut Vec<usize>, used: &mut [bool], f: &mut dyn FnMut(&[usize])) {
    if chosen.len() == l {
        f(chosen);
        return;
    }
    for j in 0..n {
        if !used[j] {
            used[j] = true;
            chosen.push(j);
            sum_index_tuples(n, l, chosen, used, f);
            chosen.pop();
            used[j] = false;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorOptions {
    pub budget: u64,
    pub channel: ChannelModel,
}

impl Default for PosteriorOptions {
    fn default() -> Self {
        PosteriorOptions { budget: DEFAULT_BUDGET, channel: ChannelModel::Noiseless }
    }
}

/// Summary of the posterior over the code family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub family_size: u64,
    pub prior_bits: f64,
    pub posterior_bits: f64,
    /// Codes with nonzero posterior probability.
    pub consistent_code_count: u64,
    pub map_size: u64,
    /// Sum of the normalised posterior, `1` up to rounding.
    pub total_mass: f64,
    /// Lexicographic ranks of the maximum-a-posteriori codes.
    #[serde(skip)]
    pub map_ranks: Vec<u64>,
}

/// `C(q, n) n!` if it fits in a `u128`.
pub fn family_size(q: u128, n: usize) -> Option<u128> {
    (0..n as u128).try_fold(1u128, |acc, j| acc.checked_mul(q.checked_sub(j)?))
}

fn checked_family(params: &CodeParams, budget: u64) -> Result<u64> {
    let size = family_size(params.q(), params.n());
    match size {
        Some(s) if s <= u128::from(budget) => Ok(s as u64),
        _ => Err(Error::Budget {
            family_bits: log2_family_size(params.q(), params.n() as u64)?,
            family_size: size,
            budget,
        }),
    }
}

/// Log-likelihood of every code in the family, in rank order.
pub fn family_log_likelihoods(
    params: &CodeParams,
    blocks: &[Vec<EncodedMessage>],
    options: &PosteriorOptions,
) -> Result<Vec<f64>> {
    checked_family(params, options.budget)?;
    let noisy = options.channel.eps() > 0.0;
    let prepared = blocks.iter().map(|b| PreparedBlock::new(params, b, !noisy)).collect::<Result<Vec<_>>>()?;
    let table = if noisy {
        for b in &prepared {
            check_noisy_cost(params, b.msgs.len())?;
        }
        Some(EvaluationTable::new(params)?)
    } else {
        None
    };
    let q = params.q() as u64;
    let n = params.n();
    let field = *params.field();
    let per_first: Vec<Result<Vec<f64>>> = (0..q)
        .into_par_iter()
        .map(|first| {
            let mut out = Vec::new();
            let mut points = vec![FieldElement::from_raw(first)];
            let mut used = vec![false; q as usize];
            used[first as usize] = true;
            let mut failure = None;
            enumerate_suffixes(q, n, &mut points, &mut used, &mut |pts| {
                let mut total = 0.0;
                for b in &prepared {
                    let ll = match &table {
                        Some(t) => noisy_likelihood(params, t, pts, &b.msgs, &options.channel).ln(),
                        None => match b.log_likelihood(&field, pts, params.k()) {
                            Ok(v) => v,
                            Err(e) => {
                                failure.get_or_insert(e);
                                f64::NEG_INFINITY
                            }
                        },
                    };
                    total += ll;
                    if total == f64::NEG_INFINITY {
                        break;
                    }
                }
                out.push(total);
            });
            match failure {
                Some(e) => Err(e),
                None => Ok(out),
            }
        })
        .collect();
    let mut all = Vec::new();
    for chunk in per_first {
        all.extend(chunk?);
    }
    Ok(all)
}

fn enumerate_suffixes(q: u64, n: usize, points: &mut Vec<FieldElement>, used: &mut [bool], f: &mut dyn FnMut(&[FieldElement])) {
    if points.len() == n {
        f(points);
        return;
    }
    for a in 0..q {
        if !used[a as usize] {
            used[a as usize] = true;
            points.push(FieldElement::from_raw(a));
            enumerate_suffixes(q, n, points, used, f);
            points.pop();
            used[a as usize] = false;
        }
    }
}

/// Normalised posterior probabilities in rank order, computed by max-shifting
/// the log-likelihoods against a uniform prior.
pub fn posterior_distribution(log_likelihoods: &[f64]) -> Result<Vec<f64>> {
    let max = log_likelihoods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Domain("transcript has zero likelihood under every code".into()));
    }
    let weights: Vec<f64> = log_likelihoods.iter().map(|&ll| (ll - max).exp()).collect();
    let z = neumaier_sum(weights.iter().copied());
    Ok(weights.into_iter().map(|w| w / z).collect())
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exact `H(C | transcript)` by enumerating the whole family.
pub fn exact_posterior(
    params: &CodeParams,
    blocks: &[Vec<EncodedMessage>],
    options: &PosteriorOptions,
) -> Result<PosteriorReport> {
    let size = checked_family(params, options.budget)?;
    let lls = family_log_likelihoods(params, blocks, options)?;
    let probs = posterior_distribution(&lls)?;
    let max = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let posterior_bits = -neumaier_sum(probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()));
    let map_ranks: Vec<u64> = lls
        .iter()
        .enumerate()
        .filter(|(_, ll)| **ll >= max - MAP_TOLERANCE)
        .map(|(r, _)| r as u64)
        .collect();
    Ok(PosteriorReport {
        family_size: size,
        prior_bits: (size as f64).log2(),
        posterior_bits: posterior_bits.max(0.0),
        consistent_code_count: probs.iter().filter(|&&p| p > 0.0).count() as u64,
        map_size: map_ranks.len() as u64,
        total_mass: neumaier_sum(probs.iter().copied()),
        map_ranks,
    })
}

/// The maximum-a-posteriori codes of a report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapGuess {
    params: CodeParams,
    ranks: Vec<u64>,
}

impl MapGuess {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn contains(&self, code: &IdCode) -> bool {
        self.ranks.binary_search(&code_rank(&self.params, code)).is_ok()
    }

    pub fn codes(&self) -> impl Iterator<Item = IdCode> + '_ {
        self.ranks.iter().map(|&r| code_at_rank(&self.params, r).expect("rank from enumeration"))
    }
}

pub fn map_guess(params: &CodeParams, report: &PosteriorReport) -> MapGuess {
    MapGuess { params: *params, ranks: report.map_ranks.clone() }
}

fn falling(from: u64, count: usize) -> u64 {
    (0..count as u64).map(|j| from - j).product()
}

/// Lexicographic rank of a code among all ordered distinct tuples.
pub fn code_rank(params: &CodeParams, code: &IdCode) -> u64 {
    let q = params.q() as u64;
    let n = params.n();
    let mut rank = 0u64;
    for (t, a) in code.points().iter().enumerate() {
        let smaller_unused = a.value() - code.points()[..t].iter().filter(|b| b.value() < a.value()).count() as u64;
        rank += smaller_unused * falling(q - t as u64 - 1, n - t - 1);
    }
    rank
}

pub fn code_at_rank(params: &CodeParams, mut rank: u64) -> Result<IdCode> {
    let q = params.q() as u64;
    let n = params.n();
    let mut remaining: Vec<u64> = (0..q).collect();
    let mut points = Vec::with_capacity(n);
    for t in 0..n {
        let block = falling(q - t as u64 - 1, n - t - 1);
        let slot = (rank / block) as usize;
        if slot >= remaining.len() {
            return Err(Error::parameter(format!("rank outside the family of size {}", falling(q, n))));
        }
        rank %= block;
        points.push(FieldElement::from_raw(remaining.remove(slot)));
    }
    IdCode::new(params, points)
}

/// One row of the results file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub l: usize,
    pub prior_bits: f64,
    pub posterior_bits: f64,
    pub bound_bits: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::repetition_bound;
    use crate::seeded_rng;

    fn params(q: u64, n: usize, k: usize) -> CodeParams {
        CodeParams::new(Field::prime(q).unwrap(), n, k).unwrap()
    }

    fn fe(v: u64) -> FieldElement {
        FieldElement::from_raw(v)
    }

    fn msg(j: usize, v: u64) -> EncodedMessage {
        EncodedMessage::new(j, fe(v))
    }

    #[test]
    fn capture_shapes() {
        let p = params(5, 3, 2);
        let mut rng = seeded_rng(1);
        let t = collect(&p, CaptureMode::Unlinkable, 0, &ChannelModel::Noiseless, &mut rng).unwrap();
        assert!(t.is_empty());
        let t = collect(&p, CaptureMode::Linkable { repetitions: 3 }, 6, &ChannelModel::Noiseless, &mut rng).unwrap();
        let blocks = t.blocks();
        assert_eq!(blocks.len(), 2);
        for b in blocks {
            let idx: HashSet<_> = b.iter().map(|m| m.index).collect();
            assert_eq!(idx.len(), 3);
        }
        assert!(collect(&p, CaptureMode::Linkable { repetitions: 4 }, 4, &ChannelModel::Noiseless, &mut rng).is_err());
        assert!(collect(&p, CaptureMode::Linkable { repetitions: 2 }, 3, &ChannelModel::Noiseless, &mut rng).is_err());
    }

    #[test]
    fn linkable_blocks_of_one_look_unlinkable() {
        // index and value marginals under both modes, chi-square homogeneity
        let p = params(5, 3, 2);
        let mut rng = seeded_rng(2);
        let code = IdCode::sample(&p, &mut rng);
        let m = 30_000;
        let mut tables = [[0f64; 15]; 2];
        for (slot, mode) in [CaptureMode::Unlinkable, CaptureMode::Linkable { repetitions: 1 }].into_iter().enumerate() {
            let t = collect_for_code(&p, &code, mode, m, &ChannelModel::Noiseless, &mut rng).unwrap();
            for b in t.blocks() {
                assert_eq!(b.len(), 1);
                tables[slot][(b[0].index - 1) * 5 + b[0].value.value() as usize] += 1.0;
            }
        }
        let mut chi2 = 0.0;
        for cell in 0..15 {
            let total = tables[0][cell] + tables[1][cell];
            for row in &tables {
                let e = total / 2.0;
                chi2 += (row[cell] - e).powi(2) / e;
            }
        }
        // 14 degrees of freedom; 99.99th percentile about 39
        assert!(chi2 < 39.0, "chi2 {chi2}");
    }

    #[test]
    fn single_point_likelihood() {
        let p = params(7, 4, 2);
        let code = IdCode::sample(&p, &mut seeded_rng(3));
        let l = block_likelihood(&p, &code, &[msg(2, 6)]).unwrap();
        assert!((l - 1.0 / 28.0).abs() < 1e-15);
    }

    #[test]
    fn three_point_block_on_and_off_the_line() {
        let p = params(5, 3, 2);
        // code (0, 1, 2): points (0,1), (1,3), (2,0) lie on v = 1 + 2a
        let on_line = IdCode::new(&p, vec![fe(0), fe(1), fe(2)]).unwrap();
        let block = [msg(1, 1), msg(2, 3), msg(3, 0)];
        let expected = (1.0 / 6.0) * 5f64.powi(-2);
        assert!((block_likelihood(&p, &on_line, &block).unwrap() - expected).abs() < 1e-15);
        // code (0, 1, 3): 1 + 2*3 = 2 != 0
        let off_line = IdCode::new(&p, vec![fe(0), fe(1), fe(3)]).unwrap();
        assert_eq!(block_likelihood(&p, &off_line, &block).unwrap(), 0.0);
        assert!(block_likelihood(&p, &on_line, &[msg(1, 1), msg(1, 1)]).is_err());
    }

    /// Counts, for every code, the polynomials that reproduce the block, and
    /// compares with the closed-form likelihood.
    #[test]
    fn closed_form_likelihood_matches_polynomial_enumeration() {
        let p = params(5, 4, 2);
        let mut rng = seeded_rng(4);
        for l in 1..=4 {
            for _ in 0..30 {
                let truth = IdCode::sample(&p, &mut rng);
                let t = collect_for_code(&p, &truth, CaptureMode::Linkable { repetitions: l }, l, &ChannelModel::Noiseless, &mut rng)
                    .unwrap();
                let block = &t.blocks()[0];
                let other = IdCode::sample(&p, &mut rng);
                for code in [&truth, &other] {
                    let closed = block_likelihood(&p, code, block).unwrap();
                    let enumerated = noisy_block_likelihood(&p, code, block, &ChannelModel::Noiseless).unwrap();
                    assert!((closed - enumerated).abs() < 1e-12, "l={l} closed={closed} enum={enumerated}");
                }
                assert!(block_likelihood(&p, &truth, block).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn noisy_likelihood_sums_to_one_over_delivered_blocks() {
        let p = params(5, 3, 2);
        let code = IdCode::sample(&p, &mut seeded_rng(5));
        let ch = ChannelModel::symmetric(0.2).unwrap();
        // singletons: every (j, v) delivered with probability 1/(n q)
        let mut total = 0.0;
        for j in 1..=3 {
            for v in 0..5 {
                let x = noisy_block_likelihood(&p, &code, &[msg(j, v)], &ch).unwrap();
                assert!((x - 1.0 / 15.0).abs() < 1e-12);
                total += x;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unlinkable_posterior_equals_prior() {
        let p = params(5, 3, 2);
        let mut rng = seeded_rng(6);
        for m in [0, 1, 7, 20] {
            let t = collect(&p, CaptureMode::Unlinkable, m, &ChannelModel::Noiseless, &mut rng).unwrap();
            let report = exact_posterior(&p, &t.blocks(), &PosteriorOptions::default()).unwrap();
            assert_eq!(report.family_size, 60);
            assert!((report.posterior_bits - 60f64.log2()).abs() < 1e-9);
            assert!((report.prior_bits - 5.906_890_595_608_519).abs() < 1e-12);
            assert_eq!(report.map_size, 60);
            assert_eq!(report.consistent_code_count, 60);
            assert!((report.total_mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn long_blocks_leak_information_but_respect_the_bound() {
        let p = params(5, 3, 2);
        let mut rng = seeded_rng(7);
        let mut strict = 0;
        for _ in 0..40 {
            let code = IdCode::sample(&p, &mut rng);
            let t = collect_for_code(&p, &code, CaptureMode::Linkable { repetitions: 3 }, 3, &ChannelModel::Noiseless, &mut rng)
                .unwrap();
            let report = exact_posterior(&p, &t.blocks(), &PosteriorOptions::default()).unwrap();
            let bound = repetition_bound(5, 3, 2, 3, 3).unwrap();
            assert!(report.posterior_bits >= bound - 1e-9, "{} < {bound}", report.posterior_bits);
            assert!(report.posterior_bits <= report.prior_bits + 1e-12);
            if report.posterior_bits < report.prior_bits - 1e-9 {
                strict += 1;
            }
            let guess = map_guess(&p, &report);
            assert!(guess.contains(&code));
            assert_eq!(guess.len() as u64, report.consistent_code_count);
        }
        assert!(strict > 0);
    }

    #[test]
    fn empty_transcript_guess_is_whole_family() {
        let p = params(5, 3, 2);
        let report = exact_posterior(&p, &[], &PosteriorOptions::default()).unwrap();
        assert_eq!(report.posterior_bits, report.prior_bits);
        let guess = map_guess(&p, &report);
        assert_eq!(guess.len(), 60);
        assert_eq!(guess.codes().collect::<HashSet<_>>().len(), 60);
    }

    #[test]
    fn budget_guard_reports_family_size() {
        let p = params(7, 4, 2);
        let opts = PosteriorOptions { budget: 839, ..Default::default() };
        match exact_posterior(&p, &[], &opts) {
            Err(Error::Budget { family_size, family_bits, .. }) => {
                assert_eq!(family_size, Some(840));
                assert!((family_bits - 840f64.log2()).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
        match exact_posterior(&CodeParams::rfid_2_64(), &[], &PosteriorOptions::default()) {
            Err(Error::Budget { family_size, family_bits, .. }) => {
                assert_eq!(family_size, None);
                assert!((family_bits - 131_072.0).abs() < 1e-4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank_round_trip_is_lexicographic() {
        let p = params(5, 3, 2);
        let mut prev: Option<Vec<u64>> = None;
        for r in 0..60 {
            let code = code_at_rank(&p, r).unwrap();
            assert_eq!(code_rank(&p, &code), r);
            let vals: Vec<u64> = code.points().iter().map(|a| a.value()).collect();
            if let Some(prev) = prev {
                assert!(prev < vals);
            }
            prev = Some(vals);
        }
        assert!(code_at_rank(&p, 60).is_err());
    }

    #[test]
    fn enumeration_order_matches_rank() {
        let p = params(5, 3, 2);
        let code = IdCode::new(&p, vec![fe(4), fe(0), fe(2)]).unwrap();
        let block = [msg(1, 4), msg(2, 0), msg(3, 2)];
        // block on v = alpha only for codes consistent with that line
        let lls = family_log_likelihoods(&p, &[block.to_vec()], &PosteriorOptions::default()).unwrap();
        let r = code_rank(&p, &code) as usize;
        assert!(lls[r].is_finite());
        for (rank, ll) in lls.iter().enumerate() {
            let c = code_at_rank(&p, rank as u64).unwrap();
            assert_eq!(ll.is_finite(), block_likelihood(&p, &c, &block).unwrap() > 0.0);
        }
    }

    #[test]
    fn noise_keeps_truth_possible() {
        let p = params(5, 3, 2);
        let mut rng = seeded_rng(8);
        let ch = ChannelModel::symmetric(0.3).unwrap();
        let code = IdCode::sample(&p, &mut rng);
        let t = collect_for_code(&p, &code, CaptureMode::Linkable { repetitions: 3 }, 3, &ch, &mut rng).unwrap();
        let opts = PosteriorOptions { channel: ch, ..Default::default() };
        let lls = family_log_likelihoods(&p, &t.blocks(), &opts).unwrap();
        assert!(lls.iter().all(|ll| ll.is_finite()));
        let report = exact_posterior(&p, &t.blocks(), &opts).unwrap();
        assert_eq!(report.consistent_code_count, 60);
    }

    #[test]
    fn noise_raises_average_posterior_entropy() {
        let p = params(5, 3, 2);
        let mode = CaptureMode::Linkable { repetitions: 3 };
        let noisy = ChannelModel::symmetric(0.3).unwrap();
        let mut clean_total = 0.0;
        let mut noisy_total = 0.0;
        for seed in 0..30 {
            let mut rng = seeded_rng(100 + seed);
            let code = IdCode::sample(&p, &mut rng);
            let t = collect_for_code(&p, &code, mode, 6, &ChannelModel::Noiseless, &mut rng).unwrap();
            clean_total += exact_posterior(&p, &t.blocks(), &PosteriorOptions::default()).unwrap().posterior_bits;
            let t = collect_for_code(&p, &code, mode, 6, &noisy, &mut rng).unwrap();
            let opts = PosteriorOptions { channel: noisy, ..Default::default() };
            noisy_total += exact_posterior(&p, &t.blocks(), &opts).unwrap().posterior_bits;
        }
        assert!(noisy_total > clean_total, "noisy {noisy_total} clean {clean_total}");
    }
}
