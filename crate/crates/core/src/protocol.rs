//! Challenge/response mutual identification between a reader and a contactless device.
//!
//! The reader sends a challenge `(i, P(alpha_i))` for a fresh index `i`; the
//! device checks it against its copy of `P` and answers `P'(alpha_i)`, which
//! the reader checks against its copy of `P'`. Both secrets and the evaluation
//! domain are shared by the reader and the device.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, Polynomial};
use crate::idcode::{CodeParams, EncodedMessage, IdCode};

pub type CldId = u64;

/// Secrets shared by a device and its reader.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Secrets {
    pub p: Polynomial,
    pub p_prime: Polynomial,
    pub code: IdCode,
}

impl Secrets {
    pub fn generate<R: Rng + ?Sized>(params: &CodeParams, rng: &mut R) -> Self {
        let code = IdCode::sample(params, rng);
        let p = params.field().random_poly(params.k(), rng);
        let p_prime = params.field().random_poly(params.k(), rng);
        Secrets { p, p_prime, code }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CldReply {
    Response(FieldElement),
    /// The challenge did not match `P`. Sent explicitly, so an eavesdropper sees it.
    Reject,
    /// The interrogation counter is exhausted; the device does not answer.
    Refused,
}

/// Contactless-device side of the protocol.
#[derive(Clone, Debug)]
pub struct CldState {
    secrets: Secrets,
    remaining: usize,
}

impl CldState {
    /// The counter starts at `min(n, 2048)`.
    pub fn new(params: &CodeParams, secrets: Secrets) -> Self {
        CldState { secrets, remaining: params.interrogation_cap() }
    }

    pub fn interrogations_remaining(&self) -> usize {
        self.remaining
    }

    pub fn secrets(&self) -> &Secrets {
        &self.secrets
    }

    /// Only successful interrogations decrement the counter.
    pub fn respond(&mut self, challenge: &EncodedMessage) -> CldReply {
        if self.remaining == 0 {
            return CldReply::Refused;
        }
        let Secrets { p, p_prime, code } = &self.secrets;
        let Ok(alpha) = code.alpha(challenge.index) else {
            return CldReply::Reject;
        };
        if p.eval(code.field(), alpha) != challenge.value {
            return CldReply::Reject;
        }
        self.remaining -= 1;
        CldReply::Response(p_prime.eval(code.field(), alpha))
    }
}

#[derive(Clone, Debug)]
struct ReaderEntry {
    secrets: Secrets,
    unused: Vec<usize>,
    pending: HashSet<usize>,
}

/// Reader side: one entry per registered device.
#[derive(Clone, Debug, Default)]
pub struct ReaderState {
    registry: BTreeMap<CldId, ReaderEntry>,
}

impl ReaderState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, cld_id: CldId, secrets: Secrets) {
        let unused = (1..=secrets.code.n()).collect();
        self.registry.insert(
            cld_id,
            ReaderEntry { secrets, unused, pending: HashSet::new() },
        );
    }

    pub fn unused_indices(&self, cld_id: CldId) -> Option<usize> {
        self.registry.get(&cld_id).map(|e| e.unused.len())
    }

    fn entry_mut(&mut self, cld_id: CldId) -> Result<&mut ReaderEntry> {
        self.registry
            .get_mut(&cld_id)
            .ok_or_else(|| Error::ProtocolState(format!("device {cld_id} is not registered")))
    }

    /// Draws a fresh index uniformly from those not yet used for this device.
    pub fn challenge<R: Rng + ?Sized>(&mut self, cld_id: CldId, rng: &mut R) -> Result<EncodedMessage> {
        let entry = self.entry_mut(cld_id)?;
        if entry.unused.is_empty() {
            return Err(Error::InterrogationLimit { cld_id });
        }
        let slot = rng.gen_range(0..entry.unused.len());
        let index = entry.unused.swap_remove(slot);
        entry.pending.insert(index);
        let Secrets { p, code, .. } = &entry.secrets;
        Ok(EncodedMessage::new(index, p.eval(code.field(), code.alpha(index)?)))
    }

    /// Checks a response to the challenge with index `index`, closing it.
    pub fn verify(&mut self, cld_id: CldId, index: usize, response: FieldElement) -> Result<bool> {
        let entry = self.entry_mut(cld_id)?;
        if !entry.pending.remove(&index) {
            return Err(Error::ProtocolState(format!(
                "no open challenge with index {index} for device {cld_id}"
            )));
        }
        let Secrets { p_prime, code, .. } = &entry.secrets;
        Ok(p_prime.eval(code.field(), code.alpha(index)?) == response)
    }

    /// Drops an open challenge without verifying it.
    pub fn abandon(&mut self, cld_id: CldId, index: usize) -> Result<()> {
        self.entry_mut(cld_id)?.pending.remove(&index);
        Ok(())
    }
}

/// Memoryless symmetric substitution channel acting independently on the
/// index and on the value of a message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChannelModel {
    Noiseless,
    Symmetric { eps: f64 },
}

/// Flags recording which coordinates the channel altered.
pub const NOISE_INDEX: u8 = 1;
pub const NOISE_VALUE: u8 = 2;

impl ChannelModel {
    pub fn symmetric(eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) && eps != 1.0 {
            return Err(Error::parameter(format!("channel error probability {eps} outside [0, 1]")));
        }
        Ok(if eps == 0.0 { ChannelModel::Noiseless } else { ChannelModel::Symmetric { eps } })
    }

    pub fn eps(&self) -> f64 {
        match *self {
            ChannelModel::Noiseless => 0.0,
            ChannelModel::Symmetric { eps } => eps,
        }
    }

    /// With probability `eps` replaces the value by a uniform different element
    /// and, independently, the index by a uniform different index in `1..=n`.
    /// An index cannot change when `n = 1`.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        params: &CodeParams,
        msg: EncodedMessage,
        rng: &mut R,
    ) -> (EncodedMessage, u8) {
        let eps = self.eps();
        if eps == 0.0 {
            return (msg, 0);
        }
        let mut out = msg;
        let mut flags = 0;
        if params.n() > 1 && rng.gen_bool(eps) {
            let other = rng.gen_range(1..params.n());
            out.index = if other >= msg.index { other + 1 } else { other };
            flags |= NOISE_INDEX;
        }
        let (value, value_flag) = self.apply_value(params, msg.value, rng);
        out.value = value;
        (out, flags | value_flag)
    }

    /// Noise on a bare value.
    pub fn apply_value<R: Rng + ?Sized>(
        &self,
        params: &CodeParams,
        value: FieldElement,
        rng: &mut R,
    ) -> (FieldElement, u8) {
        let eps = self.eps();
        if eps > 0.0 && rng.gen_bool(eps) {
            (params.field().random_other_element(value, rng), NOISE_VALUE)
        } else {
            (value, 0)
        }
    }

    /// `W(received | sent)` for the index coordinate.
    pub fn index_transition(&self, n: usize, sent: usize, received: usize) -> f64 {
        let eps = self.eps();
        if n == 1 {
            return if sent == received { 1.0 } else { 0.0 };
        }
        if sent == received { 1.0 - eps } else { eps / (n - 1) as f64 }
    }

    /// `W(received | sent)` for the value coordinate.
    pub fn value_transition(&self, q: u128, sent: FieldElement, received: FieldElement) -> f64 {
        let eps = self.eps();
        if sent == received { 1.0 - eps } else { eps / (q - 1) as f64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "reader_to_cld")]
    ReaderToCld,
    #[serde(rename = "cld_to_reader")]
    CldToReader,
}

/// One message as delivered by the channel.
///
/// Challenges carry `j` and `v`; responses carry only `v`; an explicit reject
/// carries neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub session_id: u64,
    pub cld_id: Option<CldId>,
    pub direction: Direction,
    pub j: Option<usize>,
    pub v: Option<u64>,
    pub noise: u8,
}

impl TranscriptRecord {
    pub fn message(&self) -> Option<EncodedMessage> {
        match (self.direction, self.j, self.v) {
            (Direction::ReaderToCld, Some(j), Some(v)) => Some(EncodedMessage::new(j, FieldElement::from_raw(v))),
            _ => None,
        }
    }
}

/// The eavesdropper's view. In linkable mode records carry the device id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    linkable: bool,
    records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn new(linkable: bool) -> Self {
        Transcript { linkable, records: Vec::new() }
    }

    pub fn is_linkable(&self) -> bool {
        self.linkable
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record, dropping the device id unless the capture is linkable.
    pub fn push(&mut self, mut record: TranscriptRecord) {
        if !self.linkable {
            record.cld_id = None;
        }
        self.records.push(record);
    }

    /// Reader-to-device messages grouped by device id, in order of first
    /// appearance. Messages without a device id form singleton groups.
    pub fn blocks(&self) -> Vec<Vec<EncodedMessage>> {
        let mut groups: Vec<Vec<EncodedMessage>> = Vec::new();
        let mut slot_of: BTreeMap<CldId, usize> = BTreeMap::new();
        for rec in &self.records {
            let Some(msg) = rec.message() else { continue };
            match rec.cld_id {
                Some(id) => {
                    let slot = *slot_of.entry(id).or_insert_with(|| {
                        groups.push(Vec::new());
                        groups.len() - 1
                    });
                    groups[slot].push(msg);
                }
                None => groups.push(vec![msg]),
            }
        }
        groups
    }

    /// The first `count` reader-to-device records with everything after them dropped.
    pub fn truncated_messages(&self, count: usize) -> Transcript {
        let mut out = Transcript::new(self.linkable);
        let mut seen = 0;
        for rec in &self.records {
            if rec.message().is_some() {
                if seen == count {
                    break;
                }
                seen += 1;
            }
            out.records.push(*rec);
        }
        out
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parses the line format written by [`Transcript::write_jsonl`]. The capture
    /// is linkable iff any record carries a device id.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Transcript> {
        let mut records = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TranscriptRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Transcript { line: n + 1, reason: e.to_string() })?;
            records.push(rec);
        }
        let linkable = records.iter().any(|r| r.cld_id.is_some());
        Ok(Transcript { linkable, records })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SessionOutcome {
    MutualAccept,
    CldReject,
    ReaderReject,
    /// The reader ran out of fresh indices or the device refused to answer.
    Limit,
}

/// One challenge/response exchange through `channel`, recording what the
/// channel delivered into `transcript`.
#[allow(clippy::too_many_arguments)]
pub fn run_session<R: Rng + ?Sized>(
    params: &CodeParams,
    reader: &mut ReaderState,
    cld: &mut CldState,
    cld_id: CldId,
    channel: &ChannelModel,
    session_id: u64,
    transcript: &mut Transcript,
    rng: &mut R,
) -> Result<SessionOutcome> {
    let challenge = match reader.challenge(cld_id, rng) {
        Ok(c) => c,
        Err(Error::InterrogationLimit { .. }) => return Ok(SessionOutcome::Limit),
        Err(e) => return Err(e),
    };
    let (delivered, noise) = channel.apply(params, challenge, rng);
    transcript.push(TranscriptRecord {
        session_id,
        cld_id: Some(cld_id),
        direction: Direction::ReaderToCld,
        j: Some(delivered.index),
        v: Some(delivered.value.value()),
        noise,
    });
    match cld.respond(&delivered) {
        CldReply::Refused => {
            reader.abandon(cld_id, challenge.index)?;
            Ok(SessionOutcome::Limit)
        }
        CldReply::Reject => {
            reader.abandon(cld_id, challenge.index)?;
            transcript.push(TranscriptRecord {
                session_id,
                cld_id: Some(cld_id),
                direction: Direction::CldToReader,
                j: None,
                v: None,
                noise: 0,
            });
            Ok(SessionOutcome::CldReject)
        }
        CldReply::Response(value) => {
            let (response, noise) = channel.apply_value(params, value, rng);
            transcript.push(TranscriptRecord {
                session_id,
                cld_id: Some(cld_id),
                direction: Direction::CldToReader,
                j: None,
                v: Some(response.value()),
                noise,
            });
            Ok(if reader.verify(cld_id, challenge.index, response)? {
                SessionOutcome::MutualAccept
            } else {
                SessionOutcome::ReaderReject
            })
        }
    }
}

/// Recomputes the outcome of a recorded session from the shared secrets.
/// Exact for noiseless transcripts, where delivered equals sent.
pub fn replay_session(secrets: &Secrets, records: &[TranscriptRecord]) -> Result<SessionOutcome> {
    let bad = |why: &str| Error::ProtocolState(format!("cannot replay session: {why}"));
    let challenge = records
        .iter()
        .find_map(TranscriptRecord::message)
        .ok_or_else(|| bad("no challenge record"))?;
    let response = records.iter().find(|r| r.direction == Direction::CldToReader);
    let Secrets { p, p_prime, code } = secrets;
    let field = code.field();
    let alpha = match code.alpha(challenge.index) {
        Ok(a) => a,
        Err(_) => return Ok(SessionOutcome::CldReject),
    };
    if p.eval(field, alpha) != challenge.value {
        return Ok(SessionOutcome::CldReject);
    }
    match response.and_then(|r| r.v) {
        None if response.is_none() => Ok(SessionOutcome::Limit),
        None => Ok(SessionOutcome::CldReject),
        Some(v) if p_prime.eval(field, alpha).value() == v => Ok(SessionOutcome::MutualAccept),
        Some(_) => Ok(SessionOutcome::ReaderReject),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SessionTally {
    pub mutual_accept: u64,
    pub cld_reject: u64,
    pub reader_reject: u64,
    pub limit: u64,
}

impl SessionTally {
    pub fn record(&mut self, outcome: SessionOutcome) {
        match outcome {
            SessionOutcome::MutualAccept => self.mutual_accept += 1,
            SessionOutcome::CldReject => self.cld_reject += 1,
            SessionOutcome::ReaderReject => self.reader_reject += 1,
            SessionOutcome::Limit => self.limit += 1,
        }
    }

    pub fn completed(&self) -> u64 {
        self.mutual_accept + self.cld_reject + self.reader_reject
    }

    /// Mutual accepts over sessions that did not hit the interrogation limit.
    pub fn acceptance_rate(&self) -> f64 {
        if self.completed() == 0 {
            return 0.0;
        }
        self.mutual_accept as f64 / self.completed() as f64
    }
}

/// How `simulate_sessions` provisions devices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DevicePolicy {
    /// A newly provisioned device for every session.
    Fresh,
    /// One device interrogated repeatedly.
    Persistent,
}

/// Runs `sessions` honest sessions, returning the tally and the captured transcript.
pub fn simulate_sessions<R: Rng + ?Sized>(
    params: &CodeParams,
    sessions: u64,
    channel: &ChannelModel,
    policy: DevicePolicy,
    linkable: bool,
    rng: &mut R,
) -> Result<(SessionTally, Transcript)> {
    let mut reader = ReaderState::new();
    let mut transcript = Transcript::new(linkable);
    let mut tally = SessionTally::default();
    let mut device: Option<(CldId, CldState)> = None;
    for session in 0..sessions {
        if policy == DevicePolicy::Fresh || device.is_none() {
            let cld_id = if policy == DevicePolicy::Fresh { session } else { 0 };
            let secrets = Secrets::generate(params, rng);
            reader.register(cld_id, secrets.clone());
            device = Some((cld_id, CldState::new(params, secrets)));
        }
        let (cld_id, cld) = device.as_mut().expect("device provisioned above");
        let outcome = run_session(params, &mut reader, cld, *cld_id, channel, session, &mut transcript, rng)?;
        tally.record(outcome);
    }
    Ok((tally, transcript))
}

/// Fraction of challenges accepted when an impostor answers with uniformly
/// random values instead of `P'(alpha_i)`.
pub fn impersonation_rate<R: Rng + ?Sized>(params: &CodeParams, trials: u64, rng: &mut R) -> Result<f64> {
    if trials == 0 {
        return Err(Error::parameter("trials must be at least 1"));
    }
    let mut reader = ReaderState::new();
    let mut accepted = 0u64;
    for _ in 0..trials {
        reader.register(0, Secrets::generate(params, rng));
        let challenge = reader.challenge(0, rng)?;
        let guess = params.field().random_element(rng);
        if reader.verify(0, challenge.index, guess)? {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / trials as f64)
}
