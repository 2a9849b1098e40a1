//! Messages, the cost ledger, and the metered channel every protocol talks
//! through.

use crate::declist::RuleTriplet;
use crate::error::{Error, Result};
use crate::model::{Hypothesis, LabeledExample, PartyId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_PRECISION_BITS: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Boolean,
    Real,
}

/// What the channel needs to size a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub kind: FeatureKind,
    pub dim: usize,
    pub precision_bits: u32,
}

impl Encoding {
    pub fn boolean(n: usize) -> Self {
        Self {
            kind: FeatureKind::Boolean,
            dim: n,
            precision_bits: DEFAULT_PRECISION_BITS,
        }
    }

    pub fn real(d: usize, precision_bits: u32) -> Self {
        Self {
            kind: FeatureKind::Real,
            dim: d,
            precision_bits,
        }
    }

    /// Bits needed to name a rule over `dim` variables.
    pub fn rule_bits(&self) -> u64 {
        RuleTriplet::encoded_bits(self.dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Message {
    Example(LabeledExample),
    Hypothesis(Hypothesis),
    /// Opaque payload with an explicit length in bits.
    Bits { payload: Vec<u8>, len: u64 },
    /// Integer sent in exactly `width` bits.
    Count { value: u64, width: u32 },
    Rule(RuleTriplet),
    Halt,
}

impl Message {
    pub fn count(value: u64, width: u32) -> Self {
        Message::Count { value, width }
    }

    pub fn encoded_bits(&self, enc: &Encoding) -> u64 {
        match self {
            Message::Example(e) => match enc.kind {
                FeatureKind::Boolean => e.features.len() as u64 + 1,
                FeatureKind::Real => e.features.len() as u64 * enc.precision_bits as u64 + 1,
            },
            Message::Hypothesis(h) => h.encoded_bits(enc.precision_bits),
            Message::Bits { len, .. } => *len,
            Message::Count { width, .. } => *width as u64,
            Message::Rule(_) => enc.rule_bits(),
            Message::Halt => 1,
        }
    }

    fn check(&self, enc: &Encoding) -> Result<()> {
        match self {
            Message::Count { value, width } => {
                if *width == 0 || *width > 64 || (*width < 64 && *value >> *width != 0) {
                    return Err(Error::ProtocolViolation(format!(
                        "count {value} does not fit in {width} bits"
                    )));
                }
            }
            Message::Example(e) if e.features.len() != enc.dim => {
                return Err(Error::DimensionMismatch {
                    expected: enc.dim,
                    found: e.features.len(),
                })
            }
            Message::Rule(r) if r.j > enc.dim => {
                return Err(Error::ProtocolViolation(format!(
                    "rule names variable {} of {}",
                    r.j, enc.dim
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncModel {
    Asynchronous,
    /// One broadcast per time slot; a slot ends at each round advance.
    LockSynchronous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipient {
    To(PartyId),
    Broadcast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Round,
    MetaRound,
}

/// Exact communication counters for one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub bits: u64,
    pub examples: u64,
    pub hypotheses: u64,
    pub rounds: u64,
    pub meta_rounds: u64,
    /// Bits sent by each party.
    pub per_player: BTreeMap<PartyId, u64>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Charges one message of `bits` from `from`.
    pub fn charge(&mut self, from: PartyId, msg: &Message, bits: u64) {
        self.bits += bits;
        *self.per_player.entry(from).or_insert(0) += bits;
        match msg {
            Message::Example(_) => self.examples += 1,
            Message::Hypothesis(_) => self.hypotheses += 1,
            _ => {}
        }
    }

    pub fn advance(&mut self, kind: RoundKind) {
        match kind {
            RoundKind::Round => self.rounds += 1,
            RoundKind::MetaRound => self.meta_rounds += 1,
        }
    }

    /// Counter-wise sum, used when a search runs a protocol several times.
    pub fn absorb(&mut self, other: &CostLedger) {
        self.bits += other.bits;
        self.examples += other.examples;
        self.hypotheses += other.hypotheses;
        self.rounds += other.rounds;
        self.meta_rounds += other.meta_rounds;
        for (p, b) in &other.per_player {
            *self.per_player.entry(*p).or_insert(0) += b;
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("ledger serializes")
    }
}

/// One entry of a channel's replayable history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEntry {
    Send {
        from: PartyId,
        to: Recipient,
        msg: Message,
    },
    Advance {
        kind: RoundKind,
    },
}

/// Rebuilds a ledger from a trace.
pub fn replay(trace: &[TraceEntry], enc: &Encoding) -> CostLedger {
    let mut ledger = CostLedger::new();
    for entry in trace {
        match entry {
            TraceEntry::Send { from, msg, .. } => ledger.charge(*from, msg, msg.encoded_bits(enc)),
            TraceEntry::Advance { kind } => ledger.advance(*kind),
        }
    }
    ledger
}

/// The metered channel among `k` players and an optional center.
#[derive(Clone, Debug)]
pub struct Channel {
    k: usize,
    has_center: bool,
    enc: Encoding,
    sync: SyncModel,
    slot_taken: bool,
    ledger: CostLedger,
    trace: Vec<TraceEntry>,
}

impl Channel {
    pub fn new(k: usize, has_center: bool, enc: Encoding) -> Self {
        Self {
            k,
            has_center,
            enc,
            sync: SyncModel::Asynchronous,
            slot_taken: false,
            ledger: CostLedger::new(),
            trace: Vec::new(),
        }
    }

    pub fn with_sync(mut self, sync: SyncModel) -> Self {
        self.sync = sync;
        self
    }

    pub fn encoding(&self) -> &Encoding {
        &self.enc
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    fn check_party(&self, p: PartyId) -> Result<()> {
        match p {
            PartyId::Player(i) if i < self.k => Ok(()),
            PartyId::Center if self.has_center => Ok(()),
            _ => Err(Error::ProtocolViolation(format!("unknown party {p}"))),
        }
    }

    /// Charges `msg` and returns its size. A broadcast is charged once.
    pub fn send(&mut self, from: PartyId, to: Recipient, msg: Message) -> Result<u64> {
        self.check_party(from)?;
        if let Recipient::To(p) = to {
            self.check_party(p)?;
        }
        msg.check(&self.enc)?;
        if self.sync == SyncModel::LockSynchronous && to == Recipient::Broadcast {
            if self.slot_taken {
                return Err(Error::ProtocolViolation(
                    "second broadcast in one lock-synchronous slot".into(),
                ));
            }
            self.slot_taken = true;
        }
        let bits = msg.encoded_bits(&self.enc);
        self.ledger.charge(from, &msg, bits);
        self.trace.push(TraceEntry::Send { from, to, msg });
        Ok(bits)
    }

    pub fn broadcast(&mut self, from: PartyId, msg: Message) -> Result<u64> {
        self.send(from, Recipient::Broadcast, msg)
    }

    pub fn to_center(&mut self, from: PartyId, msg: Message) -> Result<u64> {
        self.send(from, Recipient::To(PartyId::Center), msg)
    }

    /// Advances the named counter; a round advance also opens a new slot.
    pub fn advance(&mut self, kind: RoundKind) {
        if kind == RoundKind::Round {
            self.slot_taken = false;
        }
        self.ledger.advance(kind);
        self.trace.push(TraceEntry::Advance { kind });
    }

    pub fn advance_round(&mut self) {
        self.advance(RoundKind::Round);
    }

    pub fn advance_meta_round(&mut self) {
        self.advance(RoundKind::MetaRound);
    }

    pub fn into_parts(self) -> (CostLedger, Vec<TraceEntry>) {
        (self.ledger, self.trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;

    #[test]
    fn message_sizes() {
        let b = Encoding::boolean(20);
        let ex = Message::Example(LabeledExample::new(vec![0.0; 20], Label::Pos));
        assert_eq!(ex.encoded_bits(&b), 21);
        assert_eq!(Message::Rule(RuleTriplet::else_rule(true)).encoded_bits(&Encoding::boolean(50)), 8);
        assert_eq!(Message::Halt.encoded_bits(&b), 1);
        let r = Encoding::real(3, 10);
        let ex = Message::Example(LabeledExample::new(vec![0.0; 3], Label::Neg));
        assert_eq!(ex.encoded_bits(&r), 31);
    }

    #[test]
    fn halt_only_charges_bits() {
        let mut ch = Channel::new(2, true, Encoding::boolean(4));
        ch.broadcast(PartyId::Player(0), Message::Halt).unwrap();
        let l = ch.ledger();
        assert_eq!((l.bits, l.examples, l.hypotheses, l.rounds), (1, 0, 0, 0));
    }

    #[test]
    fn counts_must_fit() {
        let mut ch = Channel::new(1, false, Encoding::boolean(4));
        assert!(ch.broadcast(PartyId::Player(0), Message::count(8, 3)).is_err());
        assert_eq!(ch.broadcast(PartyId::Player(0), Message::count(7, 3)).unwrap(), 3);
        assert!(ch.broadcast(PartyId::Player(0), Message::count(u64::MAX, 64)).is_ok());
    }

    #[test]
    fn lock_sync_allows_one_broadcast_per_slot() {
        let mut ch = Channel::new(2, false, Encoding::boolean(4)).with_sync(SyncModel::LockSynchronous);
        ch.broadcast(PartyId::Player(0), Message::Halt).unwrap();
        assert!(matches!(
            ch.broadcast(PartyId::Player(1), Message::Halt),
            Err(Error::ProtocolViolation(_))
        ));
        ch.advance_round();
        ch.broadcast(PartyId::Player(1), Message::Halt).unwrap();
    }

    #[test]
    fn unknown_parties_are_rejected() {
        let mut ch = Channel::new(2, false, Encoding::boolean(4));
        assert!(ch.to_center(PartyId::Player(0), Message::Halt).is_err());
        assert!(ch.broadcast(PartyId::Player(2), Message::Halt).is_err());
    }

    #[test]
    fn rounds_and_meta_rounds() {
        let mut ch = Channel::new(1, false, Encoding::boolean(1));
        ch.advance_round();
        for _ in 0..3 {
            ch.advance_meta_round();
        }
        assert_eq!((ch.ledger().rounds, ch.ledger().meta_rounds), (1, 3));
    }

    #[test]
    fn ledger_json_keys() {
        let mut ch = Channel::new(1, false, Encoding::boolean(1));
        ch.broadcast(PartyId::Player(0), Message::Halt).unwrap();
        let v = ch.ledger().to_json();
        for key in ["bits", "examples", "hypotheses", "rounds", "meta_rounds", "per_player"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["per_player"]["p0"], 1);
    }
}
