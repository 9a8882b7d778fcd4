//! Line-oriented event trace: `block|kind|actor|payload-hex|sig-hex`.
//!
//! Ledger events and engine events are merged into one stream. Engine event
//! payloads are their space-separated detail text, hex encoded like every
//! other payload.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::{EngineEvent, EventKind};
use crate::ledger::{AccountId, Authority, BlockHeight, DocumentKind, LedgerEvent};

pub const TRACE_HEADER: &str = "tfcp-trace v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub block: BlockHeight,
    pub kind: String,
    pub actor: Option<AccountId>,
    pub payload: Vec<u8>,
    pub signature: Option<Vec<u8>>,
}

impl TraceRecord {
    pub fn text(kind: &str, block: BlockHeight, actor: Option<AccountId>, detail: &str) -> Self {
        Self {
            block,
            kind: kind.to_string(),
            actor,
            payload: detail.as_bytes().to_vec(),
            signature: None,
        }
    }

    /// Payload as UTF-8 text, for engine and bookkeeping records.
    pub fn detail(&self) -> Option<&str> {
        std::str::from_utf8(&self.payload).ok()
    }

    pub fn fields(&self) -> Vec<&str> {
        self.detail()
            .map(|d| d.split(' ').collect())
            .unwrap_or_default()
    }

    pub fn from_ledger(event: &LedgerEvent) -> Self {
        match event {
            LedgerEvent::AccountCreated {
                account,
                public_key,
                label,
                balance,
                block,
            } => {
                let pk = public_key.map_or("-".to_string(), |pk| hex::encode(pk.as_bytes()));
                let detail = format!("{} {} {}", balance, pk, label.as_deref().unwrap_or("-"));
                Self::text("ACCOUNT", *block, Some(*account), &detail)
            }
            LedgerEvent::Transfer(t) => {
                let detail = format!("{} {} {} {}", t.seq, t.to, t.amount, t.nonce);
                let mut r = Self::text("TRANSFER", t.block, Some(t.from), &detail);
                if let Authority::Signed(sig) = &t.authority {
                    r.signature = Some(sig.as_bytes().to_vec());
                }
                r
            }
            LedgerEvent::Publication(d) => Self {
                block: d.block,
                kind: d.kind.trace_name().to_string(),
                actor: Some(d.publisher),
                payload: d.payload.clone(),
                signature: Some(d.signature.as_bytes().to_vec()),
            },
            LedgerEvent::FreezeChanged {
                account,
                frozen,
                block,
            } => {
                let kind = if *frozen { "FREEZE" } else { "UNFREEZE" };
                Self::text(kind, *block, Some(*account), "")
            }
            LedgerEvent::BlockAdvanced { height } => Self::text("BLOCK", *height, None, ""),
        }
    }

    pub fn from_engine(event: &EngineEvent) -> Self {
        Self::text(event.kind.name(), event.block, event.actor, &event.detail)
    }

    /// Which numbered scheme step this record evidences, if any.
    pub fn scheme_step(&self) -> Option<u8> {
        if let Some(kind) = DocumentKind::from_trace_name(&self.kind) {
            return match kind {
                DocumentKind::PreWills => Some(2),
                DocumentKind::RegistrarAcceptance => Some(3),
                DocumentKind::Wills => Some(5),
                DocumentKind::Announcement => Some(6),
                DocumentKind::PublicWills => Some(8),
                DocumentKind::BailCommitment => None,
            };
        }
        match EventKind::from_name(&self.kind)? {
            EventKind::Select => Some(1),
            EventKind::Shares => Some(4),
            EventKind::Ante => Some(7),
            EventKind::RevealOpen | EventKind::Reveal | EventKind::Ack | EventKind::Abort => {
                Some(8)
            }
            _ => None,
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}|{}|{}",
            self.block,
            self.kind,
            self.actor.map_or("-".to_string(), |a| a.to_hex()),
            hex::encode(&self.payload),
            self.signature.as_ref().map_or("-".to_string(), hex::encode),
        )
    }
}

impl FromStr for TraceRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let cols: Vec<&str> = line.split('|').collect();
        let [block, kind, actor, payload, sig] = cols.as_slice() else {
            return Err(format!("expected 5 columns, found {}", cols.len()));
        };
        let block = block.parse::<u64>().map_err(|e| format!("block: {e}"))?;
        if kind.is_empty() || !kind.bytes().all(|b| b.is_ascii_uppercase() || b == b'_') {
            return Err(format!("bad kind {kind:?}"));
        }
        let actor = match *actor {
            "-" => None,
            a => Some(a.parse::<AccountId>().map_err(|e| format!("actor: {e}"))?),
        };
        let payload = hex::decode(payload).map_err(|e| format!("payload: {e}"))?;
        let signature = match *sig {
            "-" => None,
            s => Some(hex::decode(s).map_err(|e| format!("signature: {e}"))?),
        };
        Ok(Self {
            block: BlockHeight(block),
            kind: kind.to_string(),
            actor,
            payload,
            signature,
        })
    }
}

/// A header record naming the scenario and seed, then events in order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn with_header(scenario: &str, seed: u64) -> Self {
        let detail = format!("{TRACE_HEADER} {scenario} {seed}");
        Self {
            records: vec![TraceRecord::text("META", BlockHeight(0), None, &detail)],
        }
    }

    /// Interleaves ledger events with engine events by their ledger marks.
    /// `ledger_from` is the history index events start at; engine events
    /// carry absolute marks.
    pub fn append_merged(
        &mut self,
        ledger: &[LedgerEvent],
        ledger_from: usize,
        engine: &[EngineEvent],
    ) {
        let mut pending = engine.iter().peekable();
        for (offset, event) in ledger.iter().enumerate() {
            let mark = ledger_from + offset;
            while let Some(e) = pending.next_if(|e| e.ledger_mark <= mark) {
                self.records.push(TraceRecord::from_engine(e));
            }
            self.records.push(TraceRecord::from_ledger(event));
        }
        self.records.extend(pending.map(TraceRecord::from_engine));
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    /// `(scenario, seed)` from the header.
    pub fn header(&self) -> Option<(String, u64)> {
        let first = self.records.first().filter(|r| r.kind == "META")?;
        let detail = first.detail()?;
        let rest = detail.strip_prefix(TRACE_HEADER)?.trim_start();
        let (name, seed) = rest.rsplit_once(' ')?;
        Some((name.to_string(), seed.parse().ok()?))
    }

    /// Records other than the header.
    pub fn events(&self) -> &[TraceRecord] {
        match self.records.first() {
            Some(r) if r.kind == "META" => &self.records[1..],
            _ => &self.records,
        }
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| {
                l.parse().map_err(|message| TraceError {
                    line: i + 1,
                    message,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    /// True when steps 1 to 8 each appear, first occurrences in order, and
    /// the trace holds exactly one acknowledgment.
    pub fn shows_full_scheme(&self) -> bool {
        let mut first = [None; 8];
        for (i, r) in self.records.iter().enumerate() {
            if let Some(step) = r.scheme_step() {
                first[step as usize - 1].get_or_insert(i);
            }
        }
        let ordered = first.iter().all(Option::is_some) && first.windows(2).all(|w| w[0] < w[1]);
        let acks = self
            .records
            .iter()
            .filter(|r| r.kind == EventKind::Ack.name())
            .count();
        ordered && acks == 1
    }
}
