//! Scenario description and its text format.
//!
//! ```text
//! tfcp-scenario v1
//! name = happy-path
//! seed = 7
//!
//! [network]
//! immediate_fee_fraction = 1/4
//!
//! [actors]
//! alice donor 1000 name="Alice Liddell" death=20 span=2
//! r1 registrar 1000 bail=200
//! w1 witness 500 target=alice ante=60 after_death=1
//!
//! [schedule]
//! 0 alice open
//! ```
//!
//! Top-level keys: `name`, `seed`, `max_blocks`. Network keys: `min_bail`,
//! `immediate_fee_fraction`, `default_x`, `default_span` (`deliberation` or a
//! block count), `min_registrar_fee`, `publication_fee`.
//!
//! Actor lines are `<name> <role> <balance> [key=value ...]`. Roles and keys:
//!
//! | role                   | keys |
//! |------------------------|------|
//! | `donor`                | `name`, `death` (block or `never`), `responsive`, `react`, `careless`, `deposit`, `t`, `fee`, `threshold`, `witness_fees`, `deliberation`, `x`, `span`, `registrars` (`any` or comma list of actor names), `heritage` |
//! | `registrar`            | `bail`, `expiry`, `reveal` (`honest`, `silent`, `corrupt`), `reveal_delay`, `accept` |
//! | `witness`, `attacker-whale` | `target`, `ante`, and one of `after_death` or `at` |
//! | `attacker-keytransfer` | `victim`, `move_after`, `sweep` |
//! | `observer`             | none |
//!
//! Schedule lines are `<block> <actor> <action> [args]` with actions
//! `open`, `die`, `move`, `ante <amount>` and `transfer <actor> <amount>`.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::incentives::{Fraction, NetworkParams};
use crate::ledger::Coins;

pub const SCENARIO_HEADER: &str = "tfcp-scenario v1";
pub const DEFAULT_MAX_BLOCKS: u64 = 5_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub max_blocks: u64,
    pub network: NetworkParams,
    pub publication_fee: Coins,
    pub actors: Vec<ActorSpec>,
    pub schedule: Vec<ScheduleEntry>,
}

impl Scenario {
    pub fn new(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            seed,
            max_blocks: DEFAULT_MAX_BLOCKS,
            network: NetworkParams::default(),
            publication_fee: 0,
            actors: Vec::new(),
            schedule: Vec::new(),
        }
    }

    pub fn actor(&self, name: &str) -> Option<&ActorSpec> {
        self.actors.iter().find(|a| a.name == name)
    }

    pub fn actor_mut(&mut self, name: &str) -> Option<&mut ActorSpec> {
        self.actors.iter_mut().find(|a| a.name == name)
    }

    pub fn add(&mut self, actor: ActorSpec) -> &mut Self {
        self.actors.push(actor);
        self
    }

    pub fn at(&mut self, block: u64, actor: &str, action: Action) -> &mut Self {
        self.schedule.push(ScheduleEntry {
            block,
            actor: actor.to_string(),
            action,
        });
        self.schedule.sort_by_key(|e| e.block);
        self
    }

    /// Checks that every reference resolves and that each action suits the
    /// acting role.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for a in &self.actors {
            if !seen.insert(a.name.as_str()) {
                return Err(ConfigError::DuplicateActor(a.name.clone()));
            }
        }
        let role_of = |name: &str| self.actor(name).map(|a| a.role());
        for a in &self.actors {
            let require = |target: &str, want: Role| match role_of(target) {
                None => Err(ConfigError::UnknownActor(target.to_string())),
                Some(r) if r != want => Err(ConfigError::WrongRole {
                    actor: target.to_string(),
                    expected: want,
                }),
                Some(_) => Ok(()),
            };
            match &a.behavior {
                Behavior::Donor(d) => {
                    for r in d.registrars.iter().flatten() {
                        require(r, Role::Registrar)?;
                    }
                    if d.threshold_t == 0 {
                        return Err(ConfigError::Invalid(format!(
                            "{}: t must be at least 1",
                            a.name
                        )));
                    }
                    if d.threshold_amount == 0 {
                        return Err(ConfigError::Invalid(format!(
                            "{}: threshold must be positive",
                            a.name
                        )));
                    }
                }
                Behavior::Witness(w) => require(&w.target, Role::Donor)?,
                Behavior::KeyTransfer(k) => require(&k.victim, Role::Donor)?,
                Behavior::Registrar(_) | Behavior::Observer => {}
            }
        }
        if self.schedule.windows(2).any(|w| w[0].block > w[1].block) {
            return Err(ConfigError::UnsortedSchedule);
        }
        for e in &self.schedule {
            let role =
                role_of(&e.actor).ok_or_else(|| ConfigError::UnknownActor(e.actor.clone()))?;
            let ok = match &e.action {
                Action::Open | Action::Die => role == Role::Donor,
                Action::Move => matches!(role, Role::Donor | Role::AttackerKeyTransfer),
                Action::Ante(_) => matches!(role, Role::Witness | Role::AttackerWhale),
                Action::Transfer { to, .. } => {
                    role_of(to).ok_or_else(|| ConfigError::UnknownActor(to.clone()))?;
                    true
                }
            };
            if !ok {
                return Err(ConfigError::ActionNotAllowed {
                    actor: e.actor.clone(),
                    action: e.action.name(),
                });
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{SCENARIO_HEADER}");
        let _ = writeln!(s, "name = {}", quote(&self.name));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "max_blocks = {}", self.max_blocks);
        let n = &self.network;
        let _ = writeln!(s, "\n[network]");
        let _ = writeln!(s, "min_bail = {}", n.min_bail);
        let _ = writeln!(s, "immediate_fee_fraction = {}", n.immediate_fee_fraction);
        let _ = writeln!(s, "default_x = {}", n.default_min_distinct_witnesses);
        let span = n
            .default_min_signaling_span
            .map_or("deliberation".to_string(), |v| v.to_string());
        let _ = writeln!(s, "default_span = {span}");
        let _ = writeln!(s, "min_registrar_fee = {}", n.min_registrar_fee);
        let _ = writeln!(s, "publication_fee = {}", self.publication_fee);
        let _ = writeln!(s, "\n[actors]");
        for a in &self.actors {
            let _ = writeln!(s, "{a}");
        }
        let _ = writeln!(s, "\n[schedule]");
        for e in &self.schedule {
            let _ = writeln!(s, "{} {} {}", e.block, e.actor, e.action);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Donor,
    Registrar,
    Witness,
    AttackerKeyTransfer,
    AttackerWhale,
    Observer,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Donor,
        Role::Registrar,
        Role::Witness,
        Role::AttackerKeyTransfer,
        Role::AttackerWhale,
        Role::Observer,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Role::Donor => "donor",
            Role::Registrar => "registrar",
            Role::Witness => "witness",
            Role::AttackerKeyTransfer => "attacker-keytransfer",
            Role::AttackerWhale => "attacker-whale",
            Role::Observer => "observer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorSpec {
    pub name: String,
    pub initial_balance: Coins,
    pub behavior: Behavior,
}

impl ActorSpec {
    pub fn role(&self) -> Role {
        match &self.behavior {
            Behavior::Donor(_) => Role::Donor,
            Behavior::Registrar(_) => Role::Registrar,
            Behavior::Witness(w) if w.whale => Role::AttackerWhale,
            Behavior::Witness(_) => Role::Witness,
            Behavior::KeyTransfer(_) => Role::AttackerKeyTransfer,
            Behavior::Observer => Role::Observer,
        }
    }

    pub fn donor(name: &str, balance: Coins, behavior: DonorBehavior) -> Self {
        Self {
            name: name.to_string(),
            initial_balance: balance,
            behavior: Behavior::Donor(behavior),
        }
    }

    pub fn registrar(name: &str, balance: Coins, behavior: RegistrarBehavior) -> Self {
        Self {
            name: name.to_string(),
            initial_balance: balance,
            behavior: Behavior::Registrar(behavior),
        }
    }

    pub fn witness(name: &str, balance: Coins, behavior: WitnessBehavior) -> Self {
        Self {
            name: name.to_string(),
            initial_balance: balance,
            behavior: Behavior::Witness(behavior),
        }
    }

    pub fn key_transfer(name: &str, balance: Coins, behavior: KeyTransferBehavior) -> Self {
        Self {
            name: name.to_string(),
            initial_balance: balance,
            behavior: Behavior::KeyTransfer(behavior),
        }
    }

    pub fn observer(name: &str, balance: Coins) -> Self {
        Self {
            name: name.to_string(),
            initial_balance: balance,
            behavior: Behavior::Observer,
        }
    }
}

impl fmt::Display for ActorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.name, self.role(), self.initial_balance)?;
        let yn = |b: bool| if b { "yes" } else { "no" };
        match &self.behavior {
            Behavior::Donor(d) => {
                write!(f, " name={}", quote(&d.civil_name))?;
                write!(
                    f,
                    " death={}",
                    d.death.map_or("never".to_string(), |b| b.to_string())
                )?;
                write!(
                    f,
                    " responsive={} react={}",
                    yn(d.responsive),
                    d.react_after
                )?;
                write!(
                    f,
                    " careless={} deposit={}",
                    yn(d.careless_funding),
                    d.deposit
                )?;
                write!(
                    f,
                    " t={} fee={} threshold={}",
                    d.threshold_t, d.registrar_fee, d.threshold_amount
                )?;
                write!(
                    f,
                    " witness_fees={} deliberation={}",
                    d.witness_fees, d.deliberation_time
                )?;
                if let Some(x) = d.min_distinct_witnesses {
                    write!(f, " x={x}")?;
                }
                if let Some(span) = d.min_signaling_span {
                    write!(f, " span={span}")?;
                }
                match &d.registrars {
                    None => write!(f, " registrars=any")?,
                    Some(list) => write!(f, " registrars={}", list.join(","))?,
                }
                if !d.heritage.is_empty() {
                    write!(f, " heritage={}", quote(&d.heritage))?;
                }
            }
            Behavior::Registrar(r) => {
                write!(
                    f,
                    " bail={} expiry={} reveal={}",
                    r.bail,
                    r.bail_expiry,
                    r.reveal.token()
                )?;
                write!(
                    f,
                    " reveal_delay={} accept={}",
                    r.reveal_delay,
                    yn(r.accept)
                )?;
            }
            Behavior::Witness(w) => {
                write!(f, " target={} ante={}", w.target, w.ante)?;
                match w.trigger {
                    Trigger::AfterDeath(d) => write!(f, " after_death={d}")?,
                    Trigger::At(b) => write!(f, " at={b}")?,
                    Trigger::Manual => {}
                }
            }
            Behavior::KeyTransfer(k) => {
                write!(
                    f,
                    " victim={} move_after={} sweep={}",
                    k.victim,
                    k.move_after,
                    yn(k.sweep)
                )?;
            }
            Behavior::Observer => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Behavior {
    Donor(DonorBehavior),
    Registrar(RegistrarBehavior),
    /// Witnesses and whales differ only in role label.
    Witness(WitnessBehavior),
    KeyTransfer(KeyTransferBehavior),
    Observer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DonorBehavior {
    pub civil_name: String,
    /// `None` means the donor outlives the run.
    pub death: Option<u64>,
    /// Reacts to a false death signal while alive.
    pub responsive: bool,
    /// Blocks between the start of deliberation and the donor's reaction.
    pub react_after: u64,
    /// Funds the Security Deposit straight from the donor account.
    pub careless_funding: bool,
    pub deposit: Coins,
    pub threshold_t: u32,
    pub registrar_fee: Coins,
    pub threshold_amount: Coins,
    pub witness_fees: Coins,
    pub deliberation_time: u64,
    pub min_distinct_witnesses: Option<u32>,
    pub min_signaling_span: Option<u64>,
    pub registrars: Option<Vec<String>>,
    pub heritage: String,
}

impl Default for DonorBehavior {
    fn default() -> Self {
        Self {
            civil_name: String::new(),
            death: None,
            responsive: true,
            react_after: 1,
            careless_funding: false,
            deposit: 300,
            threshold_t: 2,
            registrar_fee: 100,
            threshold_amount: 100,
            witness_fees: 10,
            deliberation_time: 10,
            min_distinct_witnesses: None,
            min_signaling_span: None,
            registrars: None,
            heritage: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevealMode {
    Honest,
    Silent,
    Corrupt,
}

impl RevealMode {
    pub fn token(self) -> &'static str {
        match self {
            RevealMode::Honest => "honest",
            RevealMode::Silent => "silent",
            RevealMode::Corrupt => "corrupt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrarBehavior {
    pub bail: Coins,
    pub bail_expiry: u64,
    pub reveal: RevealMode,
    pub reveal_delay: u64,
    pub accept: bool,
}

impl Default for RegistrarBehavior {
    fn default() -> Self {
        Self {
            bail: 200,
            bail_expiry: 200,
            reveal: RevealMode::Honest,
            reveal_delay: 0,
            accept: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    /// Signals this many blocks after the target dies.
    AfterDeath(u64),
    /// Signals at a fixed block whatever the target's state.
    At(u64),
    /// Only through scheduled `ante` actions.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessBehavior {
    pub target: String,
    pub ante: Coins,
    pub trigger: Trigger,
    pub whale: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyTransferBehavior {
    pub victim: String,
    /// Blocks after deliberation starts at which the attacker moves.
    pub move_after: u64,
    /// Empties the Security Deposit once the instance aborts.
    pub sweep: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub block: u64,
    pub actor: String,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Open,
    Die,
    Move,
    Ante(Coins),
    Transfer { to: String, amount: Coins },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Open => "open",
            Action::Die => "die",
            Action::Move => "move",
            Action::Ante(_) => "ante",
            Action::Transfer { .. } => "transfer",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Ante(a) => write!(f, "ante {a}"),
            Action::Transfer { to, amount } => write!(f, "transfer {to} {amount}"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate actor {0:?}")]
    DuplicateActor(String),
    #[error("unknown actor {0:?}")]
    UnknownActor(String),
    #[error("actor {actor:?} is not a {expected}")]
    WrongRole { actor: String, expected: Role },
    #[error("actor {actor:?} cannot perform {action:?}")]
    ActionNotAllowed { actor: String, action: &'static str },
    #[error("schedule is not sorted by block")]
    UnsortedSchedule,
    #[error("{0}")]
    Invalid(String),
}

fn quote(s: &str) -> String {
    if !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b))
    {
        s.to_string()
    } else {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// A token and the 1-based column it starts at.
type Token = (String, usize);

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ConfigError> {
    let mut out = Vec::new();
    let mut chars = line.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            break;
        }
        let mut tok = String::new();
        let mut in_quotes = false;
        while let Some(&(i, c)) = chars.peek() {
            if !in_quotes && c.is_whitespace() {
                break;
            }
            chars.next();
            match c {
                '"' => in_quotes = !in_quotes,
                '\\' if in_quotes => match chars.next() {
                    Some((_, e)) => tok.push(e),
                    None => {
                        return Err(perr(line_no, i + 1, "dangling escape"));
                    }
                },
                c => tok.push(c),
            }
        }
        if in_quotes {
            return Err(perr(line_no, start + 1, "unterminated quote"));
        }
        out.push((tok, start + 1));
    }
    Ok(out)
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Top,
    Network,
    Actors,
    Schedule,
}

struct Cursor {
    line: usize,
}

impl Cursor {
    fn num<T: std::str::FromStr>(&self, tok: &Token, what: &str) -> Result<T, ConfigError> {
        tok.0.parse().map_err(|_| {
            perr(
                self.line,
                tok.1,
                format!("{what}: expected a number, found {:?}", tok.0),
            )
        })
    }

    fn value<T: std::str::FromStr>(
        &self,
        value: &str,
        column: usize,
        key: &str,
    ) -> Result<T, ConfigError> {
        value
            .parse()
            .map_err(|_| perr(self.line, column, format!("{key}: bad value {value:?}")))
    }

    fn yes_no(&self, value: &str, column: usize, key: &str) -> Result<bool, ConfigError> {
        match value {
            "yes" | "true" => Ok(true),
            "no" | "false" => Ok(false),
            _ => Err(perr(
                self.line,
                column,
                format!("{key}: expected yes or no"),
            )),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == SCENARIO_HEADER => {}
        _ => return Err(perr(1, 1, format!("expected header {SCENARIO_HEADER:?}"))),
    }
    let mut sc = Scenario::new("unnamed", 0);
    let mut section = Section::Top;
    let mut default_span_seen = false;
    for (i, raw) in lines {
        let cur = Cursor { line: i + 1 };
        let toks = tokenize(raw, cur.line)?;
        let Some(first) = toks.first() else { continue };
        if first.0.starts_with('[') {
            section = match first.0.as_str() {
                "[network]" => Section::Network,
                "[actors]" => Section::Actors,
                "[schedule]" => Section::Schedule,
                other => return Err(perr(cur.line, first.1, format!("unknown section {other}"))),
            };
            if toks.len() > 1 {
                return Err(perr(cur.line, toks[1].1, "unexpected text after section"));
            }
            continue;
        }
        match section {
            Section::Top | Section::Network => {
                let [key, eq, value] = toks.as_slice() else {
                    return Err(perr(cur.line, first.1, "expected `key = value`"));
                };
                if eq.0 != "=" {
                    return Err(perr(cur.line, eq.1, "expected `=`"));
                }
                let (v, col) = (value.0.as_str(), value.1);
                let n = &mut sc.network;
                match (section, key.0.as_str()) {
                    (Section::Top, "name") => sc.name = v.to_string(),
                    (Section::Top, "seed") => sc.seed = cur.value(v, col, "seed")?,
                    (Section::Top, "max_blocks") => {
                        sc.max_blocks = cur.value(v, col, "max_blocks")?
                    }
                    (Section::Network, "min_bail") => n.min_bail = cur.value(v, col, "min_bail")?,
                    (Section::Network, "immediate_fee_fraction") => {
                        n.immediate_fee_fraction = v.parse::<Fraction>().map_err(|e| {
                            perr(cur.line, col, format!("immediate_fee_fraction: {e}"))
                        })?
                    }
                    (Section::Network, "default_x") => {
                        n.default_min_distinct_witnesses = cur.value(v, col, "default_x")?
                    }
                    (Section::Network, "default_span") => {
                        default_span_seen = true;
                        n.default_min_signaling_span = if v == "deliberation" {
                            None
                        } else {
                            Some(cur.value(v, col, "default_span")?)
                        }
                    }
                    (Section::Network, "min_registrar_fee") => {
                        n.min_registrar_fee = cur.value(v, col, "min_registrar_fee")?
                    }
                    (Section::Network, "publication_fee") => {
                        sc.publication_fee = cur.value(v, col, "publication_fee")?
                    }
                    (_, k) => return Err(perr(cur.line, key.1, format!("unknown key {k:?}"))),
                }
            }
            Section::Actors => sc.actors.push(parse_actor(&cur, &toks)?),
            Section::Schedule => {
                let entry = parse_schedule(&cur, &toks)?;
                if sc.schedule.last().is_some_and(|l| l.block > entry.block) {
                    return Err(perr(cur.line, first.1, "schedule must be sorted by block"));
                }
                sc.schedule.push(entry);
            }
        }
    }
    let _ = default_span_seen;
    sc.validate()?;
    Ok(sc)
}

fn parse_actor(cur: &Cursor, toks: &[Token]) -> Result<ActorSpec, ConfigError> {
    let [name, role, balance, params @ ..] = toks else {
        return Err(perr(
            cur.line,
            toks[0].1,
            "expected `<name> <role> <balance> [key=value ...]`",
        ));
    };
    let role_tok = role;
    let role = Role::ALL
        .into_iter()
        .find(|r| r.token() == role.0)
        .ok_or_else(|| perr(cur.line, role.1, format!("unknown role {:?}", role.0)))?;
    let initial_balance = cur.num(balance, "balance")?;
    let mut behavior = match role {
        Role::Donor => Behavior::Donor(DonorBehavior {
            civil_name: name.0.clone(),
            ..Default::default()
        }),
        Role::Registrar => Behavior::Registrar(RegistrarBehavior::default()),
        Role::Witness | Role::AttackerWhale => Behavior::Witness(WitnessBehavior {
            target: String::new(),
            ante: 0,
            trigger: Trigger::Manual,
            whale: role == Role::AttackerWhale,
        }),
        Role::AttackerKeyTransfer => Behavior::KeyTransfer(KeyTransferBehavior {
            victim: String::new(),
            move_after: 1,
            sweep: true,
        }),
        Role::Observer => Behavior::Observer,
    };
    for (tok, col) in params {
        let (key, v) = tok
            .split_once('=')
            .ok_or_else(|| perr(cur.line, *col, format!("expected key=value, found {tok:?}")))?;
        let vcol = col + key.len() + 1;
        let unknown = || {
            perr(
                cur.line,
                *col,
                format!("unknown key {key:?} for role {role}"),
            )
        };
        match &mut behavior {
            Behavior::Donor(d) => match key {
                "name" => d.civil_name = v.to_string(),
                "death" => {
                    d.death = if v == "never" {
                        None
                    } else {
                        Some(cur.value(v, vcol, key)?)
                    }
                }
                "responsive" => d.responsive = cur.yes_no(v, vcol, key)?,
                "react" => d.react_after = cur.value(v, vcol, key)?,
                "careless" => d.careless_funding = cur.yes_no(v, vcol, key)?,
                "deposit" => d.deposit = cur.value(v, vcol, key)?,
                "t" => d.threshold_t = cur.value(v, vcol, key)?,
                "fee" => d.registrar_fee = cur.value(v, vcol, key)?,
                "threshold" => d.threshold_amount = cur.value(v, vcol, key)?,
                "witness_fees" => d.witness_fees = cur.value(v, vcol, key)?,
                "deliberation" => d.deliberation_time = cur.value(v, vcol, key)?,
                "x" => d.min_distinct_witnesses = Some(cur.value(v, vcol, key)?),
                "span" => d.min_signaling_span = Some(cur.value(v, vcol, key)?),
                "registrars" => {
                    d.registrars = match v {
                        "any" => None,
                        list => Some(list.split(',').map(str::to_string).collect()),
                    }
                }
                "heritage" => d.heritage = v.to_string(),
                _ => return Err(unknown()),
            },
            Behavior::Registrar(r) => match key {
                "bail" => r.bail = cur.value(v, vcol, key)?,
                "expiry" => r.bail_expiry = cur.value(v, vcol, key)?,
                "reveal" => {
                    r.reveal = match v {
                        "honest" => RevealMode::Honest,
                        "silent" => RevealMode::Silent,
                        "corrupt" => RevealMode::Corrupt,
                        _ => {
                            return Err(perr(
                                cur.line,
                                vcol,
                                "reveal: expected honest, silent or corrupt",
                            ))
                        }
                    }
                }
                "reveal_delay" => r.reveal_delay = cur.value(v, vcol, key)?,
                "accept" => r.accept = cur.yes_no(v, vcol, key)?,
                _ => return Err(unknown()),
            },
            Behavior::Witness(w) => match key {
                "target" => w.target = v.to_string(),
                "ante" => w.ante = cur.value(v, vcol, key)?,
                "after_death" => w.trigger = Trigger::AfterDeath(cur.value(v, vcol, key)?),
                "at" => w.trigger = Trigger::At(cur.value(v, vcol, key)?),
                _ => return Err(unknown()),
            },
            Behavior::KeyTransfer(k) => match key {
                "victim" => k.victim = v.to_string(),
                "move_after" => k.move_after = cur.value(v, vcol, key)?,
                "sweep" => k.sweep = cur.yes_no(v, vcol, key)?,
                _ => return Err(unknown()),
            },
            Behavior::Observer => return Err(unknown()),
        }
    }
    match &behavior {
        Behavior::Witness(w) if w.target.is_empty() => {
            return Err(perr(cur.line, role_tok.1, "witness needs target=<donor>"));
        }
        Behavior::KeyTransfer(k) if k.victim.is_empty() => {
            return Err(perr(cur.line, role_tok.1, "attacker needs victim=<donor>"));
        }
        _ => {}
    }
    Ok(ActorSpec {
        name: name.0.clone(),
        initial_balance,
        behavior,
    })
}

fn parse_schedule(cur: &Cursor, toks: &[Token]) -> Result<ScheduleEntry, ConfigError> {
    let [block, actor, action, args @ ..] = toks else {
        return Err(perr(
            cur.line,
            toks[0].1,
            "expected `<block> <actor> <action> [args]`",
        ));
    };
    let block = cur.num(block, "block")?;
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            let col = args.get(n).map_or(action.1, |t| t.1);
            Err(perr(
                cur.line,
                col,
                format!("{} takes {n} argument(s)", action.0),
            ))
        }
    };
    let action = match action.0.as_str() {
        "open" => arity(0).map(|_| Action::Open)?,
        "die" => arity(0).map(|_| Action::Die)?,
        "move" => arity(0).map(|_| Action::Move)?,
        "ante" => {
            arity(1)?;
            Action::Ante(cur.num(&args[0], "amount")?)
        }
        "transfer" => {
            arity(2)?;
            Action::Transfer {
                to: args[0].0.clone(),
                amount: cur.num(&args[1], "amount")?,
            }
        }
        other => {
            return Err(perr(
                cur.line,
                action.1,
                format!("unknown action {other:?}"),
            ))
        }
    };
    Ok(ScheduleEntry {
        block,
        actor: actor.0.clone(),
        action,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"tfcp-scenario v1
# a comment
name = "demo run"
seed = 9

[network]
immediate_fee_fraction = 0.25
default_span = deliberation

[actors]
alice donor 1000 name="Alice Liddell" death=20 span=2 registrars=r1,r2
r1 registrar 1000 bail=150 reveal=silent
r2 registrar 1000
w1 witness 500 target=alice ante=60 after_death=1
big attacker-whale 900 target=alice ante=100 at=5
bob attacker-keytransfer 0 victim=alice move_after=2
eve observer 0

[schedule]
0 alice open
3 w1 ante 5
4 r1 transfer r2 10
"#;

    #[test]
    fn parses_sample() {
        let sc = parse_scenario(SAMPLE).unwrap();
        assert_eq!(sc.name, "demo run");
        assert_eq!(sc.seed, 9);
        assert_eq!(sc.actors.len(), 7);
        let Behavior::Donor(d) = &sc.actor("alice").unwrap().behavior else {
            panic!()
        };
        assert_eq!(d.civil_name, "Alice Liddell");
        assert_eq!(d.death, Some(20));
        assert_eq!(
            d.registrars.as_deref(),
            Some(&["r1".to_string(), "r2".to_string()][..])
        );
        assert_eq!(sc.actor("big").unwrap().role(), Role::AttackerWhale);
        assert_eq!(
            sc.schedule[2].action,
            Action::Transfer {
                to: "r2".into(),
                amount: 10
            }
        );
    }

    #[test]
    fn text_round_trip() {
        let sc = parse_scenario(SAMPLE).unwrap();
        assert_eq!(parse_scenario(&sc.to_text()).unwrap(), sc);
    }

    fn err_at(text: &str) -> (usize, usize) {
        match parse_scenario(text) {
            Err(ConfigError::Parse { line, column, .. }) => (line, column),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(err_at("nope"), (1, 1));
        assert_eq!(err_at("tfcp-scenario v1\nseed = x"), (2, 8));
        assert_eq!(
            err_at("tfcp-scenario v1\n[actors]\na donor 10 bogus=1"),
            (3, 12)
        );
        assert_eq!(err_at("tfcp-scenario v1\n[actors]\na wizard 10"), (3, 3));
        assert_eq!(
            err_at("tfcp-scenario v1\n[schedule]\n5 a open\n2 a open"),
            (4, 1)
        );
        assert_eq!(err_at("tfcp-scenario v1\nname = \"open"), (2, 8));
        assert_eq!(err_at("tfcp-scenario v1\n[oops]"), (2, 1));
    }

    #[test]
    fn unknown_references_rejected() {
        let text = "tfcp-scenario v1\n[actors]\na donor 10\n[schedule]\n1 ghost open\n";
        assert_eq!(
            parse_scenario(text),
            Err(ConfigError::UnknownActor("ghost".into()))
        );
        let text = "tfcp-scenario v1\n[actors]\nw witness 10 target=nobody\n";
        assert_eq!(
            parse_scenario(text),
            Err(ConfigError::UnknownActor("nobody".into()))
        );
        let text = "tfcp-scenario v1\n[actors]\na donor 10\n[schedule]\n1 a ante 5\n";
        assert!(matches!(
            parse_scenario(text),
            Err(ConfigError::ActionNotAllowed { .. })
        ));
    }
}
