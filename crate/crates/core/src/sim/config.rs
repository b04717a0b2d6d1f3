//! Declarative scenario documents and their validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{CodecParams, MAX_CODE_LENGTH};
use crate::protocol::{Phase, Protocol};
use crate::types::{ClientId, MsgKind, NodeId, OpKind, OperationId, ServerId, Value};
use crate::units::{self, Cost};

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Cas,
    Casgc,
    Ccoas,
    Abd,
    Ldr,
}

impl ProtocolName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolName::Cas => "cas",
            ProtocolName::Casgc => "casgc",
            ProtocolName::Ccoas => "ccoas",
            ProtocolName::Abd => "abd",
            ProtocolName::Ldr => "ldr",
        }
    }
}

/// A condition over the run so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Nothing else can happen.
    Quiescent,
    Never,
    /// At least this many scheduler steps have been taken.
    At(u64),
    /// Operation (by index into `ops`) has responded.
    Responded(usize),
    Invoked(usize),
    /// Operation has entered the given phase.
    Phase { op: usize, phase: Phase },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpSpec {
    pub client: String,
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    /// Earliest scheduler step at which the operation may be invoked.
    #[serde(default)]
    pub at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Trigger>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerCrash {
    pub id: ServerId,
    pub when: Trigger,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientCrash {
    pub id: String,
    pub when: Trigger,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failures {
    #[serde(default)]
    pub servers: Vec<ServerCrash>,
    #[serde(default)]
    pub clients: Vec<ClientCrash>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    SeededRandom,
    Scripted,
    FairRoundRobin,
}

/// A server id (number) or a client name (string).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Server(ServerId),
    Client(String),
}

impl NodeRef {
    pub fn to_node(&self) -> NodeId {
        match self {
            NodeRef::Server(s) => NodeId::Server(*s),
            NodeRef::Client(c) => NodeId::Client(ClientId::new(c.as_str())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsgFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MsgKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<NodeRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<NodeRef>,
}

/// Matching messages stay undeliverable until `until` fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hold {
    pub hold: MsgFilter,
    pub until: Trigger,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerSpec {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub script: Vec<Hold>,
}

/// Outcomes a bundled scenario asserts about itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expect {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terminated: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stalled: Vec<usize>,
    /// Read op index to the string it must return.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reads: BTreeMap<usize, String>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "units::opt_cost_str")]
    pub write_cost: Option<Cost>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "units::opt_cost_str")]
    pub read_cost: Option<Cost>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "units::opt_cost_str")]
    pub storage_sup: Option<Cost>,
    /// Op indices whose written value must be absent from every server at halt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub collected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    pub protocol: ProtocolName,
    pub n: usize,
    pub f: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica_count: Option<usize>,
    pub value_length: usize,
    pub clients: Vec<String>,
    pub ops: Vec<OpSpec>,
    #[serde(default)]
    pub failures: Failures,
    #[serde(default)]
    pub scheduler: SchedulerSpec,
    #[serde(default = "default_budget")]
    pub step_budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
}

fn default_budget() -> u64 {
    DEFAULT_STEP_BUDGET
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

/// One operation after validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedOp {
    pub index: usize,
    pub id: OperationId,
    pub kind: OpKind,
    pub value: Option<Value>,
    pub at: u64,
    pub after: Option<Trigger>,
}

/// A validated scenario ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub protocol: Protocol,
    pub ops: Vec<PlannedOp>,
    pub clients: Vec<ClientId>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn f(&self) -> usize {
        self.config.f
    }

    pub fn initial_value(&self) -> Value {
        Value::zeroed(self.config.value_length)
    }

    pub fn seed(&self) -> u64 {
        self.config.scheduler.seed
    }
}

/// Turns a scenario string into exactly `len` bytes, zero-filled.
pub fn value_from_str(s: &str, len: usize) -> Option<Value> {
    let bytes = s.as_bytes();
    if bytes.len() > len {
        return None;
    }
    let mut v = bytes.to_vec();
    v.resize(len, 0);
    Some(Value(v))
}

/// The string a value was built from, with trailing zero fill removed.
pub fn value_to_string(v: &Value) -> String {
    let end = v.0.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
    String::from_utf8_lossy(&v.0[..end]).into_owned()
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| err("<document>", e.to_string()))
    }

    pub fn validate(&self) -> Result<Scenario, ConfigError> {
        let (n, f) = (self.n, self.f);
        if n == 0 || n > MAX_CODE_LENGTH {
            return Err(err("n", format!("must be in 1..={MAX_CODE_LENGTH}")));
        }
        if n <= 2 * f {
            return Err(err("f", format!("need n > 2f, got n={n}, f={f}")));
        }
        if self.value_length == 0 {
            return Err(err("value_length", "must be at least 1"));
        }
        if self.step_budget == 0 {
            return Err(err("step_budget", "must be positive"));
        }

        let protocol = self.protocol_params()?;

        let mut clients = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, c) in self.clients.iter().enumerate() {
            if c.is_empty() {
                return Err(err(format!("clients[{i}]"), "client names must be non-empty"));
            }
            if !seen.insert(c.as_str()) {
                return Err(err(format!("clients[{i}]"), format!("duplicate client `{c}`")));
            }
            clients.push(ClientId::new(c.as_str()));
        }

        let mut per_client: BTreeMap<&str, u32> = BTreeMap::new();
        let mut ops = Vec::new();
        for (i, op) in self.ops.iter().enumerate() {
            let field = format!("ops[{i}]");
            if !seen.contains(op.client.as_str()) {
                return Err(err(format!("{field}.client"), format!("unknown client `{}`", op.client)));
            }
            let seq = per_client.entry(op.client.as_str()).or_default();
            let id = OperationId {
                client: ClientId::new(op.client.as_str()),
                seq: *seq,
            };
            *seq += 1;
            let value = match (op.kind, &op.value) {
                (OpKind::Read, Some(_)) => {
                    return Err(err(format!("{field}.value"), "reads take no value"));
                }
                (OpKind::Read, None) => None,
                (OpKind::Write, given) => {
                    let text = given.clone().unwrap_or_else(|| format!("{}:{}", id.client, id.seq));
                    Some(value_from_str(&text, self.value_length).ok_or_else(|| {
                        err(
                            format!("{field}.value"),
                            format!("`{text}` is longer than value_length {}", self.value_length),
                        )
                    })?)
                }
            };
            if let Some(t) = &op.after {
                self.check_trigger(t, &format!("{field}.after"))?;
            }
            ops.push(PlannedOp {
                index: i,
                id,
                kind: op.kind,
                value,
                at: op.at,
                after: op.after.clone(),
            });
        }

        for (i, c) in self.failures.servers.iter().enumerate() {
            if c.id >= n {
                return Err(err(format!("failures.servers[{i}].id"), format!("no server {} (n={n})", c.id)));
            }
            self.check_trigger(&c.when, &format!("failures.servers[{i}].when"))?;
        }
        for (i, c) in self.failures.clients.iter().enumerate() {
            if !seen.contains(c.id.as_str()) {
                return Err(err(format!("failures.clients[{i}].id"), format!("unknown client `{}`", c.id)));
            }
            self.check_trigger(&c.when, &format!("failures.clients[{i}].when"))?;
        }
        for (i, h) in self.scheduler.script.iter().enumerate() {
            let field = format!("scheduler.script[{i}]");
            if let Some(op) = h.hold.op {
                if op >= self.ops.len() {
                    return Err(err(format!("{field}.hold.op"), format!("no op {op}")));
                }
            }
            for (name, node) in [("from", &h.hold.from), ("to", &h.hold.to)] {
                match node {
                    Some(NodeRef::Server(s)) if *s >= n => {
                        return Err(err(format!("{field}.hold.{name}"), format!("no server {s}")));
                    }
                    Some(NodeRef::Client(c)) if !seen.contains(c.as_str()) => {
                        return Err(err(format!("{field}.hold.{name}"), format!("unknown client `{c}`")));
                    }
                    _ => {}
                }
            }
            self.check_trigger(&h.until, &format!("{field}.until"))?;
        }
        if let Some(e) = &self.expect {
            for &i in e.terminated.iter().chain(&e.stalled).chain(e.reads.keys()).chain(&e.collected) {
                if i >= self.ops.len() {
                    return Err(err("expect", format!("no op {i}")));
                }
            }
        }

        Ok(Scenario {
            config: self.clone(),
            protocol,
            ops,
            clients,
        })
    }

    fn check_trigger(&self, t: &Trigger, field: &str) -> Result<(), ConfigError> {
        match t {
            Trigger::Responded(i) | Trigger::Invoked(i) | Trigger::Phase { op: i, .. }
                if *i >= self.ops.len() =>
            {
                Err(err(field, format!("no op {i}")))
            }
            _ => Ok(()),
        }
    }

    fn protocol_params(&self) -> Result<Protocol, ConfigError> {
        let (n, f) = (self.n, self.f);
        let coded_k = |k: Option<usize>| -> Result<usize, ConfigError> {
            let k = k.ok_or_else(|| err("k", "required for this protocol"))?;
            if k == 0 || k + 2 * f > n {
                return Err(err(
                    "k",
                    format!(
                        "k={k} violates the quorum intersection bound 1 <= k <= n - 2f = {}",
                        n - 2 * f
                    ),
                ));
            }
            CodecParams::new(n, k).map_err(|e| err("k", e.to_string()))?;
            Ok(k)
        };
        match self.protocol {
            ProtocolName::Cas => Ok(Protocol::Cas { k: coded_k(self.k)? }),
            ProtocolName::Casgc => {
                let k = coded_k(self.k)?;
                let delta = self.delta.ok_or_else(|| err("delta", "required for casgc"))?;
                Ok(Protocol::Casgc { k, delta })
            }
            ProtocolName::Ccoas => {
                if self.k.is_some() {
                    return Err(err("k", "ccoas fixes k = n - f; remove the field"));
                }
                CodecParams::new(n, n - f).map_err(|e| err("f", e.to_string()))?;
                Ok(Protocol::Ccoas)
            }
            ProtocolName::Abd => Ok(Protocol::Abd),
            ProtocolName::Ldr => {
                let replicas = self.replica_count.unwrap_or(2 * f + 1);
                let directories = self.directory_count.unwrap_or(n.saturating_sub(replicas));
                if replicas < 2 * f + 1 {
                    return Err(err("replica_count", format!("need at least 2f+1 = {}", 2 * f + 1)));
                }
                if directories == 0 {
                    return Err(err("directory_count", "need at least one directory server"));
                }
                if directories + replicas != n {
                    return Err(err(
                        "n",
                        format!("directory_count + replica_count = {} but n = {n}", directories + replicas),
                    ));
                }
                Ok(Protocol::Ldr {
                    directories,
                    replicas,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{"id":"t","protocol":"cas","n":5,"f":1,"k":3,"value_length":8,
                "clients":["w","r"],
                "ops":[{"client":"w","kind":"write","value":"hi"},{"client":"r","kind":"read","after":{"responded":0}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn valid_config() {
        let s = base().validate().unwrap();
        assert_eq!(s.protocol, Protocol::Cas { k: 3 });
        assert_eq!(s.ops[0].value.as_ref().unwrap().0, b"hi\0\0\0\0\0\0".to_vec());
        assert_eq!(s.config.step_budget, DEFAULT_STEP_BUDGET);
        assert_eq!(s.ops[1].id.seq, 0);
    }

    #[test]
    fn k_above_bound_names_field() {
        let mut c = base();
        c.k = Some(4);
        let e = c.validate().unwrap_err();
        assert_eq!(e.field, "k");
        assert!(e.message.contains("n - 2f"));
    }

    #[test]
    fn ccoas_rejects_k() {
        let mut c = base();
        c.protocol = ProtocolName::Ccoas;
        assert_eq!(c.validate().unwrap_err().field, "k");
        c.k = None;
        assert_eq!(c.validate().unwrap().protocol, Protocol::Ccoas);
    }

    #[test]
    fn n_must_exceed_2f() {
        let mut c = base();
        c.f = 3;
        assert_eq!(c.validate().unwrap_err().field, "f");
    }

    #[test]
    fn long_value_rejected() {
        let mut c = base();
        c.ops[0].value = Some("much too long".into());
        assert_eq!(c.validate().unwrap_err().field, "ops[0].value");
    }

    #[test]
    fn bad_trigger_reference() {
        let mut c = base();
        c.ops[1].after = Some(Trigger::Responded(7));
        assert_eq!(c.validate().unwrap_err().field, "ops[1].after");
    }

    #[test]
    fn ldr_defaults() {
        let mut c = base();
        c.protocol = ProtocolName::Ldr;
        c.k = None;
        let s = c.validate().unwrap();
        assert_eq!(
            s.protocol,
            Protocol::Ldr {
                directories: 2,
                replicas: 3
            }
        );
    }

    #[test]
    fn trigger_json_forms() {
        let t: Trigger = serde_json::from_str(r#""quiescent""#).unwrap();
        assert_eq!(t, Trigger::Quiescent);
        let t: Trigger = serde_json::from_str(r#"{"phase":{"op":2,"phase":"finalize"}}"#).unwrap();
        assert_eq!(
            t,
            Trigger::Phase {
                op: 2,
                phase: Phase::Finalize
            }
        );
    }

    #[test]
    fn value_strings_round_trip() {
        let v = value_from_str("abc", 6).unwrap();
        assert_eq!(value_to_string(&v), "abc");
        assert!(value_from_str("abcdefg", 6).is_none());
    }
}
