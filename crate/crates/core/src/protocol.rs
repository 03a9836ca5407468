//! Message vocabulary and line-oriented wire encoding.
//!
//! Every message is one UTF-8 line, `V1|KIND|sender|recipient|round|payload`,
//! with payload sub-fields joined by `;`. The same codec backs both the TCP
//! transport and the in-process simulator, so tests of either exercise the
//! real serialization. Text framing keeps the traffic readable with ordinary
//! network tools; the payloads are single integers, so compactness buys
//! nothing.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::engine::PenaltyKind;
use crate::problem::{ComparisonOp, ConstraintExpr};

pub const WIRE_VERSION: &str = "V1";

/// Final status carried by a FINAL message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalStatus {
    Solved,
    Interim,
}

impl FinalStatus {
    fn token(self) -> &'static str {
        match self {
            FinalStatus::Solved => "SOLVED",
            FinalStatus::Interim => "INTERIM",
        }
    }
}

/// Kind-specific message content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Current assignment and termination counter of the sender.
    Value { value: i64, tc: u64 },
    /// Request to impose a penalty on the recipient's current value.
    Penalty(PenaltyKind),
    /// Startup exchange of the constraint operator the sender holds against
    /// the recipient.
    Handshake(ComparisonOp),
    /// The sender has stopped cycling with this value and status.
    Final { value: i64, status: FinalStatus },
    /// Registry: announce own name at host;port.
    Register { host: String, port: u16 },
    /// Registry: ask for the named agent's address (name in `recipient`).
    Lookup,
    /// Registry: a resolved address record.
    Addr { host: String, port: u16 },
    /// Registry: unknown name, or duplicate registration (reason in
    /// `recipient`).
    NotFound,
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Value { .. } => "VALUE",
            Payload::Penalty(_) => "PENALTY",
            Payload::Handshake(_) => "HANDSHAKE",
            Payload::Final { .. } => "FINAL",
            Payload::Register { .. } => "REG",
            Payload::Lookup => "LOOKUP",
            Payload::Addr { .. } => "ADDR",
            Payload::NotFound => "NOTFOUND",
        }
    }

    fn encode(&self) -> String {
        match self {
            Payload::Value { value, tc } => format!("{value};{tc}"),
            Payload::Penalty(kind) => kind.token().to_string(),
            Payload::Handshake(op) => op.token().to_string(),
            Payload::Final { value, status } => format!("{value};{}", status.token()),
            Payload::Register { host, port } => format!("{host};{port}"),
            Payload::Lookup => String::new(),
            Payload::Addr { host, port } => format!("{host};{port}"),
            Payload::NotFound => String::new(),
        }
    }
}

/// One typed wire record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub sender: String,
    pub recipient: String,
    /// Improvement cycle the message belongs to; 0 for registry and
    /// handshake traffic.
    pub round: u64,
    pub payload: Payload,
}

impl Message {
    pub fn new(sender: impl Into<String>, recipient: impl Into<String>, round: u64, payload: Payload) -> Self {
        Message {
            sender: sender.into(),
            recipient: recipient.into(),
            round,
            payload,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.payload.kind()
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{WIRE_VERSION}|{}|{}|{}|{}|{}",
            self.kind(),
            self.sender,
            self.recipient,
            self.round,
            self.payload.encode()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("field `{0}` contains a delimiter")]
    DelimiterInField(String),
    #[error("unsupported wire version `{0}`")]
    Version(String),
    #[error("unknown message kind `{0}`")]
    UnknownKind(String),
    #[error("expected 6 `|`-separated fields, found {0}")]
    FieldCount(usize),
    #[error("`{0}` is not an integer")]
    BadInteger(String),
    #[error("malformed {kind} payload `{payload}`")]
    BadPayload { kind: &'static str, payload: String },
}

fn check_field(value: &str) -> Result<(), WireError> {
    if value.contains(['|', ';', '\n', '\r']) {
        return Err(WireError::DelimiterInField(value.to_string()));
    }
    Ok(())
}

/// Encodes a message as its single-line wire form, newline-terminated.
pub fn encode(msg: &Message) -> Result<String, WireError> {
    check_field(&msg.sender)?;
    check_field(&msg.recipient)?;
    if let Payload::Register { host, .. } | Payload::Addr { host, .. } = &msg.payload {
        check_field(host)?;
    }
    Ok(format!("{msg}\n"))
}

/// Decodes one complete line (trailing newline optional).
pub fn decode(line: &str) -> Result<Message, WireError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split('|').collect();
    if fields.len() != 6 {
        return Err(WireError::FieldCount(fields.len()));
    }
    if fields[0] != WIRE_VERSION {
        return Err(WireError::Version(fields[0].to_string()));
    }
    let kind = fields[1];
    let sender = fields[2].to_string();
    let recipient = fields[3].to_string();
    let round = parse_u64(fields[4])?;
    let raw = fields[5];
    let payload = match kind {
        "VALUE" => {
            let (value, tc) = split_pair("VALUE", raw)?;
            Payload::Value {
                value: parse_i64(value)?,
                tc: parse_u64(tc)?,
            }
        }
        "PENALTY" => Payload::Penalty(PenaltyKind::from_token(raw).ok_or(WireError::BadPayload {
            kind: "PENALTY",
            payload: raw.to_string(),
        })?),
        "HANDSHAKE" => Payload::Handshake(ComparisonOp::from_token(raw).ok_or(WireError::BadPayload {
            kind: "HANDSHAKE",
            payload: raw.to_string(),
        })?),
        "FINAL" => {
            let (value, status) = split_pair("FINAL", raw)?;
            let status = match status {
                "SOLVED" => FinalStatus::Solved,
                "INTERIM" => FinalStatus::Interim,
                _ => {
                    return Err(WireError::BadPayload {
                        kind: "FINAL",
                        payload: raw.to_string(),
                    })
                }
            };
            Payload::Final {
                value: parse_i64(value)?,
                status,
            }
        }
        "REG" => {
            let (host, port) = split_pair("REG", raw)?;
            Payload::Register {
                host: host.to_string(),
                port: parse_port(port)?,
            }
        }
        "LOOKUP" => {
            expect_empty("LOOKUP", raw)?;
            Payload::Lookup
        }
        "ADDR" => {
            let (host, port) = split_pair("ADDR", raw)?;
            Payload::Addr {
                host: host.to_string(),
                port: parse_port(port)?,
            }
        }
        "NOTFOUND" => {
            expect_empty("NOTFOUND", raw)?;
            Payload::NotFound
        }
        other => return Err(WireError::UnknownKind(other.to_string())),
    };
    Ok(Message {
        sender,
        recipient,
        round,
        payload,
    })
}

fn split_pair<'a>(kind: &'static str, raw: &'a str) -> Result<(&'a str, &'a str), WireError> {
    let mut parts = raw.split(';');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(WireError::BadPayload {
            kind,
            payload: raw.to_string(),
        }),
    }
}

fn expect_empty(kind: &'static str, raw: &str) -> Result<(), WireError> {
    if raw.is_empty() {
        Ok(())
    } else {
        Err(WireError::BadPayload {
            kind,
            payload: raw.to_string(),
        })
    }
}

fn parse_u64(text: &str) -> Result<u64, WireError> {
    text.parse().map_err(|_| WireError::BadInteger(text.to_string()))
}

fn parse_i64(text: &str) -> Result<i64, WireError> {
    text.parse().map_err(|_| WireError::BadInteger(text.to_string()))
}

fn parse_port(text: &str) -> Result<u16, WireError> {
    text.parse().map_err(|_| WireError::BadInteger(text.to_string()))
}

/// Verdict of comparing one's own constraint against the operator a
/// neighbour announced for the shared pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeOutcome {
    Consistent,
    Conflict,
    /// The neighbour never announced an operator before the deadline.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeResult {
    pub neighbour: String,
    pub outcome: HandshakeOutcome,
}

/// Both endpoints hold the same verdict: the pair is consistent exactly when
/// each side's operator is the mirror of the other's.
pub fn handshake_check(own: &ConstraintExpr, received_op: ComparisonOp) -> HandshakeOutcome {
    if received_op == own.op.mirror() {
        HandshakeOutcome::Consistent
    } else {
        HandshakeOutcome::Conflict
    }
}

/// Collects the operators neighbours announce during startup and, once the
/// driver's deadline passes, settles every constraint as consistent,
/// conflicting or missing.
#[derive(Debug, Clone)]
pub struct HandshakeTracker {
    received: alloc::collections::BTreeMap<String, ComparisonOp>,
    done: bool,
}

impl HandshakeTracker {
    pub fn new() -> Self {
        HandshakeTracker {
            received: alloc::collections::BTreeMap::new(),
            done: false,
        }
    }

    /// One HANDSHAKE per constraint, announcing our operator to each
    /// neighbour.
    pub fn outbound(name: &str, constraints: &[ConstraintExpr]) -> Vec<Message> {
        constraints
            .iter()
            .map(|c| Message::new(name, c.other_var.clone(), 0, Payload::Handshake(c.op)))
            .collect()
    }

    pub fn record(&mut self, from: &str, op: ComparisonOp) {
        self.received.insert(from.to_string(), op);
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// True once every named neighbour has announced an operator.
    pub fn complete(&self, constraints: &[ConstraintExpr]) -> bool {
        constraints.iter().all(|c| self.received.contains_key(&c.other_var))
    }

    /// Settles all constraints. Call once, at completion or at the driver's
    /// deadline; unheard neighbours come back as `Missing`.
    pub fn finish(&mut self, constraints: &[ConstraintExpr]) -> Vec<HandshakeResult> {
        self.done = true;
        constraints
            .iter()
            .map(|c| {
                let outcome = match self.received.get(&c.other_var) {
                    Some(&op) => handshake_check(c, op),
                    None => HandshakeOutcome::Missing,
                };
                HandshakeResult {
                    neighbour: c.other_var.clone(),
                    outcome,
                }
            })
            .collect()
    }
}

impl Default for HandshakeTracker {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ComparisonOp;
    use alloc::vec;

    #[test]
    fn encodes_value_message() {
        let m = Message::new("A", "B", 4, Payload::Value { value: 4, tc: 1 });
        assert_eq!(encode(&m).unwrap(), "V1|VALUE|A|B|4|4;1\n");
    }

    #[test]
    fn encodes_penalty_message() {
        let m = Message::new("B", "C", 6, Payload::Penalty(PenaltyKind::Inc));
        assert_eq!(encode(&m).unwrap(), "V1|PENALTY|B|C|6|INC\n");
    }

    #[test]
    fn encodes_handshake_message() {
        let m = Message::new("A", "B", 0, Payload::Handshake(ComparisonOp::Gt));
        assert_eq!(encode(&m).unwrap(), "V1|HANDSHAKE|A|B|0|GT\n");
    }

    #[test]
    fn duplicate_registration_line_is_stable() {
        // The registry's duplicate-name rejection, byte for byte.
        let m = Message::new("A", "dup", 0, Payload::NotFound);
        assert_eq!(encode(&m).unwrap(), "V1|NOTFOUND|A|dup|0|\n");
        assert_eq!(decode("V1|NOTFOUND|A|dup|0|").unwrap(), m);
    }

    #[test]
    fn decode_round_trips() {
        let messages = vec![
            Message::new("A", "B", 4, Payload::Value { value: -7, tc: 0 }),
            Message::new("B", "C", 6, Payload::Penalty(PenaltyKind::Temp)),
            Message::new("A", "B", 0, Payload::Handshake(ComparisonOp::Le)),
            Message::new(
                "D",
                "A",
                100,
                Payload::Final {
                    value: 2,
                    status: FinalStatus::Interim,
                },
            ),
            Message::new(
                "A",
                "*",
                0,
                Payload::Register {
                    host: "10.0.0.5".into(),
                    port: 7001,
                },
            ),
            Message::new("A", "B", 0, Payload::Lookup),
            Message::new(
                "B",
                "A",
                0,
                Payload::Addr {
                    host: "127.0.0.1".into(),
                    port: 9,
                },
            ),
        ];
        for m in messages {
            let line = encode(&m).unwrap();
            assert_eq!(decode(&line).unwrap(), m, "line {line:?}");
        }
    }

    #[test]
    fn rejects_wrong_version() {
        assert_eq!(decode("V2|VALUE|A|B|1|1;0"), Err(WireError::Version("V2".into())));
    }

    #[test]
    fn rejects_wrong_field_count() {
        assert_eq!(decode("V1|VALUE|A|B|1"), Err(WireError::FieldCount(5)));
        assert_eq!(decode("V1|VALUE|A|B|1|1;0|x"), Err(WireError::FieldCount(7)));
    }

    #[test]
    fn rejects_short_value_payload() {
        assert!(matches!(
            decode("V1|VALUE|A|B|1|1"),
            Err(WireError::BadPayload { kind: "VALUE", .. })
        ));
    }

    #[test]
    fn rejects_unknown_kind_and_bad_integers() {
        assert_eq!(decode("V1|NOISE|A|B|1|"), Err(WireError::UnknownKind("NOISE".into())));
        assert_eq!(decode("V1|VALUE|A|B|x|1;0"), Err(WireError::BadInteger("x".into())));
        assert_eq!(decode("V1|VALUE|A|B|1|a;0"), Err(WireError::BadInteger("a".into())));
    }

    #[test]
    fn rejects_delimiter_in_name() {
        let m = Message::new("A;B", "C", 0, Payload::Lookup);
        assert!(matches!(encode(&m), Err(WireError::DelimiterInField(_))));
    }

    #[test]
    fn handshake_check_matches_mirrored_ops() {
        let own = ConstraintExpr::new("A", ComparisonOp::Gt, "B");
        assert_eq!(handshake_check(&own, ComparisonOp::Lt), HandshakeOutcome::Consistent);
        assert_eq!(handshake_check(&own, ComparisonOp::Gt), HandshakeOutcome::Conflict);
        let eq = ConstraintExpr::new("A", ComparisonOp::Eq, "B");
        assert_eq!(handshake_check(&eq, ComparisonOp::Eq), HandshakeOutcome::Consistent);
    }

    #[test]
    fn tracker_reports_missing_neighbours() {
        let constraints = vec![
            ConstraintExpr::new("A", ComparisonOp::Gt, "B"),
            ConstraintExpr::new("A", ComparisonOp::Lt, "C"),
        ];
        let mut tracker = HandshakeTracker::new();
        assert!(!tracker.complete(&constraints));
        tracker.record("B", ComparisonOp::Lt);
        assert!(!tracker.complete(&constraints));
        let results = tracker.finish(&constraints);
        assert_eq!(
            results,
            vec![
                HandshakeResult {
                    neighbour: "B".into(),
                    outcome: HandshakeOutcome::Consistent
                },
                HandshakeResult {
                    neighbour: "C".into(),
                    outcome: HandshakeOutcome::Missing
                },
            ]
        );
    }
}
