//! Deterministic in-process execution of a whole problem.
//!
//! The simulator drives one [`Engine`] per agent through a virtual network:
//! agents step in name order within each round, messages are encoded and
//! decoded through the real wire codec on every hop, and an optional fault
//! model drops or delays cycle traffic. Everything — agent initialization,
//! fault rolls, iteration order — derives from the run seed, so identical
//! inputs produce identical transcripts.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{AgentStatus, Engine, PenaltyKind};
use crate::problem::{AgentConfig, ProblemSpec};
use crate::protocol::{self, Message};

/// Fault model and seed for one simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Probability that a cycle message is lost.
    pub drop_rate: f64,
    /// Maximum extra rounds a cycle message may be held back.
    pub max_delay_rounds: u64,
    /// Lockstep rounds with no loss; forces the fault knobs to zero.
    pub synchronous: bool,
}

impl SimConfig {
    pub fn synchronous(seed: u64) -> Self {
        SimConfig {
            seed,
            drop_rate: 0.0,
            max_delay_rounds: 0,
            synchronous: true,
        }
    }

    pub fn faulty(seed: u64, drop_rate: f64, max_delay_rounds: u64) -> Self {
        SimConfig {
            seed,
            drop_rate,
            max_delay_rounds,
            synchronous: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(SimError::BadDropRate(self.drop_rate));
        }
        if self.synchronous && (self.drop_rate != 0.0 || self.max_delay_rounds != 0) {
            return Err(SimError::SynchronousWithFaults);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid problem: {0}")]
    InvalidProblem(crate::problem::ConfigError),
    #[error("drop rate {0} is not a probability")]
    BadDropRate(f64),
    #[error("a synchronous run cannot drop or delay messages")]
    SynchronousWithFaults,
    #[error("constraint graph is disconnected ({0} and {1} share no path)")]
    Disconnected(String, String),
    #[error("run_with_faults requires a non-synchronous config")]
    FaultRunWithoutFaults,
    #[error("engine fault at agent {agent}: {error}")]
    Engine {
        agent: String,
        error: crate::engine::EngineError,
    },
}

/// One line of the run transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Send { round: u64, msg: Message },
    Deliver { round: u64, msg: Message },
    Drop { round: u64, msg: Message },
    Step {
        round: u64,
        agent: String,
        value: i64,
        tc: u64,
        deadlocked: bool,
        penalty: Option<PenaltyKind>,
        status: AgentStatus,
    },
    Handshake {
        agent: String,
        neighbour: String,
        outcome: &'static str,
    },
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Send { round, msg } => write!(f, "round={round} send {msg}"),
            Event::Deliver { round, msg } => write!(f, "round={round} deliver {msg}"),
            Event::Drop { round, msg } => write!(f, "round={round} drop {msg}"),
            Event::Step {
                round,
                agent,
                value,
                tc,
                deadlocked,
                penalty,
                status,
            } => write!(
                f,
                "round={round} step agent={agent} value={value} tc={tc} deadlock={deadlocked} penalty={} status={}",
                penalty.map(PenaltyKind::token).unwrap_or("-"),
                status.token()
            ),
            Event::Handshake {
                agent,
                neighbour,
                outcome,
            } => write!(f, "round=0 handshake agent={agent} neighbour={neighbour} outcome={outcome}"),
        }
    }
}

/// Per-agent result of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentReport {
    pub final_value: i64,
    pub status: AgentStatus,
    pub rounds_used: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
    pub warnings: Vec<String>,
}

/// Whole-run verdict. Solved only when every agent detected termination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalVerdict {
    Solved,
    Interim,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub agents: BTreeMap<String, AgentReport>,
    pub verdict: GlobalVerdict,
    pub transcript: Vec<Event>,
}

impl SimOutcome {
    pub fn assignment(&self) -> BTreeMap<String, i64> {
        self.agents.iter().map(|(n, r)| (n.clone(), r.final_value)).collect()
    }

    pub fn solved(&self) -> bool {
        self.verdict == GlobalVerdict::Solved
    }

    /// Largest round any agent used.
    pub fn rounds(&self) -> u64 {
        self.agents.values().map(|r| r.rounds_used).max().unwrap_or(0)
    }

    pub fn transcript_text(&self) -> String {
        let mut out = String::new();
        for e in &self.transcript {
            out.push_str(&format!("{e}\n"));
        }
        out
    }
}

// Stable string hash for deriving per-agent seeds from the run seed.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn agent_seed(run_seed: u64, name: &str) -> u64 {
    fnv1a(name.as_bytes()) ^ run_seed.rotate_left(17)
}

/// Farthest-agent distance over the constraint graph, used as the
/// termination-counter threshold. This is the longest shortest walk between
/// any two agents with the walk's parity taken into account — on a graph
/// with no odd cycle it is exactly the graph diameter, while an odd cycle
/// can force the opposite-parity walk between a pair to be one hop longer.
/// Never below the plain diameter, so termination detection built on it
/// stays conservative. Errors on a disconnected graph.
pub fn compute_diameter(problem: &ProblemSpec) -> Result<u64, SimError> {
    problem.validate().map_err(SimError::InvalidProblem)?;
    let names: Vec<String> = {
        let mut n = problem.agent_names();
        n.sort();
        n
    };
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let n = names.len();
    let mut adj = alloc::vec![Vec::new(); n];
    for agent in &problem.agents {
        for c in &agent.constraints {
            let a = index[agent.name.as_str()];
            let b = index[c.other_var.as_str()];
            if !adj[a].contains(&b) {
                adj[a].push(b);
            }
            if !adj[b].contains(&a) {
                adj[b].push(a);
            }
        }
    }
    for neighbours in adj.iter_mut() {
        neighbours.sort_unstable();
    }

    let mut diameter = 0u64;
    for src in 0..n {
        // BFS over (node, walk parity).
        let mut dist = alloc::vec![[u64::MAX; 2]; n];
        dist[src][0] = 0;
        let mut queue = VecDeque::new();
        queue.push_back((src, 0usize));
        while let Some((v, p)) = queue.pop_front() {
            let d = dist[v][p];
            for &w in &adj[v] {
                let q = 1 - p;
                if dist[w][q] == u64::MAX {
                    dist[w][q] = d + 1;
                    queue.push_back((w, q));
                }
            }
        }
        for (other, d) in dist.iter().enumerate() {
            if other == src {
                continue;
            }
            let reachable: Vec<u64> = d.iter().copied().filter(|&x| x != u64::MAX).collect();
            if reachable.is_empty() {
                return Err(SimError::Disconnected(names[src].clone(), names[other].clone()));
            }
            let worst = reachable.into_iter().max().unwrap();
            diameter = diameter.max(worst);
        }
    }
    Ok(diameter)
}

/// Per ordered sender/recipient pair, messages wait here in send order;
/// a delayed head holds everything behind it back (per-link FIFO).
#[derive(Default)]
struct LinkQueue {
    queue: VecDeque<(u64, Message)>,
}

struct VirtualNet {
    links: BTreeMap<(String, String), LinkQueue>,
    rng: ChaCha8Rng,
    drop_rate: f64,
    max_delay_rounds: u64,
    startup: bool,
}

impl VirtualNet {
    /// Routes one message, re-encoding it through the wire codec so the
    /// simulation exercises exactly what the TCP path would carry.
    fn send(&mut self, round: u64, msg: Message, transcript: &mut Vec<Event>) {
        let line = protocol::encode(&msg).expect("engine produced an unencodable message");
        let msg = protocol::decode(&line).expect("wire round-trip");
        transcript.push(Event::Send {
            round,
            msg: msg.clone(),
        });
        if !self.startup && self.drop_rate > 0.0 && self.rng.gen_bool(self.drop_rate) {
            transcript.push(Event::Drop { round, msg });
            return;
        }
        let delay = if self.startup || self.max_delay_rounds == 0 {
            0
        } else {
            self.rng.gen_range(0..=self.max_delay_rounds)
        };
        let key = (msg.sender.clone(), msg.recipient.clone());
        self.links.entry(key).or_default().queue.push_back((round + delay, msg));
    }

    /// Everything due for `recipient` by `round`, oldest first.
    fn collect(&mut self, recipient: &str, round: u64, transcript: &mut Vec<Event>) -> Vec<Message> {
        let mut due = Vec::new();
        for ((_, to), link) in self.links.iter_mut() {
            if to != recipient {
                continue;
            }
            while let Some(&(avail, _)) = link.queue.front() {
                if avail > round {
                    break;
                }
                let (_, msg) = link.queue.pop_front().unwrap();
                transcript.push(Event::Deliver {
                    round,
                    msg: msg.clone(),
                });
                due.push(msg);
            }
        }
        due
    }
}

/// Runs a whole problem in-process: handshake, initial value exchange, then
/// improvement cycles until every agent leaves RUNNING. Deterministic in
/// (problem, sim config).
pub fn run_simulation(problem: &ProblemSpec, sim: SimConfig) -> Result<SimOutcome, SimError> {
    sim.validate()?;
    problem.validate().map_err(SimError::InvalidProblem)?;
    let diameter = match problem.diameter {
        Some(d) => d,
        None => compute_diameter(problem)?.max(1),
    };

    let mut transcript = Vec::new();
    let mut engines: BTreeMap<String, Engine> = BTreeMap::new();
    for agent in &problem.agents {
        let mut cfg = AgentConfig::new(agent.name.clone(), agent.domain.clone(), agent.constraints.clone());
        cfg.max_iterations = problem.max_iterations;
        cfg.diameter = diameter;
        cfg.seed = agent_seed(sim.seed, &agent.name);
        let engine = Engine::new(cfg).map_err(SimError::InvalidProblem)?;
        engines.insert(agent.name.clone(), engine);
    }
    let names: Vec<String> = engines.keys().cloned().collect();

    let mut net = VirtualNet {
        links: BTreeMap::new(),
        rng: ChaCha8Rng::seed_from_u64(sim.seed ^ 0x5137_ed0d_9d2c_1f2b),
        drop_rate: sim.drop_rate,
        max_delay_rounds: sim.max_delay_rounds,
        startup: true,
    };
    let mut sent: BTreeMap<String, u64> = BTreeMap::new();
    let mut received: BTreeMap<String, u64> = BTreeMap::new();

    // Startup: operators cross first, then each agent settles its
    // constraint set and announces its initial value. Both phases are
    // delivered reliably; the fault model concerns cycle traffic.
    for name in &names {
        for msg in engines[name].handshake_messages() {
            *sent.entry(name.clone()).or_insert(0) += 1;
            net.send(0, msg, &mut transcript);
        }
    }
    for name in &names {
        let inbox = net.collect(name, 0, &mut transcript);
        *received.entry(name.clone()).or_insert(0) += inbox.len() as u64;
        let engine = engines.get_mut(name).unwrap();
        for msg in &inbox {
            engine.apply_message(msg);
        }
        for result in engine.finish_handshake() {
            let outcome = match result.outcome {
                protocol::HandshakeOutcome::Consistent => "consistent",
                protocol::HandshakeOutcome::Conflict => "conflict",
                protocol::HandshakeOutcome::Missing => "missing",
            };
            transcript.push(Event::Handshake {
                agent: name.clone(),
                neighbour: result.neighbour,
                outcome,
            });
        }
    }
    for name in &names {
        for msg in engines[name].initial_messages() {
            *sent.entry(name.clone()).or_insert(0) += 1;
            net.send(0, msg, &mut transcript);
        }
    }
    for name in &names {
        let inbox = net.collect(name, 0, &mut transcript);
        *received.entry(name.clone()).or_insert(0) += inbox.len() as u64;
        let engine = engines.get_mut(name).unwrap();
        for msg in &inbox {
            engine.apply_message(msg);
        }
    }
    net.startup = false;

    // Improvement cycles: agents step in name order; a message sent by an
    // earlier agent reaches a later one within the same round, giving the
    // pipelined turn-taking schedule without global knowledge.
    for round in 1..=problem.max_iterations {
        let mut all_stopped = true;
        for name in &names {
            if engines[name].status() != AgentStatus::Running {
                continue;
            }
            let inbox = net.collect(name, round, &mut transcript);
            *received.entry(name.clone()).or_insert(0) += inbox.len() as u64;
            let engine = engines.get_mut(name).unwrap();
            let outbound = engine.run_cycle(&inbox).map_err(|error| SimError::Engine {
                agent: name.clone(),
                error,
            })?;
            let decision = engine.last_decision().expect("cycle just ran");
            transcript.push(Event::Step {
                round,
                agent: name.clone(),
                value: engine.current_value(),
                tc: engine.termination_counter(),
                deadlocked: decision.deadlocked,
                penalty: decision.penalty_kind,
                status: engine.status(),
            });
            for msg in outbound {
                *sent.entry(name.clone()).or_insert(0) += 1;
                net.send(round, msg, &mut transcript);
            }
            if engines[name].status() == AgentStatus::Running {
                all_stopped = false;
            }
        }
        if all_stopped {
            break;
        }
    }

    let mut agents = BTreeMap::new();
    let mut all_solved = true;
    for name in &names {
        let engine = &engines[name];
        let status = engine.status();
        if status != AgentStatus::Solved {
            all_solved = false;
        }
        agents.insert(
            name.clone(),
            AgentReport {
                final_value: engine.current_value(),
                status,
                rounds_used: engine.round(),
                messages_sent: sent.get(name).copied().unwrap_or(0),
                messages_received: received.get(name).copied().unwrap_or(0),
                warnings: engine.warnings().to_vec(),
            },
        );
    }
    Ok(SimOutcome {
        agents,
        verdict: if all_solved {
            GlobalVerdict::Solved
        } else {
            GlobalVerdict::Interim
        },
        transcript,
    })
}

/// Fault-injection entry: same as [`run_simulation`] but insists the config
/// actually injects something.
pub fn run_with_faults(problem: &ProblemSpec, sim: SimConfig) -> Result<SimOutcome, SimError> {
    if sim.synchronous || (sim.drop_rate == 0.0 && sim.max_delay_rounds == 0) {
        return Err(SimError::FaultRunWithoutFaults);
    }
    run_simulation(problem, sim)
}
