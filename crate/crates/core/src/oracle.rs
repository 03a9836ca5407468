//! Brute-force reference solver: enumerate the Cartesian product of all
//! domains and list every satisfying assignment. Slow on purpose — it is the
//! independent ground truth the search-based solver is checked against.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::problem::{ComparisonOp, ProblemSpec};

/// Enumeration guard: problems beyond this many candidate assignments fall
/// back to `check_assignment` only.
pub const MAX_STATES: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("state space exceeds {MAX_STATES} assignments")]
    StateSpaceTooLarge,
    #[error("assignment is missing agent `{0}`")]
    MissingAgent(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(crate::problem::ConfigError),
}

/// One undirected constraint in canonical form: endpoints in name order,
/// the operator as seen from the lexicographically smaller side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairConstraint {
    pub left: String,
    pub op: ComparisonOp,
    pub right: String,
}

impl PairConstraint {
    pub fn holds(&self, left_value: i64, right_value: i64) -> bool {
        self.op.holds(left_value, right_value)
    }
}

/// The problem's constraints reduced to one entry per pair. Pairs whose two
/// directed expressions are not mirrors of each other are conflicting: the
/// solver's handshake ignores them on both sides, so the oracle excludes
/// them too and reports them separately.
#[derive(Debug, Clone, Default)]
pub struct CanonicalConstraints {
    pub pairs: Vec<PairConstraint>,
    pub conflicts: Vec<(String, String)>,
}

pub fn canonicalize(problem: &ProblemSpec) -> Result<CanonicalConstraints, OracleError> {
    problem.validate().map_err(OracleError::InvalidProblem)?;
    let mut seen: BTreeMap<(String, String), ComparisonOp> = BTreeMap::new();
    let mut conflicting: BTreeSet<(String, String)> = BTreeSet::new();
    for agent in &problem.agents {
        for c in &agent.constraints {
            let (key, op) = if c.self_var < c.other_var {
                ((c.self_var.clone(), c.other_var.clone()), c.op)
            } else {
                ((c.other_var.clone(), c.self_var.clone()), c.op.mirror())
            };
            match seen.get(&key) {
                None => {
                    seen.insert(key, op);
                }
                Some(&existing) if existing == op => {}
                Some(_) => {
                    conflicting.insert(key);
                }
            }
        }
    }
    let mut pairs = Vec::new();
    for ((left, right), op) in seen {
        if conflicting.contains(&(left.clone(), right.clone())) {
            continue;
        }
        pairs.push(PairConstraint { left, op, right });
    }
    Ok(CanonicalConstraints {
        pairs,
        conflicts: conflicting.into_iter().collect(),
    })
}

/// All satisfying assignments found, in lexicographic agent-name and
/// domain-input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionSet {
    pub assignments: Vec<BTreeMap<String, i64>>,
    /// True when the full Cartesian product was enumerated (the cap was not
    /// hit).
    pub exhausted: bool,
}

impl SolutionSet {
    pub fn is_satisfiable(&self) -> bool {
        !self.assignments.is_empty()
    }

    pub fn contains(&self, assignment: &BTreeMap<String, i64>) -> bool {
        self.assignments.iter().any(|a| a == assignment)
    }
}

/// Enumerates every satisfying assignment, up to `cap` listed solutions.
pub fn enumerate_solutions(problem: &ProblemSpec, cap: usize) -> Result<SolutionSet, OracleError> {
    let canonical = canonicalize(problem)?;
    let mut agents: Vec<&crate::problem::ProblemAgent> = problem.agents.iter().collect();
    agents.sort_by(|a, b| a.name.cmp(&b.name));

    let states: u128 = agents.iter().map(|a| a.domain.len() as u128).product();
    if states > MAX_STATES {
        return Err(OracleError::StateSpaceTooLarge);
    }

    let name_index: BTreeMap<&str, usize> = agents.iter().enumerate().map(|(i, a)| (a.name.as_str(), i)).collect();
    let pair_idx: Vec<(usize, ComparisonOp, usize)> = canonical
        .pairs
        .iter()
        .map(|p| (name_index[p.left.as_str()], p.op, name_index[p.right.as_str()]))
        .collect();

    let mut assignments = Vec::new();
    let mut exhausted = true;
    let mut odometer = alloc::vec![0usize; agents.len()];
    'outer: loop {
        let values: Vec<i64> = odometer
            .iter()
            .enumerate()
            .map(|(i, &d)| agents[i].domain.values()[d])
            .collect();
        if pair_idx.iter().all(|&(l, op, r)| op.holds(values[l], values[r])) {
            if assignments.len() >= cap {
                exhausted = false;
                break;
            }
            let assignment: BTreeMap<String, i64> = agents
                .iter()
                .zip(values.iter())
                .map(|(a, &v)| (a.name.clone(), v))
                .collect();
            assignments.push(assignment);
        }
        // Advance, last agent fastest.
        for i in (0..agents.len()).rev() {
            odometer[i] += 1;
            if odometer[i] < agents[i].domain.len() {
                continue 'outer;
            }
            odometer[i] = 0;
        }
        break;
    }
    Ok(SolutionSet { assignments, exhausted })
}

/// True iff the assignment satisfies every non-conflicting constraint pair.
pub fn check_assignment(problem: &ProblemSpec, assignment: &BTreeMap<String, i64>) -> Result<bool, OracleError> {
    let canonical = canonicalize(problem)?;
    for agent in &problem.agents {
        if !assignment.contains_key(&agent.name) {
            return Err(OracleError::MissingAgent(agent.name.clone()));
        }
    }
    Ok(canonical
        .pairs
        .iter()
        .all(|p| p.holds(assignment[&p.left], assignment[&p.right])))
}
