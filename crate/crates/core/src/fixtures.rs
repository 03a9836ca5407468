//! Built-in sample problems, the seven standard test DisCSPs used across
//! the test suites. Constraints are entered mirrored on both endpoints,
//! exactly as two operators would type them into separate agents.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::problem::{parse_constraints, parse_domain, ProblemAgent, ProblemSpec};

fn spec(max_iterations: u64, diameter: u64, agents: &[(&str, &str, &str)]) -> ProblemSpec {
    let agents = agents
        .iter()
        .map(|(name, domain, constraints)| ProblemAgent {
            name: name.to_string(),
            domain: parse_domain(domain).expect("fixture domain"),
            constraints: parse_constraints(constraints, name).expect("fixture constraints"),
        })
        .collect();
    let spec = ProblemSpec {
        agents,
        max_iterations,
        diameter: Some(diameter),
    };
    spec.validate().expect("fixture spec");
    spec
}

/// Two agents, `A>B`. Satisfiable.
pub fn case1() -> ProblemSpec {
    spec(100, 1, &[("A", "1,2,3,4,5", "A>B"), ("B", "2,4,6,8,10", "B<A")])
}

/// Two agents with disjoint domains under `A=B`. Unsatisfiable.
pub fn case2() -> ProblemSpec {
    spec(100, 1, &[("A", "1,2,3,4,5", "A=B"), ("B", "6,7,8,9,10", "B=A")])
}

/// Three agents in a star: `A>B`, `A<C`. Satisfiable.
pub fn case3() -> ProblemSpec {
    spec(
        100,
        2,
        &[
            ("A", "1,2,3,4,5", "A>B,A<C"),
            ("B", "2,4,6,8,10", "B<A"),
            ("C", "1,3,5,7,9", "C>A"),
        ],
    )
}

/// Three agents in a triangle: `A!=B`, `A<C`, `B>C`. Satisfiable.
pub fn case4() -> ProblemSpec {
    spec(
        100,
        2,
        &[
            ("A", "1,2,3,4,5", "A!=B,A<C"),
            ("B", "2,4,6,8,10", "B!=A,B>C"),
            ("C", "1,3,5,7,9", "C>A,C<B"),
        ],
    )
}

/// Four agents in a cycle: `A=B`, `A!=C`, `B!=D`, `C>D`. Satisfiable.
pub fn case5() -> ProblemSpec {
    spec(
        100,
        2,
        &[
            ("A", "1,2,3,4,5", "A=B,A!=C"),
            ("B", "2,4,6,8,10", "B=A,B!=D"),
            ("C", "1,3,5,7,9", "C!=A,C>D"),
            ("D", "6,7,8,9,10", "D!=B,D<C"),
        ],
    )
}

/// Four agents in a chain: `A=B`, `B>C`, `C<=D`. Satisfiable.
pub fn case6() -> ProblemSpec {
    spec(
        100,
        3,
        &[
            ("A", "1,2,3,4,5", "A=B"),
            ("B", "2,4,6,8,10", "B=A,B>C"),
            ("C", "1,3,5,7,9", "C<B,C<=D"),
            ("D", "6,7,8,9,10", "D>=C"),
        ],
    )
}

/// Four agents, five constraints: `A<B`, `A>C`, `A<=D`, `B=D`, `C!=D`.
/// Satisfiable.
pub fn case7() -> ProblemSpec {
    spec(
        100,
        3,
        &[
            ("A", "1,2,3,4,5", "A<B,A>C,A<=D"),
            ("B", "2,4,6,8,10", "B>A,B=D"),
            ("C", "1,3,5,7,9", "C<A,C!=D"),
            ("D", "6,7,8,9,10", "D>=A,D=B,D!=C"),
        ],
    )
}

/// A deliberately conflicting pair: both sides claim `>`, which cannot both
/// hold, so the handshake must ignore the constraint at both endpoints.
pub fn conflicting_pair() -> ProblemSpec {
    spec(100, 1, &[("A", "1,2,3", "A>B"), ("B", "1,2,3", "B>A")])
}

/// All seven standard cases with their names and satisfiability.
pub fn all() -> Vec<(&'static str, ProblemSpec, bool)> {
    alloc::vec![
        ("case1", case1(), true),
        ("case2", case2(), false),
        ("case3", case3(), true),
        ("case4", case4(), true),
        ("case5", case5(), true),
        ("case6", case6(), true),
        ("case7", case7(), true),
    ]
}

/// The satisfiable standard cases, with their published farthest-agent
/// distances.
pub fn satisfiable() -> Vec<(&'static str, ProblemSpec)> {
    all()
        .into_iter()
        .filter(|(_, _, sat)| *sat)
        .map(|(name, spec, _)| (name, spec))
        .collect()
}
