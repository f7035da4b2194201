//! CNF formulas: parsing, validation, evaluation, and the brute-force
//! solution enumerator used as ground truth throughout the crate.
//!
//! Assignments are encoded two ways: as `&[bool]` slices indexed by
//! `variable - 1`, and as integers where bit `j - 1` holds the value of
//! variable `j` (bit 1 means true). Both conventions are used consistently
//! by the circuit builders and the simulator.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Variable count above which [`CnfFormula::enumerate_solutions`] refuses
/// to run by default.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CnfError {
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<CnfError>,
    },
    #[error("expected `p cnf <vars> <clauses>` header before clause data")]
    MissingHeader,
    #[error("duplicate `p cnf` header")]
    DuplicateHeader,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("invalid token `{0}`")]
    InvalidToken(String),
    #[error("unterminated clause at end of input")]
    UnterminatedClause,
    #[error("found {found} clauses, header declares {declared}")]
    ClauseCountMismatch { found: usize, declared: usize },
    #[error("empty clause")]
    EmptyClause,
    #[error("formula has no clauses")]
    NoClauses,
    #[error("variable index 0 is not allowed")]
    ZeroVariable,
    #[error("variable {variable} out of range 1..={num_vars}")]
    VariableOutOfRange { variable: usize, num_vars: usize },
    #[error("duplicate literal {lit} in clause")]
    DuplicateLiteral { lit: i64 },
    #[error("assignment has {actual} bits, formula has {expected} variables")]
    AssignmentLength { expected: usize, actual: usize },
    #[error("{num_vars} variables exceed the enumeration limit of {limit}")]
    EnumerationLimit { num_vars: usize, limit: usize },
}

impl CnfError {
    fn at(self, line: usize) -> CnfError {
        CnfError::AtLine {
            line,
            source: Box::new(self),
        }
    }
}

/// A propositional variable or its negation. Variables are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    variable: usize,
    negated: bool,
}

impl Literal {
    pub fn new(variable: usize, negated: bool) -> Result<Self, CnfError> {
        if variable == 0 {
            return Err(CnfError::ZeroVariable);
        }
        Ok(Literal { variable, negated })
    }

    pub fn positive(variable: usize) -> Result<Self, CnfError> {
        Literal::new(variable, false)
    }

    pub fn negative(variable: usize) -> Result<Self, CnfError> {
        Literal::new(variable, true)
    }

    pub fn variable(&self) -> usize {
        self.variable
    }

    pub fn negated(&self) -> bool {
        self.negated
    }

    /// Truth value of the literal when its variable takes `value`.
    pub fn holds(&self, value: bool) -> bool {
        value != self.negated
    }

    /// DIMACS integer form: `variable` for positive, `-variable` for negated.
    pub fn to_dimacs(&self) -> i64 {
        let v = self.variable as i64;
        if self.negated {
            -v
        } else {
            v
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// A disjunction of literals. Nonempty, with no repeated
/// (variable, polarity) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    literals: Vec<Literal>,
}

impl Clause {
    pub fn new(literals: Vec<Literal>) -> Result<Self, CnfError> {
        if literals.is_empty() {
            return Err(CnfError::EmptyClause);
        }
        let mut seen = HashSet::new();
        for lit in &literals {
            if !seen.insert((lit.variable, lit.negated)) {
                return Err(CnfError::DuplicateLiteral {
                    lit: lit.to_dimacs(),
                });
            }
        }
        Ok(Clause { literals })
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: clauses are nonempty
    }

    /// True when at least one literal holds under the assignment.
    pub fn is_satisfied_by(&self, assignment: &[bool]) -> bool {
        self.literals
            .iter()
            .any(|lit| lit.holds(assignment[lit.variable - 1]))
    }
}

/// A CNF formula: `num_vars` propositional variables and a conjunction of
/// clauses. Variables may go unused in every clause; they are then free
/// and any value satisfies them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Clause>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Result<Self, CnfError> {
        if clauses.is_empty() {
            return Err(CnfError::NoClauses);
        }
        for clause in &clauses {
            for lit in clause.literals() {
                if lit.variable > num_vars {
                    return Err(CnfError::VariableOutOfRange {
                        variable: lit.variable,
                        num_vars,
                    });
                }
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// True iff every clause contains a satisfied literal.
    pub fn evaluate(&self, assignment: &[bool]) -> Result<bool, CnfError> {
        if assignment.len() != self.num_vars {
            return Err(CnfError::AssignmentLength {
                expected: self.num_vars,
                actual: assignment.len(),
            });
        }
        Ok(self.clauses.iter().all(|c| c.is_satisfied_by(assignment)))
    }

    /// Evaluate an integer-encoded assignment (bit `j-1` = variable `j`).
    pub fn evaluate_index(&self, index: u64) -> bool {
        let bits = assignment_bits(index, self.num_vars);
        self.clauses.iter().all(|c| c.is_satisfied_by(&bits))
    }

    /// All satisfying assignments in ascending integer order, found by
    /// exhaustive search over the 2^n assignments. The length of the result
    /// is the solution count M.
    pub fn enumerate_solutions(&self) -> Result<Vec<u64>, CnfError> {
        self.enumerate_solutions_with_limit(DEFAULT_ENUMERATION_LIMIT)
    }

    pub fn enumerate_solutions_with_limit(&self, limit: usize) -> Result<Vec<u64>, CnfError> {
        if self.num_vars > limit {
            return Err(CnfError::EnumerationLimit {
                num_vars: self.num_vars,
                limit,
            });
        }
        let n = 1u64 << self.num_vars;
        Ok((0..n).filter(|&k| self.evaluate_index(k)).collect())
    }

    /// Occurrence count r_j per variable, both polarities included.
    /// Index 0 of the result corresponds to variable 1; unused variables
    /// report 0.
    pub fn occurrence_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_vars];
        for clause in &self.clauses {
            for lit in clause.literals() {
                counts[lit.variable - 1] += 1;
            }
        }
        counts
    }

    /// Serialize back to DIMACS: header, then one clause per line.
    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for clause in &self.clauses {
            for lit in clause.literals() {
                out.push_str(&lit.to_dimacs().to_string());
                out.push(' ');
            }
            out.push_str("0\n");
        }
        out
    }
}

/// Expand an integer assignment into per-variable booleans.
pub fn assignment_bits(index: u64, num_vars: usize) -> Vec<bool> {
    (0..num_vars).map(|j| (index >> j) & 1 == 1).collect()
}

/// Render an assignment as a bit string, variable 1 first.
pub fn assignment_string(index: u64, num_vars: usize) -> String {
    (0..num_vars)
        .map(|j| if (index >> j) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Parse DIMACS CNF text: optional `c` comment lines, one `p cnf <n> <m>`
/// header, then clauses as whitespace-separated signed integers, each
/// terminated by 0. Clauses may span lines. Errors carry the 1-based line
/// number where they were detected.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, CnfError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Clause> = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut current_dimacs: Vec<i64> = Vec::new();
    let mut last_line = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        last_line = line_no;
        if line.starts_with('p') {
            if header.is_some() {
                return Err(CnfError::DuplicateHeader.at(line_no));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 || fields[0] != "p" || fields[1] != "cnf" {
                return Err(CnfError::MalformedHeader(line.to_string()).at(line_no));
            }
            let n: usize = fields[2]
                .parse()
                .map_err(|_| CnfError::MalformedHeader(line.to_string()).at(line_no))?;
            let m: usize = fields[3]
                .parse()
                .map_err(|_| CnfError::MalformedHeader(line.to_string()).at(line_no))?;
            header = Some((n, m));
            continue;
        }

        let (num_vars, declared) = match header {
            Some(h) => h,
            None => return Err(CnfError::MissingHeader.at(line_no)),
        };

        for token in line.split_whitespace() {
            let value: i64 = token
                .parse()
                .map_err(|_| CnfError::InvalidToken(token.to_string()).at(line_no))?;
            if value == 0 {
                if clauses.len() == declared {
                    return Err(CnfError::ClauseCountMismatch {
                        found: declared + 1,
                        declared,
                    }
                    .at(line_no));
                }
                let clause =
                    Clause::new(std::mem::take(&mut current)).map_err(|e| e.at(line_no))?;
                current_dimacs.clear();
                clauses.push(clause);
            } else {
                let variable = value.unsigned_abs() as usize;
                if variable > num_vars {
                    return Err(CnfError::VariableOutOfRange { variable, num_vars }.at(line_no));
                }
                if current_dimacs.contains(&value) {
                    return Err(CnfError::DuplicateLiteral { lit: value }.at(line_no));
                }
                current_dimacs.push(value);
                current.push(Literal::new(variable, value < 0).map_err(|e| e.at(line_no))?);
            }
        }
    }

    let (num_vars, declared) = header.ok_or(CnfError::MissingHeader.at(last_line.max(1)))?;
    if !current.is_empty() {
        return Err(CnfError::UnterminatedClause.at(last_line));
    }
    if clauses.len() != declared {
        return Err(CnfError::ClauseCountMismatch {
            found: clauses.len(),
            declared,
        }
        .at(last_line));
    }
    CnfFormula::new(num_vars, clauses)
}

/// The worked three-variable instance used across the test suite:
/// `(a) ∧ (ā ∨ b) ∧ (ā ∨ c)`, i.e. a and a→b and a→c, with the unique
/// solution a=1, b=1, c=1.
pub fn example_formula() -> CnfFormula {
    parse_dimacs("p cnf 3 3\n1 0\n-1 2 0\n-1 3 0\n").expect("example formula parses")
}

/// Rejection-sample a satisfiable 3-SAT instance: each clause draws three
/// distinct variables with random polarities. Needs `num_vars >= 3` and
/// small enough n for the brute-force satisfiability check.
pub fn random_satisfiable_3sat<R: rand::Rng>(
    rng: &mut R,
    num_vars: usize,
    num_clauses: usize,
) -> CnfFormula {
    use rand::seq::SliceRandom;
    assert!((3..=DEFAULT_ENUMERATION_LIMIT).contains(&num_vars));
    loop {
        let mut clauses = Vec::with_capacity(num_clauses);
        for _ in 0..num_clauses {
            let mut vars: Vec<usize> = (1..=num_vars).collect();
            vars.shuffle(rng);
            let literals = vars[..3]
                .iter()
                .map(|&v| Literal::new(v, rng.random()).unwrap())
                .collect();
            clauses.push(Clause::new(literals).unwrap());
        }
        let formula = CnfFormula::new(num_vars, clauses).unwrap();
        if !formula.enumerate_solutions().unwrap().is_empty() {
            return formula;
        }
    }
}
