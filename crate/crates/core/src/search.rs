//! The fixed-point search loop: φ schedules, exact-conditioning and
//! trajectory execution, the Grover baseline runner, and the
//! circuit-versus-operator equivalence check.
//!
//! One iteration applies the controlled oracle with the scheduled φ_t,
//! the controlled diffuser, and a Z measurement of the control qubit.
//! Outcome 0 halts with the variable register in the uniform solution
//! superposition; outcome 1 continues. Exact mode conditions on survival
//! and accumulates the halting distribution; trajectory mode samples it.

use thiserror::Error;

use crate::analytic::TransferState;
use crate::builders::{
    self, build_layout, controlled_diffuser, controlled_oracle, ControlTreatment, QubitLayout,
};
use crate::circuit::{Circuit, CircuitError};
use crate::cnf::{CnfError, CnfFormula};
use crate::rng::{self, PfpRng};
use crate::sim::{
    logical_expectation, MeasureBasis, MeasureMode, Observable, SimError, StateVector,
};
use num_complex::Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("iteration index must be at least 1")]
    ZeroIteration,
    #[error("solution count {m} invalid for space size {n}")]
    BadCounts { m: u64, n: u64 },
    #[error("max_iters must be at least 1")]
    ZeroIterationBudget,
    #[error("operator equivalence requires at most {limit} variables, formula has {num_vars}")]
    TooWideForDense { num_vars: usize, limit: usize },
    #[error(transparent)]
    Cnf(#[from] CnfError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// φ_t for iteration t ≥ 1 when the solution count is unknown:
/// cos φ_t = (1 − sin(π/(2t))) / (1 + sin(π/(2t))). Starts at π/2 and
/// decreases monotonically to 0, where the iteration becomes a plain
/// Grover step.
pub fn phi_unknown(t: usize) -> Result<f64, SearchError> {
    if t == 0 {
        return Err(SearchError::ZeroIteration);
    }
    let s = (std::f64::consts::PI / (2.0 * t as f64)).sin();
    Ok(((1.0 - s) / (1.0 + s)).acos())
}

/// The critically damped φ for a known solution count:
/// cos φ = (1 − sinθ)/(1 + sinθ) with θ = arcsin√(M/N).
pub fn phi_critical(m: u64, n: u64) -> Result<f64, SearchError> {
    if m == 0 || m > n {
        return Err(SearchError::BadCounts { m, n });
    }
    let sin_theta = ((m as f64) / (n as f64)).sqrt();
    Ok(((1.0 - sin_theta) / (1.0 + sin_theta)).acos())
}

/// Per-iteration rotation schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiSchedule {
    /// The decreasing unknown-count schedule.
    UnknownM,
    /// Constant critical damping for a known θ = arcsin√(M/N).
    Critical { theta: f64 },
    /// A constant user-chosen angle; 0 reduces to plain Grover iteration.
    Fixed { phi: f64 },
}

impl PhiSchedule {
    pub fn critical_for_counts(m: u64, n: u64) -> Result<Self, SearchError> {
        if m == 0 || m > n {
            return Err(SearchError::BadCounts { m, n });
        }
        Ok(PhiSchedule::Critical {
            theta: ((m as f64) / (n as f64)).sqrt().asin(),
        })
    }

    pub fn phi(&self, t: usize) -> Result<f64, SearchError> {
        if t == 0 {
            return Err(SearchError::ZeroIteration);
        }
        match self {
            PhiSchedule::UnknownM => phi_unknown(t),
            PhiSchedule::Critical { theta } => {
                Ok(((1.0 - theta.sin()) / (1.0 + theta.sin())).acos())
            }
            PhiSchedule::Fixed { phi } => Ok(*phi),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PhiSchedule::UnknownM => "unknown",
            PhiSchedule::Critical { .. } => "critical",
            PhiSchedule::Fixed { .. } => "fixed",
        }
    }
}

/// Default iteration cap: ⌈3·(π/4)·√N⌉ + 10, a comfortable multiple of
/// the ~1.5× Grover overhead of the fixed-point schedule.
pub fn default_max_iters(num_vars: usize) -> usize {
    let n = (1u64 << num_vars) as f64;
    (3.0 * std::f64::consts::FRAC_PI_4 * n.sqrt()).ceil() as usize + 10
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub phi: f64,
    /// P(control = 0) at this iteration, conditioned on having survived
    /// the previous ones.
    pub halt_probability: f64,
    /// 1 − branch weight: total probability that the run has halted (and
    /// yielded a solution) by the end of this iteration.
    pub cumulative_success: f64,
    pub branch_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PfpOutcome {
    Solved { assignment: u64 },
    Exhausted { iterations: usize },
}

#[derive(Debug, Clone)]
pub struct PfpRunReport {
    pub iterations: Vec<IterationRecord>,
    pub outcome: PfpOutcome,
    pub seed: u64,
    /// Worst ancilla/group-agreement leakage seen at any iteration
    /// boundary.
    pub max_leakage: f64,
}

/// Iteration log plus the extracted assignment, shared by the monolithic
/// and distributed runners.
#[derive(Debug, Clone)]
pub struct PfpSummary {
    pub iterations: Vec<IterationRecord>,
    pub assignment: Option<u64>,
    pub max_leakage: f64,
}

impl PfpSummary {
    pub fn solved(iterations: Vec<IterationRecord>, assignment: u64, max_leakage: f64) -> Self {
        PfpSummary {
            iterations,
            assignment: Some(assignment),
            max_leakage,
        }
    }

    pub fn exhausted(iterations: Vec<IterationRecord>, max_leakage: f64) -> Self {
        PfpSummary {
            iterations,
            assignment: None,
            max_leakage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunMode {
    /// Condition on survival each iteration; stop once the accumulated
    /// halting probability reaches `success_target`.
    Exact { success_target: f64 },
    /// Sample the control measurement; halt on outcome 0 and measure one
    /// representative per variable group.
    Trajectory,
}

impl RunMode {
    pub fn exact() -> Self {
        RunMode::Exact {
            success_target: 0.99,
        }
    }
}

/// Drives the iteration loop over an owned simulator state. The diffuser
/// is φ-independent and built once; the oracle is rebuilt per iteration.
pub struct PfpEngine {
    formula: CnfFormula,
    layout: QubitLayout,
    schedule: PhiSchedule,
    diffuser: Circuit,
    state: StateVector,
    t: usize,
    max_leakage: f64,
    last_halt_state: Option<StateVector>,
}

/// What one trajectory-mode iteration produced.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryStep {
    Continue(IterationRecord),
    Halted {
        record: IterationRecord,
        assignment: u64,
    },
}

impl PfpEngine {
    pub fn new(formula: &CnfFormula, schedule: PhiSchedule) -> Result<Self, SearchError> {
        let layout = build_layout(formula);
        let diffuser = controlled_diffuser(&layout)?;
        let state = StateVector::init(layout.total_width(), &layout.init_groups())?;
        Ok(PfpEngine {
            formula: formula.clone(),
            layout,
            schedule,
            diffuser,
            state,
            t: 0,
            max_leakage: 0.0,
            last_halt_state: None,
        })
    }

    pub fn layout(&self) -> &QubitLayout {
        &self.layout
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn iterations_run(&self) -> usize {
        self.t
    }

    pub fn max_leakage(&self) -> f64 {
        self.max_leakage
    }

    fn check_hygiene(&mut self) -> Result<(), SearchError> {
        let space = self.layout.logical_space(ControlTreatment::FreeBit);
        let (_, leakage) = self.state.logical_state(&space)?;
        self.max_leakage = self.max_leakage.max(leakage);
        Ok(())
    }

    /// Apply oracle and diffuser for the next iteration; returns
    /// (φ_t, P(control = 0)) with the state left unmeasured.
    fn advance(&mut self) -> Result<(usize, f64, f64), SearchError> {
        self.t += 1;
        let phi = self.schedule.phi(self.t)?;
        let oracle = controlled_oracle(&self.layout, &self.formula, phi)?;
        self.state.apply(&oracle)?;
        self.state.apply(&self.diffuser)?;
        self.check_hygiene()?;
        let p0 = self.state.probability_of(self.layout.control_qubit(), 0);
        Ok((self.t, phi, p0))
    }

    /// One exact-conditioning iteration: record the halting probability,
    /// stash the halting branch, and condition on survival.
    pub fn step_exact(&mut self) -> Result<IterationRecord, SearchError> {
        let weight_before = self.state.branch_weight();
        let (t, phi, p0) = self.advance()?;
        if p0 > 1e-15 {
            let mut halted = self.state.clone();
            halted.measure(
                self.layout.control_qubit(),
                MeasureBasis::Z,
                MeasureMode::ConditionOn(0),
            )?;
            self.last_halt_state = Some(halted);
        }
        if 1.0 - p0 < 1e-15 {
            // The surviving branch is empty; the run has halted with
            // certainty.
            self.state.set_branch_weight(0.0);
        } else {
            self.state.measure(
                self.layout.control_qubit(),
                MeasureBasis::Z,
                MeasureMode::ConditionOn(1),
            )?;
        }
        let weight = self.state.branch_weight();
        Ok(IterationRecord {
            t,
            phi,
            halt_probability: p0,
            cumulative_success: 1.0 - weight,
            branch_weight: weight.max(0.0).min(weight_before),
        })
    }

    /// One sampled iteration. On halt, measures member 0 of every
    /// variable group to extract the assignment.
    pub fn step_trajectory(&mut self, rng: &mut PfpRng) -> Result<TrajectoryStep, SearchError> {
        let weight_before = self.state.branch_weight();
        let (t, phi, p0) = self.advance()?;
        let record_weight = weight_before * (1.0 - p0);
        let outcome = self
            .state
            .measure(
                self.layout.control_qubit(),
                MeasureBasis::Z,
                MeasureMode::Trajectory(rng),
            )?
            .outcome;
        // Bookkeeping mirrors exact mode so both report the same exact
        // per-iteration distribution regardless of the sampled path.
        self.state.set_branch_weight(record_weight);
        let record = IterationRecord {
            t,
            phi,
            halt_probability: p0,
            cumulative_success: 1.0 - record_weight,
            branch_weight: record_weight,
        };
        if outcome == 0 {
            let assignment = self.measure_assignment(rng)?;
            Ok(TrajectoryStep::Halted { record, assignment })
        } else {
            Ok(TrajectoryStep::Continue(record))
        }
    }

    fn measure_assignment(&mut self, rng: &mut PfpRng) -> Result<u64, SearchError> {
        let mut assignment = 0u64;
        for var in 1..=self.formula.num_vars() {
            let rep = self.layout.representative(var);
            let bit = self
                .state
                .measure(rep, MeasureBasis::Z, MeasureMode::Trajectory(rng))?
                .outcome;
            if bit == 1 {
                assignment |= 1 << (var - 1);
            }
        }
        Ok(assignment)
    }

    /// Sample an assignment from the most recent halting branch.
    fn sample_halt_assignment(&self, rng: &mut PfpRng) -> Result<Option<u64>, SearchError> {
        let halted = match &self.last_halt_state {
            Some(state) => state,
            None => return Ok(None),
        };
        let mut scratch = halted.clone();
        let mut assignment = 0u64;
        for var in 1..=self.formula.num_vars() {
            let rep = self.layout.representative(var);
            let bit = scratch
                .measure(rep, MeasureBasis::Z, MeasureMode::Trajectory(rng))?
                .outcome;
            if bit == 1 {
                assignment |= 1 << (var - 1);
            }
        }
        Ok(Some(assignment))
    }

    /// Trace vector (Tr ρA, Tr ρO, Tr ρ) of the current surviving branch,
    /// for cross-checking against the analytic recursion.
    pub fn transfer_state(&self, solutions: &[u64]) -> Result<TransferState, SearchError> {
        let space = self.layout.logical_space(ControlTreatment::FixedOne);
        let (logical, _) = self.state.logical_state(&space)?;
        let w = self.state.branch_weight();
        Ok(TransferState {
            a: w * logical_expectation(&logical, solutions, Observable::CrossTerm),
            o: w * logical_expectation(&logical, solutions, Observable::OracleReflection),
            p: w,
        })
    }
}

/// Run the full loop. `seed` drives trajectory sampling and, in exact
/// mode, the sampling of the reported assignment from the halting branch.
pub fn pfp_run(
    formula: &CnfFormula,
    schedule: PhiSchedule,
    mode: RunMode,
    max_iters: usize,
    seed: u64,
) -> Result<PfpRunReport, SearchError> {
    if max_iters == 0 {
        return Err(SearchError::ZeroIterationBudget);
    }
    let mut engine = PfpEngine::new(formula, schedule)?;
    let mut rng = rng::seeded(seed);
    let mut records = Vec::new();

    match mode {
        RunMode::Exact { success_target } => {
            for _ in 0..max_iters {
                let record = engine.step_exact()?;
                let done = record.cumulative_success >= success_target
                    || record.branch_weight < 1e-15;
                records.push(record);
                if done {
                    break;
                }
            }
            let outcome = match engine.sample_halt_assignment(&mut rng)? {
                Some(assignment)
                    if records
                        .last()
                        .is_some_and(|r| r.cumulative_success >= success_target) =>
                {
                    PfpOutcome::Solved { assignment }
                }
                _ => PfpOutcome::Exhausted {
                    iterations: records.len(),
                },
            };
            Ok(PfpRunReport {
                iterations: records,
                outcome,
                seed,
                max_leakage: engine.max_leakage(),
            })
        }
        RunMode::Trajectory => {
            for _ in 0..max_iters {
                match engine.step_trajectory(&mut rng)? {
                    TrajectoryStep::Continue(record) => records.push(record),
                    TrajectoryStep::Halted { record, assignment } => {
                        records.push(record);
                        return Ok(PfpRunReport {
                            iterations: records,
                            outcome: PfpOutcome::Solved { assignment },
                            seed,
                            max_leakage: engine.max_leakage(),
                        });
                    }
                }
            }
            let iterations = records.len();
            Ok(PfpRunReport {
                iterations: records,
                outcome: PfpOutcome::Exhausted { iterations },
                seed,
                max_leakage: engine.max_leakage(),
            })
        }
    }
}

/// Exact success probability of the plain Grover baseline after each of
/// 0..=iterations applications of oracle + diffuser.
pub fn grover_run(formula: &CnfFormula, iterations: usize) -> Result<Vec<f64>, SearchError> {
    let baseline = builders::grover_baseline(formula)?;
    let solutions = formula.enumerate_solutions()?;
    let space = baseline.layout.logical_space();
    let mut state = StateVector::zero_state(baseline.layout.total_width);
    for q in 0..baseline.layout.num_vars {
        state.apply_gate(&crate::circuit::Gate::h(q))?;
    }
    let mut curve = Vec::with_capacity(iterations + 1);
    curve.push(state.expectation(&space, &solutions, Observable::SolutionProjector)?);
    for _ in 0..iterations {
        state.apply(&baseline.oracle)?;
        state.apply(&baseline.diffuser)?;
        curve.push(state.expectation(&space, &solutions, Observable::SolutionProjector)?);
    }
    Ok(curve)
}

/// Per-iteration transfer traces of the exact-conditioning run, including
/// the initial state at t = 0.
pub fn transfer_trace(
    formula: &CnfFormula,
    schedule: PhiSchedule,
    steps: usize,
) -> Result<Vec<TransferState>, SearchError> {
    let solutions = formula.enumerate_solutions()?;
    let mut engine = PfpEngine::new(formula, schedule)?;
    let mut trace = vec![engine.transfer_state(&solutions)?];
    for _ in 0..steps {
        let record = engine.step_exact()?;
        trace.push(engine.transfer_state(&solutions)?);
        if record.branch_weight < 1e-15 {
            break;
        }
    }
    Ok(trace)
}

const DENSE_LIMIT: usize = 4;

/// Maximum element-wise deviation, up to a global phase, between the
/// composed oracle + diffuser circuit restricted to the logical register
/// and the dense one-iteration operator
/// (G ⊗ |1⟩⟨1| + I ⊗ |0⟩⟨0|) · RY(−φ) · (O ⊗ |1⟩⟨1| + I ⊗ |0⟩⟨0|) · RY(φ),
/// with G the reflection about the uniform state as the diffuser circuit
/// realizes it and O the ±1 oracle built from the solution enumerator.
pub fn circuit_operator_equivalence(formula: &CnfFormula, phi: f64) -> Result<f64, SearchError> {
    let n = formula.num_vars();
    if n > DENSE_LIMIT {
        return Err(SearchError::TooWideForDense {
            num_vars: n,
            limit: DENSE_LIMIT,
        });
    }
    let layout = build_layout(formula);
    let oracle = controlled_oracle(&layout, formula, phi)?;
    let diffuser = controlled_diffuser(&layout)?;
    let solutions = formula.enumerate_solutions()?;
    let space = layout.logical_space(ControlTreatment::FreeBit);
    let dim = 1usize << (n + 1);

    // Column k of the circuit unitary on the logical register.
    let mut circuit_matrix = vec![vec![Complex64::ZERO; dim]; dim];
    for (k, column) in circuit_matrix.iter_mut().enumerate() {
        let mut index = 0u64;
        for var in 1..=n {
            if (k >> (var - 1)) & 1 == 1 {
                for &member in layout.members(var) {
                    index |= 1 << member;
                }
            }
        }
        if (k >> n) & 1 == 1 {
            index |= 1 << layout.control_qubit();
        }
        let mut state = StateVector::basis_state(layout.total_width(), index);
        state.apply(&oracle)?;
        state.apply(&diffuser)?;
        let (logical, _) = state.logical_state(&space)?;
        column.copy_from_slice(&logical);
    }
    // logical_state returned columns in row-major "result index" order;
    // transpose into [row][col].
    let columns = circuit_matrix;
    let mut circuit_u = vec![vec![Complex64::ZERO; dim]; dim];
    for (col, column) in columns.iter().enumerate() {
        for (row, value) in column.iter().enumerate() {
            circuit_u[row][col] = *value;
        }
    }

    let reference = dense_iteration_operator(n, &solutions, phi);

    // Align global phase on the largest reference entry.
    let mut best = (0usize, 0usize);
    let mut best_norm = 0.0;
    for (r, row) in reference.iter().enumerate() {
        for (c, value) in row.iter().enumerate() {
            if value.norm() > best_norm {
                best_norm = value.norm();
                best = (r, c);
            }
        }
    }
    let phase = circuit_u[best.0][best.1] / reference[best.0][best.1];
    let phase = if phase.norm() > 1e-12 {
        phase / phase.norm()
    } else {
        Complex64::ONE
    };

    let mut deviation: f64 = 0.0;
    for r in 0..dim {
        for c in 0..dim {
            deviation = deviation.max((circuit_u[r][c] - phase * reference[r][c]).norm());
        }
    }
    Ok(deviation)
}

/// Dense matrix of one controlled iteration on (variables ⊗ control);
/// logical bit n is the control.
fn dense_iteration_operator(n: usize, solutions: &[u64], phi: f64) -> Vec<Vec<Complex64>> {
    let var_dim = 1usize << n;
    let dim = var_dim << 1;
    let mut matrix = identity(dim);

    // RY(φ) on the control.
    matrix = mat_mul(&ry_on_control(n, phi), &matrix);
    // O on the variables iff control = 1.
    let mut controlled_oracle = identity(dim);
    for v in 0..var_dim {
        if solutions.binary_search(&(v as u64)).is_ok() {
            let i = v | var_dim;
            controlled_oracle[i][i] = -Complex64::ONE;
        }
    }
    matrix = mat_mul(&controlled_oracle, &matrix);
    // RY(−φ) on the control.
    matrix = mat_mul(&ry_on_control(n, -phi), &matrix);
    // G = I − 2|u⟩⟨u| on the variables iff control = 1, matching the
    // H·X·MCZ·X·H realization of the diffuser.
    let mut controlled_g = identity(dim);
    for r in 0..var_dim {
        for c in 0..var_dim {
            let value = if r == c { 1.0 } else { 0.0 } - 2.0 / var_dim as f64;
            controlled_g[r | var_dim][c | var_dim] = Complex64::new(value, 0.0);
        }
    }
    mat_mul(&controlled_g, &matrix)
}

fn identity(dim: usize) -> Vec<Vec<Complex64>> {
    let mut m = vec![vec![Complex64::ZERO; dim]; dim];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex64::ONE;
    }
    m
}

fn ry_on_control(n: usize, phi: f64) -> Vec<Vec<Complex64>> {
    let var_dim = 1usize << n;
    let dim = var_dim << 1;
    let (sin, cos) = (phi / 2.0).sin_cos();
    let mut m = vec![vec![Complex64::ZERO; dim]; dim];
    for v in 0..var_dim {
        m[v][v] = Complex64::new(cos, 0.0);
        m[v][v | var_dim] = Complex64::new(-sin, 0.0);
        m[v | var_dim][v] = Complex64::new(sin, 0.0);
        m[v | var_dim][v | var_dim] = Complex64::new(cos, 0.0);
    }
    m
}

fn mat_mul(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let dim = a.len();
    let mut out = vec![vec![Complex64::ZERO; dim]; dim];
    for r in 0..dim {
        for c in 0..dim {
            let mut acc = Complex64::ZERO;
            for k in 0..dim {
                acc += a[r][k] * b[k][c];
            }
            out[r][c] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{self, parse_dimacs};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn phi_unknown_checkpoints() {
        assert!(close(
            phi_unknown(1).unwrap(),
            std::f64::consts::FRAC_PI_2,
            1e-15
        ));
        // cos φ_2 = (1 − √2/2)/(1 + √2/2).
        assert!(close(phi_unknown(2).unwrap().cos(), 0.171_572_875_253_809_9, 1e-15));
        assert!(close(phi_unknown(2).unwrap(), 1.398_370_329_082_047_6, 1e-12));
        assert!(matches!(phi_unknown(0), Err(SearchError::ZeroIteration)));
    }

    #[test]
    fn phi_unknown_decreases_to_zero() {
        let mut prev = phi_unknown(1).unwrap();
        for t in 2..4000 {
            let phi = phi_unknown(t).unwrap();
            assert!(phi < prev);
            prev = phi;
        }
        // φ_t ~ sqrt(2π/t), so the tail is slow but unbounded below.
        assert!(prev < 0.05);
        assert!(phi_unknown(1_000_000_000).unwrap() < 1e-3);
    }

    #[test]
    fn phi_critical_checkpoints() {
        assert!(close(
            phi_critical(8, 8).unwrap(),
            std::f64::consts::FRAC_PI_2,
            1e-15
        ));
        assert!(close(
            phi_critical(1, 8).unwrap().cos(),
            0.477_592_250_072_517_1,
            1e-12
        ));
        assert!(matches!(
            phi_critical(0, 8),
            Err(SearchError::BadCounts { m: 0, n: 8 })
        ));
        assert!(matches!(
            phi_critical(9, 8),
            Err(SearchError::BadCounts { m: 9, n: 8 })
        ));
    }

    #[test]
    fn exact_run_solves_example_formula() {
        let f = cnf::example_formula();
        let report = pfp_run(&f, PhiSchedule::UnknownM, RunMode::exact(), 40, 1).unwrap();
        assert!(matches!(
            report.outcome,
            PfpOutcome::Solved { assignment: 0b111 }
        ));
        let mut prev = 0.0;
        for rec in &report.iterations {
            assert!(rec.cumulative_success >= prev - 1e-12);
            prev = rec.cumulative_success;
        }
        assert!(prev >= 0.99);
        assert!(report.max_leakage < 1e-12);
    }

    #[test]
    fn exact_run_critical_schedule_solves_example_formula() {
        let f = cnf::example_formula();
        let schedule = PhiSchedule::critical_for_counts(1, 8).unwrap();
        let report = pfp_run(&f, schedule, RunMode::exact(), 40, 1).unwrap();
        assert!(matches!(
            report.outcome,
            PfpOutcome::Solved { assignment: 0b111 }
        ));
    }

    #[test]
    fn trajectory_run_solves_example_formula() {
        let f = cnf::example_formula();
        for seed in [0u64, 1, 2, 3] {
            let report = pfp_run(&f, PhiSchedule::UnknownM, RunMode::Trajectory, 60, seed).unwrap();
            match report.outcome {
                PfpOutcome::Solved { assignment } => assert_eq!(assignment, 0b111),
                PfpOutcome::Exhausted { .. } => panic!("seed {seed} exhausted"),
            }
        }
    }

    #[test]
    fn unsat_never_flips_control() {
        let f = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        let report = pfp_run(&f, PhiSchedule::UnknownM, RunMode::exact(), 15, 0).unwrap();
        assert!(matches!(
            report.outcome,
            PfpOutcome::Exhausted { iterations: 15 }
        ));
        for rec in &report.iterations {
            assert!(rec.halt_probability < 1e-12, "p0 = {}", rec.halt_probability);
        }
    }

    #[test]
    fn full_space_halts_first_iteration() {
        let f = parse_dimacs("p cnf 1 1\n1 -1 0\n").unwrap();
        let report = pfp_run(&f, PhiSchedule::UnknownM, RunMode::exact(), 10, 0).unwrap();
        assert_eq!(report.iterations.len(), 1);
        assert!(close(report.iterations[0].halt_probability, 1.0, 1e-12));
        assert!(matches!(report.outcome, PfpOutcome::Solved { .. }));
    }

    #[test]
    fn trajectory_outputs_uniform_over_solutions() {
        // (x1 ∨ x2): M = 3; outputs must be uniform over {01, 10, 11}
        // within 5σ multinomial bounds over 10^4 runs.
        let f = parse_dimacs("p cnf 2 1\n1 2 0\n").unwrap();
        let runs = 10_000usize;
        let mut counts = [0usize; 4];
        for run in 0..runs {
            let report = pfp_run(&f, PhiSchedule::UnknownM, RunMode::Trajectory, 50, 1000 + run as u64)
                .unwrap();
            match report.outcome {
                PfpOutcome::Solved { assignment } => counts[assignment as usize] += 1,
                PfpOutcome::Exhausted { .. } => panic!("run {run} exhausted"),
            }
        }
        assert_eq!(counts[0], 0);
        let expected = runs as f64 / 3.0;
        let sigma = (runs as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for assignment in [1usize, 2, 3] {
            assert!(
                (counts[assignment] as f64 - expected).abs() < 5.0 * sigma,
                "assignment {assignment}: {}",
                counts[assignment]
            );
        }
    }

    #[test]
    fn trajectory_halting_times_match_exact_distribution() {
        let f = cnf::example_formula();
        let exact = pfp_run(
            &f,
            PhiSchedule::UnknownM,
            RunMode::Exact { success_target: 1.1 },
            12,
            0,
        )
        .unwrap();
        // Halting pmf: P(halt at t) = w_{t-1} · p0(t).
        let mut pmf = Vec::new();
        let mut weight = 1.0;
        for rec in &exact.iterations {
            pmf.push(weight * rec.halt_probability);
            weight *= 1.0 - rec.halt_probability;
        }
        let runs = 10_000usize;
        let mut halted_at = vec![0usize; exact.iterations.len() + 1];
        for run in 0..runs {
            let report =
                pfp_run(&f, PhiSchedule::UnknownM, RunMode::Trajectory, 12, 77_000 + run as u64)
                    .unwrap();
            match report.outcome {
                PfpOutcome::Solved { .. } => halted_at[report.iterations.len()] += 1,
                PfpOutcome::Exhausted { .. } => halted_at[0] += 1,
            }
        }
        for (t, &p) in pmf.iter().enumerate() {
            let observed = halted_at[t + 1] as f64;
            let sigma = (runs as f64 * p * (1.0 - p)).sqrt().max(1.0);
            assert!(
                (observed - runs as f64 * p).abs() < 5.0 * sigma,
                "t={} observed={} expected={}",
                t + 1,
                observed,
                runs as f64 * p
            );
        }
    }

    #[test]
    fn grover_curve_checkpoints() {
        let f = cnf::example_formula();
        let curve = grover_run(&f, 8).unwrap();
        assert!(close(curve[0], 0.125, 1e-12));
        assert!(close(curve[2], 121.0 / 128.0, 1e-9));
        assert!(curve[6] >= 0.999);
        // Oscillation: some later iterate dips below the running max.
        let max_at_2 = curve[2];
        assert!(curve[3] < max_at_2);
    }

    #[test]
    fn returned_assignments_satisfy_random_formulas() {
        use rand::Rng;
        let mut rng = rng::seeded(5);
        for trial in 0..12 {
            let num_vars = rng.random_range(3..=5usize);
            let num_clauses = rng.random_range(2..=3usize);
            let f = cnf::random_satisfiable_3sat(&mut rng, num_vars, num_clauses);
            let report =
                pfp_run(&f, PhiSchedule::UnknownM, RunMode::Trajectory, 80, 400 + trial).unwrap();
            match report.outcome {
                PfpOutcome::Solved { assignment } => {
                    assert!(f.evaluate_index(assignment), "{}", f.to_dimacs());
                }
                PfpOutcome::Exhausted { .. } => panic!("exhausted on {}", f.to_dimacs()),
            }
        }
    }

    #[test]
    fn operator_equivalence_on_example_formula() {
        let f = cnf::example_formula();
        let deviation = circuit_operator_equivalence(&f, std::f64::consts::FRAC_PI_2).unwrap();
        assert!(deviation < 1e-10, "deviation {deviation}");
        let deviation = circuit_operator_equivalence(&f, 0.0).unwrap();
        assert!(deviation < 1e-12, "deviation {deviation}");
    }

    #[test]
    fn operator_equivalence_reduces_to_controlled_g_when_unsat() {
        // No marked states: O = I, so the iteration is the controlled
        // reflection alone.
        let f = parse_dimacs("p cnf 2 2\n1 0\n-1 0\n").unwrap();
        let deviation = circuit_operator_equivalence(&f, 0.9).unwrap();
        assert!(deviation < 1e-10, "deviation {deviation}");
    }

    #[test]
    fn operator_equivalence_respects_width_limit() {
        let f = CnfFormula::new(
            6,
            vec![crate::cnf::Clause::new(vec![crate::cnf::Literal::positive(1).unwrap()]).unwrap()],
        )
        .unwrap();
        assert!(matches!(
            circuit_operator_equivalence(&f, 0.5),
            Err(SearchError::TooWideForDense { num_vars: 6, .. })
        ));
    }

    #[test]
    fn zero_budget_rejected() {
        let f = cnf::example_formula();
        assert!(matches!(
            pfp_run(&f, PhiSchedule::UnknownM, RunMode::exact(), 0, 0),
            Err(SearchError::ZeroIterationBudget)
        ));
    }
}
