//! Circuit construction for the parallel fixed-point search: qubit layout
//! with per-occurrence variable groups, clause circuits, the controlled
//! parallel oracle (Ω / P / Ω⁻¹), the controlled parallel diffuser, and a
//! plain Grover baseline.
//!
//! Every occurrence of a variable gets its own qubit so all clauses can be
//! evaluated simultaneously; the copies of one variable form a group kept
//! consistent by GHZ entanglement. Stage labels on the oracle circuit
//! (`omega/clauses`, `omega/rotate`, `omega/conjunction`, `p`,
//! `omega_inv/...`) expose the per-stage depth accounting.

use std::collections::BTreeMap;

use crate::circuit::{Circuit, CircuitError, Gate};
use crate::cnf::{Clause, CnfFormula};
use crate::sim::{InitGroup, LogicalSpace};

/// Stage label of the parallel clause-evaluation gates inside Ω. Its
/// layered depth is constant in the clause count at fixed clause width.
pub const STAGE_OMEGA_CLAUSES: &str = "omega/clauses";
pub const STAGE_OMEGA_ROTATE: &str = "omega/rotate";
pub const STAGE_OMEGA_CONJUNCTION: &str = "omega/conjunction";
pub const STAGE_P: &str = "p";
pub const STAGE_OMEGA_INV: &str = "omega_inv";
pub const STAGE_DISENTANGLE: &str = "disentangle";
pub const STAGE_REFLECT: &str = "reflect";
pub const STAGE_REENTANGLE: &str = "reentangle";

/// How a [`QubitLayout`]'s logical extraction treats the control qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlTreatment {
    /// Control must sit in |1⟩ (the surviving branch after conditioning).
    FixedOne,
    /// Control must sit in |0⟩ (the halted branch).
    FixedZero,
    /// Control is one more logical bit (bit n of the logical index).
    FreeBit,
}

/// Deterministic qubit map for a formula: variable groups first (variables
/// in index order, members in clause-scan order), then clause ancillas,
/// the formula qubit, and the control qubit last.
#[derive(Debug, Clone)]
pub struct QubitLayout {
    group_members: Vec<Vec<usize>>,
    occurrence_assignment: BTreeMap<(usize, usize), usize>,
    clause_qubits: Vec<usize>,
    formula_qubit: usize,
    control_qubit: usize,
    total_width: usize,
}

impl QubitLayout {
    /// Member qubits of variable `var` (1-based). Free variables still get
    /// one qubit so they participate in the diffuser.
    pub fn members(&self, var: usize) -> &[usize] {
        &self.group_members[var - 1]
    }

    /// Representative (member 0) of variable `var`.
    pub fn representative(&self, var: usize) -> usize {
        self.group_members[var - 1][0]
    }

    /// Qubit carrying literal slot `slot` of clause `clause`.
    pub fn occurrence_qubit(&self, clause: usize, slot: usize) -> usize {
        self.occurrence_assignment[&(clause, slot)]
    }

    pub fn num_vars(&self) -> usize {
        self.group_members.len()
    }

    pub fn clause_qubits(&self) -> &[usize] {
        &self.clause_qubits
    }

    pub fn clause_qubit(&self, clause: usize) -> usize {
        self.clause_qubits[clause]
    }

    pub fn formula_qubit(&self) -> usize {
        self.formula_qubit
    }

    pub fn control_qubit(&self) -> usize {
        self.control_qubit
    }

    pub fn total_width(&self) -> usize {
        self.total_width
    }

    /// Initial-state directives: GHZ per variable group (a single-member
    /// group is |+⟩), clause and formula ancillas |0⟩, control |1⟩.
    pub fn init_groups(&self) -> Vec<InitGroup> {
        let mut groups: Vec<InitGroup> = self
            .group_members
            .iter()
            .map(|members| InitGroup::Ghz(members.clone()))
            .collect();
        for &q in &self.clause_qubits {
            groups.push(InitGroup::Zero(q));
        }
        groups.push(InitGroup::Zero(self.formula_qubit));
        groups.push(InitGroup::One(self.control_qubit));
        groups
    }

    /// Logical register over the variable groups; ancillas are pinned to
    /// |0⟩ and the control handled per `control`.
    pub fn logical_space(&self, control: ControlTreatment) -> LogicalSpace {
        let mut space = LogicalSpace {
            groups: self.group_members.clone(),
            zeros: self.clause_qubits.clone(),
            ones: vec![],
        };
        space.zeros.push(self.formula_qubit);
        match control {
            ControlTreatment::FixedOne => space.ones.push(self.control_qubit),
            ControlTreatment::FixedZero => space.zeros.push(self.control_qubit),
            ControlTreatment::FreeBit => space.groups.push(vec![self.control_qubit]),
        }
        space
    }
}

/// Lay out qubits for `formula`: Σ r_j occurrence qubits (at least one per
/// variable), one ancilla per clause, the formula qubit, and the control
/// qubit.
pub fn build_layout(formula: &CnfFormula) -> QubitLayout {
    let mut group_members: Vec<Vec<usize>> = vec![Vec::new(); formula.num_vars()];
    let mut occurrence_assignment = BTreeMap::new();
    let mut next = 0usize;

    // Reserve group slots variable by variable, members ordered by the
    // clause scan; the c-th occurrence of variable j uses member c.
    let counts = formula.occurrence_counts();
    for (var_idx, &count) in counts.iter().enumerate() {
        let size = count.max(1);
        for _ in 0..size {
            group_members[var_idx].push(next);
            next += 1;
        }
    }

    let mut used: Vec<usize> = vec![0; formula.num_vars()];
    for (ci, clause) in formula.clauses().iter().enumerate() {
        for (slot, lit) in clause.literals().iter().enumerate() {
            let var_idx = lit.variable() - 1;
            let member = group_members[var_idx][used[var_idx]];
            used[var_idx] += 1;
            occurrence_assignment.insert((ci, slot), member);
        }
    }

    let clause_qubits: Vec<usize> = (0..formula.num_clauses()).map(|i| next + i).collect();
    next += formula.num_clauses();
    let formula_qubit = next;
    let control_qubit = next + 1;

    QubitLayout {
        group_members,
        occurrence_assignment,
        clause_qubits,
        formula_qubit,
        control_qubit,
        total_width: control_qubit + 1,
    }
}

fn push_clause_gates(
    circuit: &mut Circuit,
    stage: &str,
    clause: &Clause,
    layout: &QubitLayout,
    clause_index: usize,
) -> Result<(), CircuitError> {
    let mut member_qubits = Vec::with_capacity(clause.len());
    for (slot, lit) in clause.literals().iter().enumerate() {
        let qubit = layout.occurrence_qubit(clause_index, slot);
        member_qubits.push(qubit);
        // R: X for a positive literal, identity for a negated one.
        if !lit.negated() {
            circuit.push_staged(stage, Gate::x(qubit))?;
        }
    }
    circuit.push_staged(stage, Gate::x(layout.clause_qubit(clause_index)))?;
    circuit.push_staged(
        stage,
        Gate::mcx(member_qubits, layout.clause_qubit(clause_index)).expect("disjoint qubits"),
    )?;
    Ok(())
}

/// The clause circuit of one clause: R gates on the member qubits, X on
/// the clause ancilla, then an MCX from the members onto the ancilla. On
/// basis inputs the ancilla ends in |1⟩ iff the clause is satisfied.
pub fn clause_circuit(
    clause: &Clause,
    layout: &QubitLayout,
    clause_index: usize,
) -> Result<Circuit, CircuitError> {
    let mut circuit = Circuit::new(layout.total_width());
    push_clause_gates(
        &mut circuit,
        STAGE_OMEGA_CLAUSES,
        clause,
        layout,
        clause_index,
    )?;
    Ok(circuit)
}

/// The conjunction: one MCX controlled by every clause ancilla, targeting
/// the formula qubit.
pub fn formula_conjunction(layout: &QubitLayout) -> Result<Circuit, CircuitError> {
    let mut circuit = Circuit::new(layout.total_width());
    circuit.push_staged(
        STAGE_OMEGA_CONJUNCTION,
        Gate::mcx(layout.clause_qubits().to_vec(), layout.formula_qubit())
            .expect("disjoint qubits"),
    )?;
    Ok(circuit)
}

/// The controlled parallel oracle of one iteration.
///
/// Ω evaluates every clause in parallel, rotates the control qubit by
/// `phi` about y, and conjoins the clause results onto the formula qubit;
/// P applies a CZ between formula and control qubits to flip the phase of
/// marked components; Ω⁻¹ is the inverse of Ω and restores all ancillas.
pub fn controlled_oracle(
    layout: &QubitLayout,
    formula: &CnfFormula,
    phi: f64,
) -> Result<Circuit, CircuitError> {
    let mut omega = Circuit::new(layout.total_width());
    for (ci, clause) in formula.clauses().iter().enumerate() {
        push_clause_gates(&mut omega, STAGE_OMEGA_CLAUSES, clause, layout, ci)?;
    }
    omega.push_staged(
        STAGE_OMEGA_ROTATE,
        Gate::ry(phi, layout.control_qubit())?,
    )?;
    omega.push_staged(
        STAGE_OMEGA_CONJUNCTION,
        Gate::mcx(layout.clause_qubits().to_vec(), layout.formula_qubit())
            .expect("disjoint qubits"),
    )?;

    let mut circuit = omega.clone();
    circuit.push_staged(
        STAGE_P,
        Gate::cz(layout.formula_qubit(), layout.control_qubit()).expect("distinct qubits"),
    )?;
    for (gate, stage) in omega.iter_staged().collect::<Vec<_>>().into_iter().rev() {
        let stage = stage.expect("all omega gates are staged");
        let inv_stage = stage.replacen("omega", STAGE_OMEGA_INV, 1);
        circuit.push_staged(&inv_stage, gate.inverse())?;
    }
    Ok(circuit)
}

/// The controlled parallel diffuser: disentangle each variable group onto
/// its representative, reflect the representatives about the uniform state
/// with an MCZ that also carries the control qubit, then re-entangle.
pub fn controlled_diffuser(layout: &QubitLayout) -> Result<Circuit, CircuitError> {
    let mut circuit = Circuit::new(layout.total_width());
    let vars: Vec<usize> = (1..=layout.num_vars()).collect();

    for &var in &vars {
        let members = layout.members(var);
        for &member in &members[1..] {
            circuit.push_staged(
                STAGE_DISENTANGLE,
                Gate::cnot(members[0], member).expect("distinct qubits"),
            )?;
        }
    }

    for &var in &vars {
        let rep = layout.representative(var);
        circuit.push_staged(STAGE_REFLECT, Gate::h(rep))?;
        circuit.push_staged(STAGE_REFLECT, Gate::x(rep))?;
    }
    // Z on the last representative; controls are the other representatives
    // plus the control qubit.
    let last = layout.representative(layout.num_vars());
    let mut controls: Vec<usize> = vars[..vars.len() - 1]
        .iter()
        .map(|&v| layout.representative(v))
        .collect();
    controls.push(layout.control_qubit());
    circuit.push_staged(STAGE_REFLECT, Gate::mcz(controls, last).expect("disjoint"))?;
    for &var in &vars {
        let rep = layout.representative(var);
        circuit.push_staged(STAGE_REFLECT, Gate::x(rep))?;
        circuit.push_staged(STAGE_REFLECT, Gate::h(rep))?;
    }

    for &var in vars.iter().rev() {
        let members = layout.members(var);
        for &member in members[1..].iter().rev() {
            circuit.push_staged(
                STAGE_REENTANGLE,
                Gate::cnot(members[0], member).expect("distinct qubits"),
            )?;
        }
    }
    Ok(circuit)
}

/// Qubit map of the plain Grover baseline: one qubit per variable, one
/// ancilla per clause, and a formula qubit. No copies, no control qubit.
#[derive(Debug, Clone)]
pub struct BaselineLayout {
    pub num_vars: usize,
    pub clause_qubits: Vec<usize>,
    pub formula_qubit: usize,
    pub total_width: usize,
}

impl BaselineLayout {
    pub fn variable_qubit(&self, var: usize) -> usize {
        var - 1
    }

    pub fn logical_space(&self) -> LogicalSpace {
        let mut zeros = self.clause_qubits.clone();
        zeros.push(self.formula_qubit);
        LogicalSpace {
            groups: (0..self.num_vars).map(|q| vec![q]).collect(),
            zeros,
            ones: vec![],
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroverBaseline {
    pub oracle: Circuit,
    pub diffuser: Circuit,
    pub layout: BaselineLayout,
}

/// The conventional sequential oracle and diffuser. Clauses share the
/// variable qubits, so each clause undoes its R gates before the next one
/// runs; clause evaluation is inherently serialized.
pub fn grover_baseline(formula: &CnfFormula) -> Result<GroverBaseline, CircuitError> {
    let n = formula.num_vars();
    let layout = BaselineLayout {
        num_vars: n,
        clause_qubits: (n..n + formula.num_clauses()).collect(),
        formula_qubit: n + formula.num_clauses(),
        total_width: n + formula.num_clauses() + 1,
    };

    let mut compute = Circuit::new(layout.total_width);
    for (ci, clause) in formula.clauses().iter().enumerate() {
        let stage = "compute";
        // With shared variable qubits a tautological clause would put the
        // same qubit on the MCX twice; it is always satisfied, so just set
        // its ancilla.
        let tautological = clause.literals().iter().any(|lit| {
            clause
                .literals()
                .iter()
                .any(|other| other.variable() == lit.variable() && other.negated() != lit.negated())
        });
        if tautological {
            compute.push_staged(stage, Gate::x(layout.clause_qubits[ci]))?;
            continue;
        }
        let mut members = Vec::with_capacity(clause.len());
        for lit in clause.literals() {
            members.push(layout.variable_qubit(lit.variable()));
        }
        for lit in clause.literals() {
            if !lit.negated() {
                compute.push_staged(stage, Gate::x(layout.variable_qubit(lit.variable())))?;
            }
        }
        compute.push_staged(stage, Gate::x(layout.clause_qubits[ci]))?;
        compute.push_staged(
            stage,
            Gate::mcx(members, layout.clause_qubits[ci]).expect("distinct vars in clause"),
        )?;
        for lit in clause.literals() {
            if !lit.negated() {
                compute.push_staged(stage, Gate::x(layout.variable_qubit(lit.variable())))?;
            }
        }
    }
    compute.push_staged(
        "compute",
        Gate::mcx(layout.clause_qubits.clone(), layout.formula_qubit).expect("disjoint"),
    )?;

    let mut oracle = compute.clone();
    oracle.push_staged("mark", Gate::z(layout.formula_qubit))?;
    for (gate, _) in compute.iter_staged().collect::<Vec<_>>().into_iter().rev() {
        oracle.push_staged("uncompute", gate.inverse())?;
    }

    let mut diffuser = Circuit::new(layout.total_width);
    for q in 0..n {
        diffuser.push(Gate::h(q))?;
        diffuser.push(Gate::x(q))?;
    }
    diffuser.push(Gate::mcz((0..n - 1).collect(), n - 1).expect("disjoint"))?;
    for q in 0..n {
        diffuser.push(Gate::x(q))?;
        diffuser.push(Gate::h(q))?;
    }

    Ok(GroverBaseline {
        oracle,
        diffuser,
        layout,
    })
}

/// Family of width-3 formulas used for depth accounting: every clause
/// contains variable 1 (forcing serialization in the baseline) plus two
/// fresh variables.
pub fn depth_family(num_clauses: usize) -> CnfFormula {
    use crate::cnf::Literal;
    let mut clauses = Vec::with_capacity(num_clauses);
    for i in 0..num_clauses {
        clauses.push(
            Clause::new(vec![
                Literal::positive(1).unwrap(),
                Literal::positive(2 * i + 2).unwrap(),
                Literal::positive(2 * i + 3).unwrap(),
            ])
            .unwrap(),
        );
    }
    CnfFormula::new(2 * num_clauses + 1, clauses).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{self, parse_dimacs};
    use crate::sim::{Observable, StateVector};
    use num_complex::Complex64;

    #[test]
    fn layout_of_example_formula() {
        let f = cnf::example_formula();
        let layout = build_layout(&f);
        // r_a = 3, r_b = 1, r_c = 1 -> 5 variable qubits + 3 clause + F + s.
        assert_eq!(layout.total_width(), 10);
        assert_eq!(layout.members(1), &[0, 1, 2]);
        assert_eq!(layout.members(2), &[3]);
        assert_eq!(layout.members(3), &[4]);
        assert_eq!(layout.clause_qubits(), &[5, 6, 7]);
        assert_eq!(layout.formula_qubit(), 8);
        assert_eq!(layout.control_qubit(), 9);
        // Occurrences of variable 1 in clause-scan order.
        assert_eq!(layout.occurrence_qubit(0, 0), 0);
        assert_eq!(layout.occurrence_qubit(1, 0), 1);
        assert_eq!(layout.occurrence_qubit(2, 0), 2);
        assert_eq!(layout.occurrence_qubit(1, 1), 3);
        assert_eq!(layout.occurrence_qubit(2, 1), 4);
    }

    #[test]
    fn layout_of_minimal_formula() {
        let f = parse_dimacs("p cnf 1 1\n1 0\n").unwrap();
        assert_eq!(build_layout(&f).total_width(), 4);
    }

    #[test]
    fn free_variable_gets_one_member() {
        let f = parse_dimacs("p cnf 2 1\n1 0\n").unwrap();
        let layout = build_layout(&f);
        assert_eq!(layout.members(2), &[1]);
        assert_eq!(layout.total_width(), 5);
        // It appears in no occurrence assignment.
        assert_eq!(layout.occurrence_qubit(0, 0), 0);
    }

    fn clause_output_on_basis(clause_text: &str, member_values: &[bool]) -> bool {
        let f = parse_dimacs(clause_text).unwrap();
        let layout = build_layout(&f);
        let circuit = clause_circuit(&f.clauses()[0], &layout, 0).unwrap();
        let mut index = 0u64;
        for (slot, &v) in member_values.iter().enumerate() {
            if v {
                index |= 1 << layout.occurrence_qubit(0, slot);
            }
        }
        let mut state = StateVector::basis_state(layout.total_width(), index);
        state.apply(&circuit).unwrap();
        // Exactly one basis amplitude remains; read the clause bit off it.
        let (i, _) = state
            .amplitudes()
            .iter()
            .enumerate()
            .find(|(_, a)| a.norm_sqr() > 0.5)
            .unwrap();
        (i as u64 >> layout.clause_qubit(0)) & 1 == 1
    }

    #[test]
    fn clause_circuit_truth_table_examples() {
        assert!(!clause_output_on_basis("p cnf 2 1\n1 2 0\n", &[false, false]));
        assert!(clause_output_on_basis("p cnf 2 1\n1 2 0\n", &[true, false]));
    }

    #[test]
    fn clause_circuit_matches_evaluation_exhaustively() {
        // Every clause shape up to width 4, every basis input.
        let shapes = [
            "p cnf 1 1\n1 0\n",
            "p cnf 1 1\n-1 0\n",
            "p cnf 2 1\n1 -2 0\n",
            "p cnf 3 1\n-1 2 -3 0\n",
            "p cnf 4 1\n1 -2 3 4 0\n",
        ];
        for text in shapes {
            let f = parse_dimacs(text).unwrap();
            let clause = &f.clauses()[0];
            let width = clause.len();
            for input in 0..(1u64 << width) {
                let values: Vec<bool> = (0..width).map(|s| (input >> s) & 1 == 1).collect();
                // Slot s of the clause carries the value of its literal's
                // variable occurrence.
                let mut assignment = vec![false; f.num_vars()];
                for (slot, lit) in clause.literals().iter().enumerate() {
                    assignment[lit.variable() - 1] = values[slot];
                }
                let expected = clause.is_satisfied_by(&assignment);
                assert_eq!(clause_output_on_basis(text, &values), expected, "{text} {values:?}");
            }
        }
    }

    #[test]
    fn conjunction_fires_only_when_all_clauses_hold() {
        let f = cnf::example_formula();
        let layout = build_layout(&f);
        let circuit = formula_conjunction(&layout).unwrap();
        let all_set: u64 = layout.clause_qubits().iter().map(|&q| 1u64 << q).sum();
        let mut state = StateVector::basis_state(layout.total_width(), all_set);
        state.apply(&circuit).unwrap();
        assert!((state.amp(all_set | (1 << layout.formula_qubit())).re - 1.0).abs() < 1e-12);

        let two_set = (1u64 << layout.clause_qubit(0)) | (1 << layout.clause_qubit(1));
        let mut state = StateVector::basis_state(layout.total_width(), two_set);
        state.apply(&circuit).unwrap();
        assert!((state.amp(two_set).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn formula_output_matches_brute_force() {
        let f = cnf::example_formula();
        let layout = build_layout(&f);
        let mut circuit = Circuit::new(layout.total_width());
        for (ci, clause) in f.clauses().iter().enumerate() {
            circuit.extend(&clause_circuit(clause, &layout, ci).unwrap()).unwrap();
        }
        circuit.extend(&formula_conjunction(&layout).unwrap()).unwrap();
        for v in 0..8u64 {
            let mut index = 0u64;
            for var in 1..=3 {
                if (v >> (var - 1)) & 1 == 1 {
                    for &m in layout.members(var) {
                        index |= 1 << m;
                    }
                }
            }
            let mut state = StateVector::basis_state(layout.total_width(), index);
            state.apply(&circuit).unwrap();
            let (i, _) = state
                .amplitudes()
                .iter()
                .enumerate()
                .find(|(_, a)| a.norm_sqr() > 0.5)
                .unwrap();
            let formula_bit = (i as u64 >> layout.formula_qubit()) & 1 == 1;
            assert_eq!(formula_bit, f.evaluate_index(v));
        }
    }

    #[test]
    fn oracle_restores_ancillas_on_basis_inputs() {
        let f = cnf::example_formula();
        let layout = build_layout(&f);
        let circuit = controlled_oracle(&layout, &f, 0.83).unwrap();
        for v in 0..8u64 {
            for control in [0u64, 1] {
                let mut index = control << layout.control_qubit();
                for var in 1..=3 {
                    if (v >> (var - 1)) & 1 == 1 {
                        for &m in layout.members(var) {
                            index |= 1 << m;
                        }
                    }
                }
                let mut state = StateVector::basis_state(layout.total_width(), index);
                state.apply(&circuit).unwrap();
                for &q in layout.clause_qubits().iter().chain([layout.formula_qubit()].iter()) {
                    assert!(state.probability_of(q, 1) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn oracle_with_phi_zero_is_marked_phase_flip() {
        // With φ=0 and control |1⟩ the circuit acts on the variable
        // register as the diagonal ±1 oracle built from the enumerator.
        for text in ["p cnf 3 3\n1 0\n1 2 0\n1 3 0\n", "p cnf 2 2\n-1 2 0\n1 2 0\n"] {
            let f = parse_dimacs(text).unwrap();
            let layout = build_layout(&f);
            let circuit = controlled_oracle(&layout, &f, 0.0).unwrap();
            let solutions = f.enumerate_solutions().unwrap();
            let n = f.num_vars();
            for v in 0..(1u64 << n) {
                let mut index = 1u64 << layout.control_qubit();
                for var in 1..=n {
                    if (v >> (var - 1)) & 1 == 1 {
                        for &m in layout.members(var) {
                            index |= 1 << m;
                        }
                    }
                }
                let mut state = StateVector::basis_state(layout.total_width(), index);
                state.apply(&circuit).unwrap();
                let expected = if solutions.contains(&v) { -1.0 } else { 1.0 };
                let amp = state.amp(index);
                assert!(
                    (amp.re - expected).abs() < 1e-12 && amp.im.abs() < 1e-12,
                    "{text} v={v} amp={amp}"
                );
            }
        }
    }

    #[test]
    fn clause_stage_depth_constant_in_clause_count() {
        let d1 = {
            let f = depth_family(1);
            let layout = build_layout(&f);
            controlled_oracle(&layout, &f, 0.5)
                .unwrap()
                .staged_depth(STAGE_OMEGA_CLAUSES)
                .unwrap()
        };
        let d50 = {
            let f = depth_family(50);
            let layout = build_layout(&f);
            controlled_oracle(&layout, &f, 0.5)
                .unwrap()
                .staged_depth(STAGE_OMEGA_CLAUSES)
                .unwrap()
        };
        assert_eq!(d1, d50);
    }

    #[test]
    fn sequential_baseline_depth_grows_linearly() {
        let mut previous = 0;
        for m in [1usize, 5, 10, 25, 50] {
            let f = depth_family(m);
            let baseline = grover_baseline(&f).unwrap();
            let depth = baseline.oracle.depth();
            assert!(depth >= m, "m={m} depth={depth}");
            assert!(depth > previous);
            previous = depth;
        }
    }

    #[test]
    fn diffuser_with_control_zero_is_identity() {
        let f = cnf::example_formula();
        let layout = build_layout(&f);
        let diffuser = controlled_diffuser(&layout).unwrap();
        let mut groups = layout.init_groups();
        // Control |0⟩ instead of |1⟩.
        for group in &mut groups {
            if *group == InitGroup::One(layout.control_qubit()) {
                *group = InitGroup::Zero(layout.control_qubit());
            }
        }
        let reference = StateVector::init(layout.total_width(), &groups).unwrap();
        let mut state = reference.clone();
        state.apply(&diffuser).unwrap();
        for i in 0..state.amplitudes().len() {
            assert!((state.amp(i as u64) - reference.amp(i as u64)).norm() < 1e-12);
        }
    }

    #[test]
    fn diffuser_matches_dense_reflection_for_singleton_groups() {
        // All groups size 1 and control |1⟩: the action on the variable
        // qubits is ±(I − 2|ψ0⟩⟨ψ0|) up to global phase.
        let f = parse_dimacs("p cnf 2 1\n1 2 0\n").unwrap();
        let layout = build_layout(&f);
        assert!(layout.members(1).len() == 1 && layout.members(2).len() == 1);
        let diffuser = controlled_diffuser(&layout).unwrap();
        let n = 2usize;
        let dim = 1usize << n;

        // Dense reflection about the uniform state.
        let mut reflection = vec![vec![0.0f64; dim]; dim];
        for (r, row) in reflection.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry = -2.0 / dim as f64 + if r == c { 1.0 } else { 0.0 };
            }
        }

        let mut circuit_matrix = vec![vec![Complex64::ZERO; dim]; dim];
        for v in 0..dim {
            let mut index = 1u64 << layout.control_qubit();
            for var in 1..=n {
                if (v >> (var - 1)) & 1 == 1 {
                    index |= 1 << layout.representative(var);
                }
            }
            let mut state = StateVector::basis_state(layout.total_width(), index);
            state.apply(&diffuser).unwrap();
            for w in 0..dim {
                let mut widx = 1u64 << layout.control_qubit();
                for var in 1..=n {
                    if (w >> (var - 1)) & 1 == 1 {
                        widx |= 1 << layout.representative(var);
                    }
                }
                circuit_matrix[w][v] = state.amp(widx);
            }
        }
        // Fix the global phase from the largest entry.
        let phase = circuit_matrix[0][0] / Complex64::new(reflection[0][0], 0.0);
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        for r in 0..dim {
            for c in 0..dim {
                let expected = phase * Complex64::new(reflection[r][c], 0.0);
                assert!((circuit_matrix[r][c] - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn diffuser_preserves_group_agreement() {
        let f = cnf::example_formula();
        let layout = build_layout(&f);
        let diffuser = controlled_diffuser(&layout).unwrap();
        let mut state = StateVector::init(layout.total_width(), &layout.init_groups()).unwrap();
        state.apply(&diffuser).unwrap();
        let space = layout.logical_space(ControlTreatment::FreeBit);
        let (_, leakage) = state.logical_state(&space).unwrap();
        assert!(leakage < 1e-12, "leakage {leakage}");
    }

    #[test]
    fn baseline_success_curve_checkpoints() {
        let f = cnf::example_formula();
        let baseline = grover_baseline(&f).unwrap();
        let solutions = f.enumerate_solutions().unwrap();
        let space = baseline.layout.logical_space();
        let mut state = StateVector::zero_state(baseline.layout.total_width);
        for q in 0..baseline.layout.num_vars {
            state.apply_gate(&Gate::h(q)).unwrap();
        }
        let mut curve = vec![state
            .expectation(&space, &solutions, Observable::SolutionProjector)
            .unwrap()];
        for _ in 0..6 {
            state.apply(&baseline.oracle).unwrap();
            state.apply(&baseline.diffuser).unwrap();
            curve.push(
                state
                    .expectation(&space, &solutions, Observable::SolutionProjector)
                    .unwrap(),
            );
        }
        assert!((curve[0] - 0.125).abs() < 1e-12);
        // sin^2(5 asin(1/sqrt 8)) = 121/128.
        assert!((curve[2] - 121.0 / 128.0).abs() < 1e-9, "{}", curve[2]);
        assert!(curve[6] >= 0.999);
    }

    #[test]
    fn baseline_tautology_stays_at_one() {
        let f = parse_dimacs("p cnf 1 1\n1 -1 0\n").unwrap();
        let baseline = grover_baseline(&f).unwrap();
        let solutions = f.enumerate_solutions().unwrap();
        let space = baseline.layout.logical_space();
        let mut state = StateVector::zero_state(baseline.layout.total_width);
        state.apply_gate(&Gate::h(0)).unwrap();
        state.apply(&baseline.oracle).unwrap();
        state.apply(&baseline.diffuser).unwrap();
        let p = state
            .expectation(&space, &solutions, Observable::SolutionProjector)
            .unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ghz_group_round_trip_through_diffuser_via_inverse() {
        // disentangle -> ... -> re-entangle leaves a random group-consistent
        // state supported on agreeing strings.
        let f = cnf::example_formula();
        let layout = build_layout(&f);
        let diffuser = controlled_diffuser(&layout).unwrap();
        let mut state = StateVector::init(layout.total_width(), &layout.init_groups()).unwrap();
        let oracle = controlled_oracle(&layout, &f, 1.2).unwrap();
        state.apply(&oracle).unwrap();
        state.apply(&diffuser).unwrap();
        let (_, leakage) = state
            .logical_state(&layout.logical_space(ControlTreatment::FreeBit))
            .unwrap();
        assert!(leakage < 1e-12);
    }
}
