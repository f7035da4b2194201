//! Simulated network execution of the teleportation-based distributed
//! multi-controlled gate, and a distributed driver for the fixed-point
//! search iteration.
//!
//! One global statevector underlies all nodes: entangled distributed
//! states cannot be represented per-node. Protocol realism is enforced
//! structurally instead — every gate must act on qubits owned by a single
//! node, and only Bell-pair distribution and classical messages may cross
//! node boundaries. Violations are hard errors, not warnings.
//!
//! The gate protocol, per remote control p_i (its Bell pair being
//! e_i at the control's node and ẽ_i at the target's node):
//!
//! 1. the control node applies CNOT(p_i → e_i), measures e_i in Z, and
//!    sends the bit; the target node applies X to ẽ_i on outcome 1;
//! 2. the target node applies U controlled on every ẽ_i (and any controls
//!    it owns itself);
//! 3. the target node measures ẽ_i in X and sends the bit; the control
//!    node applies Z to p_i on outcome |−⟩.
//!
//! Every one of the 4^m measurement branches reproduces the direct
//! m-controlled-U exactly, so the consumed pair qubits can be reset and
//! reused, and the branch bookkeeping of the enclosing run is restored
//! after each gate execution.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::builders::{self, ControlTreatment, QubitLayout};
use crate::circuit::{Circuit, CircuitError, Gate, GateKind};
use crate::cnf::CnfFormula;
use crate::rng::PfpRng;
use crate::search::{IterationRecord, PfpSummary, PhiSchedule, SearchError};
use crate::sim::{MeasureBasis, MeasureMode, SimError, StateVector};

pub type NodeId = usize;

/// Node 0 in every topology.
pub const MASTER: NodeId = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("node {node} touched qubit {qubit} owned elsewhere")]
    LocalityViolation { node: NodeId, qubit: usize },
    #[error("gate spans nodes {0:?} and cannot be teleported")]
    CrossNodeGate(Vec<NodeId>),
    #[error("qubit {0} has no owner")]
    UnownedQubit(usize),
    #[error("entanglement pool exhausted")]
    PoolExhausted,
    #[error("branch mode needs {expected} outcome bits, got {actual}")]
    BranchOutcomesLength { expected: usize, actual: usize },
    #[error("partition maps {actual} clauses, formula has {expected}")]
    PartitionLength { expected: usize, actual: usize },
    #[error("clause {clause} mapped to invalid node {node} (sub-nodes are 1..={nodes})")]
    PartitionBadNode {
        clause: usize,
        node: NodeId,
        nodes: usize,
    },
    #[error("control count must be at least 1")]
    NoControls,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// Single-qubit unitary payload of the distributed controlled gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistUnitary {
    X,
    Z,
    H,
    Ry(f64),
}

impl DistUnitary {
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let r = |x: f64| Complex64::new(x, 0.0);
        match self {
            DistUnitary::X => [[r(0.0), r(1.0)], [r(1.0), r(0.0)]],
            DistUnitary::Z => [[r(1.0), r(0.0)], [r(0.0), r(-1.0)]],
            DistUnitary::H => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                [[r(s), r(s)], [r(s), r(-s)]]
            }
            DistUnitary::Ry(angle) => {
                let (sin, cos) = (angle / 2.0).sin_cos();
                [[r(cos), r(-sin)], [r(sin), r(cos)]]
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistUnitary::X => "X",
            DistUnitary::Z => "Z",
            DistUnitary::H => "H",
            DistUnitary::Ry(_) => "RY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionKind {
    PauliX,
    PauliZ,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    BellPair {
        e: usize,
        e_tilde: usize,
        node: NodeId,
        master: NodeId,
    },
    LocalGate {
        node: NodeId,
        gate: String,
    },
    Measure {
        node: NodeId,
        qubit: usize,
        basis: MeasureBasis,
        outcome: u8,
        probability: f64,
    },
    ClassicalSend {
        from: NodeId,
        to: NodeId,
        round: usize,
        bit: u8,
    },
    ClassicalReceive {
        at: NodeId,
        from: NodeId,
        round: usize,
        bit: u8,
    },
    Correction {
        node: NodeId,
        qubit: usize,
        kind: CorrectionKind,
    },
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::BellPair {
                e,
                e_tilde,
                node,
                master,
            } => write!(f, "bell e={e}@{node} et={e_tilde}@{master}"),
            TraceEvent::LocalGate { node, gate } => write!(f, "gate@{node} {gate}"),
            TraceEvent::Measure {
                node,
                qubit,
                basis,
                outcome,
                probability,
            } => write!(
                f,
                "measure@{node} q={qubit} basis={} outcome={outcome} p={probability:.6}",
                match basis {
                    MeasureBasis::Z => "Z",
                    MeasureBasis::X => "X",
                }
            ),
            TraceEvent::ClassicalSend {
                from,
                to,
                round,
                bit,
            } => write!(f, "send {from}->{to} round={round} bit={bit}"),
            TraceEvent::ClassicalReceive {
                at,
                from,
                round,
                bit,
            } => write!(f, "recv {at}<-{from} round={round} bit={bit}"),
            TraceEvent::Correction { node, qubit, kind } => write!(
                f,
                "correct@{node} q={qubit} {}",
                match kind {
                    CorrectionKind::PauliX => "X",
                    CorrectionKind::PauliZ => "Z",
                }
            ),
        }
    }
}

/// Ordered event log of a protocol run.
#[derive(Debug, Clone, Default)]
pub struct ProtocolTrace {
    events: Vec<TraceEvent>,
}

impl ProtocolTrace {
    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn bell_pairs(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::BellPair { .. }))
            .count()
    }

    pub fn classical_bits(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::ClassicalSend { .. }))
            .count()
    }

    /// Every correction must be preceded by an unconsumed classical
    /// receive at the same node.
    pub fn corrections_follow_receives(&self) -> bool {
        let mut pending: std::collections::HashMap<NodeId, usize> = Default::default();
        for event in &self.events {
            match event {
                TraceEvent::ClassicalReceive { at, .. } => {
                    *pending.entry(*at).or_insert(0) += 1;
                }
                TraceEvent::Correction { node, .. } => {
                    let n = pending.entry(*node).or_insert(0);
                    if *n == 0 {
                        return false;
                    }
                    *n -= 1;
                }
                _ => {}
            }
        }
        true
    }

    /// Line-delimited export of the event log.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&event.to_string());
            out.push('\n');
        }
        out
    }
}

/// How protocol measurements resolve.
pub enum ProtocolMode<'a> {
    /// Sample outcomes with the run's generator.
    Trajectory(&'a mut PfpRng),
    /// Condition on an explicit outcome vector: the Z outcomes of every
    /// remote control in order, then the X outcomes in the same order.
    Branch(&'a [u8]),
    /// Condition every protocol measurement on outcome 0 (|+⟩). Any branch
    /// yields the same corrected state, so this is a free choice.
    Canonical,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GateStats {
    pub remote_controls: usize,
    pub bell_pairs_used: usize,
    pub classical_bits: usize,
}

/// Shared machinery: the global statevector, qubit ownership, the
/// reusable entanglement pool, and the event log.
struct Substrate {
    state: StateVector,
    owner: Vec<Option<NodeId>>,
    pool: Vec<usize>,
    trace: ProtocolTrace,
    corrupt_z_corrections: bool,
}

impl Substrate {
    fn new(state: StateVector) -> Self {
        let width = state.width();
        Substrate {
            state,
            owner: vec![None; width],
            pool: Vec::new(),
            trace: ProtocolTrace::default(),
            corrupt_z_corrections: false,
        }
    }

    fn owner_of(&self, qubit: usize) -> Result<NodeId, DistError> {
        self.owner[qubit].ok_or(DistError::UnownedQubit(qubit))
    }

    fn assert_local(&self, node: NodeId, qubits: &[usize]) -> Result<(), DistError> {
        for &q in qubits {
            if self.owner_of(q)? != node {
                return Err(DistError::LocalityViolation { node, qubit: q });
            }
        }
        Ok(())
    }

    fn local_gate(&mut self, node: NodeId, gate: &Gate) -> Result<(), DistError> {
        let qubits: Vec<usize> = gate.qubits().collect();
        self.assert_local(node, &qubits)?;
        self.state.apply_gate(gate)?;
        self.trace.events.push(TraceEvent::LocalGate {
            node,
            gate: gate.to_string(),
        });
        Ok(())
    }

    fn measure_local(
        &mut self,
        node: NodeId,
        qubit: usize,
        basis: MeasureBasis,
        mode: &mut ProtocolMode<'_>,
        branch_cursor: &mut usize,
    ) -> Result<u8, DistError> {
        self.assert_local(node, &[qubit])?;
        let record = match mode {
            ProtocolMode::Trajectory(rng) => {
                self.state.measure(qubit, basis, MeasureMode::Trajectory(rng))?
            }
            ProtocolMode::Branch(outcomes) => {
                let outcome = outcomes[*branch_cursor];
                *branch_cursor += 1;
                self.state
                    .measure(qubit, basis, MeasureMode::ConditionOn(outcome))?
            }
            ProtocolMode::Canonical => {
                self.state.measure(qubit, basis, MeasureMode::ConditionOn(0))?
            }
        };
        self.trace.events.push(TraceEvent::Measure {
            node,
            qubit,
            basis,
            outcome: record.outcome,
            probability: record.probability,
        });
        Ok(record.outcome)
    }

    fn send_classical(&mut self, from: NodeId, to: NodeId, round: usize, bit: u8) {
        self.trace
            .events
            .push(TraceEvent::ClassicalSend { from, to, round, bit });
        self.trace
            .events
            .push(TraceEvent::ClassicalReceive { at: to, from, round, bit });
    }

    /// Entangle a fresh pool pair into (|00⟩ + |11⟩)/√2 and hand its
    /// halves to the control node and the gate's target node. Pair
    /// distribution is the one sanctioned cross-node quantum operation.
    fn create_pair(&mut self, node: NodeId, master: NodeId) -> Result<(usize, usize), DistError> {
        if self.pool.len() < 2 {
            return Err(DistError::PoolExhausted);
        }
        let e = self.pool.pop().expect("checked");
        let e_tilde = self.pool.pop().expect("checked");
        self.state.apply_gate(&Gate::h(e))?;
        self.state.apply_gate(&Gate::cnot(e, e_tilde).expect("distinct"))?;
        self.owner[e] = Some(node);
        self.owner[e_tilde] = Some(master);
        self.trace.events.push(TraceEvent::BellPair {
            e,
            e_tilde,
            node,
            master,
        });
        Ok((e, e_tilde))
    }

    /// Collapse leftovers back to |0⟩ and return the pair to the pool.
    fn retire_pair(
        &mut self,
        pair: (usize, usize),
        z_outcome: u8,
        x_outcome: u8,
    ) -> Result<(), DistError> {
        let (e, e_tilde) = pair;
        if z_outcome == 1 {
            self.state.apply_gate(&Gate::x(e))?;
        }
        self.state.apply_gate(&Gate::h(e_tilde))?;
        if x_outcome == 1 {
            self.state.apply_gate(&Gate::x(e_tilde))?;
        }
        self.owner[e] = None;
        self.owner[e_tilde] = None;
        self.pool.push(e_tilde);
        self.pool.push(e);
        Ok(())
    }

    /// Run the full three-step protocol for one multi-controlled gate.
    /// `prepared` supplies Bell pairs created at setup, aligned with the
    /// remote controls; missing pairs are drawn from the pool.
    fn execute_controlled(
        &mut self,
        controls: &[usize],
        target: usize,
        unitary: &DistUnitary,
        mode: &mut ProtocolMode<'_>,
        prepared: &[(usize, usize)],
    ) -> Result<GateStats, DistError> {
        let master = self.owner_of(target)?;
        let mut remote: Vec<(NodeId, usize)> = Vec::new();
        let mut local_controls: Vec<usize> = Vec::new();
        for &c in controls {
            let node = self.owner_of(c)?;
            if node == master {
                local_controls.push(c);
            } else {
                remote.push((node, c));
            }
        }
        if let ProtocolMode::Branch(outcomes) = mode {
            if outcomes.len() != 2 * remote.len() {
                return Err(DistError::BranchOutcomesLength {
                    expected: 2 * remote.len(),
                    actual: outcomes.len(),
                });
            }
        }

        let weight_before = self.state.branch_weight();
        let mut cursor = 0usize;
        let mut stats = GateStats {
            remote_controls: remote.len(),
            ..Default::default()
        };

        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(remote.len());
        for (i, &(node, _)) in remote.iter().enumerate() {
            match prepared.get(i) {
                Some(&pair) => pairs.push(pair),
                None => {
                    pairs.push(self.create_pair(node, master)?);
                    stats.bell_pairs_used += 1;
                }
            }
        }
        stats.bell_pairs_used += prepared.len().min(remote.len());

        // Step 1: entangle each remote control onto its ẽ half.
        let mut z_outcomes = Vec::with_capacity(remote.len());
        for (i, &(node, p)) in remote.iter().enumerate() {
            let (e, e_tilde) = pairs[i];
            self.local_gate(node, &Gate::cnot(p, e).expect("distinct"))?;
            let bit = self.measure_local(node, e, MeasureBasis::Z, mode, &mut cursor)?;
            z_outcomes.push(bit);
            self.send_classical(node, master, 1, bit);
            stats.classical_bits += 1;
            if bit == 1 {
                self.local_gate(master, &Gate::x(e_tilde))?;
                self.trace.events.push(TraceEvent::Correction {
                    node: master,
                    qubit: e_tilde,
                    kind: CorrectionKind::PauliX,
                });
            }
        }

        // Step 2: the controlled-U itself, entirely at the target's node.
        let mut all_controls = local_controls;
        all_controls.extend(pairs.iter().map(|&(_, e_tilde)| e_tilde));
        self.assert_local(
            master,
            &all_controls
                .iter()
                .copied()
                .chain(std::iter::once(target))
                .collect::<Vec<_>>(),
        )?;
        self.state
            .apply_controlled_unitary(&all_controls, target, unitary.matrix())?;
        self.trace.events.push(TraceEvent::LocalGate {
            node: master,
            gate: format!("C{}({:?}->{})", unitary.name(), all_controls, target),
        });

        // Step 3: disentangle the ẽ halves and correct the controls.
        let mut x_outcomes = Vec::with_capacity(remote.len());
        for (i, &(node, p)) in remote.iter().enumerate() {
            let (_, e_tilde) = pairs[i];
            let bit = self.measure_local(master, e_tilde, MeasureBasis::X, mode, &mut cursor)?;
            x_outcomes.push(bit);
            self.send_classical(master, node, 2, bit);
            stats.classical_bits += 1;
            let minus = bit == 1;
            let apply_z = if self.corrupt_z_corrections { !minus } else { minus };
            if apply_z {
                self.local_gate(node, &Gate::z(p))?;
                self.trace.events.push(TraceEvent::Correction {
                    node,
                    qubit: p,
                    kind: CorrectionKind::PauliZ,
                });
            }
        }

        for (i, &pair) in pairs.iter().enumerate() {
            self.retire_pair(pair, z_outcomes[i], x_outcomes[i])?;
        }
        // Any outcome branch yields the same corrected state, so the
        // protocol's conditioning mass is not part of the caller's
        // branch bookkeeping.
        self.state.set_branch_weight(weight_before);
        Ok(stats)
    }
}

/// The stand-alone protocol network: m sub-nodes holding one control
/// qubit each, a master node holding the target, and m Bell pairs shared
/// out at setup. Qubits 0..m are p_1..p_m, qubit m is the target, and the
/// pairs follow.
pub struct Network {
    substrate: Substrate,
    control_count: usize,
    unitary: DistUnitary,
    pairs: Vec<(usize, usize)>,
}

impl Network {
    /// `inputs` are the (⟨0|ψ⟩, ⟨1|ψ⟩) pairs of p_1..p_m followed by the
    /// target.
    pub fn new(
        control_count: usize,
        unitary: DistUnitary,
        inputs: &[(Complex64, Complex64)],
    ) -> Result<Self, DistError> {
        if control_count == 0 {
            return Err(DistError::NoControls);
        }
        assert_eq!(inputs.len(), control_count + 1, "one input per p_i plus target");
        let width = 3 * control_count + 1;
        let mut padded = inputs.to_vec();
        padded.resize(width, (Complex64::ONE, Complex64::ZERO));
        let state = StateVector::from_qubit_states(&padded);

        let mut substrate = Substrate::new(state);
        for i in 0..control_count {
            substrate.owner[i] = Some(i + 1);
        }
        substrate.owner[control_count] = Some(MASTER);
        for q in (control_count + 1..width).rev() {
            substrate.pool.push(q);
        }
        let mut pairs = Vec::with_capacity(control_count);
        for i in 0..control_count {
            pairs.push(substrate.create_pair(i + 1, MASTER)?);
        }
        Ok(Network {
            substrate,
            control_count,
            unitary,
            pairs,
        })
    }

    /// Test hook: invert the step-3 Z-correction rule.
    pub fn set_corrupt_corrections(&mut self, corrupt: bool) {
        self.substrate.corrupt_z_corrections = corrupt;
    }

    pub fn control_count(&self) -> usize {
        self.control_count
    }

    pub fn state(&self) -> &StateVector {
        &self.substrate.state
    }

    pub fn trace(&self) -> &ProtocolTrace {
        &self.substrate.trace
    }

    /// Execute the distributed controlled-U across all nodes.
    pub fn run_protocol(&mut self, mut mode: ProtocolMode<'_>) -> Result<GateStats, DistError> {
        let controls: Vec<usize> = (0..self.control_count).collect();
        let pairs = std::mem::take(&mut self.pairs);
        let unitary = self.unitary;
        self.substrate
            .execute_controlled(&controls, self.control_count, &unitary, &mut mode, &pairs)
    }

    /// Final state on (p_1..p_m, t); the retired pair qubits must have
    /// been reset to |0⟩.
    pub fn main_state(&self) -> StateVector {
        let main_width = self.control_count + 1;
        let amps: Vec<Complex64> = (0..(1u64 << main_width))
            .map(|k| self.substrate.state.amp(k))
            .collect();
        StateVector::from_amplitudes(main_width, amps)
    }
}

/// Direct (single-node) m-controlled-U on the same inputs, for
/// equivalence checks: qubits 0..m are the controls, qubit m the target.
pub fn direct_controlled_u(
    control_count: usize,
    unitary: DistUnitary,
    inputs: &[(Complex64, Complex64)],
) -> StateVector {
    assert_eq!(inputs.len(), control_count + 1);
    let mut state = StateVector::from_qubit_states(inputs);
    let controls: Vec<usize> = (0..control_count).collect();
    state
        .apply_controlled_unitary(&controls, control_count, unitary.matrix())
        .expect("in range");
    state
}

/// Assignment of clauses to sub-nodes 1..=nodes; the master node owns the
/// formula qubit, the control qubit, and any free-variable qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClausePartition {
    nodes: usize,
    clause_nodes: Vec<NodeId>,
}

impl ClausePartition {
    pub fn new(nodes: usize, clause_nodes: Vec<NodeId>) -> Self {
        ClausePartition {
            nodes,
            clause_nodes,
        }
    }

    /// One clause per node, in order.
    pub fn one_per_node(num_clauses: usize) -> Self {
        ClausePartition {
            nodes: num_clauses,
            clause_nodes: (1..=num_clauses).collect(),
        }
    }

    /// Everything on sub-node 1.
    pub fn single_node(num_clauses: usize) -> Self {
        ClausePartition {
            nodes: 1,
            clause_nodes: vec![1; num_clauses],
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn clause_nodes(&self) -> &[NodeId] {
        &self.clause_nodes
    }

    pub fn validate(&self, formula: &CnfFormula) -> Result<(), DistError> {
        if self.clause_nodes.len() != formula.num_clauses() {
            return Err(DistError::PartitionLength {
                expected: formula.num_clauses(),
                actual: self.clause_nodes.len(),
            });
        }
        for (clause, &node) in self.clause_nodes.iter().enumerate() {
            if node == MASTER || node > self.nodes {
                return Err(DistError::PartitionBadNode {
                    clause,
                    node,
                    nodes: self.nodes,
                });
            }
        }
        Ok(())
    }
}

/// Fixed-point search over a clause partition: clause circuits run on
/// their owning nodes; the conjunction, the diffuser reflection, and any
/// cross-node group CNOT go through the teleportation protocol.
pub struct DistributedPfp {
    formula: CnfFormula,
    layout: QubitLayout,
    schedule: PhiSchedule,
    diffuser: Circuit,
    substrate: Substrate,
    t: usize,
    max_leakage: f64,
    last_halt_state: Option<StateVector>,
}

/// Outcome of one trajectory-mode distributed iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum DistStep {
    Continue(IterationRecord),
    Halted {
        record: IterationRecord,
        assignment: u64,
    },
}

impl DistributedPfp {
    pub fn new(
        formula: &CnfFormula,
        partition: &ClausePartition,
        schedule: PhiSchedule,
    ) -> Result<Self, DistError> {
        partition.validate(formula)?;
        let layout = builders::build_layout(formula);
        let diffuser = builders::controlled_diffuser(&layout)?;

        // Worst-case distributed gate: the conjunction (one remote control
        // per clause) or the reflection (one per variable, plus control).
        let max_remote = formula.num_clauses().max(formula.num_vars() + 1);
        let width = layout.total_width() + 2 * max_remote;

        let mut groups = layout.init_groups();
        for q in layout.total_width()..width {
            groups.push(crate::sim::InitGroup::Zero(q));
        }
        // Initial GHZ/product preparation happens before protocol
        // enforcement begins, like Bell-pair distribution at setup.
        let state = StateVector::init(width, &groups)?;
        let mut substrate = Substrate::new(state);

        for (ci, &node) in partition.clause_nodes().iter().enumerate() {
            substrate.owner[layout.clause_qubit(ci)] = Some(node);
            for (slot, _) in formula.clauses()[ci].literals().iter().enumerate() {
                substrate.owner[layout.occurrence_qubit(ci, slot)] = Some(node);
            }
        }
        for var in 1..=formula.num_vars() {
            for &member in layout.members(var) {
                if substrate.owner[member].is_none() {
                    // Free variable: master keeps it.
                    substrate.owner[member] = Some(MASTER);
                }
            }
        }
        substrate.owner[layout.formula_qubit()] = Some(MASTER);
        substrate.owner[layout.control_qubit()] = Some(MASTER);
        for q in (layout.total_width()..width).rev() {
            substrate.pool.push(q);
        }

        Ok(DistributedPfp {
            formula: formula.clone(),
            layout,
            schedule,
            diffuser,
            substrate,
            t: 0,
            max_leakage: 0.0,
        })
    }

    pub fn layout(&self) -> &QubitLayout {
        &self.layout
    }

    pub fn state(&self) -> &StateVector {
        &self.substrate.state
    }

    pub fn trace(&self) -> &ProtocolTrace {
        &self.substrate.trace
    }

    pub fn iterations_run(&self) -> usize {
        self.t
    }

    pub fn max_leakage(&self) -> f64 {
        self.max_leakage
    }

    /// State restricted to the algorithm's qubits; the pool qubits sit in
    /// |0⟩ between gate executions.
    pub fn main_state(&self) -> StateVector {
        let main_width = self.layout.total_width();
        let amps: Vec<Complex64> = (0..(1u64 << main_width))
            .map(|k| self.substrate.state.amp(k))
            .collect();
        StateVector::from_amplitudes(main_width, amps)
    }

    /// Apply one gate of a monolithic circuit, locally when one node owns
    /// every qubit, through the protocol otherwise.
    fn route_gate(&mut self, gate: &Gate, mode: &mut ProtocolMode<'_>) -> Result<(), DistError> {
        let mut owners: Vec<NodeId> = Vec::new();
        for q in gate.qubits() {
            let node = self.substrate.owner_of(q)?;
            if !owners.contains(&node) {
                owners.push(node);
            }
        }
        if owners.len() == 1 {
            return self.substrate.local_gate(owners[0], gate);
        }
        match gate.kind() {
            GateKind::Cnot | GateKind::Mcx => {
                self.substrate.execute_controlled(
                    gate.controls(),
                    gate.target(),
                    &DistUnitary::X,
                    mode,
                    &[],
                )?;
                Ok(())
            }
            GateKind::Cz | GateKind::Mcz => {
                // The phase gate is symmetric; prefer a master-owned
                // member as the protocol target so the local controlled-U
                // runs at the master node.
                let mut qubits: Vec<usize> = gate.qubits().collect();
                let target_pos = qubits
                    .iter()
                    .position(|&q| self.substrate.owner_of(q) == Ok(MASTER))
                    .unwrap_or(qubits.len() - 1);
                let target = qubits.remove(target_pos);
                self.substrate
                    .execute_controlled(&qubits, target, &DistUnitary::Z, mode, &[])?;
                Ok(())
            }
            _ => Err(DistError::CrossNodeGate(owners)),
        }
    }

    fn route_circuit(
        &mut self,
        circuit: &Circuit,
        mode: &mut ProtocolMode<'_>,
    ) -> Result<(), DistError> {
        for gate in circuit.gates() {
            self.route_gate(gate, mode)?;
        }
        Ok(())
    }

    fn check_hygiene(&mut self) -> Result<(), DistError> {
        let mut space = self.layout.logical_space(ControlTreatment::FreeBit);
        for q in self.layout.total_width()..self.substrate.state.width() {
            if self.substrate.owner[q].is_none() {
                space.zeros.push(q);
            }
        }
        let (_, leakage) = self.substrate.state.logical_state(&space)?;
        self.max_leakage = self.max_leakage.max(leakage);
        Ok(())
    }

    fn advance(&mut self, mode: &mut ProtocolMode<'_>) -> Result<(usize, f64, f64), DistError> {
        self.t += 1;
        let phi = self.schedule.phi(self.t)?;
        let oracle = builders::controlled_oracle(&self.layout, &self.formula, phi)?;
        // Widen the monolithic circuits onto the substrate.
        let mut oracle_wide = Circuit::new(self.substrate.state.width());
        oracle_wide.extend(&oracle)?;
        let mut diffuser_wide = Circuit::new(self.substrate.state.width());
        diffuser_wide.extend(&self.diffuser)?;

        self.route_circuit(&oracle_wide, mode)?;
        self.route_circuit(&diffuser_wide, mode)?;
        self.check_hygiene()?;
        let p0 = self
            .substrate
            .state
            .probability_of(self.layout.control_qubit(), 0);
        Ok((self.t, phi, p0))
    }

    /// One exact-conditioning iteration; protocol measurements take the
    /// canonical branch.
    pub fn step_exact(&mut self) -> Result<IterationRecord, DistError> {
        let mut mode = ProtocolMode::Canonical;
        let (t, phi, p0) = self.advance(&mut mode)?;
        let control = self.layout.control_qubit();
        if 1.0 - p0 < 1e-15 {
            self.substrate.state.set_branch_weight(0.0);
        } else {
            self.substrate.assert_local(MASTER, &[control])?;
            self.substrate
                .state
                .measure(control, MeasureBasis::Z, MeasureMode::ConditionOn(1))?;
        }
        let weight = self.substrate.state.branch_weight();
        Ok(IterationRecord {
            t,
            phi,
            halt_probability: p0,
            cumulative_success: 1.0 - weight,
            branch_weight: weight,
        })
    }

    /// One sampled iteration; protocol measurements share the run's
    /// generator.
    pub fn step_trajectory(&mut self, rng: &mut PfpRng) -> Result<DistStep, DistError> {
        let weight_before = self.substrate.state.branch_weight();
        let (t, phi, p0) = {
            let mut mode = ProtocolMode::Trajectory(rng);
            self.advance(&mut mode)?
        };
        let control = self.layout.control_qubit();
        let record_weight = weight_before * (1.0 - p0);
        self.substrate.assert_local(MASTER, &[control])?;
        let outcome = self
            .substrate
            .state
            .measure(control, MeasureBasis::Z, MeasureMode::Trajectory(rng))?
            .outcome;
        self.substrate.trace.events.push(TraceEvent::Measure {
            node: MASTER,
            qubit: control,
            basis: MeasureBasis::Z,
            outcome,
            probability: if outcome == 0 { p0 } else { 1.0 - p0 },
        });
        self.substrate.state.set_branch_weight(record_weight);
        let record = IterationRecord {
            t,
            phi,
            halt_probability: p0,
            cumulative_success: 1.0 - record_weight,
            branch_weight: record_weight,
        };
        if outcome == 0 {
            let mut assignment = 0u64;
            for var in 1..=self.formula.num_vars() {
                let rep = self.layout.representative(var);
                let bit = self
                    .substrate
                    .state
                    .measure(rep, MeasureBasis::Z, MeasureMode::Trajectory(rng))?
                    .outcome;
                if bit == 1 {
                    assignment |= 1 << (var - 1);
                }
            }
            Ok(DistStep::Halted { record, assignment })
        } else {
            Ok(DistStep::Continue(record))
        }
    }

    /// Full trajectory-mode run, mirroring the monolithic runner.
    pub fn run_trajectory(
        &mut self,
        max_iters: usize,
        rng: &mut PfpRng,
    ) -> Result<PfpSummary, DistError> {
        let mut records = Vec::new();
        for _ in 0..max_iters {
            match self.step_trajectory(rng)? {
                DistStep::Continue(record) => records.push(record),
                DistStep::Halted { record, assignment } => {
                    records.push(record);
                    return Ok(PfpSummary::solved(records, assignment, self.max_leakage));
                }
            }
        }
        Ok(PfpSummary::exhausted(records, self.max_leakage))
    }
}
