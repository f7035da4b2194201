//! Gate-level circuit representation with composition, inversion, and
//! layered-depth accounting.
//!
//! Depth is counted in layers: maximal runs of gates acting on pairwise
//! disjoint qubits. A multi-controlled gate occupies one slot on every
//! qubit it touches; it is never decomposed into two-qubit gates. This is
//! the metric under which the parallel oracle's clause-evaluation stage
//! has constant depth in the clause count.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("qubit {qubit} out of range for width {width}")]
    QubitOutOfRange { qubit: usize, width: usize },
    #[error("target qubit {0} also appears as a control")]
    TargetInControls(usize),
    #[error("duplicate control qubit {0}")]
    DuplicateControl(usize),
    #[error("rotation angle must be finite")]
    NonFiniteAngle,
    #[error("unknown stage label `{0}`")]
    UnknownStage(String),
}

/// Gate alphabet used by the builders. `Ry(phi)` rotates about the y-axis:
/// [[cos(phi/2), -sin(phi/2)], [sin(phi/2), cos(phi/2)]].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    H,
    X,
    Z,
    Ry(f64),
    Cnot,
    Cz,
    Mcx,
    Mcz,
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Z => "Z",
            GateKind::Ry(_) => "RY",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::Mcx => "MCX",
            GateKind::Mcz => "MCZ",
        }
    }
}

/// A gate instance: kind, control set, and a target qubit. For the
/// symmetric Z-type gates the target is the designated phase qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    kind: GateKind,
    controls: Vec<usize>,
    target: usize,
}

impl Gate {
    pub fn new(kind: GateKind, controls: Vec<usize>, target: usize) -> Result<Self, CircuitError> {
        if let GateKind::Ry(angle) = kind {
            if !angle.is_finite() {
                return Err(CircuitError::NonFiniteAngle);
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &c in &controls {
            if c == target {
                return Err(CircuitError::TargetInControls(target));
            }
            if !seen.insert(c) {
                return Err(CircuitError::DuplicateControl(c));
            }
        }
        Ok(Gate {
            kind,
            controls,
            target,
        })
    }

    pub fn h(target: usize) -> Self {
        Gate {
            kind: GateKind::H,
            controls: vec![],
            target,
        }
    }

    pub fn x(target: usize) -> Self {
        Gate {
            kind: GateKind::X,
            controls: vec![],
            target,
        }
    }

    pub fn z(target: usize) -> Self {
        Gate {
            kind: GateKind::Z,
            controls: vec![],
            target,
        }
    }

    pub fn ry(angle: f64, target: usize) -> Result<Self, CircuitError> {
        Gate::new(GateKind::Ry(angle), vec![], target)
    }

    pub fn cnot(control: usize, target: usize) -> Result<Self, CircuitError> {
        Gate::new(GateKind::Cnot, vec![control], target)
    }

    pub fn cz(control: usize, target: usize) -> Result<Self, CircuitError> {
        Gate::new(GateKind::Cz, vec![control], target)
    }

    pub fn mcx(controls: Vec<usize>, target: usize) -> Result<Self, CircuitError> {
        Gate::new(GateKind::Mcx, controls, target)
    }

    pub fn mcz(controls: Vec<usize>, target: usize) -> Result<Self, CircuitError> {
        Gate::new(GateKind::Mcz, controls, target)
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn controls(&self) -> &[usize] {
        &self.controls
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// All qubits the gate acts on: controls then target.
    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.controls.iter().copied().chain(std::iter::once(self.target))
    }

    /// Every gate here is self-inverse except Ry, which flips its angle.
    pub fn inverse(&self) -> Gate {
        let kind = match self.kind {
            GateKind::Ry(angle) => GateKind::Ry(-angle),
            other => other,
        };
        Gate {
            kind,
            controls: self.controls.clone(),
            target: self.target,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GateKind::Ry(angle) => write!(f, "RY({angle:.15})")?,
            ref kind => write!(f, "{}", kind.name())?,
        }
        write!(f, " [")?;
        for (i, c) in self.controls.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "] {}", self.target)
    }
}

/// An ordered gate sequence over `width` qubits with greedy layer
/// assignment and optional per-gate stage labels.
#[derive(Debug, Clone, Default)]
pub struct Circuit {
    width: usize,
    gates: Vec<Gate>,
    stages: Vec<Option<u16>>,
    stage_names: Vec<String>,
    gate_layers: Vec<usize>,
    qubit_frontier: Vec<usize>,
    depth: usize,
}

impl Circuit {
    pub fn new(width: usize) -> Self {
        Circuit {
            width,
            gates: Vec::new(),
            stages: Vec::new(),
            stage_names: Vec::new(),
            gate_layers: Vec::new(),
            qubit_frontier: vec![0; width],
            depth: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Number of layers.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Layer index assigned to each gate, in push order.
    pub fn gate_layers(&self) -> &[usize] {
        &self.gate_layers
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), CircuitError> {
        self.push_inner(gate, None)
    }

    /// Append a gate tagged with a stage label. Labels form paths
    /// (`"omega/clauses"`); [`Circuit::staged_depth`] matches by prefix.
    pub fn push_staged(&mut self, stage: &str, gate: Gate) -> Result<(), CircuitError> {
        let id = self.intern_stage(stage);
        self.push_inner(gate, Some(id))
    }

    fn intern_stage(&mut self, stage: &str) -> u16 {
        if let Some(pos) = self.stage_names.iter().position(|s| s == stage) {
            return pos as u16;
        }
        self.stage_names.push(stage.to_string());
        (self.stage_names.len() - 1) as u16
    }

    fn push_inner(&mut self, gate: Gate, stage: Option<u16>) -> Result<(), CircuitError> {
        for q in gate.qubits() {
            if q >= self.width {
                return Err(CircuitError::QubitOutOfRange {
                    qubit: q,
                    width: self.width,
                });
            }
        }
        let layer = gate.qubits().map(|q| self.qubit_frontier[q]).max().unwrap_or(0);
        for q in gate.qubits() {
            self.qubit_frontier[q] = layer + 1;
        }
        self.depth = self.depth.max(layer + 1);
        self.gate_layers.push(layer);
        self.gates.push(gate);
        self.stages.push(stage);
        Ok(())
    }

    /// Append all of `other`'s gates, keeping their stage labels.
    pub fn extend(&mut self, other: &Circuit) -> Result<(), CircuitError> {
        for (gate, stage) in other.iter_staged() {
            match stage {
                Some(label) => self.push_staged(label, gate.clone())?,
                None => self.push(gate.clone())?,
            }
        }
        Ok(())
    }

    pub fn iter_staged(&self) -> impl Iterator<Item = (&Gate, Option<&str>)> {
        self.gates.iter().zip(self.stages.iter()).map(move |(gate, stage)| {
            (gate, stage.map(|id| self.stage_names[id as usize].as_str()))
        })
    }

    pub fn stage_of(&self, gate_index: usize) -> Option<&str> {
        self.stages[gate_index].map(|id| self.stage_names[id as usize].as_str())
    }

    /// Reverse the gate order and invert each gate. Stage labels follow
    /// their gates.
    pub fn inverse(&self) -> Circuit {
        let mut inv = Circuit::new(self.width);
        for (gate, stage) in self.iter_staged().collect::<Vec<_>>().into_iter().rev() {
            match stage {
                Some(label) => inv.push_staged(label, gate.inverse()).expect("same width"),
                None => inv.push(gate.inverse()).expect("same width"),
            }
        }
        inv
    }

    fn stage_matches(stage: Option<&str>, label: &str) -> bool {
        match stage {
            Some(s) => s == label || (s.len() > label.len() && s.starts_with(label) && s.as_bytes()[label.len()] == b'/'),
            None => false,
        }
    }

    /// Depth of the gate subsequence whose stage matches `label` (exactly,
    /// or as a path prefix), layered independently of the rest.
    pub fn staged_depth(&self, label: &str) -> Result<usize, CircuitError> {
        let mut frontier = vec![0usize; self.width];
        let mut depth = 0usize;
        let mut any = false;
        for (gate, stage) in self.iter_staged() {
            if !Self::stage_matches(stage, label) {
                continue;
            }
            any = true;
            let layer = gate.qubits().map(|q| frontier[q]).max().unwrap_or(0);
            for q in gate.qubits() {
                frontier[q] = layer + 1;
            }
            depth = depth.max(layer + 1);
        }
        if !any {
            return Err(CircuitError::UnknownStage(label.to_string()));
        }
        Ok(depth)
    }

    /// Stage labels present, in first-use order.
    pub fn stage_labels(&self) -> &[String] {
        &self.stage_names
    }

    /// Textual dump, one gate per line: kind, controls, target.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for gate in &self.gates {
            out.push_str(&gate.to_string());
            out.push('\n');
        }
        out
    }
}
