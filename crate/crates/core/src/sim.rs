//! Dense statevector simulation with mid-circuit measurement.
//!
//! Two measurement modes are supported: seeded stochastic trajectories
//! (sample the outcome, collapse, renormalize) and exact branch
//! conditioning (project onto a requested outcome and fold its probability
//! into `branch_weight`). Conditioning reproduces the density-matrix
//! bookkeeping of an unrecorded measurement: the retained pure branch plus
//! the scalar mass it carries.
//!
//! Qubit index 0 is the least-significant bit of the basis-state integer.
//! All golden values in the test suite depend on this convention.

use num_complex::Complex64;
use thiserror::Error;

use crate::circuit::{Circuit, Gate, GateKind};
use crate::rng::PfpRng;
use rand::Rng;

/// Amplitudes with squared magnitude below this are treated as zero in
/// support checks; double precision drifts stay well under it over the
/// gate counts used here (≤ 10^3).
pub const AMP_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit {qubit} out of range for width {width}")]
    QubitOutOfRange { qubit: usize, width: usize },
    #[error("circuit width {circuit} does not match state width {state}")]
    WidthMismatch { circuit: usize, state: usize },
    #[error("initialization covers qubit {0} twice")]
    OverlappingInit(usize),
    #[error("initialization leaves qubit {0} unassigned")]
    IncompleteInit(usize),
    #[error("empty GHZ group")]
    EmptyGroup,
    #[error("conditioning on outcome {outcome} with probability {probability:.3e}")]
    ZeroProbabilityOutcome { outcome: u8, probability: f64 },
    #[error("observable references qubit {qubit} outside state of width {width}")]
    ObservableOutOfRange { qubit: usize, width: usize },
}

/// One element of an initial-state partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitGroup {
    /// (|0…0⟩ + |1…1⟩)/√2 over the listed qubits. A single-qubit group is
    /// exactly |+⟩.
    Ghz(Vec<usize>),
    /// (|0⟩ + |1⟩)/√2.
    Plus(usize),
    Zero(usize),
    One(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureBasis {
    Z,
    X,
}

/// How a measurement resolves. `Trajectory` samples with the provided
/// generator; `ConditionOn` projects onto the requested outcome. For the
/// X basis, outcome 0 is |+⟩ and outcome 1 is |−⟩.
pub enum MeasureMode<'a> {
    Trajectory(&'a mut PfpRng),
    ConditionOn(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub qubit: usize,
    pub basis: MeasureBasis,
    pub outcome: u8,
    pub probability: f64,
}

/// Observables over a solution set, evaluated on the logical register
/// extracted by [`StateVector::logical_state`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// Q = Σ_{solutions} |k⟩⟨k|.
    SolutionProjector,
    /// O = I − 2Q, the oracle reflection.
    OracleReflection,
    /// A = |ψ*⟩⟨ψ*⊥| + |ψ*⊥⟩⟨ψ*| over the uniform solution /
    /// non-solution superpositions.
    CrossTerm,
}

/// Maps physical qubits onto a logical register: logical bit `i` is
/// represented by `groups[i]` (all members must agree), while `zeros` and
/// `ones` must sit in fixed basis states. Support violating these
/// constraints is reported as leakage.
#[derive(Debug, Clone, Default)]
pub struct LogicalSpace {
    pub groups: Vec<Vec<usize>>,
    pub zeros: Vec<usize>,
    pub ones: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StateVector {
    width: usize,
    amps: Vec<Complex64>,
    branch_weight: f64,
}

impl StateVector {
    /// |0…0⟩ over `width` qubits.
    pub fn zero_state(width: usize) -> Self {
        let mut amps = vec![Complex64::ZERO; 1 << width];
        amps[0] = Complex64::ONE;
        StateVector {
            width,
            amps,
            branch_weight: 1.0,
        }
    }

    /// Computational basis state |index⟩.
    pub fn basis_state(width: usize, index: u64) -> Self {
        let mut amps = vec![Complex64::ZERO; 1 << width];
        amps[index as usize] = Complex64::ONE;
        StateVector {
            width,
            amps,
            branch_weight: 1.0,
        }
    }

    /// Wrap an explicit amplitude vector; `amps` must have length
    /// 2^width.
    pub fn from_amplitudes(width: usize, amps: Vec<Complex64>) -> Self {
        assert_eq!(amps.len(), 1 << width);
        StateVector {
            width,
            amps,
            branch_weight: 1.0,
        }
    }

    /// Product of per-qubit states; each pair is (⟨0|ψ⟩, ⟨1|ψ⟩), normalized
    /// on the way in.
    pub fn from_qubit_states(qubits: &[(Complex64, Complex64)]) -> Self {
        let width = qubits.len();
        let mut amps = vec![Complex64::ONE; 1];
        for &(a, b) in qubits {
            let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let (a, b) = (a / norm, b / norm);
            let mut next = vec![Complex64::ZERO; amps.len() * 2];
            for (i, amp) in amps.iter().enumerate() {
                next[i] = amp * a;
                next[i + amps.len()] = amp * b;
            }
            amps = next;
        }
        StateVector {
            width,
            amps,
            branch_weight: 1.0,
        }
    }

    /// Build a product of GHZ groups, |+⟩ singles, |0⟩ ancillas, and |1⟩
    /// controls. The directives must partition 0..width exactly.
    pub fn init(width: usize, groups: &[InitGroup]) -> Result<Self, SimError> {
        let mut covered = vec![false; width];
        let mut cover = |q: usize| -> Result<(), SimError> {
            if q >= width {
                return Err(SimError::QubitOutOfRange { qubit: q, width });
            }
            if covered[q] {
                return Err(SimError::OverlappingInit(q));
            }
            covered[q] = true;
            Ok(())
        };

        let mut base: u64 = 0;
        let mut choice_masks: Vec<u64> = Vec::new();
        for group in groups {
            match group {
                InitGroup::Ghz(members) => {
                    if members.is_empty() {
                        return Err(SimError::EmptyGroup);
                    }
                    let mut mask = 0u64;
                    for &q in members {
                        cover(q)?;
                        mask |= 1 << q;
                    }
                    choice_masks.push(mask);
                }
                InitGroup::Plus(q) => {
                    cover(*q)?;
                    choice_masks.push(1 << q);
                }
                InitGroup::Zero(q) => {
                    cover(*q)?;
                }
                InitGroup::One(q) => {
                    cover(*q)?;
                    base |= 1 << q;
                }
            }
        }
        if let Some(q) = covered.iter().position(|&c| !c) {
            return Err(SimError::IncompleteInit(q));
        }

        let k = choice_masks.len();
        let amp = Complex64::new(1.0 / ((1u64 << k) as f64).sqrt(), 0.0);
        let mut amps = vec![Complex64::ZERO; 1 << width];
        for combo in 0..(1u64 << k) {
            let mut index = base;
            for (i, mask) in choice_masks.iter().enumerate() {
                if (combo >> i) & 1 == 1 {
                    index |= mask;
                }
            }
            amps[index as usize] = amp;
        }
        Ok(StateVector {
            width,
            amps,
            branch_weight: 1.0,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amp(&self, index: u64) -> Complex64 {
        self.amps[index as usize]
    }

    /// Retained probability mass of this branch under exact conditioning.
    pub fn branch_weight(&self) -> f64 {
        self.branch_weight
    }

    pub fn set_branch_weight(&mut self, weight: f64) {
        self.branch_weight = weight;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn apply(&mut self, circuit: &Circuit) -> Result<(), SimError> {
        if circuit.width() != self.width {
            return Err(SimError::WidthMismatch {
                circuit: circuit.width(),
                state: self.width,
            });
        }
        for gate in circuit.gates() {
            self.apply_gate(gate)?;
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<(), SimError> {
        for q in gate.qubits() {
            if q >= self.width {
                return Err(SimError::QubitOutOfRange {
                    qubit: q,
                    width: self.width,
                });
            }
        }
        let target = gate.target();
        let cmask = control_mask(gate.controls());
        match gate.kind() {
            GateKind::H => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                self.apply_1q(target, cmask, [[s.into(), s.into()], [s.into(), (-s).into()]]);
            }
            GateKind::X | GateKind::Cnot | GateKind::Mcx => {
                self.apply_flip(target, cmask);
            }
            GateKind::Z | GateKind::Cz | GateKind::Mcz => {
                self.apply_phase_flip(target, cmask);
            }
            GateKind::Ry(angle) => {
                let (sin, cos) = (angle / 2.0).sin_cos();
                self.apply_1q(
                    target,
                    cmask,
                    [[cos.into(), (-sin).into()], [sin.into(), cos.into()]],
                );
            }
        }
        Ok(())
    }

    /// Apply a 2×2 unitary on `target`, restricted to basis states whose
    /// control bits are all 1.
    pub fn apply_controlled_unitary(
        &mut self,
        controls: &[usize],
        target: usize,
        matrix: [[Complex64; 2]; 2],
    ) -> Result<(), SimError> {
        for &q in controls.iter().chain(std::iter::once(&target)) {
            if q >= self.width {
                return Err(SimError::QubitOutOfRange {
                    qubit: q,
                    width: self.width,
                });
            }
        }
        self.apply_1q(target, control_mask(controls), matrix);
        Ok(())
    }

    fn apply_1q(&mut self, target: usize, cmask: u64, m: [[Complex64; 2]; 2]) {
        let tmask = 1u64 << target;
        for i in 0..self.amps.len() as u64 {
            if i & tmask != 0 || (i & cmask) != cmask {
                continue;
            }
            let j = (i | tmask) as usize;
            let i = i as usize;
            let a0 = self.amps[i];
            let a1 = self.amps[j];
            self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
        }
    }

    fn apply_flip(&mut self, target: usize, cmask: u64) {
        let tmask = 1u64 << target;
        for i in 0..self.amps.len() as u64 {
            if i & tmask != 0 || (i & cmask) != cmask {
                continue;
            }
            self.amps.swap(i as usize, (i | tmask) as usize);
        }
    }

    fn apply_phase_flip(&mut self, target: usize, cmask: u64) {
        let full = cmask | (1u64 << target);
        for i in 0..self.amps.len() as u64 {
            if (i & full) == full {
                self.amps[i as usize] = -self.amps[i as usize];
            }
        }
    }

    /// Probability of reading `outcome` on `qubit` in the Z basis.
    pub fn probability_of(&self, qubit: usize, outcome: u8) -> f64 {
        let mask = 1u64 << qubit;
        let want = if outcome == 0 { 0 } else { mask };
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as u64) & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn measure(
        &mut self,
        qubit: usize,
        basis: MeasureBasis,
        mode: MeasureMode<'_>,
    ) -> Result<MeasurementRecord, SimError> {
        if qubit >= self.width {
            return Err(SimError::QubitOutOfRange {
                qubit,
                width: self.width,
            });
        }
        // An X-basis measurement is a Z measurement conjugated by H; the
        // post-measurement state H|o⟩ is the corresponding |±⟩.
        if basis == MeasureBasis::X {
            self.apply_gate(&Gate::h(qubit)).expect("qubit in range");
            let mut record = self.measure(qubit, MeasureBasis::Z, mode)?;
            self.apply_gate(&Gate::h(qubit)).expect("qubit in range");
            record.basis = MeasureBasis::X;
            return Ok(record);
        }

        let p1 = self.probability_of(qubit, 1);
        let (outcome, conditioning) = match mode {
            MeasureMode::Trajectory(rng) => {
                let outcome = if rng.random::<f64>() < p1 { 1 } else { 0 };
                (outcome, false)
            }
            MeasureMode::ConditionOn(outcome) => (outcome, true),
        };
        // Renormalize against the directly summed mass of the kept
        // outcome. Using 1 − p1 for outcome 0 would rescale by the
        // state's accumulated norm error on every conditioning, doubling
        // it each time.
        let probability = if outcome == 1 {
            p1
        } else {
            self.probability_of(qubit, 0)
        };
        if conditioning {
            if probability < 1e-15 {
                return Err(SimError::ZeroProbabilityOutcome {
                    outcome,
                    probability,
                });
            }
            // Conditioning tracks the retained mass; a sampled trajectory
            // stays normalized with weight untouched.
            self.branch_weight *= probability;
        }

        let mask = 1u64 << qubit;
        let keep = if outcome == 0 { 0 } else { mask };
        let scale = Complex64::new(1.0 / probability.sqrt(), 0.0);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if (i as u64) & mask == keep {
                *amp *= scale;
            } else {
                *amp = Complex64::ZERO;
            }
        }
        Ok(MeasurementRecord {
            qubit,
            basis: MeasureBasis::Z,
            outcome,
            probability,
        })
    }

    /// Project the state onto the logical register described by `space`.
    /// Returns the 2^k logical amplitudes (k = number of groups, group i is
    /// bit i) and the leaked probability mass found outside the constrained
    /// support.
    pub fn logical_state(&self, space: &LogicalSpace) -> Result<(Vec<Complex64>, f64), SimError> {
        for q in space
            .groups
            .iter()
            .flatten()
            .chain(space.zeros.iter())
            .chain(space.ones.iter())
        {
            if *q >= self.width {
                return Err(SimError::ObservableOutOfRange {
                    qubit: *q,
                    width: self.width,
                });
            }
        }
        let k = space.groups.len();
        let ones_mask = control_mask(&space.ones);
        let zeros_mask = control_mask(&space.zeros);
        let group_masks: Vec<u64> = space.groups.iter().map(|g| control_mask(g)).collect();

        let mut logical = vec![Complex64::ZERO; 1 << k];
        let mut leakage = 0.0;
        'outer: for (i, amp) in self.amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let i = i as u64;
            if i & ones_mask != ones_mask || i & zeros_mask != 0 {
                leakage += amp.norm_sqr();
                continue;
            }
            let mut index = 0u64;
            for (bit, mask) in group_masks.iter().enumerate() {
                let val = i & mask;
                if val == *mask {
                    index |= 1 << bit;
                } else if val != 0 {
                    // Group members disagree.
                    leakage += amp.norm_sqr();
                    continue 'outer;
                }
            }
            logical[index as usize] += amp;
        }
        Ok((logical, leakage))
    }

    /// ⟨ψ|Obs|ψ⟩ on the logical register, with `solutions` drawn from the
    /// brute-force enumerator. Multiply by [`StateVector::branch_weight`]
    /// when an unnormalized trace is required.
    pub fn expectation(
        &self,
        space: &LogicalSpace,
        solutions: &[u64],
        observable: Observable,
    ) -> Result<f64, SimError> {
        let (logical, _) = self.logical_state(space)?;
        Ok(logical_expectation(&logical, solutions, observable))
    }
}

/// Expectation of a solution-set observable on a logical state vector.
pub fn logical_expectation(logical: &[Complex64], solutions: &[u64], obs: Observable) -> f64 {
    let dim = logical.len() as u64;
    let is_solution = |k: u64| solutions.binary_search(&k).is_ok();
    match obs {
        Observable::SolutionProjector => (0..dim)
            .filter(|&k| is_solution(k))
            .map(|k| logical[k as usize].norm_sqr())
            .sum(),
        Observable::OracleReflection => {
            let q: f64 = (0..dim)
                .filter(|&k| is_solution(k))
                .map(|k| logical[k as usize].norm_sqr())
                .sum();
            let total: f64 = logical.iter().map(|a| a.norm_sqr()).sum();
            total - 2.0 * q
        }
        Observable::CrossTerm => {
            let m = solutions.len() as f64;
            let non = dim as f64 - m;
            if m == 0.0 || non == 0.0 {
                return 0.0;
            }
            let mut sol_overlap = Complex64::ZERO;
            let mut non_overlap = Complex64::ZERO;
            for k in 0..dim {
                if is_solution(k) {
                    sol_overlap += logical[k as usize];
                } else {
                    non_overlap += logical[k as usize];
                }
            }
            sol_overlap /= m.sqrt();
            non_overlap /= non.sqrt();
            2.0 * (sol_overlap.conj() * non_overlap).re
        }
    }
}

fn control_mask(controls: &[usize]) -> u64 {
    controls.iter().fold(0u64, |mask, &q| mask | (1 << q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn ghz_group_init() {
        let s = StateVector::init(3, &[InitGroup::Ghz(vec![0, 1, 2])]).unwrap();
        let r = 1.0 / 2.0f64.sqrt();
        assert_close(s.amp(0b000).re, r, 1e-15);
        assert_close(s.amp(0b111).re, r, 1e-15);
        assert_close(s.norm_sqr(), 1.0, 1e-15);
        for i in 1..7 {
            assert_eq!(s.amp(i), Complex64::ZERO);
        }
    }

    #[test]
    fn plus_single_init() {
        let s = StateVector::init(1, &[InitGroup::Plus(0)]).unwrap();
        let r = 1.0 / 2.0f64.sqrt();
        assert_close(s.amp(0).re, r, 1e-15);
        assert_close(s.amp(1).re, r, 1e-15);
    }

    #[test]
    fn layered_product_init() {
        // GHZ3 ⊗ |+⟩ ⊗ |+⟩ ⊗ |000⟩ ⊗ |0⟩ ⊗ |1⟩ on 10 qubits.
        let s = StateVector::init(
            10,
            &[
                InitGroup::Ghz(vec![0, 1, 2]),
                InitGroup::Plus(3),
                InitGroup::Plus(4),
                InitGroup::Zero(5),
                InitGroup::Zero(6),
                InitGroup::Zero(7),
                InitGroup::Zero(8),
                InitGroup::One(9),
            ],
        )
        .unwrap();
        let amp = 1.0 / 8.0f64.sqrt();
        assert_close(s.amp(0b1_0_000_11_111).re, amp, 1e-15);
        assert_close(s.amp(0b1_0_000_01_000).re, amp, 1e-15);
        assert_eq!(s.amp(0b0_0_000_00_000), Complex64::ZERO); // control must be 1
        assert_eq!(s.amp(0b1_0_000_00_011), Complex64::ZERO); // GHZ disagreement
        assert_close(s.norm_sqr(), 1.0, 1e-14);
    }

    #[test]
    fn init_partition_errors() {
        assert!(matches!(
            StateVector::init(2, &[InitGroup::Plus(0), InitGroup::Plus(0)]),
            Err(SimError::OverlappingInit(0))
        ));
        assert!(matches!(
            StateVector::init(2, &[InitGroup::Plus(0)]),
            Err(SimError::IncompleteInit(1))
        ));
        assert!(matches!(
            StateVector::init(1, &[InitGroup::Ghz(vec![])]),
            Err(SimError::EmptyGroup)
        ));
    }

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::zero_state(1);
        s.apply_gate(&Gate::h(0)).unwrap();
        let r = 1.0 / 2.0f64.sqrt();
        assert_close(s.amp(0).re, r, 1e-15);
        assert_close(s.amp(1).re, r, 1e-15);
    }

    #[test]
    fn mcx_fires_only_when_controls_set() {
        let mut s = StateVector::basis_state(3, 0b011);
        s.apply_gate(&Gate::mcx(vec![0, 1], 2).unwrap()).unwrap();
        assert_close(s.amp(0b111).re, 1.0, 1e-15);
        let mut s = StateVector::basis_state(3, 0b001);
        s.apply_gate(&Gate::mcx(vec![0, 1], 2).unwrap()).unwrap();
        assert_close(s.amp(0b001).re, 1.0, 1e-15);
    }

    #[test]
    fn norm_preserved_over_random_gates() {
        let mut rng = rng::seeded(7);
        let width = 8;
        let mut s = StateVector::zero_state(width);
        for q in 0..width {
            s.apply_gate(&Gate::h(q)).unwrap();
        }
        for _ in 0..1000 {
            let q = rng.random_range(0..width);
            match rng.random_range(0..5) {
                0 => s.apply_gate(&Gate::h(q)).unwrap(),
                1 => s.apply_gate(&Gate::x(q)).unwrap(),
                2 => s.apply_gate(&Gate::z(q)).unwrap(),
                3 => s
                    .apply_gate(&Gate::ry(rng.random_range(-3.0..3.0), q).unwrap())
                    .unwrap(),
                _ => {
                    let c = (q + 1 + rng.random_range(0..width - 1)) % width;
                    s.apply_gate(&Gate::cnot(c, q).unwrap()).unwrap();
                }
            }
        }
        assert_close(s.norm_sqr(), 1.0, 1e-12);
    }

    #[test]
    fn condition_on_plus_state() {
        let mut s = StateVector::init(1, &[InitGroup::Plus(0)]).unwrap();
        let rec = s.measure(0, MeasureBasis::Z, MeasureMode::ConditionOn(0)).unwrap();
        assert_close(rec.probability, 0.5, 1e-15);
        assert_close(s.branch_weight(), 0.5, 1e-15);
        assert_close(s.amp(0).re, 1.0, 1e-15);
        assert_eq!(s.amp(1), Complex64::ZERO);
    }

    #[test]
    fn measuring_one_is_deterministic() {
        let mut s = StateVector::basis_state(1, 1);
        let mut rng = rng::seeded(3);
        let rec = s
            .measure(0, MeasureBasis::Z, MeasureMode::Trajectory(&mut rng))
            .unwrap();
        assert_eq!(rec.outcome, 1);
        assert_close(rec.probability, 1.0, 1e-15);
    }

    #[test]
    fn x_basis_condition_on_zero_state() {
        let mut s = StateVector::zero_state(1);
        let rec = s.measure(0, MeasureBasis::X, MeasureMode::ConditionOn(0)).unwrap();
        assert_close(rec.probability, 0.5, 1e-15);
        let r = 1.0 / 2.0f64.sqrt();
        assert_close(s.amp(0).re, r, 1e-12);
        assert_close(s.amp(1).re, r, 1e-12);
    }

    #[test]
    fn zero_probability_conditioning_rejected() {
        let mut s = StateVector::basis_state(1, 1);
        assert!(matches!(
            s.measure(0, MeasureBasis::Z, MeasureMode::ConditionOn(0)),
            Err(SimError::ZeroProbabilityOutcome { outcome: 0, .. })
        ));
    }

    #[test]
    fn trajectory_frequencies_match_conditioning() {
        // Empirical outcome frequency over 10^4 trajectories vs the exact
        // probability, within 5σ binomial bounds.
        let runs = 10_000usize;
        let angle = 1.0f64;
        let p1_exact = {
            let mut s = StateVector::zero_state(1);
            s.apply_gate(&Gate::ry(angle, 0).unwrap()).unwrap();
            s.probability_of(0, 1)
        };
        let mut ones = 0usize;
        for run in 0..runs {
            let mut rng = rng::stream(99, run as u64);
            let mut s = StateVector::zero_state(1);
            s.apply_gate(&Gate::ry(angle, 0).unwrap()).unwrap();
            let rec = s
                .measure(0, MeasureBasis::Z, MeasureMode::Trajectory(&mut rng))
                .unwrap();
            ones += rec.outcome as usize;
        }
        let sigma = (runs as f64 * p1_exact * (1.0 - p1_exact)).sqrt();
        assert!(
            (ones as f64 - runs as f64 * p1_exact).abs() < 5.0 * sigma,
            "ones={ones} expected={}",
            runs as f64 * p1_exact
        );
    }

    #[test]
    fn deferred_measurement_commutes_with_disjoint_gates() {
        let mut rng = rng::seeded(11);
        for _ in 0..20 {
            let qubits: Vec<(Complex64, Complex64)> = (0..4)
                .map(|_| {
                    (
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                    )
                })
                .collect();
            let base = StateVector::from_qubit_states(&qubits);
            let mut circuit = Circuit::new(4);
            circuit.push(Gate::h(1)).unwrap();
            circuit.push(Gate::cnot(1, 2).unwrap()).unwrap();
            circuit.push(Gate::ry(0.4, 3).unwrap()).unwrap();

            let mut a = base.clone();
            let rec = a.measure(0, MeasureBasis::Z, MeasureMode::ConditionOn(1));
            if rec.is_err() {
                continue; // zero-probability branch, skip
            }
            a.apply(&circuit).unwrap();

            let mut b = base.clone();
            b.apply(&circuit).unwrap();
            b.measure(0, MeasureBasis::Z, MeasureMode::ConditionOn(1))
                .unwrap();

            assert_close(a.branch_weight(), b.branch_weight(), 1e-12);
            for i in 0..16 {
                assert!((a.amp(i) - b.amp(i)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn projector_expectation_on_uniform_state() {
        let mut s = StateVector::zero_state(3);
        for q in 0..3 {
            s.apply_gate(&Gate::h(q)).unwrap();
        }
        let space = LogicalSpace {
            groups: vec![vec![0], vec![1], vec![2]],
            zeros: vec![],
            ones: vec![],
        };
        let q = s
            .expectation(&space, &[0b111], Observable::SolutionProjector)
            .unwrap();
        assert_close(q, 1.0 / 8.0, 1e-14);
        let o = s
            .expectation(&space, &[0b111], Observable::OracleReflection)
            .unwrap();
        assert_close(o, 1.0 - 2.0 / 8.0, 1e-14);
    }

    #[test]
    fn projector_expectation_on_target_state() {
        let s = StateVector::basis_state(3, 0b111);
        let space = LogicalSpace {
            groups: vec![vec![0], vec![1], vec![2]],
            zeros: vec![],
            ones: vec![],
        };
        let q = s
            .expectation(&space, &[0b111], Observable::SolutionProjector)
            .unwrap();
        assert_close(q, 1.0, 1e-15);
    }

    #[test]
    fn cross_term_on_uniform_state() {
        // ⟨ψ0|A|ψ0⟩ = 2 sinθ cosθ with sinθ = sqrt(M/N).
        let mut s = StateVector::zero_state(3);
        for q in 0..3 {
            s.apply_gate(&Gate::h(q)).unwrap();
        }
        let space = LogicalSpace {
            groups: vec![vec![0], vec![1], vec![2]],
            zeros: vec![],
            ones: vec![],
        };
        let a = s.expectation(&space, &[0b111], Observable::CrossTerm).unwrap();
        let theta = (1.0f64 / 8.0).sqrt().asin();
        assert_close(a, 2.0 * theta.sin() * theta.cos(), 1e-14);
    }

    #[test]
    fn logical_state_reports_leakage() {
        // |01⟩ on a 2-qubit "group" disagrees -> full leakage.
        let s = StateVector::basis_state(2, 0b01);
        let space = LogicalSpace {
            groups: vec![vec![0, 1]],
            zeros: vec![],
            ones: vec![],
        };
        let (logical, leakage) = s.logical_state(&space).unwrap();
        assert_close(leakage, 1.0, 1e-15);
        assert!(logical.iter().all(|a| a.norm_sqr() == 0.0));
    }

    #[test]
    fn observable_out_of_range() {
        let s = StateVector::zero_state(2);
        let space = LogicalSpace {
            groups: vec![vec![5]],
            zeros: vec![],
            ones: vec![],
        };
        assert!(matches!(
            s.logical_state(&space),
            Err(SimError::ObservableOutOfRange { qubit: 5, width: 2 })
        ));
    }
}
