//! The three-component transfer-matrix model of one fixed-point search
//! iteration, plus its eigenvalue and spectral-radius diagnostics.
//!
//! The state vector u = (Tr(ρA), Tr(ρO), Tr(ρ)) of unnormalized traces is
//! advanced once per iteration by the matrix E(θ, φ):
//!
//! ```text
//! [  cos2θ·cosφ   sin2θ·(1+cos²φ)/2   sin2θ·(1−cos²φ)/2 ]
//! [ −sin2θ·cosφ   cos2θ·(1+cos²φ)/2   cos2θ·(1−cos²φ)/2 ]
//! [      0            (1−cos²φ)/2         (1+cos²φ)/2   ]
//! ```
//!
//! The matrix angle θ here is twice the Grover half-angle: a circuit on a
//! database with M solutions out of N corresponds to
//! E(2·arcsin√(M/N), φ), with initial traces (sin2θ_g, cos2θ_g, 1) for
//! θ_g = arcsin√(M/N). This convention is pinned by requiring exact
//! agreement with the conditioned statevector simulation; see
//! [`TransferModel`]. The raw [`transfer_matrix`] accepts the matrix angle
//! directly.

use num_complex::Complex64;
use thiserror::Error;

use crate::search::PhiSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("matrix angle {0} outside (0, π]")]
    ThetaOutOfRange(f64),
    #[error("rotation angle {0} outside [0, π]")]
    PhiOutOfRange(f64),
    #[error("solution count {m} invalid for space size {n}")]
    BadCounts { m: u64, n: u64 },
    #[error("recursion did not reach the target within {0} iterations")]
    NoConvergence(usize),
    #[error(transparent)]
    Schedule(#[from] crate::search::SearchError),
}

/// Unnormalized traces (Tr ρA, Tr ρO, Tr ρ) of the surviving branch.
/// The cumulative success probability so far is 1 − p.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferState {
    pub a: f64,
    pub o: f64,
    pub p: f64,
}

impl TransferState {
    pub fn success(&self) -> f64 {
        1.0 - self.p
    }
}

/// One iteration's 3×3 real transfer matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    entries: [[f64; 3]; 3],
    theta: f64,
    phi: f64,
}

/// E(θ, φ) with θ the matrix angle in (0, π] and φ in [0, π].
pub fn transfer_matrix(theta: f64, phi: f64) -> Result<TransferMatrix, AnalyticError> {
    if !(theta > 0.0 && theta <= std::f64::consts::PI) {
        return Err(AnalyticError::ThetaOutOfRange(theta));
    }
    if !(0.0..=std::f64::consts::PI).contains(&phi) {
        return Err(AnalyticError::PhiOutOfRange(phi));
    }
    let c = phi.cos();
    let keep = (1.0 + c * c) / 2.0;
    let leak = (1.0 - c * c) / 2.0;
    let (s2, c2) = (2.0 * theta).sin_cos();
    Ok(TransferMatrix {
        entries: [
            [c2 * c, s2 * keep, s2 * leak],
            [-s2 * c, c2 * keep, c2 * leak],
            [0.0, leak, keep],
        ],
        theta,
        phi,
    })
}

impl TransferMatrix {
    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.entries
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn apply(&self, u: &TransferState) -> TransferState {
        let e = &self.entries;
        TransferState {
            a: e[0][0] * u.a + e[0][1] * u.o + e[0][2] * u.p,
            o: e[1][0] * u.a + e[1][1] * u.o + e[1][2] * u.p,
            p: e[2][0] * u.a + e[2][1] * u.o + e[2][2] * u.p,
        }
    }

    /// Eigenvalues via the characteristic cubic. At the critical damping
    /// point all three coincide and the matrix is defective; a generic
    /// Schur solver only resolves such roots to ~ε^(1/3), so the solver
    /// classifies the degenerate cases from the depressed cubic's
    /// coefficients instead.
    pub fn eigenvalues(&self) -> [Complex64; 3] {
        let e = &self.entries;
        let trace = e[0][0] + e[1][1] + e[2][2];
        let minors = e[0][0] * e[1][1] - e[0][1] * e[1][0]
            + e[0][0] * e[2][2]
            - e[0][2] * e[2][0]
            + e[1][1] * e[2][2]
            - e[1][2] * e[2][1];
        let det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
            - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
            + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
        solve_cubic(trace, minors, det)
    }

    /// Maximum eigenvalue magnitude.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }
}

/// Roots of λ³ − trace·λ² + minors·λ − det. Entries of the matrices here
/// are bounded by 1, so absolute tolerances on the depressed coefficients
/// are safe for classifying repeated roots.
fn solve_cubic(trace: f64, minors: f64, det: f64) -> [Complex64; 3] {
    let shift = trace / 3.0;
    // λ = μ + shift gives μ³ + pμ + q.
    let p = minors - trace * trace / 3.0;
    let q = -2.0 * trace * trace * trace / 27.0 + trace * minors / 3.0 - det;

    const TRIPLE_TOL: f64 = 1e-12;
    if p.abs() < TRIPLE_TOL && q.abs() < TRIPLE_TOL {
        let root = Complex64::new(shift, 0.0);
        return [root, root, root];
    }

    let discriminant = -4.0 * p * p * p - 27.0 * q * q;
    let scale = (4.0 * p * p * p).abs().max(27.0 * q * q);
    if discriminant.abs() <= 1e-13 * scale.max(1e-300) {
        // Double root at μ = d, simple root at μ = −2d, with p = −3d² and
        // q = 2d³.
        let d = -1.5 * q / p;
        let double = Complex64::new(d + shift, 0.0);
        let simple = Complex64::new(-2.0 * d + shift, 0.0);
        return [simple, double, double];
    }

    if discriminant > 0.0 {
        // Three distinct real roots (trigonometric form).
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let acos = arg.acos();
        let mut roots = [Complex64::ZERO; 3];
        for (k, root) in roots.iter_mut().enumerate() {
            let mu = m * ((acos - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos();
            *root = Complex64::new(mu + shift, 0.0);
        }
        roots
    } else {
        // One real root and a complex-conjugate pair (Cardano).
        let half_q = q / 2.0;
        let inner = (half_q * half_q + p * p * p / 27.0).sqrt();
        let u = (-half_q + inner).cbrt();
        let v = if u.abs() > 1e-300 { -p / (3.0 * u) } else { (-half_q - inner).cbrt() };
        let real = u + v;
        let re_pair = -real / 2.0;
        let im_pair = (u - v) * 3.0f64.sqrt() / 2.0;
        [
            Complex64::new(real + shift, 0.0),
            Complex64::new(re_pair + shift, im_pair),
            Complex64::new(re_pair + shift, -im_pair),
        ]
    }
}

/// Spectral radius of a transfer matrix.
pub fn spectral_radius(matrix: &TransferMatrix) -> f64 {
    matrix.spectral_radius()
}

/// Π R(E(θ, φ_s)) for s = 1..=t; an upper bound on the contraction of the
/// trace vector after t iterations. `theta` is the matrix angle.
pub fn product_radius_bound(
    theta: f64,
    schedule: &PhiSchedule,
    t: usize,
) -> Result<f64, AnalyticError> {
    let mut product = 1.0;
    for s in 1..=t {
        product *= transfer_matrix(theta, schedule.phi(s)?)?.spectral_radius();
    }
    Ok(product)
}

/// Recursion driver tied to a database size: holds the matrix angle and
/// the initial traces of the uniform start.
#[derive(Debug, Clone, Copy)]
pub struct TransferModel {
    matrix_theta: f64,
}

impl TransferModel {
    /// Model for a search with M solutions in a space of N entries.
    pub fn for_counts(m: u64, n: u64) -> Result<Self, AnalyticError> {
        if m == 0 || m > n {
            return Err(AnalyticError::BadCounts { m, n });
        }
        Ok(TransferModel::for_grover_angle(
            (m as f64 / n as f64).sqrt().asin(),
        ))
    }

    /// Model from the Grover half-angle θ_g = arcsin√(M/N). The matrix
    /// angle is its double.
    pub fn for_grover_angle(theta_g: f64) -> Self {
        TransferModel {
            matrix_theta: 2.0 * theta_g,
        }
    }

    pub fn matrix_theta(&self) -> f64 {
        self.matrix_theta
    }

    /// Traces of the uniform start with control |1⟩: a = sin2θ_g,
    /// o = 1 − 2M/N = cos2θ_g, p = 1.
    pub fn initial_state(&self) -> TransferState {
        TransferState {
            a: self.matrix_theta.sin(),
            o: self.matrix_theta.cos(),
            p: 1.0,
        }
    }

    pub fn matrix(&self, phi: f64) -> Result<TransferMatrix, AnalyticError> {
        transfer_matrix(self.matrix_theta, phi)
    }

    /// Trace vectors after 0..=steps iterations under the schedule.
    pub fn evolve(
        &self,
        schedule: &PhiSchedule,
        steps: usize,
    ) -> Result<Vec<TransferState>, AnalyticError> {
        let mut states = Vec::with_capacity(steps + 1);
        let mut u = self.initial_state();
        states.push(u);
        for t in 1..=steps {
            u = self.matrix(schedule.phi(t)?)?.apply(&u);
            states.push(u);
        }
        Ok(states)
    }

    /// First iteration count t with 1 − p ≥ `target`.
    pub fn iterations_to_success(
        &self,
        schedule: &PhiSchedule,
        target: f64,
        cap: usize,
    ) -> Result<usize, AnalyticError> {
        let mut u = self.initial_state();
        if u.success() >= target {
            return Ok(0);
        }
        for t in 1..=cap {
            u = self.matrix(schedule.phi(t)?)?.apply(&u);
            if u.success() >= target {
                return Ok(t);
            }
        }
        Err(AnalyticError::NoConvergence(cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOverhead {
    /// Iterations of the unknown-count schedule until cumulative success
    /// reaches 1/2 (median halting time).
    pub iterations: usize,
    /// ⌈(π/4)√(N/M)⌉.
    pub grover_iterations: usize,
    pub ratio: f64,
}

/// Median-iteration overhead of the unknown-count schedule relative to the
/// optimal Grover count, for a search with M solutions in N entries.
pub fn query_overhead(m: u64, n: u64) -> Result<QueryOverhead, AnalyticError> {
    let model = TransferModel::for_counts(m, n)?;
    let grover =
        ((std::f64::consts::FRAC_PI_4) * ((n as f64) / (m as f64)).sqrt()).ceil() as usize;
    let grover = grover.max(1);
    let cap = 20 * grover + 100;
    let iterations = model
        .iterations_to_success(&PhiSchedule::UnknownM, 0.5, cap)?
        .max(1);
    Ok(QueryOverhead {
        iterations,
        grover_iterations: grover,
        ratio: iterations as f64 / grover as f64,
    })
}

/// Format with 12 significant digits, locale-free. Shared by every CSV
/// surface so identical configs produce identical bytes.
pub fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// CSV rows (t, phi_t, a, o, p, success) for an evolved trace sequence.
pub fn trace_csv(schedule: &PhiSchedule, states: &[TransferState]) -> String {
    let mut out = String::from("t,phi_t,a,o,p,success\n");
    for (t, u) in states.iter().enumerate() {
        let phi = if t == 0 {
            0.0
        } else {
            schedule.phi(t).unwrap_or(f64::NAN)
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t,
            sig12(phi),
            sig12(u.a),
            sig12(u.o),
            sig12(u.p),
            sig12(u.success()),
        ));
    }
    out
}
