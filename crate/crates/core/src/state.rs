//! Two-qubit polarization state of the emitted pair.
//!
//! Basis ordering is {HH, HV, VH, VV}; the first qubit is the up-link (785 nm)
//! photon and the second is the fiber (1572 nm) photon.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;

use crate::error::{check_unit_interval, Error, Result};

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const EIGENVALUE_TOL: f64 = 1e-10;

/// Rank-1 single-photon polarization projectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    /// (|H> + i|V>)/sqrt 2
    L,
    /// (|H> - i|V>)/sqrt 2
    R,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [Self::H, Self::V, Self::D, Self::A, Self::L, Self::R];

    pub fn ket(self) -> Vector2<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| Complex64::new(re, im);
        match self {
            Self::H => Vector2::new(c(1.0, 0.0), c(0.0, 0.0)),
            Self::V => Vector2::new(c(0.0, 0.0), c(1.0, 0.0)),
            Self::D => Vector2::new(c(s, 0.0), c(s, 0.0)),
            Self::A => Vector2::new(c(s, 0.0), c(-s, 0.0)),
            Self::L => Vector2::new(c(s, 0.0), c(0.0, s)),
            Self::R => Vector2::new(c(s, 0.0), c(0.0, -s)),
        }
    }

    /// The orthogonal projector of the same measurement basis.
    pub fn orthogonal(self) -> Self {
        match self {
            Self::H => Self::V,
            Self::V => Self::H,
            Self::D => Self::A,
            Self::A => Self::D,
            Self::L => Self::R,
            Self::R => Self::L,
        }
    }
}

/// Measurement basis of the passive analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    /// The projectors for bit values 0 and 1.
    pub fn projectors(self) -> [Polarization; 2] {
        match self {
            Basis::Z => [Polarization::H, Polarization::V],
            Basis::X => [Polarization::D, Polarization::A],
        }
    }
}

/// Density operator of the photon pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix4<Complex64>,
}

impl TwoQubitState {
    /// Validates Hermiticity, unit trace and positive semidefiniteness.
    pub fn from_density_matrix(rho: Matrix4<Complex64>) -> Result<Self> {
        for i in 0..4 {
            for j in 0..4 {
                if !rho[(i, j)].re.is_finite() || !rho[(i, j)].im.is_finite() {
                    return Err(Error::invalid("density_matrix", "non-finite entry"));
                }
                if (rho[(i, j)] - rho[(j, i)].conj()).norm() > HERMITICITY_TOL {
                    return Err(Error::invalid(
                        "density_matrix",
                        format!("not Hermitian at ({i}, {j})"),
                    ));
                }
            }
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::invalid("density_matrix", format!("trace is {trace}")));
        }
        let min_eig = rho
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -EIGENVALUE_TOL {
            return Err(Error::invalid(
                "density_matrix",
                format!("negative eigenvalue {min_eig}"),
            ));
        }
        Ok(Self { rho })
    }

    /// The state cos(alpha)|HH> + sin(alpha) e^{i phi}|VV>, followed by a bit
    /// flip on the first photon with probability (1 - visibility_z)/2 and a
    /// phase flip with probability (1 - visibility_x)/2.
    ///
    /// The two noise admixtures commute. The bit flip sets the Z-basis error
    /// rate for any alpha; the phase flip sets the X-basis error rate when
    /// alpha = pi/4 and phi = 0.
    pub fn phi_plus(alpha: f64, phi: f64, visibility_z: f64, visibility_x: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::invalid("alpha", "must be finite"));
        }
        if !phi.is_finite() {
            return Err(Error::invalid("phi", "must be finite"));
        }
        check_unit_interval("visibility_z", visibility_z)?;
        check_unit_interval("visibility_x", visibility_x)?;

        let psi = Vector4::new(
            Complex64::new(alpha.cos(), 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::from_polar(alpha.sin(), phi),
        );
        let pure = psi * psi.adjoint();

        let flip_prob = (1.0 - visibility_z) / 2.0;
        let dephase_prob = (1.0 - visibility_x) / 2.0;
        let x1 = pauli_x().kronecker(&Matrix2::identity());
        let z1 = pauli_z().kronecker(&Matrix2::identity());

        let flipped = pure.scale(1.0 - flip_prob) + (x1 * pure * x1).scale(flip_prob);
        let rho = flipped.scale(1.0 - dephase_prob) + (z1 * flipped * z1).scale(dephase_prob);
        Self::from_density_matrix(rho)
    }

    /// Balanced Phi+ state carrying the given Z- and X-basis error rates.
    pub fn from_error_rates(qber: f64, qx: f64) -> Result<Self> {
        Self::phi_plus(
            std::f64::consts::FRAC_PI_4,
            0.0,
            1.0 - 2.0 * qber,
            1.0 - 2.0 * qx,
        )
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: Matrix4::identity().scale(0.25),
        }
    }

    /// p * self + (1 - p) * I/4.
    pub fn mixed_with_identity(&self, p: f64) -> Result<Self> {
        check_unit_interval("p", p)?;
        let rho = self.rho.scale(p) + Matrix4::<Complex64>::identity().scale((1.0 - p) / 4.0);
        Self::from_density_matrix(rho)
    }

    pub fn density_matrix(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    /// Tr(rho · Pa ⊗ Pb).
    pub fn projection_probability(&self, a: Polarization, b: Polarization) -> f64 {
        let ket = a.ket().kronecker(&b.ket());
        let p = (ket.adjoint() * self.rho * ket)[(0, 0)].re;
        p.clamp(0.0, 1.0)
    }

    /// Joint outcome distribution for the given bases, indexed [bit_sat][bit_fib].
    pub fn outcome_table(&self, sat: Basis, fib: Basis) -> [[f64; 2]; 2] {
        let [a0, a1] = sat.projectors();
        let [b0, b1] = fib.projectors();
        [
            [
                self.projection_probability(a0, b0),
                self.projection_probability(a0, b1),
            ],
            [
                self.projection_probability(a1, b0),
                self.projection_probability(a1, b1),
            ],
        ]
    }

    /// Probability that a matched-basis measurement gives anti-correlated bits.
    pub fn error_rate(&self, basis: Basis) -> f64 {
        let t = self.outcome_table(basis, basis);
        let total: f64 = t.iter().flatten().sum();
        (t[0][1] + t[1][0]) / total
    }

    /// Tr(rho^2).
    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }
}

/// Binary entropy h(p) in bits, with h(0) = h(1) = 0.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p", format!("must lie in [0, 1], got {p}")));
    }
    Ok(binary_entropy_unchecked(p))
}

pub(crate) fn binary_entropy_unchecked(p: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

fn pauli_x() -> Matrix2<Complex64> {
    let (o, i) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    Matrix2::new(o, i, i, o)
}

fn pauli_z() -> Matrix2<Complex64> {
    let (o, i) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    Matrix2::new(i, o, o, -i)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use super::Polarization::*;
    use super::*;

    fn ideal() -> TwoQubitState {
        TwoQubitState::phi_plus(FRAC_PI_4, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn ideal_phi_plus() {
        let s = ideal();
        assert!((s.purity() - 1.0).abs() < 1e-12);
        assert!(s.error_rate(Basis::Z).abs() < 1e-12);
        assert!(s.error_rate(Basis::X).abs() < 1e-12);
        assert!((s.projection_probability(H, H) - 0.5).abs() < 1e-12);
        assert!(s.projection_probability(H, V).abs() < 1e-12);
    }

    #[test]
    fn product_state_limit() {
        let s = TwoQubitState::phi_plus(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!((s.projection_probability(H, H) - 1.0).abs() < 1e-12);
        for a in [D, A] {
            for b in [D, A] {
                assert!((s.projection_probability(a, b) - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn measured_visibilities_give_measured_errors() {
        let s = TwoQubitState::phi_plus(FRAC_PI_4, 0.0, 0.966, 0.922).unwrap();
        assert!((s.error_rate(Basis::Z) - 0.017).abs() < 1e-10);
        assert!((s.error_rate(Basis::X) - 0.039).abs() < 1e-10);
    }

    #[test]
    fn maximally_mixed_purity() {
        assert!((TwoQubitState::maximally_mixed().purity() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn werner_purity_by_direct_multiplication() {
        // Brute-force Tr(rho^2) = sum_ij |rho_ij|^2 over explicit entries.
        let w = ideal().mixed_with_identity(0.9).unwrap();
        let m = w.density_matrix();
        let mut direct = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..4 {
                    acc += m[(i, k)] * m[(k, j)];
                }
                if i == j {
                    direct += acc.re;
                }
            }
        }
        // Closed form for p Phi+ + (1 - p) I/4: (1 + 3 p^2) / 4.
        assert!((direct - (1.0 + 3.0 * 0.81) / 4.0).abs() < 1e-12);
        assert!((w.purity() - direct).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TwoQubitState::phi_plus(FRAC_PI_4, 0.0, 1.2, 1.0).is_err());
        assert!(TwoQubitState::phi_plus(FRAC_PI_4, 0.0, 1.0, -0.1).is_err());
        assert!(TwoQubitState::phi_plus(f64::NAN, 0.0, 1.0, 1.0).is_err());

        let mut m = Matrix4::<Complex64>::identity().scale(0.25);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(TwoQubitState::from_density_matrix(m).is_err());
        let m = Matrix4::<Complex64>::identity().scale(0.3);
        assert!(TwoQubitState::from_density_matrix(m).is_err());
        let mut m = Matrix4::<Complex64>::zeros();
        m[(0, 0)] = Complex64::new(1.5, 0.0);
        m[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(TwoQubitState::from_density_matrix(m).is_err());
    }

    #[test]
    fn entropy_fixed_points() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11).unwrap() - 0.499_915_958_164_528_2).abs() < 1e-12);
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.01).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }
}
