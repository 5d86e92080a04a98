//! Two-photon polarization algebra.
//!
//! States are 4×4 density matrices over the product basis `HH, HV, VH, VV`
//! (photon 1 is the left factor). Single-photon operators are 2×2 Jones
//! matrices in the `H, V` basis. Polarizer angles are given in degrees
//! measured from the H axis, so `H = 0°` and `V = 90°`.
//!
//! Photon loss is not part of the state: every observable is post-selected
//! on a two-fold coincidence, so loss is tracked classically on the photon
//! events and the state stays four-dimensional.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used by the invariant checks on states and operators.
pub const INVARIANT_TOL: f64 = 1e-10;

/// Basis indices of the two-photon product basis.
pub const HH: usize = 0;
pub const HV: usize = 1;
pub const VH: usize = 2;
pub const VV: usize = 3;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Which member of the pair an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Photon {
    One,
    Two,
}

impl Photon {
    pub fn index(self) -> u8 {
        match self {
            Photon::One => 1,
            Photon::Two => 2,
        }
    }
}

impl TryFrom<u8> for Photon {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(Photon::One),
            2 => Ok(Photon::Two),
            other => Err(Error::InvalidPhoton(other)),
        }
    }
}

impl fmt::Display for Photon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "photon {}", self.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Unitary,
    Projector,
    General,
}

/// A 2×2 Jones matrix acting on one photon's polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesOp {
    m: Matrix2<C64>,
    kind: OpKind,
}

impl JonesOp {
    /// Wraps an arbitrary matrix without any structural claim.
    pub fn general(m: Matrix2<C64>) -> Self {
        JonesOp {
            m,
            kind: OpKind::General,
        }
    }

    /// Wraps a matrix that must satisfy `m†m = I`.
    pub fn unitary(m: Matrix2<C64>) -> Result<Self> {
        let op = JonesOp {
            m,
            kind: OpKind::Unitary,
        };
        if !op.is_unitary(1e-12) {
            return Err(Error::InvalidState(format!("matrix is not unitary: {m}")));
        }
        Ok(op)
    }

    /// Wraps a matrix that must be a Hermitian idempotent.
    pub fn projector(m: Matrix2<C64>) -> Result<Self> {
        let op = JonesOp {
            m,
            kind: OpKind::Projector,
        };
        if !op.is_projector(1e-12) {
            return Err(Error::InvalidState(format!(
                "matrix is not a projector: {m}"
            )));
        }
        Ok(op)
    }

    pub fn identity() -> Self {
        JonesOp {
            m: Matrix2::identity(),
            kind: OpKind::Unitary,
        }
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.m
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn adjoint(&self) -> Self {
        JonesOp {
            m: self.m.adjoint(),
            kind: self.kind,
        }
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        max_abs_diff(&(self.m.adjoint() * self.m), &Matrix2::identity()) <= tol
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        max_abs_diff(&(self.m * self.m), &self.m) <= tol
            && max_abs_diff(&self.m.adjoint(), &self.m) <= tol
    }

    /// Applies the operator to a single-photon Jones vector `[H, V]`.
    pub fn apply_ket(&self, ket: [C64; 2]) -> [C64; 2] {
        [
            self.m[(0, 0)] * ket[0] + self.m[(0, 1)] * ket[1],
            self.m[(1, 0)] * ket[0] + self.m[(1, 1)] * ket[1],
        ]
    }

    /// Largest entry-wise distance to `other`.
    pub fn distance(&self, other: &JonesOp) -> f64 {
        max_abs_diff(&self.m, &other.m)
    }
}

/// Matrix product: `(a * b)` applies `b` first, then `a`.
impl Mul for JonesOp {
    type Output = JonesOp;

    fn mul(self, rhs: JonesOp) -> JonesOp {
        let kind = if self.kind == OpKind::Unitary && rhs.kind == OpKind::Unitary {
            OpKind::Unitary
        } else {
            OpKind::General
        };
        JonesOp {
            m: self.m * rhs.m,
            kind,
        }
    }
}

/// A polarizer orientation, stored normalized to `[0°, 180°)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PolarizerSetting(f64);

impl PolarizerSetting {
    pub fn from_degrees(deg: f64) -> Self {
        let mut d = deg.rem_euclid(180.0);
        // rem_euclid can round a tiny negative input up to exactly 180
        if d >= 180.0 {
            d = 0.0;
        }
        PolarizerSetting(d)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// The setting rotated by 90°, i.e. the blocked port of this polarizer.
    pub fn orthogonal(self) -> Self {
        PolarizerSetting::from_degrees(self.0 + 90.0)
    }
}

impl fmt::Display for PolarizerSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.0)
    }
}

/// A two-photon polarization density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix4<C64>,
}

impl TwoQubitState {
    /// Validates `rho` as a normalized, Hermitian, positive semidefinite matrix.
    pub fn from_density(rho: Matrix4<C64>) -> Result<Self> {
        let state = TwoQubitState { rho };
        state.validate()?;
        Ok(state)
    }

    /// The projector onto a ket; the ket is normalized first.
    pub fn pure(ket: [C64; 4]) -> Result<Self> {
        let norm = ket.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite ket".into()));
        }
        let mut rho = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                rho[(i, j)] = ket[i] * ket[j].conj() / (norm * norm);
            }
        }
        Ok(TwoQubitState { rho })
    }

    pub fn maximally_mixed() -> Self {
        TwoQubitState {
            rho: Matrix4::identity() * C64::new(0.25, 0.0),
        }
    }

    /// Convex mixture `(1 − weight)·self + weight·other`.
    pub fn mix(&self, other: &TwoQubitState, weight: f64) -> TwoQubitState {
        let w = C64::new(weight, 0.0);
        TwoQubitState {
            rho: self.rho * (ONE - w) + other.rho * w,
        }
    }

    pub fn rho(&self) -> &Matrix4<C64> {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let ev = self.rho.symmetric_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2], ev[3]];
        out.sort_by(f64::total_cmp);
        out
    }

    /// The state scaled to unit trace. Fails on a vanishing trace.
    pub fn normalized(&self) -> Result<TwoQubitState> {
        let t = self.trace();
        if t <= 0.0 || !t.is_finite() {
            return Err(Error::InvalidState(format!("cannot normalize trace {t}")));
        }
        Ok(TwoQubitState {
            rho: self.rho / C64::new(t, 0.0),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.rho.trace();
        if (t.re - 1.0).abs() > INVARIANT_TOL || t.im.abs() > INVARIANT_TOL {
            return Err(Error::InvalidState(format!("trace is {t}, expected 1")));
        }
        let herm = max_abs_diff(&self.rho, &self.rho.adjoint());
        if herm > INVARIANT_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (max deviation {herm:e})"
            )));
        }
        let min_ev = self.eigenvalues()[0];
        if min_ev < -INVARIANT_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_ev:e}"
            )));
        }
        Ok(())
    }

    pub fn distance(&self, other: &TwoQubitState) -> f64 {
        max_abs_diff(&self.rho, &other.rho)
    }
}

/// `1/√2 (|H₁V₂⟩ − e^{iφ}|V₁H₂⟩)` as a density matrix.
pub fn psi_minus(phi: f64) -> TwoQubitState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut ket = [ZERO; 4];
    ket[HV] = C64::new(s, 0.0);
    ket[VH] = -C64::from_polar(s, phi);
    TwoQubitState::pure(ket).expect("singlet ket is normalized")
}

/// The H ↔ V flip (Pauli X).
pub fn flip_op() -> JonesOp {
    JonesOp {
        m: Matrix2::new(ZERO, ONE, ONE, ZERO),
        kind: OpKind::Unitary,
    }
}

/// `diag(e^{iδ}, 1)`: a birefringent phase on the H component.
pub fn phase_op(delta: f64) -> JonesOp {
    JonesOp {
        m: Matrix2::new(C64::from_polar(1.0, delta), ZERO, ZERO, ONE),
        kind: OpKind::Unitary,
    }
}

/// Rank-1 projector onto `cosθ|H⟩ + sinθ|V⟩`.
pub fn polarizer_projector(setting: PolarizerSetting) -> JonesOp {
    let (s, c) = setting.radians().sin_cos();
    JonesOp {
        m: Matrix2::new(
            C64::new(c * c, 0.0),
            C64::new(c * s, 0.0),
            C64::new(c * s, 0.0),
            C64::new(s * s, 0.0),
        ),
        kind: OpKind::Projector,
    }
}

/// Lifts a single-photon operator to the pair space.
pub fn lift(photon: Photon, op: &JonesOp) -> Matrix4<C64> {
    match photon {
        Photon::One => op.m.kronecker(&Matrix2::identity()),
        Photon::Two => Matrix2::identity().kronecker(&op.m),
    }
}

/// `(op⊗I) ρ (op⊗I)†` or `(I⊗op) ρ (I⊗op)†`.
///
/// Projectors reduce the trace; the result is then the unnormalized
/// conditional state and it is up to the caller to renormalize.
pub fn apply_one_photon(state: &TwoQubitState, photon: Photon, op: &JonesOp) -> TwoQubitState {
    let k = lift(photon, op);
    TwoQubitState {
        rho: k * state.rho * k.adjoint(),
    }
}

/// `tr[(A⊗B) ρ]` for arbitrary single-photon operators.
pub fn joint_expectation(state: &TwoQubitState, op1: &JonesOp, op2: &JonesOp) -> f64 {
    let k = op1.m.kronecker(&op2.m);
    (k * state.rho).trace().re
}

/// Probability that photon 1 passes a polarizer at `theta1` and photon 2
/// passes one at `theta2`.
pub fn coincidence_probability(
    state: &TwoQubitState,
    theta1: PolarizerSetting,
    theta2: PolarizerSetting,
) -> f64 {
    joint_expectation(
        state,
        &polarizer_projector(theta1),
        &polarizer_projector(theta2),
    )
}

fn max_abs_diff<R, C, S1, S2>(
    a: &nalgebra::Matrix<C64, R, C, S1>,
    b: &nalgebra::Matrix<C64, R, C, S2>,
) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S1: nalgebra::Storage<C64, R, C>,
    S2: nalgebra::Storage<C64, R, C>,
{
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn deg(d: f64) -> PolarizerSetting {
        PolarizerSetting::from_degrees(d)
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Outer product of an explicit ket, written out by hand.
    fn outer(ket: [C64; 4]) -> Matrix4<C64> {
        Matrix4::from_fn(|i, j| ket[i] * ket[j].conj())
    }

    #[test]
    fn psi_minus_zero_phase_entries() {
        let rho = *psi_minus(0.0).rho();
        for i in 0..4 {
            for j in 0..4 {
                let expected = match (i, j) {
                    (HV, HV) | (VH, VH) => 0.5,
                    (HV, VH) | (VH, HV) => -0.5,
                    _ => 0.0,
                };
                assert!((rho[(i, j)] - c(expected, 0.0)).norm() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn psi_minus_pi_phase_is_triplet() {
        let rho = *psi_minus(PI).rho();
        assert!((rho[(HV, VH)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((rho[(VH, HV)] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn psi_minus_half_pi_matches_outer_product() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // −e^{iπ/2} = −i
        let ket = [c(0.0, 0.0), c(s, 0.0), c(0.0, -s), c(0.0, 0.0)];
        let oracle = outer(ket);
        let state = psi_minus(FRAC_PI_2);
        assert!(max_abs_diff(state.rho(), &oracle) < 1e-15);
        // ρ[HV,VH] = (1/√2)·conj(−i/√2) = 0.5i
        assert!((state.rho()[(HV, VH)] - c(0.0, 0.5)).norm() < 1e-15);
        assert!((state.purity() - 1.0).abs() < 1e-12);
        state.validate().unwrap();
    }

    #[test]
    fn flip_basics() {
        let x = flip_op();
        let v = x.apply_ket([ONE, ZERO]);
        assert_eq!(v, [ZERO, ONE]);
        assert!((x * x).distance(&JonesOp::identity()) < 1e-15);
        assert!(x.is_unitary(1e-12));
    }

    #[test]
    fn flip_on_photon_two_moves_fringe_maximum() {
        let flipped = apply_one_photon(&psi_minus(0.0), Photon::Two, &flip_op());
        assert!((coincidence_probability(&flipped, deg(0.0), deg(0.0)) - 0.5).abs() < 1e-12);
        // brute force: (I⊗X)ψ⁻ = (|HH⟩ − |VV⟩)/√2, overlap with |HH⟩ is 1/√2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let oracle = outer([c(s, 0.0), ZERO, ZERO, c(-s, 0.0)]);
        assert!(max_abs_diff(flipped.rho(), &oracle) < 1e-15);
    }

    #[test]
    fn phase_op_cases() {
        assert!(phase_op(0.0).distance(&JonesOp::identity()) < 1e-15);
        let m = *phase_op(PI).matrix();
        assert!((m[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((m[(1, 1)] - ONE).norm() < 1e-15);
        let prod = phase_op(0.7) * phase_op(-0.7);
        assert!(prod.distance(&JonesOp::identity()) < 1e-15);
    }

    #[test]
    fn polarizer_projector_cases() {
        let h = *polarizer_projector(deg(0.0)).matrix();
        assert_eq!(h, Matrix2::new(ONE, ZERO, ZERO, ZERO));
        let v = polarizer_projector(deg(90.0));
        let expected = JonesOp::general(Matrix2::new(ZERO, ZERO, ZERO, ONE));
        assert!(v.distance(&expected) < 1e-15);
        let d = polarizer_projector(deg(45.0));
        let half = c(0.5, 0.0);
        let expected = JonesOp::general(Matrix2::new(half, half, half, half));
        assert!(d.distance(&expected) < 1e-15);
    }

    #[test]
    fn setting_normalization() {
        assert_eq!(deg(180.0).degrees(), 0.0);
        assert_eq!(deg(-45.0).degrees(), 135.0);
        assert_eq!(deg(370.0).degrees(), 10.0);
        assert_eq!(deg(-1e-300).degrees(), 0.0);
        assert_eq!(deg(30.0).orthogonal().degrees(), 120.0);
    }

    #[test]
    fn apply_one_photon_identity_and_involution() {
        let s = psi_minus(0.3);
        let same = apply_one_photon(&s, Photon::One, &JonesOp::identity());
        assert!(same.distance(&s) < 1e-15);
        let twice = apply_one_photon(
            &apply_one_photon(&s, Photon::Two, &flip_op()),
            Photon::Two,
            &flip_op(),
        );
        assert!(twice.distance(&s) < 1e-15);
    }

    #[test]
    fn projector_on_photon_one_gives_marginal() {
        let cond = apply_one_photon(&psi_minus(0.0), Photon::One, &polarizer_projector(deg(0.0)));
        assert!((cond.trace() - 0.5).abs() < 1e-15);
        // unnormalized conditional state is ½|HV⟩⟨HV|
        assert!((cond.rho()[(HV, HV)] - c(0.5, 0.0)).norm() < 1e-15);
        let n = cond.normalized().unwrap();
        n.validate().unwrap();
    }

    #[test]
    fn photon_index_validation() {
        assert_eq!(Photon::try_from(1).unwrap(), Photon::One);
        assert_eq!(Photon::try_from(2).unwrap(), Photon::Two);
        assert_eq!(Photon::try_from(3), Err(Error::InvalidPhoton(3)));
        assert_eq!(Photon::try_from(0), Err(Error::InvalidPhoton(0)));
    }

    #[test]
    fn singlet_coincidence_values() {
        let s = psi_minus(0.0);
        assert!(coincidence_probability(&s, deg(0.0), deg(0.0)).abs() < 1e-15);
        assert!((coincidence_probability(&s, deg(90.0), deg(0.0)) - 0.5).abs() < 1e-15);
        // ½ sin²(30°) = 0.125
        assert!((coincidence_probability(&s, deg(30.0), deg(0.0)) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn singlet_depends_only_on_angle_difference() {
        let s = psi_minus(0.0);
        for i in 0..36 {
            for j in 0..36 {
                let (a, b) = (i as f64 * 5.0, j as f64 * 5.0);
                let p = coincidence_probability(&s, deg(a), deg(b));
                let shifted = coincidence_probability(&s, deg(a - b), deg(0.0));
                assert!((p - shifted).abs() < 1e-12);
                let law = 0.5 * (a - b).to_radians().sin().powi(2);
                assert!((p - law).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_invalid_states() {
        let mut rho = *psi_minus(0.0).rho();
        rho[(HH, HH)] += c(0.1, 0.0);
        assert!(TwoQubitState::from_density(rho).is_err());
        let mut rho = *TwoQubitState::maximally_mixed().rho();
        rho[(HH, HV)] = c(0.1, 0.0);
        assert!(TwoQubitState::from_density(rho).is_err());
        // trace 1, Hermitian, but indefinite
        let rho = Matrix4::from_diagonal(&nalgebra::Vector4::new(
            c(1.2, 0.0),
            c(-0.2, 0.0),
            ZERO,
            ZERO,
        ));
        assert!(TwoQubitState::from_density(rho).is_err());
        assert!(TwoQubitState::from_density(*TwoQubitState::maximally_mixed().rho()).is_ok());
    }

    #[test]
    fn checked_constructors() {
        assert!(JonesOp::unitary(*flip_op().matrix()).is_ok());
        assert!(JonesOp::unitary(*polarizer_projector(deg(0.0)).matrix()).is_err());
        assert!(JonesOp::projector(*polarizer_projector(deg(10.0)).matrix()).is_ok());
        assert!(JonesOp::projector(*flip_op().matrix()).is_err());
    }

    fn random_state(seed: [f64; 8]) -> TwoQubitState {
        let ket = [
            c(seed[0], seed[1]),
            c(seed[2], seed[3]),
            c(seed[4], seed[5]),
            c(seed[6], seed[7]),
        ];
        let pure = TwoQubitState::pure(ket).unwrap_or_else(|_| psi_minus(0.0));
        pure.mix(&TwoQubitState::maximally_mixed(), 0.3)
    }

    proptest! {
        #[test]
        fn projector_is_idempotent(theta in -360.0f64..360.0) {
            let p = polarizer_projector(deg(theta));
            prop_assert!((p * p).distance(&p) < 1e-12);
            prop_assert!(p.is_projector(1e-12));
        }

        #[test]
        fn outcome_probabilities_sum_to_one(
            k in prop::array::uniform8(-1.0f64..1.0),
            a in 0.0f64..180.0,
            b in 0.0f64..180.0,
        ) {
            let s = random_state(k);
            let (a, b) = (deg(a), deg(b));
            let total: f64 = [a, a.orthogonal()]
                .iter()
                .flat_map(|x| [b, b.orthogonal()].map(move |y| (*x, y)))
                .map(|(x, y)| coincidence_probability(&s, x, y))
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }

        #[test]
        fn unitaries_preserve_trace_and_spectrum(
            k in prop::array::uniform8(-1.0f64..1.0),
            delta in -7.0f64..7.0,
            second in any::<bool>(),
        ) {
            let s = random_state(k);
            let photon = if second { Photon::Two } else { Photon::One };
            let op = flip_op() * phase_op(delta);
            let t = apply_one_photon(&s, photon, &op);
            prop_assert!((t.trace() - s.trace()).abs() < 1e-10);
            let (e1, e2) = (s.eigenvalues(), t.eigenvalues());
            for i in 0..4 {
                prop_assert!((e1[i] - e2[i]).abs() < 1e-10);
            }
            t.validate().unwrap();
        }
    }
}
