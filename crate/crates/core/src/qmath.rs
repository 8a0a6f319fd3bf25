//! Complex linear algebra for one and two qubits.
//!
//! Basis ordering is `|00⟩, |01⟩, |10⟩, |11⟩` with the first qubit (Alice)
//! most significant, so `(a ⊗ b)[2i + j] = a[i] · b[j]`.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

pub const TAU_NORM: f64 = 1e-10;
pub const TAU_HERM: f64 = 1e-10;
pub const TAU_UNIT: f64 = 1e-10;
pub const TAU_PSD: f64 = 1e-9;
pub const TAU_REC: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest entry-wise modulus of `a - b`.
pub fn max_abs_diff<const R: usize, const C: usize>(
    a: &nalgebra::SMatrix<C64, R, C>,
    b: &nalgebra::SMatrix<C64, R, C>,
) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn hermiticity_deviation(m: &Mat4) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn unitarity_deviation<const N: usize>(m: &nalgebra::SMatrix<C64, N, N>) -> f64 {
    max_abs_diff(
        &(m.adjoint() * m),
        &nalgebra::SMatrix::<C64, N, N>::identity(),
    )
}

/// Builds a 4×4 matrix from row-major complex entries.
pub fn mat4(rows: [[C64; 4]; 4]) -> Mat4 {
    Mat4::from_fn(|r, col| rows[r][col])
}

pub fn mat2(rows: [[C64; 2]; 2]) -> Mat2 {
    Mat2::from_fn(|r, col| rows[r][col])
}

// ---------------------------------------------------------------------------
// Kets
// ---------------------------------------------------------------------------

/// Normalized single-qubit state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ket1Q(Vector2<C64>);

/// Normalized two-qubit state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ket2Q(Vector4<C64>);

fn check_norm(norm_sq: f64, tol: f64) -> Result<()> {
    if (norm_sq - 1.0).abs() > tol || !norm_sq.is_finite() {
        return Err(Error::Normalization { norm_sq, tol });
    }
    Ok(())
}

impl Ket1Q {
    pub fn new(a0: C64, a1: C64) -> Result<Self> {
        Self::from_vector(Vector2::new(a0, a1))
    }

    pub fn from_vector(v: Vector2<C64>) -> Result<Self> {
        check_norm(v.norm_squared(), TAU_NORM)?;
        Ok(Ket1Q(v))
    }

    /// Rescales `v` to unit norm. Fails only for the zero vector.
    pub fn normalized(v: Vector2<C64>) -> Result<Self> {
        let n = v.norm();
        if n < 1e-300 || !n.is_finite() {
            return Err(Error::Normalization {
                norm_sq: n * n,
                tol: TAU_NORM,
            });
        }
        Ok(Ket1Q(v / c(n, 0.0)))
    }

    pub fn zero() -> Self {
        Ket1Q(Vector2::new(ONE, ZERO))
    }
    pub fn one() -> Self {
        Ket1Q(Vector2::new(ZERO, ONE))
    }
    pub fn plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Ket1Q(Vector2::new(c(s, 0.0), c(s, 0.0)))
    }
    pub fn minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Ket1Q(Vector2::new(c(s, 0.0), c(-s, 0.0)))
    }

    pub fn amplitudes(&self) -> &Vector2<C64> {
        &self.0
    }

    pub fn inner(&self, other: &Ket1Q) -> C64 {
        self.0.dotc(&other.0)
    }

    /// The state orthogonal to `self`, `(-conj(b), conj(a))`.
    pub fn orthogonal(&self) -> Ket1Q {
        Ket1Q(Vector2::new(-self.0[1].conj(), self.0[0].conj()))
    }

    pub fn canonical_phase(&self) -> Ket1Q {
        Ket1Q(Vector2::from_iterator(canonicalize_phase(
            self.0.as_slice(),
        )))
    }

    pub fn equal_up_to_phase(&self, other: &Ket1Q, tol: f64) -> bool {
        1.0 - self.inner(other).norm() < tol
    }

    pub fn apply(&self, u: &Mat2) -> Ket1Q {
        Ket1Q(u * self.0)
    }
}

impl From<Ket1Q> for Vector2<C64> {
    fn from(k: Ket1Q) -> Self {
        k.0
    }
}

/// Multiplies by the phase making the first amplitude with modulus above
/// `1e-12` real and positive.
fn canonicalize_phase(amps: &[C64]) -> Vec<C64> {
    let phase = amps
        .iter()
        .find(|a| a.norm() > 1e-12)
        .map(|a| a.conj() / a.norm())
        .unwrap_or(ONE);
    amps.iter().map(|a| a * phase).collect()
}

impl Ket2Q {
    pub fn new(amps: [C64; 4]) -> Result<Self> {
        Self::from_vector(Vector4::from(amps))
    }

    pub fn from_vector(v: Vector4<C64>) -> Result<Self> {
        check_norm(v.norm_squared(), TAU_NORM)?;
        Ok(Ket2Q(v))
    }

    pub fn normalized(v: Vector4<C64>) -> Result<Self> {
        let n = v.norm();
        if n < 1e-300 || !n.is_finite() {
            return Err(Error::Normalization {
                norm_sq: n * n,
                tol: TAU_NORM,
            });
        }
        Ok(Ket2Q(v / c(n, 0.0)))
    }

    pub(crate) fn new_unchecked(v: Vector4<C64>) -> Self {
        Ket2Q(v)
    }

    /// Computational basis state `|i⟩` for `i` in `0..4`.
    pub fn basis(i: usize) -> Self {
        let mut v = Vector4::zeros();
        v[i] = ONE;
        Ket2Q(v)
    }

    /// `(|00⟩ + |11⟩)/√2`.
    pub fn phi_plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Ket2Q(Vector4::new(c(s, 0.0), ZERO, ZERO, c(s, 0.0)))
    }

    pub fn amplitudes(&self) -> &Vector4<C64> {
        &self.0
    }

    pub fn inner(&self, other: &Ket2Q) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn apply(&self, u: &Mat4) -> Ket2Q {
        Ket2Q(u * self.0)
    }

    pub fn projector(&self) -> Mat4 {
        self.0 * self.0.adjoint()
    }

    pub fn canonical_phase(&self) -> Ket2Q {
        Ket2Q(Vector4::from_iterator(canonicalize_phase(
            self.0.as_slice(),
        )))
    }

    pub fn equal_up_to_phase(&self, other: &Ket2Q, tol: f64) -> bool {
        1.0 - self.inner(other).norm() < tol
    }
}

impl From<Ket2Q> for Vector4<C64> {
    fn from(k: Ket2Q) -> Self {
        k.0
    }
}

impl std::ops::Index<usize> for Ket2Q {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

/// `a ⊗ b`.
pub fn tensor(a: &Ket1Q, b: &Ket1Q) -> Result<Ket2Q> {
    check_norm(a.0.norm_squared(), TAU_NORM)?;
    check_norm(b.0.norm_squared(), TAU_NORM)?;
    Ok(Ket2Q(a.0.kronecker(&b.0)))
}

pub fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    a.kronecker(b)
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

/// Two-qubit density operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    pub fn new(m: Mat4) -> Result<Self> {
        let dev = hermiticity_deviation(&m);
        if dev > TAU_HERM {
            return Err(Error::NotHermitian {
                deviation: dev,
                tol: TAU_HERM,
            });
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TAU_NORM || tr.im.abs() > TAU_NORM {
            return Err(Error::InvalidState(format!("trace = {tr}")));
        }
        let (evals, _) = hermitian_eigen(&m);
        let min = evals.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -TAU_PSD {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(DensityMatrix(m))
    }

    pub(crate) fn new_unchecked(m: Mat4) -> Self {
        DensityMatrix(m)
    }

    pub fn pure(psi: &Ket2Q) -> Self {
        DensityMatrix(psi.projector())
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity() * c(0.25, 0.0))
    }

    pub fn product(a: &Mat2, b: &Mat2) -> Self {
        DensityMatrix(kron2(a, b))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn partial_trace(&self, keep: Subsystem) -> Mat2 {
        partial_trace(&self.0, keep)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// Traces out the subsystem not named by `keep`. Works on any 4×4 operator.
pub fn partial_trace(m: &Mat4, keep: Subsystem) -> Mat2 {
    Mat2::from_fn(|r, col| match keep {
        // ⟨r|tr_B M|c⟩ = Σ_k M[(r,k),(c,k)]
        Subsystem::A => (0..2).map(|k| m[(2 * r + k, 2 * col + k)]).sum(),
        Subsystem::B => (0..2).map(|k| m[(2 * k + r, 2 * k + col)]).sum(),
    })
}

/// Checked variant of [`partial_trace`] for dynamically sized input.
pub fn partial_trace_dyn(m: &nalgebra::DMatrix<C64>, keep: Subsystem) -> Result<Mat2> {
    if m.nrows() != 4 || m.ncols() != 4 {
        return Err(Error::Dimension {
            expected: "4x4".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(partial_trace(&Mat4::from_fn(|r, col| m[(r, col)]), keep))
}

// ---------------------------------------------------------------------------
// Schmidt decomposition
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct SchmidtForm {
    /// Descending, nonnegative, squares summing to one.
    pub coefficients: [f64; 2],
    pub left: [Ket1Q; 2],
    pub right: [Ket1Q; 2],
}

impl SchmidtForm {
    pub fn reassemble(&self) -> Vector4<C64> {
        (0..2)
            .map(|k| self.left[k].0.kronecker(&self.right[k].0) * c(self.coefficients[k], 0.0))
            .fold(Vector4::zeros(), |acc, v| acc + v)
    }
}

/// Schmidt form of the 2×2 amplitude reshaping `C[i][j] = ψ[2i+j]`.
///
/// Closed form: the leading left vector is the top eigenvector of `CC†`,
/// `s₁ = |det C| / s₀`, and the right vectors follow from `u_k†C`. This
/// stays accurate for nearly product states, where the generic complex SVD
/// loses the singular vectors.
pub fn schmidt_decompose(psi: &Ket2Q) -> SchmidtForm {
    let a = &psi.0;
    let h00 = a[0].norm_sqr() + a[1].norm_sqr();
    let h11 = a[2].norm_sqr() + a[3].norm_sqr();
    let h01 = a[0] * a[2].conj() + a[1] * a[3].conj();
    let half_gap = 0.5 * (h00 - h11);
    let lam0 = 0.5 * (h00 + h11) + half_gap.hypot(h01.norm());
    let s0 = lam0.sqrt();
    let s1 = if s0 > 0.0 {
        ((a[0] * a[3] - a[1] * a[2]).norm() / s0).min(s0)
    } else {
        0.0
    };

    // Eigenvector of [[h00, h01], [h01*, h11]] for lam0; take the better
    // conditioned of the two row-derived candidates.
    let v1 = Vector2::new(h01, c(lam0 - h00, 0.0));
    let v2 = Vector2::new(c(lam0 - h11, 0.0), h01.conj());
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    let u0 = if v.norm() > 1e-300 {
        Ket1Q(v / c(v.norm(), 0.0))
    } else {
        Ket1Q::zero()
    };
    let u1 = u0.orthogonal();

    // Row vector u†C.
    let project = |u: &Ket1Q| {
        Vector2::new(
            u.0[0].conj() * a[0] + u.0[1].conj() * a[2],
            u.0[0].conj() * a[1] + u.0[1].conj() * a[3],
        )
    };
    let r0 = project(&u0);
    let w0 = if r0.norm() > 0.0 {
        r0 / c(r0.norm(), 0.0)
    } else {
        Vector2::new(ONE, ZERO)
    };
    // w1 must be orthonormal to w0 under the bilinear pairing used by the
    // reassembly, i.e. w1 ∝ (−w0₁*, w0₀*); the phase comes from u1†C.
    let w1_base = Vector2::new(-w0[1].conj(), w0[0].conj());
    let r1 = project(&u1);
    let t = r1[0] * w1_base[0].conj() + r1[1] * w1_base[1].conj();
    let phase = if t.norm() > 0.0 { t / t.norm() } else { ONE };
    SchmidtForm {
        coefficients: [s0, s1],
        left: [u0, u1],
        right: [Ket1Q(w0), Ket1Q(w1_base * phase)],
    }
}

/// Product-state test: `Some((a, b))` with `a ⊗ b = ψ` up to global phase
/// when the second Schmidt coefficient is below `tol`.
pub fn is_product(psi: &Ket2Q, tol: f64) -> Option<(Ket1Q, Ket1Q)> {
    let sf = schmidt_decompose(psi);
    if sf.coefficients[1] >= tol {
        return None;
    }
    let a = sf.left[0].canonical_phase();
    let b = sf.right[0].canonical_phase();
    Some((a, b))
}

// ---------------------------------------------------------------------------
// Spectra and norms
// ---------------------------------------------------------------------------

/// Eigenvalues (ascending) and matching eigenvector columns of a Hermitian
/// matrix.
pub fn hermitian_eigen(m: &Mat4) -> (Vector4<f64>, Mat4) {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = Vector4::from_iterator(idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Mat4::zeros();
    for (dst, &src) in idx.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

pub fn trace_norm(m: &Mat4) -> Result<f64> {
    trace_norm_tol(m, TAU_HERM)
}

pub fn trace_norm_tol(m: &Mat4, tol: f64) -> Result<f64> {
    let dev = hermiticity_deviation(m);
    if dev > tol {
        return Err(Error::NotHermitian {
            deviation: dev,
            tol,
        });
    }
    let (vals, _) = hermitian_eigen(m);
    Ok(vals.iter().map(|v| v.abs()).sum())
}

// ---------------------------------------------------------------------------
// Unitaries
// ---------------------------------------------------------------------------

/// Checked single-qubit unitary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitUnitary(Mat2);

/// Checked two-qubit unitary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitUnitary(Mat4);

impl QubitUnitary {
    pub fn new(m: Mat2) -> Result<Self> {
        let dev = unitarity_deviation(&m);
        if dev > TAU_UNIT || !dev.is_finite() {
            return Err(Error::NotUnitary {
                deviation: dev,
                tol: TAU_UNIT,
            });
        }
        Ok(QubitUnitary(m))
    }
    pub(crate) fn new_unchecked(m: Mat2) -> Self {
        QubitUnitary(m)
    }
    pub fn identity() -> Self {
        QubitUnitary(Mat2::identity())
    }
    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }
    pub fn adjoint(&self) -> QubitUnitary {
        QubitUnitary(self.0.adjoint())
    }
}

impl TwoQubitUnitary {
    pub fn new(m: Mat4) -> Result<Self> {
        Self::with_tolerance(m, TAU_UNIT)
    }
    pub fn with_tolerance(m: Mat4, tol: f64) -> Result<Self> {
        let dev = unitarity_deviation(&m);
        if dev > tol || !dev.is_finite() {
            return Err(Error::NotUnitary {
                deviation: dev,
                tol,
            });
        }
        Ok(TwoQubitUnitary(m))
    }
    pub(crate) fn new_unchecked(m: Mat4) -> Self {
        TwoQubitUnitary(m)
    }
    pub fn identity() -> Self {
        TwoQubitUnitary(Mat4::identity())
    }
    /// CNOT with Alice as control: `|a⟩|b⟩ ↦ |a⟩|b ⊕ a⟩`.
    pub fn cnot() -> Self {
        let mut m = Mat4::zeros();
        for a in 0..2 {
            for b in 0..2 {
                m[(2 * a + (b ^ a), 2 * a + b)] = ONE;
            }
        }
        TwoQubitUnitary(m)
    }
    /// `|a⟩|b⟩ ↦ |b⟩|a⟩`.
    pub fn swap() -> Self {
        let mut m = Mat4::zeros();
        for a in 0..2 {
            for b in 0..2 {
                m[(2 * b + a, 2 * a + b)] = ONE;
            }
        }
        TwoQubitUnitary(m)
    }
    pub fn local(a: &QubitUnitary, b: &QubitUnitary) -> Self {
        TwoQubitUnitary(kron2(&a.0, &b.0))
    }
    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }
    pub fn adjoint(&self) -> TwoQubitUnitary {
        TwoQubitUnitary(self.0.adjoint())
    }
    pub fn compose(&self, rhs: &TwoQubitUnitary) -> TwoQubitUnitary {
        TwoQubitUnitary(self.0 * rhs.0)
    }
    pub fn apply(&self, psi: &Ket2Q) -> Ket2Q {
        psi.apply(&self.0)
    }
}

/// `max |a - e^{iφ} b|` minimised over the global phase `φ`.
pub fn phase_insensitive_distance(a: &Mat4, b: &Mat4) -> f64 {
    let t = (b.adjoint() * a).trace();
    let phase = if t.norm() > 1e-300 { t / t.norm() } else { ONE };
    max_abs_diff(a, &(b * phase))
}

/// Haar-distributed `dim × dim` unitary from QR of a complex Ginibre matrix,
/// with the diagonal of `R` rotated to the positive reals.
pub fn haar_unitary_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> nalgebra::DMatrix<C64> {
    let z = nalgebra::DMatrix::<C64>::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        let mut col = q.column_mut(j);
        col *= ph;
    }
    q
}

/// Seeded Haar unitary of dimension 2 or 4.
pub fn haar_random_unitary(dim: usize, seed: u64) -> Result<nalgebra::DMatrix<C64>> {
    if dim != 2 && dim != 4 {
        return Err(Error::Dimension {
            expected: "2 or 4".into(),
            found: dim.to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(haar_unitary_with(dim, &mut rng))
}

pub fn haar_qubit_unitary<R: Rng + ?Sized>(rng: &mut R) -> QubitUnitary {
    let m = haar_unitary_with(2, rng);
    QubitUnitary(Mat2::from_fn(|r, col| m[(r, col)]))
}

pub fn haar_two_qubit_unitary<R: Rng + ?Sized>(rng: &mut R) -> TwoQubitUnitary {
    let m = haar_unitary_with(4, rng);
    TwoQubitUnitary(Mat4::from_fn(|r, col| m[(r, col)]))
}

/// Haar-random pure two-qubit state (first column of a Haar unitary).
pub fn haar_ket2<R: Rng + ?Sized>(rng: &mut R) -> Ket2Q {
    let v = Vector4::from_fn(|_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    });
    Ket2Q::normalized(v).expect("gaussian vector is nonzero")
}

pub fn haar_ket1<R: Rng + ?Sized>(rng: &mut R) -> Ket1Q {
    let v = Vector2::from_fn(|_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    });
    Ket1Q::normalized(v).expect("gaussian vector is nonzero")
}
