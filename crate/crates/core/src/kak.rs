//! Canonical (KAK) decomposition of two-qubit unitaries,
//! `U = e^{iφ} (U_A ⊗ U_B) U_d (V_A ⊗ V_B)` with
//! `U_d = Σ_j e^{iλ_j} |Φ_j⟩⟨Φ_j|`.
//!
//! The computation runs in a phased copy of the magic basis,
//! `(Φ₁, iΦ₂, Φ₃, iΦ₄)`, where `SU(2) ⊗ SU(2)` acts as `SO(4)`. There the
//! symmetric unitary `MᵀM` is diagonalised by a real orthogonal matrix and
//! the local factors fall out as real rotations.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::qmath::{
    c, kron2, max_abs_diff, Ket2Q, Mat2, Mat4, QubitUnitary, TwoQubitUnitary, C64, I, ONE,
    TAU_UNIT, ZERO,
};

pub const TAU_KAK: f64 = 1e-9;

/// The Bell-type basis diagonalising `U_d`:
/// `Φ₁=(|00⟩+|11⟩)/√2, Φ₂=(|00⟩−|11⟩)/√2, Φ₃=(|01⟩−|10⟩)/√2, Φ₄=(|01⟩+|10⟩)/√2`.
pub struct MagicBasis;

impl MagicBasis {
    pub fn states() -> [Ket2Q; 4] {
        let m = Self::matrix();
        std::array::from_fn(|j| Ket2Q::new_unchecked(m.column(j).into_owned()))
    }

    /// Real orthogonal matrix with columns `Φ₁..Φ₄`.
    #[rustfmt::skip]
    pub fn matrix() -> Mat4 {
        let s = FRAC_1_SQRT_2;
        Mat4::new(
            c(s, 0.), c(s, 0.), ZERO, ZERO,
            ZERO, ZERO, c(s, 0.), c(s, 0.),
            ZERO, ZERO, c(-s, 0.), c(s, 0.),
            c(s, 0.), c(-s, 0.), ZERO, ZERO,
        )
    }
}

/// Columns `(Φ₁, iΦ₂, Φ₃, iΦ₄)`; conjugation by this maps local unitaries to
/// real orthogonal matrices.
fn phased_magic() -> Mat4 {
    let mut m = MagicBasis::matrix();
    for j in [1, 3] {
        let mut col = m.column_mut(j);
        col *= I;
    }
    m
}

/// `Q† M Q` with `Q = [Φ₁ Φ₂ Φ₃ Φ₄]`.
pub fn to_magic_basis(m: &Mat4) -> Mat4 {
    let q = MagicBasis::matrix();
    q.adjoint() * m * q
}

pub fn from_magic_basis(m: &Mat4) -> Mat4 {
    let q = MagicBasis::matrix();
    q * m * q.adjoint()
}

/// `U_d(λ) = Σ_j e^{iλ_j} |Φ_j⟩⟨Φ_j|` in the computational basis.
pub fn entangling_core(lambdas: &[f64; 4]) -> Mat4 {
    let diag = Mat4::from_diagonal(&Vector4::from_fn(|j, _| C64::from_polar(1.0, lambdas[j])));
    from_magic_basis(&diag)
}

#[derive(Clone, Copy, Debug)]
pub struct KakDecomposition {
    pub u_a: QubitUnitary,
    pub u_b: QubitUnitary,
    pub v_a: QubitUnitary,
    pub v_b: QubitUnitary,
    /// Entangling phases in `(-π, π]`, mean removed, sorted descending.
    pub lambdas: [f64; 4],
    pub global_phase: f64,
}

impl KakDecomposition {
    pub fn core(&self) -> Mat4 {
        entangling_core(&self.lambdas)
    }

    pub fn local_after(&self) -> Mat4 {
        kron2(self.u_a.matrix(), self.u_b.matrix())
    }

    pub fn local_before(&self) -> Mat4 {
        kron2(self.v_a.matrix(), self.v_b.matrix())
    }

    pub fn reconstruct(&self) -> Mat4 {
        self.local_after()
            * self.core()
            * self.local_before()
            * C64::from_polar(1.0, self.global_phase)
    }
}

pub fn kak_reconstruct(d: &KakDecomposition) -> Result<TwoQubitUnitary> {
    for u in [&d.u_a, &d.u_b, &d.v_a, &d.v_b] {
        QubitUnitary::new(*u.matrix())?;
    }
    Ok(TwoQubitUnitary::new_unchecked(d.reconstruct()))
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

fn max_off_diagonal(m: &Mat4) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..4 {
        for col in 0..4 {
            if r != col {
                worst = worst.max(m[(r, col)].norm());
            }
        }
    }
    worst
}

fn real_to_complex(m: &Matrix4<f64>) -> Mat4 {
    m.map(|x| c(x, 0.0))
}

/// Real orthogonal `O` (eigenvectors as columns) with `Oᵀ(A + iB)O` diagonal,
/// for commuting real symmetric `A`, `B`.
///
/// `A` is diagonalised first; each cluster of nearly equal eigenvalues is
/// then split by diagonalising the restriction of `B`.
fn simultaneous_real_diagonalize(a: &Matrix4<f64>, b: &Matrix4<f64>) -> Matrix4<f64> {
    const CLUSTER_TOL: f64 = 1e-6;
    let eig = a.symmetric_eigen();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut o = Matrix4::<f64>::zeros();
    for (dst, &src) in order.iter().enumerate() {
        o.set_column(dst, &eig.eigenvectors.column(src));
    }
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && vals[end] - vals[end - 1] < CLUSTER_TOL {
            end += 1;
        }
        let k = end - start;
        if k > 1 {
            let w = DMatrix::<f64>::from_fn(4, k, |r, col| o[(r, start + col)]);
            let bd = DMatrix::<f64>::from_fn(4, 4, |r, col| b[(r, col)]);
            let sub = w.transpose() * &bd * &w;
            let sub = (&sub + sub.transpose()) * 0.5;
            let se = sub.symmetric_eigen();
            let rotated = &w * &se.eigenvectors;
            for col in 0..k {
                for r in 0..4 {
                    o[(r, start + col)] = rotated[(r, col)];
                }
            }
        }
        start = end;
    }
    o
}

/// Plain eigenbasis of the generic combination `cos θ A + sin θ B`.
fn combination_diagonalize(a: &Matrix4<f64>, b: &Matrix4<f64>, theta: f64) -> Matrix4<f64> {
    let m = a * theta.cos() + b * theta.sin();
    let m = (m + m.transpose()) * 0.5;
    m.symmetric_eigen().eigenvectors
}

/// Splits `k ≈ s · (A ⊗ B)` into determinant-one factors and the scalar `s`.
fn factor_local(k: &Mat4) -> (Mat2, Mat2, C64) {
    let (mut best, mut br, mut bc) = (-1.0, 0, 0);
    for r in 0..4 {
        for col in 0..4 {
            let v = k[(r, col)].norm();
            if v > best {
                best = v;
                br = r;
                bc = col;
            }
        }
    }
    let (i, kk) = (br / 2, br % 2);
    let (j, l) = (bc / 2, bc % 2);
    let mut a = Mat2::from_fn(|r, col| k[(2 * r + kk, 2 * col + l)]);
    let mut b = Mat2::from_fn(|r, col| k[(2 * i + r, 2 * j + col)]);
    a /= a.determinant().sqrt();
    b /= b.determinant().sqrt();
    let s = (kron2(&a, &b).adjoint() * k).trace() / c(4.0, 0.0);
    (a, b, s)
}

/// Re-unitarises a nearly unitary 2×2 matrix via Newton iteration towards
/// its polar factor, `X ← (X + X⁻†)/2`.
fn polish_unitary(m: &Mat2) -> Mat2 {
    let mut x = *m;
    for _ in 0..6 {
        let Some(inv) = x.try_inverse() else { break };
        x = (x + inv.adjoint()) * c(0.5, 0.0);
    }
    x
}

pub fn kak_decompose(u: &TwoQubitUnitary) -> Result<KakDecomposition> {
    let target = *u.matrix();
    let dev = crate::qmath::unitarity_deviation(&target);
    if dev > TAU_UNIT {
        return Err(Error::NotUnitary {
            deviation: dev,
            tol: TAU_UNIT,
        });
    }

    // Arbitrary angles for the fallback pencil; any generic set works.
    #[allow(clippy::approx_constant)]
    const MIXING_ANGLES: [f64; 5] = [0.7853981, 1.1071487, 0.3217505, 2.0344439, 1.3258177];
    let det = target.determinant();
    let su = target * C64::from_polar(1.0, -det.arg() / 4.0);
    let magic = phased_magic();
    let m = magic.adjoint() * su * magic;
    let p = m.transpose() * m;
    let p_re = p.map(|z| z.re);
    let p_im = p.map(|z| z.im);

    let candidates = std::iter::once(simultaneous_real_diagonalize(&p_re, &p_im)).chain(
        MIXING_ANGLES
            .into_iter()
            .map(|t| combination_diagonalize(&p_re, &p_im, t)),
    );
    let mut chosen = None;
    let mut best_resid = f64::INFINITY;
    for o in candidates {
        let oc = real_to_complex(&o);
        let resid = max_off_diagonal(&(oc.transpose() * p * oc));
        if resid < best_resid {
            best_resid = resid;
            chosen = Some(o);
        }
        if resid < 1e-12 {
            break;
        }
    }
    if best_resid > TAU_KAK {
        return Err(Error::Decomposition(format!(
            "could not diagonalise MᵀM with a real orthogonal basis (residual {best_resid:.3e})"
        )));
    }
    let mut o_r = chosen.expect("at least one candidate").transpose();
    if o_r.determinant() < 0.0 {
        o_r.row_mut(0).neg_mut();
    }

    let o_rc = real_to_complex(&o_r);
    let d2 = (o_rc * p * o_rc.transpose()).diagonal();
    let mut d = d2.map(|z| z.sqrt());
    if d.iter().product::<C64>().re < 0.0 {
        d[0] = -d[0];
    }
    // Flipping the signs of an even number of square roots keeps det(O_L) = 1.
    // Pick the pattern that bunches the phases together, so that local gates
    // come out with equal lambdas.
    let flips = (0u8..16)
        .filter(|m| m.count_ones() % 2 == 0)
        .map(|m| {
            let sign = |j: usize| if m >> j & 1 == 1 { -1.0 } else { 1.0 };
            let total: C64 = (0..4).map(|j| d[j] * sign(j)).sum();
            (m, total.norm())
        })
        .fold((0u8, f64::NEG_INFINITY), |best, cand| {
            if cand.1 > best.1 + 1e-12 {
                cand
            } else {
                best
            }
        })
        .0;
    for j in 0..4 {
        if flips >> j & 1 == 1 {
            d[j] = -d[j];
        }
    }
    let d_inv = Mat4::from_diagonal(&d.map(|z| ONE / z));
    let o_l_c = m * o_rc.transpose() * d_inv;
    let imag = o_l_c.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imag > 1e-7 {
        return Err(Error::Decomposition(format!(
            "left factor is not real orthogonal (max imaginary part {imag:.3e})"
        )));
    }
    let o_l = o_l_c.map(|z| z.re);

    // Canonical lambda representative: mean removed, descending.
    let theta: [f64; 4] = std::array::from_fn(|j| d[j].arg());
    let mean = theta.iter().sum::<f64>() / 4.0;
    let shifted: [f64; 4] = std::array::from_fn(|j| wrap_angle(theta[j] - mean));
    let mut sigma = [0usize, 1, 2, 3];
    sigma.sort_by(|&x, &y| shifted[y].total_cmp(&shifted[x]).then(x.cmp(&y)));
    let mut perm = Matrix4::<f64>::zeros();
    for (new, &old) in sigma.iter().enumerate() {
        perm[(new, old)] = 1.0;
    }
    if perm.determinant() < 0.0 {
        perm.row_mut(0).neg_mut();
    }
    let lambdas: [f64; 4] = std::array::from_fn(|j| shifted[sigma[j]]);
    let o_l = o_l * perm.transpose();
    let o_r = perm * o_r;

    let k_left = magic * real_to_complex(&o_l) * magic.adjoint();
    let k_right = magic * real_to_complex(&o_r) * magic.adjoint();
    let (ua, ub, _) = factor_local(&k_left);
    let (va, vb, _) = factor_local(&k_right);
    let (ua, ub, va, vb) = (
        polish_unitary(&ua),
        polish_unitary(&ub),
        polish_unitary(&va),
        polish_unitary(&vb),
    );

    let mut dec = KakDecomposition {
        u_a: QubitUnitary::new_unchecked(ua),
        u_b: QubitUnitary::new_unchecked(ub),
        v_a: QubitUnitary::new_unchecked(va),
        v_b: QubitUnitary::new_unchecked(vb),
        lambdas,
        global_phase: 0.0,
    };
    let phase = (dec.reconstruct().adjoint() * target).trace();
    dec.global_phase = wrap_angle(phase.arg());

    let err = max_abs_diff(&dec.reconstruct(), &target);
    if err > TAU_KAK {
        return Err(Error::Decomposition(format!(
            "reconstruction error {err:.3e} exceeds {TAU_KAK:.0e}"
        )));
    }
    Ok(dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{haar_qubit_unitary, haar_two_qubit_unitary, phase_insensitive_distance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Test oracle: is there a permutation and a common phase `w` with
    /// `e^{2iλ'_σ(j)} = w e^{2iλ_j}` for all `j`?
    fn same_core_class(a: &[f64; 4], b: &[f64; 4], tol: f64) -> bool {
        let ea: Vec<C64> = a.iter().map(|x| C64::from_polar(1.0, 2.0 * x)).collect();
        let eb: Vec<C64> = b.iter().map(|x| C64::from_polar(1.0, 2.0 * x)).collect();
        let perms = permutations4();
        perms.iter().any(|s| {
            let w = eb[s[0]] / ea[0];
            (0..4).all(|j| (eb[s[j]] - w * ea[j]).norm() < tol)
        })
    }

    fn permutations4() -> Vec<[usize; 4]> {
        let mut out = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                for c_ in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, c_, d];
                        let mut seen = [false; 4];
                        p.iter().for_each(|&x| seen[x] = true);
                        if seen.iter().all(|&s| s) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn magic_basis_is_orthonormal_and_matches_definition() {
        let q = MagicBasis::matrix();
        assert!(max_abs_diff(&(q.adjoint() * q), &Mat4::identity()) < 1e-15);
        let s = FRAC_1_SQRT_2;
        let phi = MagicBasis::states();
        let expect = [
            [s, 0., 0., s],
            [s, 0., 0., -s],
            [0., s, -s, 0.],
            [0., s, s, 0.],
        ];
        for j in 0..4 {
            for k in 0..4 {
                assert!((phi[j][k] - c(expect[j][k], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn phased_magic_basis_maps_locals_to_real_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = phased_magic();
        for _ in 0..20 {
            let a = haar_qubit_unitary(&mut rng);
            let bb = haar_qubit_unitary(&mut rng);
            let mut k = kron2(a.matrix(), bb.matrix());
            k *= C64::from_polar(1.0, -k.determinant().arg() / 4.0);
            let o = b.adjoint() * k * b;
            let imag = o.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            // det(k)=1 fixes k up to ±1, ±i; every branch is real up to a common phase.
            let re = o.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
            assert!(imag < 1e-12 || re < 1e-12, "imag {imag} re {re}");
        }
    }

    #[test]
    fn magic_basis_conversion() {
        let lam = [0.3, -1.2, 2.0, 0.7];
        let md = to_magic_basis(&entangling_core(&lam));
        for j in 0..4 {
            for k in 0..4 {
                let expect = if j == k {
                    C64::from_polar(1.0, lam[j])
                } else {
                    ZERO
                };
                assert!((md[(j, k)] - expect).norm() < 1e-14);
            }
        }
        assert!(max_abs_diff(&to_magic_basis(&Mat4::identity()), &Mat4::identity()) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = Mat4::from_fn(|_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        assert!(max_abs_diff(&from_magic_basis(&to_magic_basis(&r)), &r) < 1e-12);
        assert!(max_abs_diff(&to_magic_basis(&from_magic_basis(&r)), &r) < 1e-12);
    }

    #[test]
    fn core_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let lam: [f64; 4] = std::array::from_fn(|_| rng.random_range(-PI..PI));
            let ud = entangling_core(&lam);
            assert!(max_abs_diff(&ud, &ud.transpose()) < 1e-14);
        }
    }

    #[test]
    fn identity_decomposes_trivially() {
        let d = kak_decompose(&TwoQubitUnitary::identity()).unwrap();
        for l in d.lambdas {
            assert!(wrap_angle(l).abs() < 1e-12, "{:?}", d.lambdas);
        }
        let local = d.local_after() * d.local_before();
        assert!(phase_insensitive_distance(&local, &Mat4::identity()) < 1e-12);
        assert!(max_abs_diff(&d.reconstruct(), &Mat4::identity()) < 1e-12);
    }

    #[test]
    fn core_round_trip_recovers_lambdas() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let lam: [f64; 4] = std::array::from_fn(|_| rng.random_range(-PI..PI));
            let ud = TwoQubitUnitary::new(entangling_core(&lam)).unwrap();
            let d = kak_decompose(&ud).unwrap();
            assert!(max_abs_diff(&d.reconstruct(), ud.matrix()) < 1e-10);
            assert!(
                same_core_class(&lam, &d.lambdas, 1e-9),
                "{lam:?} vs {:?}",
                d.lambdas
            );
        }
    }

    #[test]
    fn cnot_has_nontrivial_core() {
        let d = kak_decompose(&TwoQubitUnitary::cnot()).unwrap();
        assert!(max_abs_diff(&d.reconstruct(), TwoQubitUnitary::cnot().matrix()) < 1e-10);
        let spread = d
            .lambdas
            .iter()
            .map(|l| wrap_angle(l - d.lambdas[0]).abs())
            .fold(0.0, f64::max);
        assert!(spread > 0.1, "{:?}", d.lambdas);
    }

    #[test]
    fn swap_decomposes() {
        let d = kak_decompose(&TwoQubitUnitary::swap()).unwrap();
        assert!(max_abs_diff(&d.reconstruct(), TwoQubitUnitary::swap().matrix()) < 1e-10);
    }

    #[test]
    fn lambdas_are_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let u = haar_two_qubit_unitary(&mut rng);
            let d = kak_decompose(&u).unwrap();
            for w in d.lambdas.windows(2) {
                assert!(w[0] >= w[1]);
            }
            for l in d.lambdas {
                assert!(l > -PI && l <= PI);
            }
            for x in [d.u_a, d.u_b, d.v_a, d.v_b] {
                assert!((x.matrix().determinant() - ONE).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_lambdas_are_a_global_phase() {
        let lam = [0.4; 4];
        let ud = entangling_core(&lam);
        assert!(max_abs_diff(&ud, &(Mat4::identity() * C64::from_polar(1.0, 0.4))) < 1e-14);
        let d = KakDecomposition {
            u_a: QubitUnitary::identity(),
            u_b: QubitUnitary::identity(),
            v_a: QubitUnitary::identity(),
            v_b: QubitUnitary::identity(),
            lambdas: [0.0; 4],
            global_phase: 0.0,
        };
        let r = kak_reconstruct(&d).unwrap();
        assert!(max_abs_diff(r.matrix(), &Mat4::identity()) < 1e-15);
    }

    #[test]
    fn local_gates_have_equal_lambdas() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let a = haar_qubit_unitary(&mut rng);
            let b = haar_qubit_unitary(&mut rng);
            let d = kak_decompose(&TwoQubitUnitary::local(&a, &b)).unwrap();
            for l in d.lambdas {
                assert!(wrap_angle(l - d.lambdas[0]).abs() < 1e-8, "{:?}", d.lambdas);
            }
        }
    }

    #[test]
    fn rejects_non_unitary() {
        let mut m = Mat4::identity();
        m[(0, 0)] = c(2.0, 0.0);
        let u = TwoQubitUnitary::new_unchecked(m);
        assert!(matches!(kak_decompose(&u), Err(Error::NotUnitary { .. })));
    }
}
