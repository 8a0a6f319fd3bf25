//! Product inputs that a two-qubit gate maps to product outputs.
//!
//! Writing `|ψ⟩ = Σ α_j |Φ_j⟩` in the magic basis, `ψ` is product iff
//! `α₁² − α₂² + α₃² − α₄² = 0`, and `U_d|ψ⟩` is product iff the same holds
//! for `e^{iλ_j} α_j`. Taking the squares `v_j = α_j²` real turns both
//! conditions into three real linear constraints `t·v = u_re·v = u_im·v = 0`
//! on `v ∈ ℝ⁴`, which always have a nonzero solution.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::kak::{kak_decompose, KakDecomposition, MagicBasis};
use crate::qmath::{
    c, is_product, kron2, schmidt_decompose, tensor, Ket1Q, Ket2Q, TwoQubitUnitary, C64, I,
    TAU_NORM,
};

pub const TAU_NULL: f64 = 1e-10;
pub const TAU_PROD: f64 = 1e-8;

const T: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvarianceVectors {
    pub t: [f64; 4],
    pub u_re: [f64; 4],
    pub u_im: [f64; 4],
}

impl InvarianceVectors {
    /// Largest `|w·v|` over the three constraint vectors.
    pub fn residual(&self, v: &[f64; 4]) -> f64 {
        [self.t, self.u_re, self.u_im]
            .iter()
            .map(|w| dot(w, v).abs())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn invariance_vectors(lambdas: &[f64; 4]) -> InvarianceVectors {
    let sign = |j: usize| T[j];
    InvarianceVectors {
        t: T,
        u_re: std::array::from_fn(|j| sign(j) * (2.0 * lambdas[j]).cos()),
        u_im: std::array::from_fn(|j| sign(j) * (2.0 * lambdas[j]).sin()),
    }
}

fn l1_normalize(v: &[f64; 4]) -> [f64; 4] {
    let s: f64 = v.iter().map(|x| x.abs()).sum();
    v.map(|x| x / s)
}

/// `a > b` lexicographically, treating differences below `1e-12` as ties.
fn lex_greater(a: &[f64; 4], b: &[f64; 4]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > 1e-12 {
            return x > y;
        }
    }
    false
}

/// A nonzero `v` orthogonal to `t`, `u_re` and `u_im`, with `Σ|v_j| = 1`.
///
/// The null space comes from the SVD of the stacked constraints. When it has
/// more than one dimension, a 1° grid over its unit sphere selects the
/// direction maximising `min_j |v_j|`, ties going to the lexicographically
/// largest vector.
pub fn null_space_vector(vecs: &InvarianceVectors) -> Result<[f64; 4]> {
    let a = Matrix4::from_rows(&[
        Vector4::from(vecs.t).transpose(),
        Vector4::from(vecs.u_re).transpose(),
        Vector4::from(vecs.u_im).transpose(),
        Vector4::zeros().transpose(),
    ]);
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("svd v_t");
    let basis: Vec<[f64; 4]> = (0..4)
        .filter(|&k| svd.singular_values[k] < TAU_NULL)
        .map(|k| std::array::from_fn(|j| vt[(k, j)]))
        .collect();

    let candidates: Vec<[f64; 4]> = match basis.len() {
        0 => return Err(Error::Internal("constraint matrix has full rank".into())),
        1 => {
            let v = l1_normalize(&basis[0]);
            vec![v, v.map(|x| -x)]
        }
        2 => (0..360)
            .map(|deg| {
                let th = (deg as f64).to_radians();
                std::array::from_fn(|j| th.cos() * basis[0][j] + th.sin() * basis[1][j])
            })
            .collect(),
        3 => {
            let mut out = Vec::with_capacity(181 * 360);
            for td in 0..=180 {
                let th = (td as f64).to_radians();
                for pd in 0..360 {
                    let ph = (pd as f64).to_radians();
                    let w = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                    out.push(std::array::from_fn(|j| {
                        (0..3).map(|k| w[k] * basis[k][j]).sum()
                    }));
                }
            }
            out
        }
        n => {
            return Err(Error::Internal(format!(
                "null space of dimension {n} cannot occur"
            )))
        }
    };

    let mut best: Option<([f64; 4], f64)> = None;
    for cand in candidates {
        let v = l1_normalize(&cand);
        let score = v.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        best = match best {
            None => Some((v, score)),
            Some((bv, bs)) => {
                if score > bs + 1e-12 || ((score - bs).abs() <= 1e-12 && lex_greater(&v, &bv)) {
                    Some((v, score))
                } else {
                    Some((bv, bs))
                }
            }
        };
    }
    let (v, _) = best.expect("non-empty candidate set");
    let resid = vecs.residual(&v);
    if resid > TAU_NULL {
        return Err(Error::Internal(format!(
            "null vector residual {resid:.3e} exceeds {TAU_NULL:.0e}"
        )));
    }
    Ok(v)
}

/// Square roots `α_j` of `v_j`: real for `v_j ≥ 0`, `i√|v_j|` otherwise.
pub fn amplitudes_from_squares(v: &[f64; 4]) -> Result<[C64; 4]> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if (l1 - 1.0).abs() > TAU_NORM {
        return Err(Error::Validation(format!(
            "squared-amplitude vector must satisfy Σ|v_j| = 1, got {l1}"
        )));
    }
    Ok(v.map(|x| {
        if x >= 0.0 {
            c(x.sqrt(), 0.0)
        } else {
            I * x.abs().sqrt()
        }
    }))
}

/// `|α₁² − α₂² + α₃² − α₄²|`.
pub fn product_condition_residual(alpha: &[C64; 4]) -> f64 {
    (0..4)
        .map(|j| alpha[j] * alpha[j] * T[j])
        .sum::<C64>()
        .norm()
}

/// `|Σ_j ±(e^{iλ_j} α_j)²|`, the product condition after `U_d`.
pub fn core_condition_residual(alpha: &[C64; 4], lambdas: &[f64; 4]) -> f64 {
    (0..4)
        .map(|j| C64::from_polar(1.0, 2.0 * lambdas[j]) * alpha[j] * alpha[j] * T[j])
        .sum::<C64>()
        .norm()
}

/// Magic-basis coefficients `α_j = ⟨Φ_j|ψ⟩`.
pub fn magic_coefficients(psi: &Ket2Q) -> [C64; 4] {
    let phi = MagicBasis::states();
    std::array::from_fn(|j| phi[j].inner(psi))
}

/// `Σ_j α_j Φ_j`.
pub fn from_magic_coefficients(alpha: &[C64; 4]) -> Vector4<C64> {
    MagicBasis::states()
        .iter()
        .zip(alpha)
        .fold(Vector4::zeros(), |acc, (phi, a)| {
            acc + phi.amplitudes() * *a
        })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductKet {
    pub a: Ket1Q,
    pub b: Ket1Q,
}

impl ProductKet {
    pub fn ket(&self) -> Ket2Q {
        tensor(&self.a, &self.b).expect("factors are normalized")
    }
}

#[derive(Clone, Debug)]
pub struct ProductPair {
    pub input: ProductKet,
    pub output: ProductKet,
    /// Larger of the two second Schmidt coefficients.
    pub residual: f64,
    pub kak: KakDecomposition,
    pub v: [f64; 4],
    pub alpha: [C64; 4],
}

pub fn find_product_preserving_state(u: &TwoQubitUnitary) -> Result<ProductPair> {
    let kak = kak_decompose(u)?;
    let vecs = invariance_vectors(&kak.lambdas);
    let v = null_space_vector(&vecs)?;
    let alpha = amplitudes_from_squares(&v)?;

    let core_input = from_magic_coefficients(&alpha);
    let before = kron2(kak.v_a.matrix(), kak.v_b.matrix());
    let psi = Ket2Q::normalized(before.adjoint() * core_input)?;
    let out = u.apply(&psi);

    let in_s2 = schmidt_decompose(&psi).coefficients[1];
    let out_s2 = schmidt_decompose(&out).coefficients[1];
    let failure = || Error::Construction {
        lambdas: kak.lambdas,
        v,
        input_residual: in_s2,
        output_residual: out_s2,
    };
    let (a, b) = is_product(&psi, TAU_PROD).ok_or_else(failure)?;
    let (cc, d) = is_product(&out, TAU_PROD).ok_or_else(failure)?;
    Ok(ProductPair {
        input: ProductKet { a, b },
        output: ProductKet { a: cc, b: d },
        residual: in_s2.max(out_s2),
        kak,
        v,
        alpha,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreservationReport {
    pub input_schmidt2: f64,
    pub output_schmidt2: f64,
    pub pass: bool,
}

pub fn verify_product_preservation(
    u: &TwoQubitUnitary,
    psi: &Ket2Q,
    tol: f64,
) -> PreservationReport {
    let input_schmidt2 = schmidt_decompose(psi).coefficients[1];
    let output_schmidt2 = schmidt_decompose(&u.apply(psi)).coefficients[1];
    PreservationReport {
        input_schmidt2,
        output_schmidt2,
        pass: input_schmidt2 < tol && output_schmidt2 < tol,
    }
}
