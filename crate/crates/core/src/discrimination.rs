//! Discriminating a gate `U` from a noisy implementation of it.
//!
//! Covers the Helstrom analytics, the closed-form guessing probability for
//! the depolarized counterpart, the optimal projective measurement, the
//! local protocol built from a product-preserving input, Monte-Carlo shot
//! simulation of that protocol, noise-fraction estimation, and a multistart
//! search for the best global input against arbitrary channels.

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::ChannelSpec;
use crate::error::{Error, Result};
use crate::product_finder::{find_product_preserving_state, TAU_PROD};
use crate::qmath::{
    c, hermitian_eigen, is_product, tensor, DensityMatrix, Ket1Q, Ket2Q, Mat4, TwoQubitUnitary, C64,
};

/// Eigenvalues with modulus below this are treated as zero when splitting
/// the Helstrom operator.
const EIGEN_ZERO: f64 = 1e-12;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) || !x.is_finite() {
        return Err(Error::Validation(format!(
            "{name} must lie in [0, 1], got {x}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct DiscriminationTask {
    pub gate: TwoQubitUnitary,
    pub channel: ChannelSpec,
    /// Prior probability that the box holds the noisy channel.
    pub prior_noisy: f64,
}

impl DiscriminationTask {
    pub fn new(gate: TwoQubitUnitary, channel: ChannelSpec, prior_noisy: f64) -> Result<Self> {
        check_unit_interval("prior q", prior_noisy)?;
        channel.validate()?;
        Ok(DiscriminationTask {
            gate,
            channel,
            prior_noisy,
        })
    }

    pub fn depolarized(gate: TwoQubitUnitary, p: f64, q: f64) -> Result<Self> {
        Self::new(gate, ChannelSpec::depolarized(gate, p)?, q)
    }
}

/// Two-outcome measurement; `pi1` means "unitary", `pi2` means "noisy".
#[derive(Clone, Copy, Debug)]
pub struct PovmPair {
    pub pi1: Mat4,
    pub pi2: Mat4,
}

impl PovmPair {
    /// Trace-normalised elements; a zero element stays zero.
    pub fn normalized(&self) -> (Mat4, Mat4) {
        let norm = |m: &Mat4| {
            let t = m.trace().re;
            if t > EIGEN_ZERO {
                m / c(t, 0.0)
            } else {
                *m
            }
        };
        (norm(&self.pi1), norm(&self.pi2))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HelstromResult {
    pub p_guess: f64,
    pub povm: PovmPair,
}

/// Minimum-error discrimination of `ρ₀` (prior `1−q`) against `ρ₁` (prior `q`).
pub fn helstrom(rho0: &DensityMatrix, rho1: &DensityMatrix, q: f64) -> Result<HelstromResult> {
    check_unit_interval("prior q", q)?;
    let delta = rho0.matrix() * c(1.0 - q, 0.0) - rho1.matrix() * c(q, 0.0);
    let (vals, vecs) = hermitian_eigen(&delta);
    let mut pi1 = Mat4::zeros();
    for k in 0..4 {
        if vals[k] > EIGEN_ZERO {
            let v = vecs.column(k);
            pi1 += v * v.adjoint();
        }
    }
    let norm: f64 = vals.iter().map(|x| x.abs()).sum();
    Ok(HelstromResult {
        p_guess: 0.5 * (1.0 + norm),
        povm: PovmPair {
            pi1,
            pi2: Mat4::identity() - pi1,
        },
    })
}

/// `½(1 + ¾pq + |1 − 2q + ¾pq|)`, evaluated branch-wise so that the
/// no-measurement regime returns exactly `q`.
pub fn closed_form_guess(p: f64, q: f64) -> Result<f64> {
    check_unit_interval("noise fraction p", p)?;
    check_unit_interval("prior q", q)?;
    let s = 1.0 - 2.0 * q + 0.75 * p * q;
    Ok(if s < 0.0 { q } else { 1.0 - q + 0.75 * p * q })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Run the local protocol and decide from the outcome.
    Measure,
    /// Skip the measurement and always declare the noisy channel.
    AlwaysNoisy,
}

/// `AlwaysNoisy` exactly when `1 − 2q + ¾pq < 0`.
pub fn optimal_strategy(p: f64, q: f64) -> Strategy {
    if 1.0 - 2.0 * q + 0.75 * p * q < 0.0 {
        Strategy::AlwaysNoisy
    } else {
        Strategy::Measure
    }
}

/// `Π₁ = U|ψ⟩⟨ψ|U†`, `Π₂ = I − Π₁`.
pub fn optimal_povm(u: &TwoQubitUnitary, psi: &Ket2Q) -> PovmPair {
    let pi1 = u.apply(psi).projector();
    PovmPair {
        pi1,
        pi2: Mat4::identity() - pi1,
    }
}

/// Product input plus one local basis per party. The outcome pair `accept`
/// means "the gate acted unitarily"; anything else means "noisy".
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoccProtocol {
    pub input_a: Ket1Q,
    pub input_b: Ket1Q,
    pub basis_a: [Ket1Q; 2],
    pub basis_b: [Ket1Q; 2],
    pub accept: (usize, usize),
}

impl LoccProtocol {
    pub fn input(&self) -> Ket2Q {
        tensor(&self.input_a, &self.input_b).expect("inputs are normalized")
    }

    /// Joint outcome distribution of the two local measurements on `state`,
    /// indexed `2i + j` for Alice's outcome `i` and Bob's `j`.
    pub fn outcome_probabilities(&self, state: &Ket2Q) -> [f64; 4] {
        let mut out = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                let e = tensor(&self.basis_a[i], &self.basis_b[j]).expect("normalized");
                out[2 * i + j] = e.inner(state).norm_sqr();
            }
        }
        out
    }

    pub fn accept_index(&self) -> usize {
        2 * self.accept.0 + self.accept.1
    }

    /// Projector of the accept outcome; equals `Π₁` of the optimal POVM.
    pub fn accept_projector(&self) -> Mat4 {
        tensor(&self.basis_a[self.accept.0], &self.basis_b[self.accept.1])
            .expect("normalized")
            .projector()
    }
}

/// `{k, k⊥}` ordered so that the element with the larger `|⟨0|·⟩|` comes
/// first; returns the basis and the position of `k`.
fn local_basis(k: &Ket1Q) -> ([Ket1Q; 2], usize) {
    let k = k.canonical_phase();
    let kp = k.orthogonal().canonical_phase();
    let (w, wp) = (k.amplitudes()[0].norm(), kp.amplitudes()[0].norm());
    if wp > w + 1e-12 {
        ([kp, k], 1)
    } else {
        ([k, kp], 0)
    }
}

/// Protocol for a given product input, which must map to a product state.
pub fn build_locc_protocol_with_input(
    u: &TwoQubitUnitary,
    input_a: &Ket1Q,
    input_b: &Ket1Q,
    tol: f64,
) -> Result<LoccProtocol> {
    let psi = tensor(input_a, input_b)?;
    let out = u.apply(&psi);
    let (cc, d) = is_product(&out, tol)
        .ok_or_else(|| Error::Domain("the gate maps this input to an entangled state".into()))?;
    let (basis_a, ia) = local_basis(&cc);
    let (basis_b, ib) = local_basis(&d);
    Ok(LoccProtocol {
        input_a: input_a.canonical_phase(),
        input_b: input_b.canonical_phase(),
        basis_a,
        basis_b,
        accept: (ia, ib),
    })
}

/// Protocol from the constructive product-preserving input of `u`.
pub fn build_locc_protocol(u: &TwoQubitUnitary) -> Result<LoccProtocol> {
    let pair = find_product_preserving_state(u)?;
    build_locc_protocol_with_input(u, &pair.input.a, &pair.input.b, TAU_PROD)
}

/// Whether `Π̃₁ = U|ψ⟩⟨ψ|U†` and `Π̃₂ = (I − Π̃₁)/3` are perfectly
/// distinguishable by local measurements, i.e. whether `U|ψ⟩` is product.
pub fn locc_discriminable(u: &TwoQubitUnitary, psi: &Ket2Q, tol: f64) -> Result<bool> {
    if is_product(psi, tol).is_none() {
        return Err(Error::Domain("input state must be a product state".into()));
    }
    Ok(is_product(&u.apply(psi), tol).is_some())
}

/// Per-branch outcome distributions for a protocol.
struct OutcomeModel {
    gate: [f64; 4],
    noisy: NoisyModel,
}

enum NoisyModel {
    Depolarized {
        p: f64,
        unitary: [f64; 4],
    },
    Mixed {
        cumulative: Vec<f64>,
        dists: Vec<[f64; 4]>,
    },
}

impl OutcomeModel {
    fn new(task: &DiscriminationTask, protocol: &LoccProtocol) -> Self {
        let psi = protocol.input();
        let dist = |u: &TwoQubitUnitary| protocol.outcome_probabilities(&u.apply(&psi));
        let noisy = match &task.channel {
            ChannelSpec::Depolarized { u, p } => NoisyModel::Depolarized {
                p: *p,
                unitary: dist(u),
            },
            ChannelSpec::MixedUnitary { branches } => {
                let mut acc = 0.0;
                NoisyModel::Mixed {
                    cumulative: branches
                        .iter()
                        .map(|(_, w)| {
                            acc += w;
                            acc
                        })
                        .collect(),
                    dists: branches.iter().map(|(u, _)| dist(u)).collect(),
                }
            }
        };
        OutcomeModel {
            gate: dist(&task.gate),
            noisy,
        }
    }

    /// Exact outcome distribution under the noisy channel.
    fn noisy_distribution(&self) -> [f64; 4] {
        match &self.noisy {
            NoisyModel::Depolarized { p, unitary } => {
                std::array::from_fn(|k| (1.0 - p) * unitary[k] + p / 4.0)
            }
            NoisyModel::Mixed { cumulative, dists } => {
                let mut prev = 0.0;
                let mut out = [0.0; 4];
                for (cum, d) in cumulative.iter().zip(dists) {
                    let w = cum - prev;
                    prev = *cum;
                    for k in 0..4 {
                        out[k] += w * d[k];
                    }
                }
                out
            }
        }
    }
}

fn sample_outcome<R: Rng + ?Sized>(dist: &[f64; 4], rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in dist.iter().enumerate() {
        acc += p;
        if x < acc {
            return k;
        }
    }
    // x fell past the rounded total; return the last outcome with weight.
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(3)
}

/// Exact success probability of `protocol` on `task` under `strategy`.
pub fn protocol_guess_exact(
    task: &DiscriminationTask,
    protocol: &LoccProtocol,
    strategy: Strategy,
) -> f64 {
    let q = task.prior_noisy;
    match strategy {
        Strategy::AlwaysNoisy => q,
        Strategy::Measure => {
            let model = OutcomeModel::new(task, protocol);
            let acc = protocol.accept_index();
            let noisy = model.noisy_distribution();
            (1.0 - q) * model.gate[acc] + q * (1.0 - noisy[acc])
        }
    }
}

/// Wilson score interval for `successes` out of `n` trials.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let ph = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (ph + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (ph * (1.0 - ph) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationResult {
    /// `counts[truth][outcome]`, truth 0 = unitary, 1 = noisy; outcome `2i+j`.
    pub counts: [[u64; 4]; 2],
    pub shots: u64,
    pub correct: u64,
    pub empirical_guess: f64,
    pub ci95: (f64, f64),
    /// Fraction of all shots whose outcome was not the accept outcome.
    pub f1: f64,
    pub p_hat: f64,
    pub p_hat_raw: f64,
    pub p_hat_ci95: (f64, f64),
    pub strategy: Strategy,
    pub seed: u64,
}

/// Shots per independent random stream.
const BLOCK: u64 = 1 << 16;

fn run_block(
    model: &OutcomeModel,
    q: f64,
    accept: usize,
    strategy: Strategy,
    seed: u64,
    block: u64,
    shots: u64,
) -> ([[u64; 4]; 2], u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let mut counts = [[0u64; 4]; 2];
    let mut correct = 0u64;
    for _ in 0..shots {
        let noisy_truth = rng.random::<f64>() < q;
        let outcome = if !noisy_truth {
            sample_outcome(&model.gate, &mut rng)
        } else {
            match &model.noisy {
                NoisyModel::Depolarized { p, unitary } => {
                    if rng.random::<f64>() < *p {
                        rng.random_range(0..4)
                    } else {
                        sample_outcome(unitary, &mut rng)
                    }
                }
                NoisyModel::Mixed { cumulative, dists } => {
                    let x: f64 = rng.random();
                    let b = cumulative
                        .iter()
                        .position(|&cum| x < cum)
                        .unwrap_or(dists.len() - 1);
                    sample_outcome(&dists[b], &mut rng)
                }
            }
        };
        let guess_noisy = match strategy {
            Strategy::Measure => outcome != accept,
            Strategy::AlwaysNoisy => true,
        };
        counts[noisy_truth as usize][outcome] += 1;
        if guess_noisy == noisy_truth {
            correct += 1;
        }
    }
    (counts, correct)
}

/// Monte-Carlo run of `protocol` on `task`.
///
/// Shots are split into fixed blocks of 2¹⁶, each drawing from its own
/// ChaCha stream of `seed`, so results do not depend on the thread count.
/// Under [`Strategy::AlwaysNoisy`] the outcomes are still recorded but do not
/// influence the decision.
pub fn simulate(
    task: &DiscriminationTask,
    protocol: &LoccProtocol,
    shots: u64,
    seed: u64,
    strategy: Strategy,
) -> Result<SimulationResult> {
    if shots == 0 {
        return Err(Error::Validation("shots must be at least 1".into()));
    }
    check_unit_interval("prior q", task.prior_noisy)?;
    task.channel.validate()?;
    let model = OutcomeModel::new(task, protocol);
    let accept = protocol.accept_index();
    let n_blocks = shots.div_ceil(BLOCK);
    let (counts, correct) = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let n = BLOCK.min(shots - b * BLOCK);
            run_block(&model, task.prior_noisy, accept, strategy, seed, b, n)
        })
        .reduce(
            || ([[0u64; 4]; 2], 0u64),
            |(mut ca, sa), (cb, sb)| {
                for t in 0..2 {
                    for k in 0..4 {
                        ca[t][k] += cb[t][k];
                    }
                }
                (ca, sa + sb)
            },
        );

    let rejects: u64 = (0..2)
        .map(|t| {
            (0..4)
                .filter(|&k| k != accept)
                .map(|k| counts[t][k])
                .sum::<u64>()
        })
        .sum();
    let f1 = rejects as f64 / shots as f64;
    let p_hat_raw = 4.0 / 3.0 * f1;
    let (f_lo, f_hi) = wilson_interval(rejects, shots, Z95);
    Ok(SimulationResult {
        counts,
        shots,
        correct,
        empirical_guess: correct as f64 / shots as f64,
        ci95: wilson_interval(correct, shots, Z95),
        f1,
        p_hat: p_hat_raw.clamp(0.0, 1.0),
        p_hat_raw,
        p_hat_ci95: ((4.0 / 3.0 * f_lo).min(1.0), (4.0 / 3.0 * f_hi).min(1.0)),
        strategy,
        seed,
    })
}

/// `p̂ = (4/3) f₁`, clamped to `[0, 1]`.
pub fn estimate_noise(f1: f64) -> Result<f64> {
    check_unit_interval("f1", f1)?;
    Ok((4.0 / 3.0 * f1).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Global input optimisation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct OptimizeConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Gradient-norm stopping threshold for each local ascent.
    pub tol: f64,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            restarts: 32,
            max_iters: 500,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub p_guess: f64,
    pub argmax: Ket2Q,
    /// True when every restart finished within `1e-6` of the best value.
    pub converged: bool,
    pub restart_values: Vec<f64>,
}

/// Spread below which restarts count as agreeing.
pub const RESTART_AGREEMENT: f64 = 1e-6;

fn channel_output(ch: &ChannelSpec, rho: &Mat4) -> Mat4 {
    match ch {
        ChannelSpec::Depolarized { u, p } => {
            let m = u.matrix();
            m * rho * m.adjoint() * c(1.0 - p, 0.0) + Mat4::identity() * c(p / 4.0, 0.0)
        }
        ChannelSpec::MixedUnitary { branches } => branches
            .iter()
            .map(|(u, w)| u.matrix() * rho * u.matrix().adjoint() * c(*w, 0.0))
            .fold(Mat4::zeros(), |a, b| a + b),
    }
}

/// Helstrom success probability when the pure state `psi` is fed to the box.
pub fn guess_for_pure_input(
    gate: &TwoQubitUnitary,
    channel: &ChannelSpec,
    q: f64,
    psi: &Ket2Q,
) -> f64 {
    let rho = psi.projector();
    let g = gate.matrix();
    let delta = g * rho * g.adjoint() * c(1.0 - q, 0.0) - channel_output(channel, &rho) * c(q, 0.0);
    let (vals, _) = hermitian_eigen(&delta);
    0.5 * (1.0 + vals.iter().map(|x| x.abs()).sum::<f64>())
}

/// `‖a|x⟩⟨x| − b|y⟩⟨y|‖₁` for pure states with `|⟨x|y⟩|² = overlap_sq`,
/// from the 2×2 restriction (trace `a − b`, determinant `−ab(1 − overlap)`).
pub fn two_pure_state_trace_norm(a: f64, b: f64, overlap_sq: f64) -> f64 {
    let tr = a - b;
    let det = -a * b * (1.0 - overlap_sq);
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    ((tr + disc) / 2.0).abs() + ((tr - disc) / 2.0).abs()
}

/// Two-pure-state value for a mixed-unitary channel whose branches are the
/// gate itself (weight `w`, possibly absent) and one other unitary `U'`:
/// `½(1 + ‖a·UψψU† − b·U'ψψU'†‖₁)` with `a = 1 − q − qw`, `b = q(1 − w)`.
pub fn two_branch_guess(
    gate: &TwoQubitUnitary,
    channel: &ChannelSpec,
    q: f64,
    psi: &Ket2Q,
) -> Result<f64> {
    let ChannelSpec::MixedUnitary { branches } = channel else {
        return Err(Error::Domain("expected a mixed-unitary channel".into()));
    };
    let others: Vec<_> = branches.iter().filter(|(u, _)| u != gate).collect();
    if others.len() != 1 {
        return Err(Error::Domain(
            "expected exactly one branch different from the gate".into(),
        ));
    }
    let (other, w_other) = (others[0].0, others[0].1);
    let w_gate: f64 = branches
        .iter()
        .filter(|(u, _)| u == gate)
        .map(|b| b.1)
        .sum();
    let x = gate.apply(psi);
    let y = other.apply(psi);
    let a = (1.0 - q) - q * w_gate;
    let b = q * w_other;
    Ok(0.5 * (1.0 + two_pure_state_trace_norm(a, b, x.inner(&y).norm_sqr())))
}

fn ket_from_params(x: &[f64; 8]) -> Ket2Q {
    let v = Vector4::from_fn(|j, _| c(x[2 * j], x[2 * j + 1]));
    Ket2Q::normalized(v).expect("nonzero parameters")
}

fn normalize8(x: &mut [f64; 8]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

/// Central-difference gradient, projected onto the tangent space of the
/// unit sphere at `x` (the objective is scale invariant).
fn projected_gradient<F: Fn(&[f64; 8]) -> f64>(f: &F, x: &[f64; 8]) -> [f64; 8] {
    const H: f64 = 1e-6;
    let mut g: [f64; 8] = std::array::from_fn(|k| {
        let mut xp = *x;
        let mut xm = *x;
        xp[k] += H;
        xm[k] -= H;
        (f(&xp) - f(&xm)) / (2.0 * H)
    });
    let radial: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
    g.iter_mut().zip(x).for_each(|(gk, xk)| *gk -= radial * xk);
    g
}

/// Projected gradient ascent with Barzilai-Borwein step lengths and a
/// monotone backtracking safeguard. The step adapts to vanishing curvature,
/// which matters because optima of these objectives can be degenerate
/// (value gap quartic in the distance to the maximiser).
fn ascend<F: Fn(&[f64; 8]) -> f64>(
    f: &F,
    mut x: [f64; 8],
    cfg: &OptimizeConfig,
) -> ([f64; 8], f64) {
    normalize8(&mut x);
    let mut fx = f(&x);
    let mut g = projected_gradient(f, &x);
    let mut eta = 0.1;
    for _ in 0..cfg.max_iters {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < cfg.tol {
            break;
        }
        let mut t = eta;
        let mut accepted = None;
        while t > 1e-14 {
            let mut xn = x;
            xn.iter_mut().zip(&g).for_each(|(a, b)| *a += t * b);
            normalize8(&mut xn);
            let fnew = f(&xn);
            if fnew > fx {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let gnew = projected_gradient(f, &xn);
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..8 {
            let sk = xn[k] - x[k];
            ss += sk * sk;
            sy += sk * (gnew[k] - g[k]);
        }
        // Ascent: along a useful step the gradient decreases, so sy < 0.
        eta = if sy < 0.0 {
            (ss / -sy).min(1e8)
        } else {
            2.0 * t
        };
        x = xn;
        fx = fnew;
        g = gnew;
    }
    (x, fx)
}

/// Multistart ascent of the Helstrom value over pure two-qubit inputs.
pub fn optimize_input(
    gate: &TwoQubitUnitary,
    channel: &ChannelSpec,
    q: f64,
    config: &OptimizeConfig,
) -> Result<OptimizeResult> {
    check_unit_interval("prior q", q)?;
    channel.validate()?;
    if config.restarts == 0 {
        return Err(Error::Validation("restarts must be at least 1".into()));
    }
    let objective = |x: &[f64; 8]| guess_for_pure_input(gate, channel, q, &ket_from_params(x));
    let runs: Vec<([f64; 8], f64)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let x0: [f64; 8] = std::array::from_fn(|_| rng.sample(StandardNormal));
            ascend(&objective, x0, config)
        })
        .collect();
    let (best_x, best) = runs
        .iter()
        .fold(None::<([f64; 8], f64)>, |acc, &(x, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((x, v)),
        })
        .expect("at least one restart");
    let restart_values: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let converged = restart_values.iter().all(|v| best - v <= RESTART_AGREEMENT);
    Ok(OptimizeResult {
        p_guess: best,
        argmax: ket_from_params(&best_x).canonical_phase(),
        converged,
        restart_values,
    })
}

// ---------------------------------------------------------------------------
// Local versus global comparison
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct LoccVsGlobalReport {
    pub p_global: f64,
    /// Exact success probability of the constructed local protocol.
    pub p_locc_analytic: f64,
    pub p_locc_simulated: f64,
    pub ci95: (f64, f64),
    pub sigma: f64,
    pub shots: u64,
    pub p_hat: f64,
    pub seed: u64,
    pub strategy: Strategy,
    pub equal: bool,
}

/// Compares the global optimum with the local protocol, analytically and by
/// `shots` simulated runs.
pub fn locc_vs_global_report(
    u: &TwoQubitUnitary,
    p: f64,
    q: f64,
    shots: u64,
    seed: u64,
) -> Result<LoccVsGlobalReport> {
    let protocol = build_locc_protocol(u)?;
    locc_vs_global_with_protocol(u, &protocol, p, q, shots, seed)
}

pub fn locc_vs_global_with_protocol(
    u: &TwoQubitUnitary,
    protocol: &LoccProtocol,
    p: f64,
    q: f64,
    shots: u64,
    seed: u64,
) -> Result<LoccVsGlobalReport> {
    let p_global = closed_form_guess(p, q)?;
    let task = DiscriminationTask::depolarized(*u, p, q)?;
    let strategy = optimal_strategy(p, q);
    let p_locc_analytic = protocol_guess_exact(&task, protocol, strategy);
    let sim = simulate(&task, protocol, shots, seed, strategy)?;
    let sigma = (p_global * (1.0 - p_global) / shots as f64).sqrt();
    let within = (sim.empirical_guess - p_global).abs() <= 3.0 * sigma + 1e-12;
    Ok(LoccVsGlobalReport {
        p_global,
        p_locc_analytic,
        p_locc_simulated: sim.empirical_guess,
        ci95: sim.ci95,
        sigma,
        shots,
        p_hat: sim.p_hat,
        seed,
        strategy,
        equal: (p_global - p_locc_analytic).abs() < 1e-12 && within,
    })
}

/// Noise-fraction estimate from `shots` uses of the noisy channel alone.
pub fn estimate_noise_by_simulation(
    u: &TwoQubitUnitary,
    channel: &ChannelSpec,
    shots: u64,
    seed: u64,
) -> Result<SimulationResult> {
    let protocol = build_locc_protocol(u)?;
    let task = DiscriminationTask::new(*u, channel.clone(), 1.0)?;
    simulate(&task, &protocol, shots, seed, Strategy::Measure)
}

/// Subspace distance `‖P − Q‖_max` between two projectors.
pub fn projector_distance(p: &Mat4, q: &Mat4) -> f64 {
    crate::qmath::max_abs_diff(p, q)
}

/// Largest principal angle between the ranges of two rank-1 projectors.
pub fn rank_one_angle(p: &Mat4, q: &Mat4) -> f64 {
    let (_, vp) = hermitian_eigen(p);
    let (_, vq) = hermitian_eigen(q);
    let a: Vector4<C64> = vp.column(3).into_owned();
    let b: Vector4<C64> = vq.column(3).into_owned();
    // sin θ = ‖b − ⟨a|b⟩a‖; acos of the overlap loses half the digits.
    let r = b - a * a.dotc(&b);
    r.norm().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{apply_channel, counterexample_channel};
    use crate::qmath::{haar_ket2, haar_two_qubit_unitary, max_abs_diff};

    fn dep(u: TwoQubitUnitary, p: f64) -> ChannelSpec {
        ChannelSpec::depolarized(u, p).unwrap()
    }

    #[test]
    fn helstrom_identical_and_orthogonal() {
        let r = DensityMatrix::pure(&Ket2Q::basis(1));
        assert!((helstrom(&r, &r, 0.5).unwrap().p_guess - 0.5).abs() < 1e-15);
        let s = DensityMatrix::pure(&Ket2Q::basis(2));
        assert!((helstrom(&r, &s, 0.5).unwrap().p_guess - 1.0).abs() < 1e-15);
    }

    /// Full depolarization of |00⟩: eigenvalues of ½|00⟩⟨00| − ⅛I are ⅜ and
    /// −⅛ (×3), so p = ½(1 + ⅜ + ⅜) = 0.875.
    #[test]
    fn helstrom_fully_depolarized_cnot() {
        let rho0 = DensityMatrix::pure(&Ket2Q::basis(0));
        let rho1 = apply_channel(&dep(TwoQubitUnitary::cnot(), 1.0), &rho0).unwrap();
        let r = helstrom(&rho0, &rho1, 0.5).unwrap();
        assert!((r.p_guess - 0.875).abs() < 1e-14);
        assert!(max_abs_diff(&r.povm.pi1, &Ket2Q::basis(0).projector()) < 1e-12);
    }

    #[test]
    fn closed_form_cases() {
        assert_eq!(closed_form_guess(0.0, 0.5).unwrap(), 0.5);
        assert_eq!(closed_form_guess(0.0, 0.9).unwrap(), 0.9);
        assert!((closed_form_guess(1.0, 0.5).unwrap() - 0.875).abs() < 1e-15);
        assert!((closed_form_guess(0.5, 0.5).unwrap() - 0.6875).abs() < 1e-15);
        assert_eq!(closed_form_guess(0.1, 0.9).unwrap(), 0.9);
        assert!(closed_form_guess(1.1, 0.5).is_err());
        assert!(closed_form_guess(0.5, -0.1).is_err());
    }

    #[test]
    fn closed_form_matches_raw_formula() {
        for i in 0..=20 {
            for j in 0..=20 {
                let (p, q) = (i as f64 / 20.0, j as f64 / 20.0);
                let raw = 0.5 * (1.0 + 0.75 * p * q + (1.0 - 2.0 * q + 0.75 * p * q).abs());
                assert!((closed_form_guess(p, q).unwrap() - raw).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn optimal_povm_cases() {
        let pv = optimal_povm(&TwoQubitUnitary::cnot(), &Ket2Q::basis(0));
        assert!(max_abs_diff(&pv.pi1, &Ket2Q::basis(0).projector()) < 1e-15);
        assert!(max_abs_diff(&pv.pi2, &(Mat4::identity() - Ket2Q::basis(0).projector())) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = haar_ket2(&mut rng);
        let pv = optimal_povm(&TwoQubitUnitary::identity(), &psi);
        assert!(max_abs_diff(&pv.pi1, &psi.projector()) < 1e-15);
        for _ in 0..20 {
            let u = haar_two_qubit_unitary(&mut rng);
            let pv = optimal_povm(&u, &haar_ket2(&mut rng));
            assert!(max_abs_diff(&(pv.pi1 * pv.pi2), &Mat4::zeros()) < 1e-12);
        }
        let (n1, n2) = optimal_povm(&TwoQubitUnitary::cnot(), &Ket2Q::basis(0)).normalized();
        assert!((n1.trace().re - 1.0).abs() < 1e-15 && (n2.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cnot_protocol_with_standard_input() {
        let p = build_locc_protocol_with_input(
            &TwoQubitUnitary::cnot(),
            &Ket1Q::zero(),
            &Ket1Q::zero(),
            1e-10,
        )
        .unwrap();
        assert_eq!(p.accept, (0, 0));
        assert!(p.basis_a[0].equal_up_to_phase(&Ket1Q::zero(), 1e-14));
        assert!(p.basis_a[1].equal_up_to_phase(&Ket1Q::one(), 1e-14));
        assert!(p.basis_b[0].equal_up_to_phase(&Ket1Q::zero(), 1e-14));
    }

    #[test]
    fn swap_protocol_accepts_swapped_outcome() {
        let p = build_locc_protocol_with_input(
            &TwoQubitUnitary::swap(),
            &Ket1Q::zero(),
            &Ket1Q::one(),
            1e-10,
        )
        .unwrap();
        assert_eq!(p.accept, (1, 0));
        assert!(p.basis_a[1].equal_up_to_phase(&Ket1Q::one(), 1e-14));
    }

    #[test]
    fn entangling_input_is_rejected() {
        let r = build_locc_protocol_with_input(
            &TwoQubitUnitary::cnot(),
            &Ket1Q::plus(),
            &Ket1Q::zero(),
            1e-10,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn haar_protocols_accept_with_certainty() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let u = haar_two_qubit_unitary(&mut rng);
            let p = build_locc_protocol(&u).unwrap();
            let probs = p.outcome_probabilities(&u.apply(&p.input()));
            assert!(probs[p.accept_index()] > 1.0 - 1e-12);
            let pv = optimal_povm(&u, &p.input());
            assert!(max_abs_diff(&p.accept_projector(), &pv.pi1) < 1e-9);
        }
    }

    #[test]
    fn discriminability_cases() {
        let cn = TwoQubitUnitary::cnot();
        assert!(locc_discriminable(&cn, &Ket2Q::basis(0), 1e-10).unwrap());
        let plus0 = tensor(&Ket1Q::plus(), &Ket1Q::zero()).unwrap();
        assert!(!locc_discriminable(&cn, &plus0, 1e-10).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = crate::qmath::haar_qubit_unitary(&mut rng);
        let b = crate::qmath::haar_qubit_unitary(&mut rng);
        let loc = TwoQubitUnitary::local(&a, &b);
        assert!(locc_discriminable(&loc, &plus0, 1e-10).unwrap());
        assert!(matches!(
            locc_discriminable(&cn, &Ket2Q::phi_plus(), 1e-10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn estimate_noise_cases() {
        assert_eq!(estimate_noise(0.0).unwrap(), 0.0);
        assert_eq!(estimate_noise(0.75).unwrap(), 1.0);
        assert!((estimate_noise(0.3).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(estimate_noise(0.9).unwrap(), 1.0);
        assert!(estimate_noise(1.2).is_err());
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(0, 100, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
    }

    #[test]
    fn simulate_noiseless_channel_is_coin_flip() {
        let cn = TwoQubitUnitary::cnot();
        let proto = build_locc_protocol(&cn).unwrap();
        let task = DiscriminationTask::depolarized(cn, 0.0, 0.5).unwrap();
        let r = simulate(&task, &proto, 20_000, 1, Strategy::Measure).unwrap();
        let acc = proto.accept_index();
        assert_eq!(r.counts[0][acc] + r.counts[1][acc], r.shots);
        assert_eq!(r.correct, r.counts[0][acc]);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn simulate_rejects_zero_shots() {
        let cn = TwoQubitUnitary::cnot();
        let proto = build_locc_protocol(&cn).unwrap();
        let task = DiscriminationTask::depolarized(cn, 0.5, 0.5).unwrap();
        assert!(simulate(&task, &proto, 0, 1, Strategy::Measure).is_err());
    }

    #[test]
    fn simulate_is_reproducible_and_counts_add_up() {
        let cn = TwoQubitUnitary::cnot();
        let proto = build_locc_protocol(&cn).unwrap();
        let task = DiscriminationTask::depolarized(cn, 0.4, 0.3).unwrap();
        let a = simulate(&task, &proto, 200_001, 9, Strategy::Measure).unwrap();
        let b = simulate(&task, &proto, 200_001, 9, Strategy::Measure).unwrap();
        assert_eq!(a.counts, b.counts);
        let total: u64 = a.counts.iter().flatten().sum();
        assert_eq!(total, a.shots);
        let c2 = simulate(&task, &proto, 200_001, 10, Strategy::Measure).unwrap();
        assert_ne!(a.counts, c2.counts);
    }

    #[test]
    fn simulate_cnot_half_noise() {
        let cn = TwoQubitUnitary::cnot();
        let proto = build_locc_protocol(&cn).unwrap();
        let task = DiscriminationTask::depolarized(cn, 0.5, 0.5).unwrap();
        let n = 100_000u64;
        let r = simulate(&task, &proto, n, 12345, Strategy::Measure).unwrap();
        let sigma = (0.6875f64 * 0.3125 / n as f64).sqrt();
        assert!(
            (r.empirical_guess - 0.6875).abs() < 3.0 * sigma,
            "{}",
            r.empirical_guess
        );
    }

    #[test]
    fn simulate_always_noisy_ignores_outcomes() {
        let cn = TwoQubitUnitary::cnot();
        let proto = build_locc_protocol(&cn).unwrap();
        let task = DiscriminationTask::depolarized(cn, 0.1, 0.9).unwrap();
        let r = simulate(&task, &proto, 50_000, 3, Strategy::AlwaysNoisy).unwrap();
        let noisy: u64 = r.counts[1].iter().sum();
        assert_eq!(r.correct, noisy);
    }

    #[test]
    fn simulate_mixed_unitary_matches_exact() {
        let cn = TwoQubitUnitary::cnot();
        let proto = build_locc_protocol_with_input(&cn, &Ket1Q::plus(), &Ket1Q::zero(), 1e-10);
        // |+⟩|0⟩ is entangled by CNOT, so use the gate's certificate instead.
        assert!(proto.is_err());
        let proto = build_locc_protocol(&cn).unwrap();
        let task = DiscriminationTask::new(cn, counterexample_channel(0.6).unwrap(), 0.5).unwrap();
        let exact = protocol_guess_exact(&task, &proto, Strategy::Measure);
        let n = 200_000u64;
        let r = simulate(&task, &proto, n, 4, Strategy::Measure).unwrap();
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((r.empirical_guess - exact).abs() < 4.0 * sigma);
    }

    #[test]
    fn two_pure_state_norm_matches_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let x = haar_ket2(&mut rng);
            let y = haar_ket2(&mut rng);
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random();
            let m = x.projector() * c(a, 0.0) - y.projector() * c(b, 0.0);
            let direct = crate::qmath::trace_norm(&m).unwrap();
            let formula = two_pure_state_trace_norm(a, b, x.inner(&y).norm_sqr());
            assert!((direct - formula).abs() < 1e-12);
        }
    }

    #[test]
    fn optimizer_reproduces_depolarized_value() {
        let cn = TwoQubitUnitary::cnot();
        for p in [0.0, 0.3, 0.8] {
            let r = optimize_input(&cn, &dep(cn, p), 0.5, &OptimizeConfig::default()).unwrap();
            assert!((r.p_guess - (0.5 + 3.0 * p / 8.0)).abs() < 1e-6);
            assert!(r.converged);
        }
    }

    #[test]
    fn optimizer_counterexample_matches_two_state_bound() {
        let cn = TwoQubitUnitary::cnot();
        let ch = counterexample_channel(0.5).unwrap();
        let cfg = OptimizeConfig {
            restarts: 8,
            ..OptimizeConfig::default()
        };
        let r = optimize_input(&cn, &ch, 0.5, &cfg).unwrap();
        let bound = two_branch_guess(&cn, &ch, 0.5, &r.argmax).unwrap();
        assert!((r.p_guess - bound).abs() < 1e-10);
        let at_phi = guess_for_pure_input(&cn, &ch, 0.5, &Ket2Q::phi_plus());
        assert!(r.p_guess >= at_phi - 1e-8);
    }

    #[test]
    fn report_cases() {
        let r = locc_vs_global_report(&TwoQubitUnitary::cnot(), 0.5, 0.5, 100_000, 1).unwrap();
        assert!((r.p_global - 0.6875).abs() < 1e-15);
        assert!((r.p_locc_analytic - 0.6875).abs() < 1e-12);
        assert!(r.equal);
        let r = locc_vs_global_report(&TwoQubitUnitary::swap(), 1.0, 0.5, 100_000, 2).unwrap();
        assert!((r.p_global - 0.875).abs() < 1e-15);
        assert!((r.p_locc_analytic - 0.875).abs() < 1e-12);
        for q in [0.2, 0.5, 0.8] {
            let r = locc_vs_global_report(&TwoQubitUnitary::swap(), 0.0, q, 10_000, 3).unwrap();
            let m = f64::max(q, 1.0 - q);
            assert!((r.p_global - m).abs() < 1e-15);
            assert!((r.p_locc_analytic - m).abs() < 1e-12);
        }
    }
}
