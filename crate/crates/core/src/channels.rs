//! Channel models: the depolarized counterpart `(1−p) U·U† + p I/4` of a gate
//! and general mixed-unitary channels `Σ p_i U_i·U_i†`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{c, kron2, mat2, DensityMatrix, Mat4, TwoQubitUnitary, I, ONE, TAU_NORM, ZERO};

#[derive(Clone, Debug, PartialEq)]
pub enum NamedGate {
    Cnot,
    Swap,
    Identity,
    Custom(TwoQubitUnitary),
}

impl NamedGate {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cnot" | "cx" => Ok(NamedGate::Cnot),
            "swap" => Ok(NamedGate::Swap),
            "identity" | "id" | "i" => Ok(NamedGate::Identity),
            other => Err(Error::Validation(format!("unknown gate name '{other}'"))),
        }
    }

    pub fn unitary(&self) -> TwoQubitUnitary {
        match self {
            NamedGate::Cnot => TwoQubitUnitary::cnot(),
            NamedGate::Swap => TwoQubitUnitary::swap(),
            NamedGate::Identity => TwoQubitUnitary::identity(),
            NamedGate::Custom(u) => *u,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NamedGate::Cnot => "cnot",
            NamedGate::Swap => "swap",
            NamedGate::Identity => "identity",
            NamedGate::Custom(_) => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChannelSpec {
    Depolarized {
        u: TwoQubitUnitary,
        p: f64,
    },
    MixedUnitary {
        branches: Vec<(TwoQubitUnitary, f64)>,
    },
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Validation(format!(
            "{name} must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

impl ChannelSpec {
    pub fn depolarized(u: TwoQubitUnitary, p: f64) -> Result<Self> {
        let ch = ChannelSpec::Depolarized { u, p };
        ch.validate()?;
        Ok(ch)
    }

    pub fn mixed_unitary(branches: Vec<(TwoQubitUnitary, f64)>) -> Result<Self> {
        let ch = ChannelSpec::MixedUnitary { branches };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelSpec::Depolarized { u, p } => {
                check_probability("noise fraction p", *p)?;
                TwoQubitUnitary::new(*u.matrix())?;
            }
            ChannelSpec::MixedUnitary { branches } => {
                if branches.is_empty() {
                    return Err(Error::Validation(
                        "mixed-unitary channel has no branches".into(),
                    ));
                }
                let mut total = 0.0;
                for (u, p) in branches {
                    if *p < 0.0 || !p.is_finite() {
                        return Err(Error::Validation(format!(
                            "branch probability must be nonnegative, got {p}"
                        )));
                    }
                    TwoQubitUnitary::new(*u.matrix())?;
                    total += p;
                }
                if (total - 1.0).abs() > TAU_NORM {
                    return Err(Error::Validation(format!(
                        "branch probabilities sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn apply_channel(ch: &ChannelSpec, rho: &DensityMatrix) -> Result<DensityMatrix> {
    ch.validate()?;
    let r = rho.matrix();
    let out = match ch {
        ChannelSpec::Depolarized { u, p } => {
            let m = u.matrix();
            m * r * m.adjoint() * c(1.0 - p, 0.0) + Mat4::identity() * c(p / 4.0, 0.0)
        }
        ChannelSpec::MixedUnitary { branches } => branches
            .iter()
            .map(|(u, p)| u.matrix() * r * u.matrix().adjoint() * c(*p, 0.0))
            .fold(Mat4::zeros(), |acc, x| acc + x),
    };
    Ok(DensityMatrix::new_unchecked(out))
}

/// One Monte-Carlo realisation of a channel use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Index into the channel's unitaries (always 0 for a depolarized channel).
    Unitary(usize),
    /// State replaced by `I/4`.
    Depolarize,
}

pub fn sample_channel_branch<R: Rng + ?Sized>(ch: &ChannelSpec, rng: &mut R) -> Branch {
    match ch {
        ChannelSpec::Depolarized { p, .. } => {
            if rng.random::<f64>() < *p {
                Branch::Depolarize
            } else {
                Branch::Unitary(0)
            }
        }
        ChannelSpec::MixedUnitary { branches } => {
            let x: f64 = rng.random();
            let mut acc = 0.0;
            for (i, (_, p)) in branches.iter().enumerate() {
                acc += p;
                if x < acc {
                    return Branch::Unitary(i);
                }
            }
            Branch::Unitary(branches.len() - 1)
        }
    }
}

/// `U' = U_c (S ⊗ S)` with `S = |0⟩⟨0| + i|1⟩⟨1|`.
pub fn counterexample_unitary() -> TwoQubitUnitary {
    let s = mat2([[ONE, ZERO], [ZERO, I]]);
    let m = TwoQubitUnitary::cnot().matrix() * kron2(&s, &s);
    TwoQubitUnitary::new_unchecked(m)
}

/// `(1−p) U_c·U_c† + p U'·U'†`; zero-weight branches are dropped.
pub fn counterexample_channel(p: f64) -> Result<ChannelSpec> {
    check_probability("p", p)?;
    let branches = [
        (TwoQubitUnitary::cnot(), 1.0 - p),
        (counterexample_unitary(), p),
    ]
    .into_iter()
    .filter(|(_, w)| *w > 0.0)
    .collect();
    ChannelSpec::mixed_unitary(branches)
}

// ---------------------------------------------------------------------------
// JSON gate / channel files
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GateJson {
    Name(String),
    Matrix { matrix: Vec<Vec<[f64; 2]>> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BranchJson {
    pub gate: GateJson,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseJson {
    Depolarized { p: f64 },
    MixedUnitary { branches: Vec<BranchJson> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChannelFile {
    pub gate: GateJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseJson>,
}

/// Gate plus the noisy channel it is tested against (if the file names one).
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedChannel {
    pub gate: NamedGate,
    pub channel: Option<ChannelSpec>,
}

impl GateJson {
    pub fn resolve(&self) -> Result<NamedGate> {
        match self {
            GateJson::Name(n) => NamedGate::from_name(n),
            GateJson::Matrix { matrix } => {
                if matrix.len() != 4 || matrix.iter().any(|r| r.len() != 4) {
                    return Err(Error::Dimension {
                        expected: "4x4 matrix".into(),
                        found: format!(
                            "{} rows with lengths {:?}",
                            matrix.len(),
                            matrix.iter().map(|r| r.len()).collect::<Vec<_>>()
                        ),
                    });
                }
                let m = Mat4::from_fn(|r, col| c(matrix[r][col][0], matrix[r][col][1]));
                Ok(NamedGate::Custom(TwoQubitUnitary::new(m)?))
            }
        }
    }

    pub fn from_unitary(u: &TwoQubitUnitary) -> Self {
        let m = u.matrix();
        GateJson::Matrix {
            matrix: (0..4)
                .map(|r| (0..4).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
                .collect(),
        }
    }
}

impl ChannelFile {
    pub fn parse(text: &str) -> Result<LoadedChannel> {
        let file: ChannelFile = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("malformed gate file: {e}")))?;
        file.resolve()
    }

    pub fn resolve(&self) -> Result<LoadedChannel> {
        let gate = self.gate.resolve()?;
        let channel = match &self.noise {
            None => None,
            Some(NoiseJson::Depolarized { p }) => {
                Some(ChannelSpec::depolarized(gate.unitary(), *p)?)
            }
            Some(NoiseJson::MixedUnitary { branches }) => {
                let b = branches
                    .iter()
                    .map(|br| Ok((br.gate.resolve()?.unitary(), br.p)))
                    .collect::<Result<Vec<_>>>()?;
                Some(ChannelSpec::mixed_unitary(b)?)
            }
        };
        Ok(LoadedChannel { gate, channel })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{haar_ket2, haar_two_qubit_unitary, max_abs_diff, tensor, Ket1Q, Ket2Q};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pure(k: &Ket2Q) -> DensityMatrix {
        DensityMatrix::pure(k)
    }

    #[test]
    fn depolarized_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = haar_two_qubit_unitary(&mut rng);
        let rho = pure(&haar_ket2(&mut rng));
        let out = apply_channel(&ChannelSpec::depolarized(u, 0.0).unwrap(), &rho).unwrap();
        let expect = u.matrix() * rho.matrix() * u.matrix().adjoint();
        assert!(max_abs_diff(out.matrix(), &expect) < 1e-14);
        let out = apply_channel(&ChannelSpec::depolarized(u, 1.0).unwrap(), &rho).unwrap();
        assert!(max_abs_diff(out.matrix(), DensityMatrix::maximally_mixed().matrix()) < 1e-15);
    }

    #[test]
    fn counterexample_fixes_00() {
        let ch = ChannelSpec::mixed_unitary(vec![
            (TwoQubitUnitary::cnot(), 0.5),
            (counterexample_unitary(), 0.5),
        ])
        .unwrap();
        let rho = pure(&Ket2Q::basis(0));
        let out = apply_channel(&ch, &rho).unwrap();
        assert!(max_abs_diff(out.matrix(), rho.matrix()) < 1e-15);
    }

    #[test]
    fn counterexample_channel_structure() {
        match counterexample_channel(0.0).unwrap() {
            ChannelSpec::MixedUnitary { branches } => {
                assert_eq!(branches.len(), 1);
                assert_eq!(branches[0].0, TwoQubitUnitary::cnot());
            }
            _ => panic!("expected mixed unitary"),
        }
        let up = counterexample_unitary();
        // U'|11⟩ = i² U_c|11⟩ = −|10⟩
        let out = up.apply(&Ket2Q::basis(3));
        assert!((out.amplitudes() + Ket2Q::basis(2).amplitudes()).norm() < 1e-15);
        // U'|φ⁺⟩ = U_c|φ⁻⟩ = |−⟩|0⟩
        let out = up.apply(&Ket2Q::phi_plus());
        let expect = tensor(&Ket1Q::minus(), &Ket1Q::zero()).unwrap();
        assert!((out.amplitudes() - expect.amplitudes()).norm() < 1e-15);
        assert!(counterexample_channel(1.5).is_err());
    }

    #[test]
    fn validation_errors() {
        assert!(ChannelSpec::depolarized(TwoQubitUnitary::cnot(), -0.1).is_err());
        assert!(ChannelSpec::depolarized(TwoQubitUnitary::cnot(), 1.1).is_err());
        assert!(ChannelSpec::mixed_unitary(vec![]).is_err());
        assert!(ChannelSpec::mixed_unitary(vec![(TwoQubitUnitary::cnot(), 0.7)]).is_err());
        assert!(ChannelSpec::mixed_unitary(vec![
            (TwoQubitUnitary::cnot(), 1.2),
            (TwoQubitUnitary::swap(), -0.2)
        ])
        .is_err());
    }

    #[test]
    fn branch_sampling_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch0 = ChannelSpec::depolarized(TwoQubitUnitary::cnot(), 0.0).unwrap();
        let ch1 = ChannelSpec::depolarized(TwoQubitUnitary::cnot(), 1.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_channel_branch(&ch0, &mut rng), Branch::Unitary(0));
            assert_eq!(sample_channel_branch(&ch1, &mut rng), Branch::Depolarize);
        }
    }

    #[test]
    fn branch_sampling_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ch = ChannelSpec::depolarized(TwoQubitUnitary::cnot(), 0.5).unwrap();
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| sample_channel_branch(&ch, &mut rng) == Branch::Unitary(0))
            .count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.002, "{f}");
    }

    #[test]
    fn branch_sampling_is_seeded() {
        let ch = counterexample_channel(0.3).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| sample_channel_branch(&ch, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn json_named_and_matrix_gates() {
        let lc = ChannelFile::parse(r#"{"gate":"cnot","noise":{"type":"depolarized","p":0.3}}"#)
            .unwrap();
        assert_eq!(lc.gate, NamedGate::Cnot);
        assert_eq!(
            lc.channel,
            Some(ChannelSpec::Depolarized {
                u: TwoQubitUnitary::cnot(),
                p: 0.3
            })
        );

        let gj = GateJson::from_unitary(&TwoQubitUnitary::swap());
        let text = serde_json::to_string(&ChannelFile {
            gate: gj,
            noise: None,
        })
        .unwrap();
        let lc = ChannelFile::parse(&text).unwrap();
        assert_eq!(lc.gate.unitary(), TwoQubitUnitary::swap());
        assert!(lc.channel.is_none());

        let text = r#"{"gate":"cnot","noise":{"type":"mixed_unitary","branches":[
            {"gate":"cnot","p":0.75},{"gate":"swap","p":0.25}]}}"#;
        let lc = ChannelFile::parse(text).unwrap();
        assert!(
            matches!(lc.channel, Some(ChannelSpec::MixedUnitary { ref branches }) if branches.len() == 2)
        );
    }

    #[test]
    fn json_rejects_bad_input() {
        assert!(ChannelFile::parse("{not json").is_err());
        assert!(ChannelFile::parse(r#"{"gate":"toffoli"}"#).is_err());
        let bad = r#"{"gate":{"matrix":[[[2,0],[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0],[0,0]],
            [[0,0],[0,0],[1,0],[0,0]],[[0,0],[0,0],[0,0],[1,0]]]}}"#;
        assert!(matches!(
            ChannelFile::parse(bad),
            Err(Error::NotUnitary { .. })
        ));
        let short = r#"{"gate":{"matrix":[[[1,0]]]}}"#;
        assert!(matches!(
            ChannelFile::parse(short),
            Err(Error::Dimension { .. })
        ));
    }
}
