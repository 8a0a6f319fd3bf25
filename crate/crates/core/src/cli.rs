//! `gatecheck` command-line front end.
//!
//! [`Cli`] is the clap definition; it lowers to a [`RunConfig`], which
//! [`run`] executes. Reports are JSON (numbers written with 17 significant
//! digits) or, for `simulate` only, a CSV outcome table.

use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::channels::{apply_channel, counterexample_channel, ChannelFile, ChannelSpec, NamedGate};
use crate::discrimination::{
    build_locc_protocol, closed_form_guess, guess_for_pure_input, helstrom, optimal_strategy,
    optimize_input, protocol_guess_exact, simulate, two_branch_guess, DiscriminationTask,
    LoccProtocol, OptimizeConfig, SimulationResult, Strategy,
};
use crate::error::{Error, Result};
use crate::kak::kak_decompose;
use crate::product_finder::{find_product_preserving_state, verify_product_preservation, TAU_PROD};
use crate::qmath::{max_abs_diff, DensityMatrix, Ket1Q, Ket2Q, Mat2, Mat4, TwoQubitUnitary};

pub const DEFAULT_SHOTS: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Canonical decomposition of the gate.
    Decompose,
    /// Product input whose image under the gate is also product.
    FindState,
    /// Global and local guessing probabilities.
    Discriminate,
    /// Monte-Carlo run of the local protocol.
    Simulate,
    /// Estimate the noise fraction from shots of the noisy channel.
    EstimateNoise,
    /// Probe the mixed-unitary counterexample channel.
    Counterexample,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Decompose => "decompose",
            Command::FindState => "find-state",
            Command::Discriminate => "discriminate",
            Command::Simulate => "simulate",
            Command::EstimateNoise => "estimate-noise",
            Command::Counterexample => "counterexample",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "gatecheck", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Gate name (cnot, swap, identity) or path to a gate/channel JSON file.
    #[arg(long, global = true, default_value = "cnot")]
    pub gate: String,
    /// Depolarizing noise fraction.
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Prior probability of the noisy channel.
    #[arg(long, global = true)]
    pub q: Option<f64>,
    /// Number of simulated shots [default: 100000]
    #[arg(long, global = true)]
    pub shots: Option<u64>,
    /// RNG seed; a random seed is drawn and logged when absent
    #[arg(long, global = true, env = "GATECHECK_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Schmidt-coefficient tolerance for product certificates.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub gate: String,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub tol: Option<f64>,
}

impl RunConfig {
    pub fn new(command: Command, gate: &str) -> Self {
        RunConfig {
            command,
            gate: gate.to_string(),
            p: None,
            q: None,
            shots: None,
            seed: None,
            output: None,
            format: Format::Json,
            tol: None,
        }
    }
}

impl From<Cli> for RunConfig {
    fn from(c: Cli) -> Self {
        RunConfig {
            command: c.command,
            gate: c.gate,
            p: c.p,
            q: c.q,
            shots: c.shots,
            seed: c.seed,
            output: c.out,
            format: c.format,
            tol: c.tol,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// Report text on success.
    pub report: Option<String>,
    /// Diagnostic on failure.
    pub diagnostic: Option<String>,
    /// Seed actually used, for commands that draw randomness.
    pub seed: Option<u64>,
}

/// Executes `config`; writes the report to `config.output` when set.
pub fn run(config: &RunConfig) -> RunOutcome {
    let mut seed_used = None;
    let result = execute(config, &mut seed_used).and_then(|doc| {
        if let Some(path) = &config.output {
            std::fs::write(path, &doc)
                .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(doc)
    });
    match result {
        Ok(doc) => RunOutcome {
            exit_code: 0,
            report: Some(doc),
            diagnostic: None,
            seed: seed_used,
        },
        Err(e) => RunOutcome {
            exit_code: e.exit_code(),
            report: None,
            diagnostic: Some(e.to_string()),
            seed: seed_used,
        },
    }
}

// ---------------------------------------------------------------------------
// JSON output
// ---------------------------------------------------------------------------

/// Pretty JSON with every float written as `{:.16e}`; refuses non-finite
/// values instead of emitting `null`.
struct ExactFloats<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if !value.is_finite() {
            return Err(io::Error::other(format!("non-finite number {value}")));
        }
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    // serde_json routes NaN and infinities here; reports never contain a
    // legitimate null (absent fields are skipped).
    fn write_null<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        Err(io::Error::other("non-finite number or null in report"))
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = ExactFloats(serde_json::ser::PrettyFormatter::new());
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Internal(format!("report serialization failed: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
}

type JsonMatrix = Vec<Vec<[f64; 2]>>;

fn mat4_json(m: &Mat4) -> JsonMatrix {
    (0..4)
        .map(|r| (0..4).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
        .collect()
}

fn mat2_json(m: &Mat2) -> JsonMatrix {
    (0..2)
        .map(|r| (0..2).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
        .collect()
}

fn ket1_json(k: &Ket1Q) -> Vec<[f64; 2]> {
    k.amplitudes().iter().map(|z| [z.re, z.im]).collect()
}

fn ket2_json(k: &Ket2Q) -> Vec<[f64; 2]> {
    k.amplitudes().iter().map(|z| [z.re, z.im]).collect()
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DecomposeReport {
    command: &'static str,
    gate: String,
    lambdas: [f64; 4],
    global_phase: f64,
    u_a: JsonMatrix,
    u_b: JsonMatrix,
    v_a: JsonMatrix,
    v_b: JsonMatrix,
    reconstruction_error: f64,
}

#[derive(Serialize)]
struct ProductJson {
    a: Vec<[f64; 2]>,
    b: Vec<[f64; 2]>,
    state: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct FindStateReport {
    command: &'static str,
    gate: String,
    input: ProductJson,
    output: ProductJson,
    input_schmidt_residual: f64,
    output_schmidt_residual: f64,
    tol: f64,
    certified: bool,
    lambdas: [f64; 4],
    squared_magic_amplitudes: [f64; 4],
}

#[derive(Serialize)]
struct ProtocolJson {
    input_a: Vec<[f64; 2]>,
    input_b: Vec<[f64; 2]>,
    basis_a: [Vec<[f64; 2]>; 2],
    basis_b: [Vec<[f64; 2]>; 2],
    accept: [usize; 2],
}

impl From<&LoccProtocol> for ProtocolJson {
    fn from(p: &LoccProtocol) -> Self {
        ProtocolJson {
            input_a: ket1_json(&p.input_a),
            input_b: ket1_json(&p.input_b),
            basis_a: [ket1_json(&p.basis_a[0]), ket1_json(&p.basis_a[1])],
            basis_b: [ket1_json(&p.basis_b[0]), ket1_json(&p.basis_b[1])],
            accept: [p.accept.0, p.accept.1],
        }
    }
}

#[derive(Serialize)]
struct DiscriminateReport {
    command: &'static str,
    gate: String,
    noise: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    q: f64,
    strategy: Strategy,
    /// Closed form for depolarized noise, optimizer value otherwise.
    p_global: f64,
    /// Helstrom value with the protocol input fed to the box.
    p_helstrom_at_input: f64,
    p_locc: f64,
    gap: f64,
    protocol: ProtocolJson,
    /// `Π₁` of the Helstrom measurement at the protocol input.
    povm_pi1: JsonMatrix,
    accept_projector_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    gate: String,
    noise: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    q: f64,
    p_locc_exact: f64,
    protocol: ProtocolJson,
    #[serde(flatten)]
    result: SimulationResult,
}

#[derive(Serialize)]
struct EstimateReport {
    command: &'static str,
    gate: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_true: Option<f64>,
    shots: u64,
    seed: u64,
    f1: f64,
    p_hat: f64,
    p_hat_raw: f64,
    p_hat_ci95: (f64, f64),
}

#[derive(Serialize)]
struct CounterexampleReport {
    command: &'static str,
    p: f64,
    q: f64,
    seed: u64,
    restarts: usize,
    optimizer_value: f64,
    argmax: Vec<[f64; 2]>,
    converged: bool,
    restart_spread: f64,
    two_state_bound_at_argmax: f64,
    value_at_phi_plus: f64,
    /// `½ + 3p/8`, the value claimed for this channel in the literature.
    claimed_value: f64,
    /// Depolarized-noise value at the same `p`, `q`.
    depolarized_value: f64,
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

fn load_gate(spec: &str) -> Result<(String, NamedGate, Option<ChannelSpec>)> {
    if let Ok(g) = NamedGate::from_name(spec) {
        return Ok((g.label().to_string(), g, None));
    }
    let path = std::path::Path::new(spec);
    if !path.exists() {
        return Err(Error::Validation(format!(
            "'{spec}' is neither a known gate name nor an existing file"
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {spec}: {e}")))?;
    let loaded = ChannelFile::parse(&text)?;
    Ok((loaded.gate.label().to_string(), loaded.gate, loaded.channel))
}

fn resolve_seed(config: &RunConfig, used: &mut Option<u64>) -> u64 {
    let seed = config.seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("gatecheck: no seed given, using random seed {s}");
        s
    });
    *used = Some(seed);
    seed
}

fn require_q(config: &RunConfig) -> Result<f64> {
    config
        .q
        .ok_or_else(|| Error::Validation(format!("{} requires --q", config.command.name())))
}

/// Noisy channel from `--p` or from the gate file; exactly one source.
fn resolve_channel(
    config: &RunConfig,
    gate: &TwoQubitUnitary,
    file_channel: Option<ChannelSpec>,
) -> Result<ChannelSpec> {
    match (config.p, file_channel) {
        (Some(_), Some(_)) => Err(Error::Validation(
            "noise given both by --p and in the gate file".into(),
        )),
        (Some(p), None) => ChannelSpec::depolarized(*gate, p),
        (None, Some(ch)) => Ok(ch),
        (None, None) => Err(Error::Validation(format!(
            "{} requires --p or a gate file with a noise section",
            config.command.name()
        ))),
    }
}

fn noise_label(ch: &ChannelSpec) -> (&'static str, Option<f64>) {
    match ch {
        ChannelSpec::Depolarized { p, .. } => ("depolarized", Some(*p)),
        ChannelSpec::MixedUnitary { .. } => ("mixed_unitary", None),
    }
}

fn strategy_for(ch: &ChannelSpec, q: f64) -> Strategy {
    match ch {
        ChannelSpec::Depolarized { p, .. } => optimal_strategy(*p, q),
        ChannelSpec::MixedUnitary { .. } => Strategy::Measure,
    }
}

fn check_tol(tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Validation(format!(
            "--tol must lie in (0, 1), got {tol}"
        )));
    }
    Ok(tol)
}

fn execute(config: &RunConfig, seed_used: &mut Option<u64>) -> Result<String> {
    if config.format == Format::Csv && config.command != Command::Simulate {
        return Err(Error::Validation(
            "csv output is only available for simulate".into(),
        ));
    }
    let tol = check_tol(config.tol.unwrap_or(TAU_PROD))?;
    if config.command == Command::Counterexample {
        return counterexample(config, seed_used);
    }
    let (label, gate, file_channel) = load_gate(&config.gate)?;
    let u = gate.unitary();
    match config.command {
        Command::Decompose => {
            let d = kak_decompose(&u)?;
            to_json(&DecomposeReport {
                command: "decompose",
                gate: label,
                lambdas: d.lambdas,
                global_phase: d.global_phase,
                u_a: mat2_json(d.u_a.matrix()),
                u_b: mat2_json(d.u_b.matrix()),
                v_a: mat2_json(d.v_a.matrix()),
                v_b: mat2_json(d.v_b.matrix()),
                reconstruction_error: max_abs_diff(&d.reconstruct(), u.matrix()),
            })
        }
        Command::FindState => {
            let pair = find_product_preserving_state(&u)?;
            let psi = pair.input.ket();
            let check = verify_product_preservation(&u, &psi, tol);
            if !check.pass {
                return Err(Error::Construction {
                    lambdas: pair.kak.lambdas,
                    v: pair.v,
                    input_residual: check.input_schmidt2,
                    output_residual: check.output_schmidt2,
                });
            }
            let prod = |k: &crate::product_finder::ProductKet| ProductJson {
                a: ket1_json(&k.a),
                b: ket1_json(&k.b),
                state: ket2_json(&k.ket()),
            };
            to_json(&FindStateReport {
                command: "find-state",
                gate: label,
                input: prod(&pair.input),
                output: prod(&pair.output),
                input_schmidt_residual: check.input_schmidt2,
                output_schmidt_residual: check.output_schmidt2,
                tol,
                certified: check.pass,
                lambdas: pair.kak.lambdas,
                squared_magic_amplitudes: pair.v,
            })
        }
        Command::Discriminate => {
            let q = require_q(config)?;
            let channel = resolve_channel(config, &u, file_channel)?;
            let task = DiscriminationTask::new(u, channel.clone(), q)?;
            let protocol = build_locc_protocol(&u)?;
            let strategy = strategy_for(&channel, q);
            let p_locc = protocol_guess_exact(&task, &protocol, strategy);
            let psi = protocol.input();
            let rho0 = DensityMatrix::pure(&u.apply(&psi));
            let rho1 = apply_channel(&channel, &DensityMatrix::pure(&psi))?;
            let h = helstrom(&rho0, &rho1, q)?;
            let (noise, p) = noise_label(&channel);
            let (p_global, seed) = match p {
                Some(p) => (closed_form_guess(p, q)?, None),
                None => {
                    let seed = resolve_seed(config, seed_used);
                    let cfg = OptimizeConfig {
                        seed,
                        ..OptimizeConfig::default()
                    };
                    let r = optimize_input(&u, &channel, q, &cfg)?;
                    (r.p_guess, Some(seed))
                }
            };
            to_json(&DiscriminateReport {
                command: "discriminate",
                gate: label,
                noise,
                p,
                q,
                strategy,
                p_global,
                p_helstrom_at_input: h.p_guess,
                p_locc,
                gap: p_global - p_locc,
                protocol: (&protocol).into(),
                povm_pi1: mat4_json(&h.povm.pi1),
                accept_projector_deviation: max_abs_diff(&h.povm.pi1, &protocol.accept_projector()),
                seed,
            })
        }
        Command::Simulate => {
            let q = require_q(config)?;
            let channel = resolve_channel(config, &u, file_channel)?;
            let shots = config.shots.unwrap_or(DEFAULT_SHOTS);
            let seed = resolve_seed(config, seed_used);
            let task = DiscriminationTask::new(u, channel.clone(), q)?;
            let protocol = build_locc_protocol(&u)?;
            let strategy = strategy_for(&channel, q);
            let result = simulate(&task, &protocol, shots, seed, strategy)?;
            if config.format == Format::Csv {
                return Ok(outcome_csv(&result));
            }
            let (noise, p) = noise_label(&channel);
            to_json(&SimulateReport {
                command: "simulate",
                gate: label,
                noise,
                p,
                q,
                p_locc_exact: protocol_guess_exact(&task, &protocol, strategy),
                protocol: (&protocol).into(),
                result,
            })
        }
        Command::EstimateNoise => {
            let channel = resolve_channel(config, &u, file_channel)?;
            let shots = config.shots.unwrap_or(DEFAULT_SHOTS);
            let seed = resolve_seed(config, seed_used);
            let r = crate::discrimination::estimate_noise_by_simulation(&u, &channel, shots, seed)?;
            to_json(&EstimateReport {
                command: "estimate-noise",
                gate: label,
                p_true: noise_label(&channel).1,
                shots,
                seed,
                f1: r.f1,
                p_hat: r.p_hat,
                p_hat_raw: r.p_hat_raw,
                p_hat_ci95: r.p_hat_ci95,
            })
        }
        Command::Counterexample => unreachable!("handled above"),
    }
}

fn counterexample(config: &RunConfig, seed_used: &mut Option<u64>) -> Result<String> {
    let p = config
        .p
        .ok_or_else(|| Error::Validation("counterexample requires --p".into()))?;
    let q = config.q.unwrap_or(0.5);
    let seed = resolve_seed(config, seed_used);
    let gate = TwoQubitUnitary::cnot();
    let channel = counterexample_channel(p)?;
    let cfg = OptimizeConfig {
        seed,
        ..OptimizeConfig::default()
    };
    let r = optimize_input(&gate, &channel, q, &cfg)?;
    let spread = r
        .restart_values
        .iter()
        .map(|v| r.p_guess - v)
        .fold(0.0, f64::max);
    let bound = if p > 0.0 {
        two_branch_guess(&gate, &channel, q, &r.argmax)?
    } else {
        guess_for_pure_input(&gate, &channel, q, &r.argmax)
    };
    to_json(&CounterexampleReport {
        command: "counterexample",
        p,
        q,
        seed,
        restarts: cfg.restarts,
        optimizer_value: r.p_guess,
        argmax: ket2_json(&r.argmax),
        converged: r.converged,
        restart_spread: spread,
        two_state_bound_at_argmax: bound,
        value_at_phi_plus: guess_for_pure_input(&gate, &channel, q, &Ket2Q::phi_plus()),
        claimed_value: 0.5 + 3.0 * p / 8.0,
        depolarized_value: closed_form_guess(p, q)?,
    })
}

/// `truth,outcome_a,outcome_b,count` rows.
pub fn outcome_csv(r: &SimulationResult) -> String {
    let mut s = String::from("truth,outcome_a,outcome_b,count\n");
    for (t, name) in ["unitary", "noisy"].iter().enumerate() {
        for k in 0..4 {
            s.push_str(&format!("{name},{},{},{}\n", k / 2, k % 2, r.counts[t][k]));
        }
    }
    s
}
