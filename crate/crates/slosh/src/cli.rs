//! Batch front-end: JSON config, subcommand dispatch and artifact output.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage/config error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::assembly::{assemble, Bond};
use crate::eigensolve::{
    max_relative_omega_diff, solve_coupled_with, solve_reduced_with, SolveContext, Spectrum,
};
use crate::error::{Result, SloshError};
use crate::geometry::{refine, ContainerSpec, MeshPair};
use crate::io;
use crate::perturbation::{
    bond_sweep, simplicity_gap, slope_fd_fem, slope_formula, PerturbationReport, DEFAULT_EPSILONS,
    FD_COMPARE_GAP,
};
use crate::verify::{run_suite, FaultInjection};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Coupled,
    Reduced,
    Both,
}

impl Formulation {
    fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coupled" => Ok(Formulation::Coupled),
            "reduced" => Ok(Formulation::Reduced),
            "both" => Ok(Formulation::Both),
            other => Err(SloshError::Config(format!(
                "unknown formulation '{other}' (expected coupled|reduced|both)"
            ))),
        }
    }
}

/// Resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub container: ContainerSpec,
    pub bond: Bond,
    pub modes: usize,
    pub layers: Option<usize>,
    pub refinements: usize,
    pub formulation: Formulation,
    pub output_dir: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    container: RawContainer,
    #[serde(rename = "Bo")]
    bo: serde_json::Value,
    modes: usize,
    #[serde(default)]
    layers: Option<usize>,
    #[serde(default)]
    refinements: usize,
    #[serde(default)]
    formulation: Option<String>,
    #[serde(default)]
    output_dir: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
enum RawContainer {
    Disk {
        radius: f64,
        depth: f64,
        resolution: usize,
    },
    Rectangle {
        lx: f64,
        ly: f64,
        depth: f64,
        resolution: usize,
    },
}

fn parse_bond_value(v: &serde_json::Value) -> Result<Bond> {
    match v {
        serde_json::Value::String(s) => Bond::parse(s),
        serde_json::Value::Number(n) => {
            let x = n
                .as_f64()
                .ok_or_else(|| SloshError::Config("Bo is not a number".into()))?;
            let b = Bond::Finite(x);
            b.validate()
                .map_err(|e| SloshError::Config(e.to_string()))?;
            Ok(b)
        }
        _ => Err(SloshError::Config(
            "Bo must be a positive number or the literal \"inf\"".into(),
        )),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)
            .map_err(|e| SloshError::Config(format!("config parse error: {e}")))?;
        let container = match raw.container {
            RawContainer::Disk {
                radius,
                depth,
                resolution,
            } => ContainerSpec::disk(radius, depth, resolution),
            RawContainer::Rectangle {
                lx,
                ly,
                depth,
                resolution,
            } => ContainerSpec::rectangle(lx, ly, depth, resolution),
        };
        container
            .validate()
            .map_err(|e| SloshError::Config(e.to_string()))?;
        let bond = parse_bond_value(&raw.bo)?;
        if raw.modes < 1 {
            return Err(SloshError::Config("modes must be >= 1".into()));
        }
        if raw.refinements > 5 {
            return Err(SloshError::Config(
                "refinements capped at 5 (desk-scale guard)".into(),
            ));
        }
        let formulation = match raw.formulation.as_deref() {
            Some(s) => Formulation::parse(s)?,
            None => Formulation::Reduced,
        };
        Ok(RunConfig {
            container,
            bond,
            modes: raw.modes,
            layers: raw.layers,
            refinements: raw.refinements,
            formulation,
            output_dir: PathBuf::from(raw.output_dir.unwrap_or_else(|| "out".into())),
            seed: raw.seed.unwrap_or(0),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SloshError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Build the mesh at the configured refinement level.
    pub fn build_mesh(&self) -> Result<MeshPair> {
        let mut pair = match self.layers {
            Some(l) => MeshPair::generate_with_layers(&self.container, l)?,
            None => MeshPair::generate(&self.container)?,
        };
        for _ in 0..self.refinements {
            pair = refine(&pair)?;
        }
        Ok(pair)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "slosh",
    about = "Sloshing eigenfrequencies of vertical-walled containers with surface tension"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the number of modes.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Override the Bond number (a positive value or `inf`).
    #[arg(long)]
    pub bo: Option<String>,
    /// Override the formulation (coupled|reduced|both).
    #[arg(long)]
    pub formulation: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve for the lowest sloshing modes and write CSV / VTK artifacts.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Also dump the assembled operators in MatrixMarket format.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Run the full identity-check suite; exit 0 only if every check passes.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Test hook: corrupt one computed mode to exercise the checks.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Sweep the Bond number with modal tracking.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated Bond values, e.g. `1,10,100,inf`.
        #[arg(long = "bo-list")]
        bo_list: String,
    },
    /// First-order Bond slope: formula against finite differences.
    Perturb {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated decreasing eps ladder.
        #[arg(long)]
        eps: Option<String>,
    },
    /// Refinement study of the fundamental mode against the analytic oracle.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of uniform refinements (>= 1).
        #[arg(long)]
        refinements: Option<usize>,
    },
    /// Compare fundamental frequencies of two depths over the same surface.
    Monotonicity {
        #[command(flatten)]
        common: CommonArgs,
        /// Second (shallower) depth; defaults to half the configured depth.
        #[arg(long)]
        depth2: Option<f64>,
    },
}

fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(m) = common.modes {
        if m < 1 {
            return Err(SloshError::Config("modes must be >= 1".into()));
        }
        cfg.modes = m;
    }
    if let Some(bo) = &common.bo {
        cfg.bond = Bond::parse(bo).map_err(|e| SloshError::Config(e.to_string()))?;
    }
    if let Some(f) = &common.formulation {
        cfg.formulation = Formulation::parse(f)?;
    }
    Ok(cfg)
}

fn solve_pair(
    cfg: &RunConfig,
    pair: &MeshPair,
) -> Result<(crate::assembly::OperatorSet, Spectrum, Option<f64>)> {
    let ops = assemble(pair, cfg.bond)?;
    let ctx = SolveContext::new(&ops)?;
    let (spectrum, equivalence) = match cfg.formulation {
        Formulation::Reduced => (solve_reduced_with(&ctx, &ops, cfg.modes)?, None),
        Formulation::Coupled => (solve_coupled_with(&ctx, &ops, cfg.modes)?, None),
        Formulation::Both => {
            let reduced = solve_reduced_with(&ctx, &ops, cfg.modes)?;
            let coupled = solve_coupled_with(&ctx, &ops, cfg.modes)?;
            let diff = max_relative_omega_diff(&coupled, &reduced);
            (reduced, Some(diff))
        }
    };
    Ok((ops, spectrum, equivalence))
}

pub fn cmd_solve(common: &CommonArgs, dump_matrices: bool) -> Result<i32> {
    let cfg = resolve(common)?;
    let pair = cfg.build_mesh()?;
    let (ops, spectrum, equivalence) = solve_pair(&cfg, &pair)?;
    let out = &cfg.output_dir;

    io::write_spectrum_csv(&out.join("spectrum.csv"), &spectrum, &ops)?;
    if dump_matrices {
        io::write_matrix_market(&out.join("volume_stiffness.mtx"), &ops.volume_stiffness)?;
        io::write_matrix_market(&out.join("surface_mass.mtx"), &ops.surface_mass)?;
        io::write_matrix_market(&out.join("surface_stiffness.mtx"), &ops.surface_stiffness)?;
    }
    io::write_vtk_surface(&out.join("surface_mesh.vtk"), &pair.surface, &[])?;
    io::write_vtk_volume(&out.join("volume_mesh.vtk"), &pair.volume, &[])?;
    for (i, mode) in spectrum.modes.iter().enumerate() {
        io::write_vtk_volume(
            &out.join(format!("mode_{:03}_phi.vtk", i + 1)),
            &pair.volume,
            &[("phi", mode.phi.as_slice())],
        )?;
        io::write_vtk_surface(
            &out.join(format!("mode_{:03}_xi.vtk", i + 1)),
            &pair.surface,
            &[("xi", mode.xi.as_slice())],
        )?;
    }

    // energy report per mode
    let mut energies = Vec::new();
    for (i, m) in spectrum.modes.iter().enumerate() {
        let r = crate::verify::check_energy(m, &ops)?;
        energies.push(serde_json::json!({
            "mode_index": i + 1,
            "omega": m.omega,
            "D_energy": r.dirichlet,
            "S_energy": r.surface,
            "coupling": r.coupling,
            "omega_check": r.omega_check,
        }));
    }
    let mut report = serde_json::json!({
        "Bo": cfg.bond.to_string(),
        "modes": energies,
        "mesh_fingerprint": format!("{:016x}", spectrum.mesh_fingerprint),
    });
    if let Some(diff) = equivalence {
        report["max_relative_formulation_diff"] = serde_json::json!(diff);
        println!("formulation equivalence: max relative omega diff {diff:e}");
    }
    io::atomic_write(
        &out.join("energy_report.json"),
        serde_json::to_string_pretty(&report).unwrap().as_bytes(),
    )?;

    for (i, m) in spectrum.modes.iter().enumerate() {
        println!("mode {:2}  omega {:.12}", i + 1, m.omega);
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(common: &CommonArgs, inject: Option<&str>) -> Result<i32> {
    let cfg = resolve(common)?;
    let fault = match inject {
        None => None,
        Some("sign-flip") => Some(FaultInjection::SignFlip),
        Some(other) => {
            return Err(SloshError::Config(format!("unknown fault '{other}'")));
        }
    };
    let pair = cfg.build_mesh()?;
    let outcome = run_suite(&pair, cfg.bond, cfg.modes, cfg.seed, fault)?;
    for c in &outcome.checks {
        println!("{}", c.format());
    }
    io::atomic_write(
        &cfg.output_dir.join("verify_report.json"),
        serde_json::to_string_pretty(&outcome.to_json())
            .unwrap()
            .as_bytes(),
    )?;
    Ok(if outcome.all_pass() {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAIL
    })
}

fn parse_bond_list(s: &str) -> Result<Vec<Bond>> {
    s.split(',')
        .map(|t| Bond::parse(t).map_err(|e| SloshError::Config(e.to_string())))
        .collect()
}

pub fn cmd_sweep(common: &CommonArgs, bo_list: &str) -> Result<i32> {
    let cfg = resolve(common)?;
    let bonds = parse_bond_list(bo_list)?;
    let pair = cfg.build_mesh()?;
    let table = bond_sweep(&pair, &bonds, cfg.modes)?;
    io::write_sweep_csv(&cfg.output_dir.join("sweep.csv"), &table)?;
    println!(
        "sweep over {} Bond values: monotone approach to the zero-tension limit: {}",
        bonds.len(),
        if table.monotone_from_above {
            "yes"
        } else {
            "NO"
        }
    );
    Ok(EXIT_OK)
}

pub fn cmd_perturb(common: &CommonArgs, eps: Option<&str>) -> Result<i32> {
    let cfg = resolve(common)?;
    let eps: Vec<f64> = match eps {
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| SloshError::Config(format!("bad eps '{t}': {e}")))
            })
            .collect::<Result<_>>()?,
        None => DEFAULT_EPSILONS.to_vec(),
    };
    let pair = cfg.build_mesh()?;
    let ops = assemble(&pair, Bond::Infinite)?;
    let ctx = SolveContext::new(&ops)?;
    let window = cfg.modes + 2;
    let spectrum = solve_reduced_with(&ctx, &ops, window)?;

    let mut reports = Vec::new();
    for idx in 0..cfg.modes {
        if simplicity_gap(&spectrum, idx) <= FD_COMPARE_GAP {
            continue; // doublet member, excluded from differencing
        }
        let formula = slope_formula(&spectrum, idx, &ops)?;
        let fd = slope_fd_fem(&pair, idx, &eps)?;
        reports.push(PerturbationReport {
            mode_index: idx,
            omega0: spectrum.modes[idx].omega,
            slope_formula: formula,
            slope_fd: fd.slope,
            epsilon_values: eps.clone(),
            rel_error: (formula - fd.slope).abs() / fd.slope.abs(),
            fd_order_estimate: fd.order_estimate,
        });
    }
    if reports.is_empty() {
        return Err(SloshError::NotSimple(
            "no simple mode in the requested window".into(),
        ));
    }
    io::write_perturbation_csv(&cfg.output_dir.join("perturbation.csv"), &reports)?;
    for r in &reports {
        println!(
            "mode {:2}  omega0 {:.8}  slope {:.8}  fd {:.8}  rel {:.2e}",
            r.mode_index + 1,
            r.omega0,
            r.slope_formula,
            r.slope_fd,
            r.rel_error
        );
    }
    Ok(EXIT_OK)
}

/// Analytic fundamental frequency of the configured container.
fn oracle_omega(cfg: &RunConfig) -> Result<f64> {
    match cfg.container.shape {
        crate::geometry::ContainerShape::Disk { radius } => {
            let p = crate::analytic::cylinder_dispersion(
                1,
                1,
                cfg.container.depth / radius,
                scaled_bond(cfg.bond, radius)?,
            )?;
            // the dispersion is stated for unit radius; rescale back
            Ok((p.omega_sq / radius).sqrt())
        }
        crate::geometry::ContainerShape::Rectangle { lx, ly } => {
            let p = crate::analytic::box_fundamental(lx, ly, cfg.container.depth, cfg.bond)?;
            Ok(p.omega())
        }
    }
}

/// Radius scaling of the Bond number for the unit-radius dispersion form.
fn scaled_bond(bond: Bond, radius: f64) -> Result<Bond> {
    Ok(match bond {
        Bond::Infinite => Bond::Infinite,
        Bond::Finite(b) => Bond::Finite(b * radius * radius),
    })
}

pub fn cmd_convergence(common: &CommonArgs, refinements: Option<usize>) -> Result<i32> {
    let mut cfg = resolve(common)?;
    if let Some(r) = refinements {
        cfg.refinements = r;
    }
    if cfg.refinements < 1 {
        return Err(SloshError::Config(
            "convergence study needs refinements >= 1".into(),
        ));
    }
    if cfg.refinements > 5 {
        return Err(SloshError::Config(
            "refinements capped at 5 (desk-scale guard)".into(),
        ));
    }
    let oracle = oracle_omega(&cfg)?;
    let mut pair = match cfg.layers {
        Some(l) => MeshPair::generate_with_layers(&cfg.container, l)?,
        None => MeshPair::generate(&cfg.container)?,
    };
    let mut rows = Vec::new();
    for level in 0..=cfg.refinements {
        let ops = assemble(&pair, cfg.bond)?;
        let spectrum = crate::eigensolve::solve_reduced(&ops, 1)?;
        let omega = spectrum.modes[0].omega;
        rows.push(io::ConvergenceRow {
            level,
            n_surface: ops.n_surface(),
            omega,
            oracle,
            rel_error: (omega - oracle).abs() / oracle,
        });
        if level < cfg.refinements {
            pair = refine(&pair)?;
        }
    }
    let order = estimate_order(&rows);
    io::write_convergence_csv(&cfg.output_dir.join("convergence.csv"), &rows, order)?;
    if let crate::geometry::ContainerShape::Disk { radius } = cfg.container.shape {
        // companion dispersion table for the oracle indices
        let mut points = Vec::new();
        for n in 0..4 {
            for m in 1..=2 {
                points.push(crate::analytic::cylinder_dispersion(
                    n,
                    m,
                    cfg.container.depth / radius,
                    scaled_bond(cfg.bond, radius)?,
                )?);
            }
        }
        io::write_dispersion_csv(&cfg.output_dir.join("dispersion.csv"), &points)?;
    }
    for r in &rows {
        println!(
            "level {}  n_surface {:5}  omega1 {:.8}  rel_error {:.3e}",
            r.level, r.n_surface, r.omega, r.rel_error
        );
    }
    println!("estimated order {order:.2} (oracle omega1 {oracle:.8})");
    if order < 1.0 {
        return Err(SloshError::SolverFailure(format!(
            "convergence order {order:.2} below 1.0"
        )));
    }
    Ok(EXIT_OK)
}

/// Log-ratio slope over the last three levels (or two, if that is all).
pub fn estimate_order(rows: &[io::ConvergenceRow]) -> f64 {
    let n = rows.len();
    if n < 2 {
        return f64::NAN;
    }
    let lo = n.saturating_sub(3);
    let e0 = rows[lo].rel_error.max(1e-300);
    let e1 = rows[n - 1].rel_error.max(1e-300);
    (e0 / e1).log2() / (n - 1 - lo) as f64
}

pub fn cmd_monotonicity(common: &CommonArgs, depth2: Option<f64>) -> Result<i32> {
    let cfg = resolve(common)?;
    let h_deep = cfg.container.depth;
    let h_shallow = depth2.unwrap_or(0.5 * h_deep);
    if !(h_shallow > 0.0 && h_shallow <= h_deep) {
        return Err(SloshError::Config(
            "second depth must be positive and not exceed the configured depth".into(),
        ));
    }
    let surface = crate::geometry::mesh_surface(&cfg.container)?;
    let layers_per_unit = match cfg.layers {
        Some(l) => l as f64 / h_deep,
        None => cfg.container.default_layers() as f64 / h_deep,
    };
    match crate::verify::check_monotonicity(&surface, h_shallow, h_deep, layers_per_unit, cfg.bond)
    {
        Ok(r) => {
            println!(
                "CHECK domain_monotonicity PASS residual={:e} ref=domain-monotonicity",
                (r.omega_deep - r.omega_shallow).max(0.0)
            );
            println!(
                "omega1(h={h_shallow}) = {:.10}  <=  omega1(h={h_deep}) = {:.10}",
                r.omega_shallow, r.omega_deep
            );
            Ok(EXIT_OK)
        }
        Err(SloshError::IdentityViolation { residual, .. }) => {
            println!(
                "CHECK domain_monotonicity FAIL residual={residual:e} ref=domain-monotonicity"
            );
            Ok(EXIT_VERIFY_FAIL)
        }
        Err(e) => Err(e),
    }
}

/// Map an error to the documented exit code, printing the diagnostic.
pub fn exit_code_for(e: &SloshError) -> i32 {
    match e {
        SloshError::Config(_) | SloshError::InvalidSpec(_) | SloshError::Io(_) => EXIT_CONFIG,
        SloshError::IdentityViolation { .. } => EXIT_VERIFY_FAIL,
        _ => EXIT_NUMERICAL,
    }
}

pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve {
            common,
            dump_matrices,
        } => cmd_solve(common, *dump_matrices),
        Command::Verify {
            common,
            inject_fault,
        } => cmd_verify(common, inject_fault.as_deref()),
        Command::Sweep { common, bo_list } => cmd_sweep(common, bo_list),
        Command::Perturb { common, eps } => cmd_perturb(common, eps.as_deref()),
        Command::Convergence {
            common,
            refinements,
        } => cmd_convergence(common, *refinements),
        Command::Monotonicity { common, depth2 } => cmd_monotonicity(common, *depth2),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
