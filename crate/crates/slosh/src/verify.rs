//! Machine checks of the identities every computed spectrum must satisfy,
//! and mode postprocessing (energies, high spots, modal trajectories).
//!
//! Each check emits one line `CHECK <name> <PASS|FAIL> residual=<value>
//! ref=<id>` where the id names the identity being exercised; the whole
//! suite also serializes to JSON.

use nalgebra::{Cholesky, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble, Bond, OperatorSet};
use crate::eigensolve::{
    max_relative_omega_diff, neumann_solve_with, solve_coupled_with, solve_reduced_with,
    SloshingMode, SolveContext, Spectrum,
};
use crate::error::{Result, SloshError};
use crate::geometry::{extrude, MeshPair, SurfaceMesh};
use crate::perturbation::{
    simplicity_gap, slope_fd_fem, slope_formula, DEFAULT_EPSILONS, FD_COMPARE_GAP,
};

/// Identity tolerance shared by the energy and orthogonality checks.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Pairs closer than this relative gap are treated as degenerate and
/// skipped by the orthogonality check.
pub const DEGENERACY_GAP: f64 = 1e-6;

/// Energies of one mode and the frequency they imply.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub dirichlet: f64,
    pub surface: f64,
    pub coupling: f64,
    /// (D + S) / coupling, which must reproduce omega.
    pub omega_check: f64,
    pub equidistribution_residual: f64,
    pub omega_residual: f64,
}

/// Check D = S = (omega/2) <phi, xi> and the frequency quotient.
pub fn check_energy(mode: &SloshingMode, ops: &OperatorSet) -> Result<EnergyReport> {
    let dirichlet = ops.dirichlet_energy(mode.phi.as_slice());
    let surface = ops.surface_energy(mode.xi.as_slice());
    let coupling = ops.coupling(mode.phi.as_slice(), mode.xi.as_slice());
    if coupling == 0.0 {
        return Err(SloshError::IncompatibleData(
            "zero coupling: trivial mode".into(),
        ));
    }
    let omega_check = (dirichlet + surface) / coupling;
    let equidistribution_residual = (dirichlet - surface).abs() / (dirichlet + surface);
    let omega_residual = (omega_check - mode.omega).abs() / mode.omega;
    let report = EnergyReport {
        dirichlet,
        surface,
        coupling,
        omega_check,
        equidistribution_residual,
        omega_residual,
    };
    let worst = equidistribution_residual.max(omega_residual);
    if worst > IDENTITY_TOL {
        return Err(SloshError::IdentityViolation {
            check: "energy-equidistribution".into(),
            residual: worst,
        });
    }
    Ok(report)
}

/// Max cross-coupling residual over pairs with distinct frequencies.
pub fn check_orthogonality(spectrum: &Spectrum, ops: &OperatorSet) -> Result<f64> {
    let mut worst = 0.0f64;
    let n = spectrum.modes.len();
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let (a, b) = (&spectrum.modes[j], &spectrum.modes[k]);
            if (a.omega - b.omega).abs() <= DEGENERACY_GAP * b.omega {
                continue;
            }
            let c = ops.coupling(a.phi.as_slice(), b.xi.as_slice()).abs();
            worst = worst.max(c);
        }
    }
    if worst > IDENTITY_TOL {
        return Err(SloshError::IdentityViolation {
            check: "cross-orthogonality".into(),
            residual: worst,
        });
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy)]
pub struct MonotonicityReport {
    pub omega_shallow: f64,
    pub omega_deep: f64,
}

/// Same free surface, two depths: the deeper container must not slosh
/// slower.
pub fn check_monotonicity(
    surface: &SurfaceMesh,
    h_shallow: f64,
    h_deep: f64,
    layers_per_unit: f64,
    bond: Bond,
) -> Result<MonotonicityReport> {
    if !(h_shallow <= h_deep) {
        return Err(SloshError::InvalidSpec(
            "shallow depth must not exceed deep depth".into(),
        ));
    }
    let solve_depth = |h: f64| -> Result<f64> {
        let layers = ((h * layers_per_unit).round() as usize).max(1);
        let volume = extrude(surface, h, layers)?;
        let pair = MeshPair {
            surface: surface.clone(),
            volume,
        };
        let ops = assemble(&pair, bond)?;
        let spectrum = crate::eigensolve::solve_reduced(&ops, 1)?;
        Ok(spectrum.modes[0].omega)
    };
    let omega_shallow = solve_depth(h_shallow)?;
    let omega_deep = solve_depth(h_deep)?;
    if omega_shallow > omega_deep + 1e-10 {
        return Err(SloshError::IdentityViolation {
            check: "domain-monotonicity".into(),
            residual: omega_shallow - omega_deep,
        });
    }
    Ok(MonotonicityReport {
        omega_shallow,
        omega_deep,
    })
}

/// Smallest eigenvalue of K_F + Bo M_F by inverse iteration. Positivity
/// means the flat meniscus is the unique equilibrium shape.
pub fn young_laplace_check(ops: &OperatorSet, bond: f64) -> Result<f64> {
    if !(bond > 0.0 && bond.is_finite()) {
        return Err(SloshError::InvalidSpec(
            "meniscus check needs a finite positive Bond number".into(),
        ));
    }
    let a = ops.surface_stiffness.to_dense() + ops.surface_mass.to_dense() * bond;
    let chol = match Cholesky::new(a.clone()) {
        Some(c) => c,
        None => {
            return Err(SloshError::IdentityViolation {
                check: "flat-meniscus-uniqueness".into(),
                residual: 0.0,
            })
        }
    };
    let n = a.nrows();
    let mut rng = crate::util::SplitMix64::new(0x9e3779);
    let mut x = DVector::from_fn(n, |_, _| rng.next_pm1());
    x /= x.norm();
    let mut lambda = 0.0f64;
    for _ in 0..500 {
        let y = chol.solve(&x);
        let y = &y / y.norm();
        let new_lambda = (&a * &y).dot(&y);
        let done = (new_lambda - lambda).abs() <= 1e-12 * new_lambda.abs();
        lambda = new_lambda;
        x = y;
        if done {
            break;
        }
    }
    if lambda <= 0.0 {
        return Err(SloshError::IdentityViolation {
            check: "flat-meniscus-uniqueness".into(),
            residual: lambda,
        });
    }
    Ok(lambda)
}

/// Smallest eigenvalue of the surface mass matrix (for spectral bounds).
pub fn mass_smallest_eigenvalue(ops: &OperatorSet) -> Result<f64> {
    let m = ops.surface_mass.to_dense();
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| SloshError::SingularOperator("mass matrix not positive".into()))?;
    let mut rng = crate::util::SplitMix64::new(0x51e55);
    let mut x = DVector::from_fn(m.nrows(), |_, _| rng.next_pm1());
    x /= x.norm();
    let mut lambda = 0.0f64;
    for _ in 0..500 {
        let y = chol.solve(&x);
        let y = &y / y.norm();
        let new_lambda = (&m * &y).dot(&y);
        let done = (new_lambda - lambda).abs() <= 1e-12 * new_lambda.abs();
        lambda = new_lambda;
        x = y;
        if done {
            break;
        }
    }
    Ok(lambda)
}

/// Location of the maximal surface elevation of a mode.
#[derive(Debug, Clone, Copy)]
pub struct HighSpot {
    pub node: usize,
    pub position: [f64; 2],
    pub value: f64,
    pub on_boundary: bool,
}

/// Nodal argmax of |xi|; P1 extrema sit on nodes.
pub fn high_spot(mode: &SloshingMode, surface: &SurfaceMesh) -> HighSpot {
    let mut arg = 0usize;
    for (i, v) in mode.xi.iter().enumerate() {
        if v.abs() > mode.xi[arg].abs() {
            arg = i;
        }
    }
    let on_boundary = surface.boundary_nodes()[arg];
    HighSpot {
        node: arg,
        position: surface.nodes[arg],
        value: mode.xi[arg],
        on_boundary,
    }
}

/// Sampled energy of the time-harmonic motion of one mode.
#[derive(Debug, Clone)]
pub struct ModalTrajectory {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub phase: f64,
    /// max |E(t) - E(t0)| / E(t0)
    pub drift: f64,
}

/// phi(t) = Phi cos(wt + delta), eta(t) = xi sin(wt + delta); the sampled
/// energy E(t) = D[phi(t)] + S[eta(t)] stays constant exactly when the
/// mode equidistributes energy.
pub fn modal_trajectory(
    mode: &SloshingMode,
    ops: &OperatorSet,
    delta: f64,
    samples: usize,
) -> ModalTrajectory {
    let d = ops.dirichlet_energy(mode.phi.as_slice());
    let s = ops.surface_energy(mode.xi.as_slice());
    let period = 2.0 * std::f64::consts::PI / mode.omega;
    let n = samples.max(2);
    let times: Vec<f64> = (0..n).map(|i| period * i as f64 / (n - 1) as f64).collect();
    let energy: Vec<f64> = times
        .iter()
        .map(|&t| {
            let c = (mode.omega * t + delta).cos();
            let sn = (mode.omega * t + delta).sin();
            c * c * d + sn * sn * s
        })
        .collect();
    let e0 = energy[0];
    let drift = energy
        .iter()
        .map(|e| (e - e0).abs() / e0)
        .fold(0.0, f64::max);
    ModalTrajectory {
        times,
        energy,
        phase: delta,
        drift,
    }
}

/// One line of the verification report.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub residual: f64,
    pub reference: String,
}

impl CheckLine {
    pub fn format(&self) -> String {
        format!(
            "CHECK {} {} residual={:e} ref={}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.residual,
            self.reference
        )
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub checks: Vec<CheckLine>,
}

impl SuiteOutcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "checks": self.checks.iter().map(|c| serde_json::json!({
                "name": c.name,
                "pass": c.pass,
                "residual": c.residual,
                "ref": c.reference,
            })).collect::<Vec<_>>(),
            "all_pass": self.all_pass(),
        })
    }
}

/// Fault hooks for negative-control testing of the suite itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    /// Flip the sign of the largest surface entry of one mode, corrupting
    /// the eigenvector the way a postprocessing sign bug would.
    SignFlip,
}

/// Run every identity check on one container solve.
pub fn run_suite(
    pair: &MeshPair,
    bond: Bond,
    k: usize,
    seed: u64,
    fault: Option<FaultInjection>,
) -> Result<SuiteOutcome> {
    let ops = assemble(pair, bond)?;
    let ctx = SolveContext::new(&ops)?;
    let mut spectrum = solve_reduced_with(&ctx, &ops, k)?;
    let coupled = solve_coupled_with(&ctx, &ops, k)?;

    if let Some(FaultInjection::SignFlip) = fault {
        if let Some(mode) = spectrum.modes.last_mut() {
            let mut arg = 0usize;
            for (i, v) in mode.xi.iter().enumerate() {
                if v.abs() > mode.xi[arg].abs() {
                    arg = i;
                }
            }
            mode.xi[arg] = -mode.xi[arg];
        }
    }

    let mut checks = Vec::new();

    let diff = max_relative_omega_diff(&coupled, &spectrum);
    checks.push(CheckLine {
        name: "formulation_equivalence".into(),
        pass: diff <= IDENTITY_TOL,
        residual: diff,
        reference: "neumann-to-dirichlet-duality".into(),
    });

    let ones = vec![1.0; ops.n_surface()];
    let mut mean_res = 0.0f64;
    for m in &spectrum.modes {
        let tr = ops.trace_of(m.phi.as_slice());
        let mp = ops.surface_mass.quad_form(&ones, tr.as_slice()).abs() / m.phi.norm();
        let mx = ops.surface_mass.quad_form(&ones, m.xi.as_slice()).abs() / m.xi.norm();
        mean_res = mean_res.max(mp).max(mx);
    }
    checks.push(CheckLine {
        name: "zero_mean".into(),
        pass: mean_res <= 1e-10,
        residual: mean_res,
        reference: "mean-free-eigenmodes".into(),
    });

    let mut eq_res = 0.0f64;
    let mut om_res = 0.0f64;
    for m in &spectrum.modes {
        let d = ops.dirichlet_energy(m.phi.as_slice());
        let s = ops.surface_energy(m.xi.as_slice());
        let c = ops.coupling(m.phi.as_slice(), m.xi.as_slice());
        eq_res = eq_res.max((d - s).abs() / (d + s));
        om_res = om_res.max(((d + s) / c - m.omega).abs() / m.omega);
    }
    checks.push(CheckLine {
        name: "energy_equidistribution".into(),
        pass: eq_res <= IDENTITY_TOL,
        residual: eq_res,
        reference: "energy-equidistribution".into(),
    });
    checks.push(CheckLine {
        name: "frequency_quotient".into(),
        pass: om_res <= IDENTITY_TOL,
        residual: om_res,
        reference: "energy-equidistribution".into(),
    });

    let ortho = {
        let mut worst = 0.0f64;
        for j in 0..spectrum.modes.len() {
            for l in 0..spectrum.modes.len() {
                if j == l {
                    continue;
                }
                let (a, b) = (&spectrum.modes[j], &spectrum.modes[l]);
                if (a.omega - b.omega).abs() <= DEGENERACY_GAP * b.omega {
                    continue;
                }
                worst = worst.max(ops.coupling(a.phi.as_slice(), b.xi.as_slice()).abs());
            }
        }
        worst
    };
    checks.push(CheckLine {
        name: "orthogonality".into(),
        pass: ortho <= IDENTITY_TOL,
        residual: ortho,
        reference: "cross-orthogonality".into(),
    });

    // discrete self-adjointness of the Neumann-to-Dirichlet map on
    // seeded random zero-mean data
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ctx.projector();
        let ns = ops.n_surface();
        let mut worst = 0.0f64;
        for _ in 0..4 {
            let mut g1: Vec<f64> = (0..ns).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g2: Vec<f64> = (0..ns).map(|_| rng.random_range(-1.0..1.0)).collect();
            p.apply_mut(&mut g1);
            p.apply_mut(&mut g2);
            let f1 = neumann_solve_with(&ctx, &ops, &g1)?;
            let f2 = neumann_solve_with(&ctx, &ops, &g2)?;
            let lhs = ops.coupling(f2.as_slice(), &g1);
            let rhs = ops.coupling(f1.as_slice(), &g2);
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1e-300));
        }
        checks.push(CheckLine {
            name: "ntd_reciprocity".into(),
            pass: worst <= 1e-10,
            residual: worst,
            reference: "neumann-to-dirichlet-symmetry".into(),
        });
    }

    // shallower copy of the same planform must not slosh faster
    {
        let h = pair.volume.depth;
        let layers_per_unit = pair.volume.layers as f64 / h;
        let report = check_monotonicity(&pair.surface, 0.5 * h, h, layers_per_unit, bond);
        match report {
            Ok(r) => checks.push(CheckLine {
                name: "domain_monotonicity".into(),
                pass: true,
                residual: (r.omega_deep - r.omega_shallow).max(0.0),
                reference: "domain-monotonicity".into(),
            }),
            Err(SloshError::IdentityViolation { residual, .. }) => checks.push(CheckLine {
                name: "domain_monotonicity".into(),
                pass: false,
                residual,
                reference: "domain-monotonicity".into(),
            }),
            Err(e) => return Err(e),
        }
    }

    // zero-tension limit: the rescaled potential of a Steklov mode has
    // Rayleigh quotient omega^2. A slightly wider window guarantees a
    // simple mode for the slope check on every test planform.
    {
        let window = k.max(7).min(ops.n_surface().saturating_sub(2));
        let ops_inf = if bond.is_infinite() {
            None
        } else {
            Some(assemble(pair, Bond::Infinite)?)
        };
        let ops_ref = ops_inf.as_ref().unwrap_or(&ops);
        let steklov = solve_reduced_with(&ctx, ops_ref, window)?;
        let mut worst = 0.0f64;
        for m in &steklov.modes {
            let u: Vec<f64> = m.phi.iter().map(|x| x * m.omega.sqrt()).collect();
            let tr = ops_ref.trace_of(&u);
            let num = ops_ref.volume_stiffness.quad_form(&u, &u);
            let den = ops_ref.surface_mass.quad_form(tr.as_slice(), tr.as_slice());
            let quotient = num / den;
            worst = worst.max((quotient - m.omega * m.omega).abs() / (m.omega * m.omega));
        }
        checks.push(CheckLine {
            name: "steklov_limit_rescaling".into(),
            pass: worst <= IDENTITY_TOL,
            residual: worst,
            reference: "zero-tension-limit".into(),
        });

        // large Bond approaches the limit
        let ops_big = assemble(pair, Bond::Finite(1e8))?;
        let big = solve_reduced_with(&ctx, &ops_big, 1)?;
        let rel = (big.modes[0].omega - steklov.modes[0].omega).abs() / steklov.modes[0].omega;
        checks.push(CheckLine {
            name: "steklov_limit_proximity".into(),
            pass: rel <= 1e-6,
            residual: rel,
            reference: "zero-tension-limit".into(),
        });

        // first-order Bond slope on the first Steklov mode clear of the
        // discretization-split doublets, when the window contains one
        let simple = (0..steklov.modes.len().saturating_sub(1))
            .find(|&i| simplicity_gap(&steklov, i) > FD_COMPARE_GAP);
        if let Some(idx) = simple {
            let formula = slope_formula(&steklov, idx, ops_ref)?;
            let fd = slope_fd_fem(pair, idx, &DEFAULT_EPSILONS)?;
            let rel = (formula - fd.slope).abs() / fd.slope.abs();
            checks.push(CheckLine {
                name: "perturbation_slope".into(),
                pass: rel <= 1e-3,
                residual: rel,
                reference: "first-order-bond-slope".into(),
            });
        }
    }

    // flat-meniscus uniqueness at the configured (or unit) Bond number
    {
        let bo = match bond {
            Bond::Finite(b) => b,
            Bond::Infinite => 1.0,
        };
        match young_laplace_check(&ops, bo) {
            Ok(lambda) => checks.push(CheckLine {
                name: "young_laplace_uniqueness".into(),
                pass: lambda > 0.0,
                residual: lambda,
                reference: "flat-meniscus-uniqueness".into(),
            }),
            Err(SloshError::IdentityViolation { residual, .. }) => checks.push(CheckLine {
                name: "young_laplace_uniqueness".into(),
                pass: false,
                residual,
                reference: "flat-meniscus-uniqueness".into(),
            }),
            Err(e) => return Err(e),
        }
    }

    // energy conservation along the modal trajectory, plus a detuned
    // negative control that must show visible drift
    {
        let mut worst = 0.0f64;
        for m in &spectrum.modes {
            let t = modal_trajectory(m, &ops, 0.3, 100);
            worst = worst.max(t.drift);
        }
        checks.push(CheckLine {
            name: "energy_conservation".into(),
            pass: worst <= IDENTITY_TOL,
            residual: worst,
            reference: "modal-energy-conservation".into(),
        });
        if spectrum.modes.len() >= 2 {
            let detuned = SloshingMode {
                omega: spectrum.modes[0].omega,
                phi: spectrum.modes[0].phi.clone(),
                xi: spectrum.modes[1].xi.clone(),
                coupling: 0.0,
                residual: 0.0,
            };
            let t = modal_trajectory(&detuned, &ops, 0.3, 100);
            checks.push(CheckLine {
                name: "energy_conservation_control".into(),
                pass: t.drift > 1e-3,
                residual: t.drift,
                reference: "modal-energy-conservation".into(),
            });
        }
    }

    Ok(SuiteOutcome { checks })
}
