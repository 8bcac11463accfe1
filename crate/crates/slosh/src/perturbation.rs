//! Large-Bond perturbation of the zero-surface-tension limit.
//!
//! For a simple Steklov mode the frequency slope with respect to
//! eps = 1/Bo at eps = 0 is (omega0 / 2) * |grad_F Phi0|^2 / |Phi0|^2 with
//! both norms taken on the free surface. The formula is cross-checked by
//! Richardson finite differences of omega(eps) from the analytic
//! dispersion and from re-solves of the discrete problem, with modes
//! tracked across eps by surface overlap rather than by index.

use nalgebra::DVector;

use crate::analytic::cylinder_dispersion;
use crate::assembly::{assemble, Bond, OperatorSet};
use crate::eigensolve::{solve_reduced_with, SolveContext, Spectrum};
use crate::error::{Result, SloshError};
use crate::geometry::MeshPair;

/// Default eps ladder; smaller values start losing digits to the 1e-10
/// eigensolver tolerance.
pub const DEFAULT_EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Relative gap below which an eigenvalue is treated as degenerate.
pub const SIMPLE_GAP_TOL: f64 = 1e-6;

/// Default exclusion gap for finite-difference comparison. Azimuthal
/// doublets split only at discretization scale (the prism diagonal rule
/// breaks the exact rotational symmetry), so they pass the strict
/// simplicity gate while still being too entangled to difference cleanly.
pub const FD_COMPARE_GAP: f64 = 1e-2;

/// Minimal modal overlap for continuation across eps.
pub const TRACKING_OVERLAP_MIN: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct PerturbationReport {
    pub mode_index: usize,
    pub omega0: f64,
    pub slope_formula: f64,
    pub slope_fd: f64,
    pub epsilon_values: Vec<f64>,
    pub rel_error: f64,
    pub fd_order_estimate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FdSlope {
    pub slope: f64,
    pub order_estimate: f64,
}

/// Relative gap of one frequency to the rest of the computed window.
pub fn simplicity_gap(spectrum: &Spectrum, mode_index: usize) -> f64 {
    let w = spectrum.modes[mode_index].omega;
    let mut gap = f64::INFINITY;
    for (i, m) in spectrum.modes.iter().enumerate() {
        if i != mode_index {
            gap = gap.min((m.omega - w).abs() / w);
        }
    }
    gap
}

/// First-order slope from the trace of the Steklov mode.
pub fn slope_formula(spectrum: &Spectrum, mode_index: usize, ops: &OperatorSet) -> Result<f64> {
    if !ops.bond.is_infinite() || !spectrum.bond.is_infinite() {
        return Err(SloshError::IncompatibleData(
            "slope formula needs the zero-surface-tension mode".into(),
        ));
    }
    if mode_index >= spectrum.modes.len() {
        return Err(SloshError::DimensionMismatch {
            expected: spectrum.modes.len(),
            got: mode_index,
        });
    }
    if mode_index + 1 >= spectrum.modes.len() {
        return Err(SloshError::NotSimple(
            "no neighbor above the requested mode in the computed window".into(),
        ));
    }
    let gap = simplicity_gap(spectrum, mode_index);
    if gap <= SIMPLE_GAP_TOL {
        return Err(SloshError::NotSimple(format!(
            "relative gap {gap:e} at mode {mode_index}"
        )));
    }
    let mode = &spectrum.modes[mode_index];
    let tr = ops.trace_of(mode.phi.as_slice());
    let num = ops
        .surface_stiffness
        .quad_form(tr.as_slice(), tr.as_slice());
    let den = ops.surface_mass.quad_form(tr.as_slice(), tr.as_slice());
    Ok(0.5 * mode.omega * num / den)
}

fn validate_eps(eps: &[f64]) -> Result<()> {
    if eps.len() < 2 {
        return Err(SloshError::InvalidSpec(
            "need at least two eps values".into(),
        ));
    }
    for w in eps.windows(2) {
        if !(w[0] > w[1]) {
            return Err(SloshError::InvalidSpec(
                "eps values must be strictly decreasing".into(),
            ));
        }
    }
    if !eps.iter().all(|&e| e > 0.0 && e.is_finite()) {
        return Err(SloshError::InvalidSpec(
            "eps values must be positive".into(),
        ));
    }
    Ok(())
}

/// Richardson extrapolation of first-order one-sided differences.
fn one_sided_richardson(omega0: f64, eps: &[f64], omegas: &[f64]) -> FdSlope {
    let d: Vec<f64> = eps
        .iter()
        .zip(omegas)
        .map(|(&e, &w)| (w - omega0) / e)
        .collect();
    let n = d.len();
    let (e0, e1) = (eps[n - 2], eps[n - 1]);
    let slope = (e0 * d[n - 1] - e1 * d[n - 2]) / (e0 - e1);
    let order_estimate = if n >= 3 {
        let r0 = (d[n - 3] - slope).abs();
        let r1 = (d[n - 2] - slope).abs();
        (r0 / r1).ln() / (eps[n - 3] / eps[n - 2]).ln()
    } else {
        1.0
    };
    FdSlope {
        slope,
        order_estimate,
    }
}

/// Finite differences of the closed-form cylinder dispersion. The formula
/// is analytic in eps, so centered differences with Richardson in eps^2
/// are used.
pub fn slope_fd_analytic(n: i32, m: u32, h_over_a: f64, eps: &[f64]) -> Result<FdSlope> {
    validate_eps(eps)?;
    let base = cylinder_dispersion(n, m, h_over_a, Bond::Infinite)?;
    let z2 = base.root * base.root;
    let omega_at = |e: f64| -> Result<f64> {
        let v = base.lambda_sq * (1.0 + z2 * e);
        if v <= 0.0 {
            return Err(SloshError::DomainError(format!(
                "eps {e} leaves the analytic branch"
            )));
        }
        Ok(v.sqrt())
    };
    let mut d = Vec::with_capacity(eps.len());
    for &e in eps {
        d.push((omega_at(e)? - omega_at(-e)?) / (2.0 * e));
    }
    let n_d = d.len();
    let (e0, e1) = (eps[n_d - 2], eps[n_d - 1]);
    let (q0, q1) = (e0 * e0, e1 * e1);
    let slope = (q0 * d[n_d - 1] - q1 * d[n_d - 2]) / (q0 - q1);
    let order_estimate = if n_d >= 3 {
        let r0 = (d[n_d - 3] - slope).abs();
        let r1 = (d[n_d - 2] - slope).abs();
        (r0 / r1).ln() / (eps[n_d - 3] / eps[n_d - 2]).ln()
    } else {
        2.0
    };
    Ok(FdSlope {
        slope,
        order_estimate,
    })
}

/// Locate the continuation of a reference surface mode inside a spectrum.
/// Near-degenerate clusters are matched by subspace projection so that a
/// rotated doublet still reports full overlap.
pub fn track_mode(
    reference_xi: &DVector<f64>,
    spectrum: &Spectrum,
    ops: &OperatorSet,
) -> (usize, f64) {
    let m_norm = |v: &DVector<f64>| {
        ops.surface_mass
            .quad_form(v.as_slice(), v.as_slice())
            .sqrt()
    };
    let m_dot =
        |a: &DVector<f64>, b: &DVector<f64>| ops.surface_mass.quad_form(a.as_slice(), b.as_slice());
    let ref_norm = m_norm(reference_xi);
    let mut best = 0usize;
    let mut best_overlap = -1.0f64;
    for (i, mode) in spectrum.modes.iter().enumerate() {
        let o = m_dot(&mode.xi, reference_xi).abs() / (m_norm(&mode.xi) * ref_norm);
        if o > best_overlap {
            best_overlap = o;
            best = i;
        }
    }
    let w_best = spectrum.modes[best].omega;
    let cluster: Vec<usize> = (0..spectrum.modes.len())
        .filter(|&i| (spectrum.modes[i].omega - w_best).abs() <= SIMPLE_GAP_TOL * w_best)
        .collect();
    if cluster.len() <= 1 {
        return (best, best_overlap);
    }
    // project the reference onto the cluster span, Gram-Schmidt in M
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cluster.len());
    for &i in &cluster {
        let mut v = spectrum.modes[i].xi.clone();
        for q in &basis {
            let c = m_dot(&v, q);
            v -= q * c;
        }
        let nrm = m_norm(&v);
        if nrm > 1e-12 {
            v /= nrm;
            basis.push(v);
        }
    }
    let mut proj_sq = 0.0;
    for q in &basis {
        let c = m_dot(reference_xi, q) / ref_norm;
        proj_sq += c * c;
    }
    (best, proj_sq.sqrt().min(1.0))
}

/// Finite differences of the discrete frequency across re-solves at
/// Bo = 1/eps on a fixed mesh, with overlap-based mode continuation.
pub fn slope_fd_fem(pair: &MeshPair, mode_index: usize, eps: &[f64]) -> Result<FdSlope> {
    validate_eps(eps)?;
    let k = mode_index + 3;
    let ops0 = assemble(pair, Bond::Infinite)?;
    let ctx = SolveContext::new(&ops0)?;
    let base = solve_reduced_with(&ctx, &ops0, k)?;
    let omega0 = base.modes[mode_index].omega;
    let xi0 = base.modes[mode_index].xi.clone();

    let mut omegas = Vec::with_capacity(eps.len());
    for &e in eps {
        let ops_e = assemble(pair, Bond::Finite(1.0 / e))?;
        let spec_e = solve_reduced_with(&ctx, &ops_e, k)?;
        let (idx, overlap) = track_mode(&xi0, &spec_e, &ops_e);
        if overlap < TRACKING_OVERLAP_MIN {
            return Err(SloshError::ModeTrackingFailure(format!(
                "overlap {overlap:.3} at eps {e} (mode crossing suspected)"
            )));
        }
        omegas.push(spec_e.modes[idx].omega);
    }
    Ok(one_sided_richardson(omega0, eps, &omegas))
}

/// One row of a Bond sweep: frequencies and their continuation overlaps
/// against the zero-surface-tension reference.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub bond: Bond,
    pub omegas: Vec<f64>,
    pub overlaps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub reference_omegas: Vec<f64>,
    /// Frequencies decrease toward the zero-tension limit as Bo grows.
    pub monotone_from_above: bool,
}

pub fn bond_sweep(pair: &MeshPair, bonds: &[Bond], k: usize) -> Result<SweepTable> {
    if bonds.is_empty() {
        return Err(SloshError::InvalidSpec("empty Bond list".into()));
    }
    for b in bonds {
        b.validate()?;
    }
    let ops_inf = assemble(pair, Bond::Infinite)?;
    let ctx = SolveContext::new(&ops_inf)?;
    let reference = solve_reduced_with(&ctx, &ops_inf, k)?;

    let mut rows = Vec::with_capacity(bonds.len());
    for &bond in bonds {
        let ops = assemble(pair, bond)?;
        let spectrum = solve_reduced_with(&ctx, &ops, k)?;
        let mut omegas = Vec::with_capacity(k);
        let mut overlaps = Vec::with_capacity(k);
        for j in 0..k {
            let (idx, overlap) = track_mode(&reference.modes[j].xi, &spectrum, &ops);
            if overlap < TRACKING_OVERLAP_MIN {
                return Err(SloshError::ModeTrackingFailure(format!(
                    "overlap {overlap:.3} for mode {j} at Bo {bond}"
                )));
            }
            omegas.push(spectrum.modes[idx].omega);
            overlaps.push(overlap);
        }
        rows.push(SweepRow {
            bond,
            omegas,
            overlaps,
        });
    }

    // sort finite Bond values ascending; frequencies must descend toward
    // the zero-tension reference
    let mut finite: Vec<&SweepRow> = rows.iter().filter(|r| !r.bond.is_infinite()).collect();
    finite.sort_by(|a, b| match (a.bond, b.bond) {
        (Bond::Finite(x), Bond::Finite(y)) => x.partial_cmp(&y).unwrap(),
        _ => std::cmp::Ordering::Equal,
    });
    let reference_omegas = reference.omegas();
    let mut monotone = true;
    for (j, &ref_omega) in reference_omegas.iter().enumerate().take(k) {
        let mut prev = f64::INFINITY;
        for row in &finite {
            let w = row.omegas[j];
            if w > prev + 1e-12 * prev {
                monotone = false;
            }
            prev = w;
        }
        if prev < ref_omega - 1e-12 * ref_omega {
            monotone = false;
        }
    }
    Ok(SweepTable {
        rows,
        reference_omegas,
        monotone_from_above: monotone,
    })
}
