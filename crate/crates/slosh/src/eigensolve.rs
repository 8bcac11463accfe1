//! Discrete sloshing eigensolvers.
//!
//! The coupled first-order system
//!
//! ```text
//!   K phi = omega C^T xi        C = M R   (trace-coupled surface mass)
//!   S xi  = omega C   phi       S = M + Bo^-1 K_F
//! ```
//!
//! has eigenvalues in +/- pairs; both solvers square it through a Schur
//! complement and report the positive branch.
//!
//! `solve_reduced` eliminates the interior: it assembles the
//! Neumann-to-Dirichlet operator T = C K^+ C^T column by column from sparse
//! Neumann solves and runs one dense symmetric-definite eigendecomposition
//! of the surface pencil S xi = omega^2 T xi.
//!
//! `solve_coupled` eliminates the surface instead and iterates on the
//! volume pencil K phi = omega^2 W phi, W = C^T S^-1 C, with a blocked
//! inverse subspace iteration that reuses the same stiffness factorization.
//! The two routes agree in exact arithmetic, so cross-checking their
//! spectra is a real consistency test of the whole discretization.
//!
//! Mode normalization: zero surface means, unit coupling
//! (trace phi)^T M xi = 1, and the largest-magnitude surface entry
//! positive.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::assembly::{mean_projector, Bond, MeanProjector, OperatorSet};
use crate::cholesky::EnvelopeCholesky;
use crate::error::{Result, SloshError};
use crate::util::{par_columns, SplitMix64};

/// Residual bound for accepted eigenpairs, on unit-norm vectors.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
/// Relative residual bound for the interior Neumann solves.
pub const NEUMANN_RESIDUAL_TOL: f64 = 1e-10;
/// Relative compatibility bound on Neumann data.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// One eigentriple with its normalization metadata.
#[derive(Debug, Clone)]
pub struct SloshingMode {
    /// Positive nondimensional angular frequency.
    pub omega: f64,
    /// Velocity potential on volume nodes.
    pub phi: DVector<f64>,
    /// Free surface height on surface nodes.
    pub xi: DVector<f64>,
    /// (trace phi)^T M xi after normalization; 1 up to roundoff.
    pub coupling: f64,
    /// Worst relative residual of the two weak eigen-equations.
    pub residual: f64,
}

/// Modes of one solve, ascending in frequency.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub modes: Vec<SloshingMode>,
    pub bond: Bond,
    pub mesh_fingerprint: u64,
}

impl Spectrum {
    pub fn omegas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }
}

/// Per-mesh solver state: the grounded stiffness factorization and the
/// lazily built Neumann-to-Dirichlet matrix. Neither depends on the Bond
/// number, so one context serves a whole Bond sweep.
pub struct SolveContext {
    factor: EnvelopeCholesky,
    projector: MeanProjector,
    ntd: OnceLock<DMatrix<f64>>,
}

impl SolveContext {
    pub fn new(ops: &OperatorSet) -> Result<Self> {
        let nv = ops.n_volume();
        let mut on_surface = vec![false; nv];
        for &t in &ops.trace {
            on_surface[t] = true;
        }
        // ground an interior node so the trace rows survive intact
        let ground = (0..nv)
            .rev()
            .find(|&i| !on_surface[i])
            .ok_or_else(|| SloshError::SingularOperator("no interior node to ground".into()))?;
        let factor = EnvelopeCholesky::factor(&ops.volume_stiffness, ground)?;
        Ok(SolveContext {
            factor,
            projector: mean_projector(ops),
            ntd: OnceLock::new(),
        })
    }

    pub fn projector(&self) -> &MeanProjector {
        &self.projector
    }

    fn surface_mean_of_volume(&self, ops: &OperatorSet, phi: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (s, &v) in ops.trace.iter().enumerate() {
            acc += self.projector.weights[s] * phi[v];
        }
        acc / self.projector.total
    }

    /// The Neumann-to-Dirichlet matrix restricted to zero-mean data.
    pub fn ntd(&self, ops: &OperatorSet) -> &DMatrix<f64> {
        self.ntd.get_or_init(|| {
            let ns = ops.n_surface();
            let w = &self.projector.weights;
            let total = self.projector.total;
            let cols = par_columns(ns, |i| {
                // u = M (e_i - 1 w_i / |F|) = M e_i - (w_i/|F|) w
                let (mcols, mvals) = ops.surface_mass.row(i);
                let mut u = DVector::zeros(ns);
                for (&j, &v) in mcols.iter().zip(mvals) {
                    u[j] = v;
                }
                let f = w[i] / total;
                for j in 0..ns {
                    u[j] -= f * w[j];
                }
                let b = ops.scatter(u.as_slice());
                let phi = self.factor.solve(b.as_slice());
                let tr = ops.trace_of(&phi);
                let mut t = DVector::from_vec(ops.surface_mass.matvec(tr.as_slice()));
                let s: f64 = t.sum();
                let g = s / total;
                for j in 0..ns {
                    t[j] -= g * w[j];
                }
                t.as_slice().to_vec()
            });
            let mut t = DMatrix::zeros(ns, ns);
            for (i, col) in cols.into_iter().enumerate() {
                t.set_column(i, &DVector::from_vec(col));
            }
            // exact symmetrization kills solve roundoff asymmetry
            let tt = t.transpose();
            (t + tt) * 0.5
        })
    }
}

/// Solve the interior Neumann problem K phi = C^T g for zero-mean surface
/// data g, returning the zero-mean potential.
pub fn neumann_solve(ops: &OperatorSet, g: &[f64]) -> Result<DVector<f64>> {
    let ctx = SolveContext::new(ops)?;
    neumann_solve_with(&ctx, ops, g)
}

pub fn neumann_solve_with(
    ctx: &SolveContext,
    ops: &OperatorSet,
    g: &[f64],
) -> Result<DVector<f64>> {
    if g.len() != ops.n_surface() {
        return Err(SloshError::DimensionMismatch {
            expected: ops.n_surface(),
            got: g.len(),
        });
    }
    let mg = DVector::from_vec(ops.surface_mass.matvec(g));
    let imbalance: f64 = mg.sum();
    let g_norm = ops.surface_mass.quad_form(g, g).max(0.0).sqrt();
    let scale = (ctx.projector.total.sqrt() * g_norm).max(f64::MIN_POSITIVE);
    if imbalance.abs() > COMPATIBILITY_TOL * scale {
        return Err(SloshError::IncompatibleData(format!(
            "Neumann data has mean {imbalance:e} (tolerance {:e})",
            COMPATIBILITY_TOL * scale
        )));
    }
    let b = ops.scatter(mg.as_slice());
    let mut phi = DVector::from_vec(ctx.factor.solve(b.as_slice()));
    let mean = ctx.surface_mean_of_volume(ops, phi.as_slice());
    phi.add_scalar_mut(-mean);

    let r = DVector::from_vec(ops.volume_stiffness.matvec(phi.as_slice())) - &b;
    let b_norm = b.norm();
    if b_norm > 0.0 && r.norm() > NEUMANN_RESIDUAL_TOL * b_norm {
        return Err(SloshError::SolverFailure(format!(
            "Neumann residual {:e} exceeds {:e}",
            r.norm(),
            NEUMANN_RESIDUAL_TOL * b_norm
        )));
    }
    Ok(phi)
}

fn validate_mode_count(ops: &OperatorSet, k: usize) -> Result<()> {
    if k < 1 {
        return Err(SloshError::InvalidSpec("mode count must be >= 1".into()));
    }
    if k + 2 > ops.n_surface() {
        return Err(SloshError::SolverFailure(format!(
            "requested {k} modes but the surface has only {} nodes",
            ops.n_surface()
        )));
    }
    Ok(())
}

fn mode_residual(ops: &OperatorSet, omega: f64, phi: &DVector<f64>, xi: &DVector<f64>) -> f64 {
    let mxi = DVector::from_vec(ops.surface_mass.matvec(xi.as_slice()));
    let rhs1 = ops.scatter(mxi.as_slice()) * omega;
    let r1 = (DVector::from_vec(ops.volume_stiffness.matvec(phi.as_slice())) - &rhs1).norm()
        / rhs1.norm().max(f64::MIN_POSITIVE);

    let mut sxi = mxi.clone();
    let inv = ops.bond.inverse();
    if inv != 0.0 {
        let kxi = DVector::from_vec(ops.surface_stiffness.matvec(xi.as_slice()));
        sxi += kxi * inv;
    }
    let tr = ops.trace_of(phi.as_slice());
    let rhs2 = DVector::from_vec(ops.surface_mass.matvec(tr.as_slice())) * omega;
    let r2 = (sxi - &rhs2).norm() / rhs2.norm().max(f64::MIN_POSITIVE);
    r1.max(r2)
}

/// Normalize (phi, xi) to unit coupling and the positive sign convention.
fn finalize_mode(
    ctx: &SolveContext,
    ops: &OperatorSet,
    omega: f64,
    mut phi: DVector<f64>,
    mut xi: DVector<f64>,
) -> Result<SloshingMode> {
    let mean_phi = ctx.surface_mean_of_volume(ops, phi.as_slice());
    phi.add_scalar_mut(-mean_phi);
    ctx.projector.apply_mut(xi.as_mut_slice());

    let c = ops.coupling(phi.as_slice(), xi.as_slice());
    if !(c > 0.0) {
        return Err(SloshError::SolverFailure(format!(
            "nonpositive mode coupling {c:e} at omega {omega}"
        )));
    }
    let alpha = 1.0 / c.sqrt();
    phi *= alpha;
    xi *= alpha;

    // sign convention: largest-magnitude surface entry positive
    let mut arg = 0usize;
    for (i, v) in xi.iter().enumerate() {
        if v.abs() > xi[arg].abs() {
            arg = i;
        }
    }
    if xi[arg] < 0.0 {
        phi.neg_mut();
        xi.neg_mut();
    }

    let coupling = ops.coupling(phi.as_slice(), xi.as_slice());
    let residual = mode_residual(ops, omega, &phi, &xi);
    Ok(SloshingMode {
        omega,
        phi,
        xi,
        coupling,
        residual,
    })
}

fn surface_cholesky(ops: &OperatorSet) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(ops.surface_operator_dense()).ok_or_else(|| {
        SloshError::SingularOperator("surface operator is not positive definite".into())
    })
}

/// Surface-pencil solver through the Neumann-to-Dirichlet reduction.
pub fn solve_reduced(ops: &OperatorSet, k: usize) -> Result<Spectrum> {
    let ctx = SolveContext::new(ops)?;
    solve_reduced_with(&ctx, ops, k)
}

pub fn solve_reduced_with(ctx: &SolveContext, ops: &OperatorSet, k: usize) -> Result<Spectrum> {
    validate_mode_count(ops, k)?;
    let t = ctx.ntd(ops);
    let chol = surface_cholesky(ops)?;
    let l = chol.l();

    // G = L^-1 T L^-T ; eigenvalues are 1/omega^2
    let x = l
        .solve_lower_triangular(t)
        .ok_or_else(|| SloshError::SingularOperator("triangular solve failed".into()))?;
    let y = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| SloshError::SingularOperator("triangular solve failed".into()))?;
    let g = {
        let gt = y.transpose();
        (&y + gt) * 0.5
    };
    let eig = SymmetricEigen::new(g);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mu_max = eig.eigenvalues[order[0]];
    if !(mu_max > 0.0) {
        return Err(SloshError::SolverFailure(
            "no positive eigenvalues in the reduced pencil".into(),
        ));
    }

    let mut modes = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mu = eig.eigenvalues[idx];
        if !(mu > 0.0) {
            return Err(SloshError::SolverFailure(format!(
                "reduced pencil ran out of positive eigenvalues (got {mu:e})"
            )));
        }
        let omega = 1.0 / mu.sqrt();
        let yv = eig.eigenvectors.column(idx).into_owned();
        let xi = l
            .tr_solve_lower_triangular(&yv)
            .ok_or_else(|| SloshError::SingularOperator("triangular solve failed".into()))?;
        let mut xi = xi;
        ctx.projector.apply_mut(xi.as_mut_slice());
        let phi_unit = neumann_solve_with(ctx, ops, xi.as_slice())?;
        let phi = phi_unit * omega;
        modes.push(finalize_mode(ctx, ops, omega, phi, xi)?);
    }
    modes.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
    Ok(Spectrum {
        modes,
        bond: ops.bond,
        mesh_fingerprint: ops.mesh_fingerprint,
    })
}

/// Volume-pencil solver: blocked inverse subspace iteration on the coupled
/// system after eliminating the surface unknown.
pub fn solve_coupled(ops: &OperatorSet, k: usize) -> Result<Spectrum> {
    let ctx = SolveContext::new(ops)?;
    solve_coupled_with(&ctx, ops, k)
}

pub fn solve_coupled_with(ctx: &SolveContext, ops: &OperatorSet, k: usize) -> Result<Spectrum> {
    validate_mode_count(ops, k)?;
    let ns = ops.n_surface();
    let nv = ops.n_volume();
    let ground = ctx.factor.ground();

    let chol = surface_cholesky(ops)?;
    // surface block of the low-rank factor: W = V V^T restricted to
    // zero-mean fields, V = R^T M L^-T
    let m_dense = ops.surface_mass.to_dense();
    let x = chol
        .l()
        .solve_lower_triangular(&m_dense)
        .ok_or_else(|| SloshError::SingularOperator("triangular solve failed".into()))?;
    let v_s = x.transpose();
    let colsum = v_s.row_sum();
    let a_s = &ctx.projector.weights / ctx.projector.total;
    let vtilde = &v_s - &a_s * colsum;

    let p = (k + k.max(4)).min(ns.saturating_sub(2));
    if p < k {
        return Err(SloshError::SolverFailure(format!(
            "subspace of {p} cannot hold {k} modes"
        )));
    }

    let gather = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut xs = DMatrix::zeros(ns, x.ncols());
        for (s, &v) in ops.trace.iter().enumerate() {
            for c in 0..x.ncols() {
                xs[(s, c)] = x[(v, c)];
            }
        }
        xs
    };
    let apply_w = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let z = vtilde.transpose() * gather(x);
        let ys = &vtilde * z;
        let mut out = DMatrix::zeros(nv, x.ncols());
        for (s, &v) in ops.trace.iter().enumerate() {
            for c in 0..x.ncols() {
                out[(v, c)] = ys[(s, c)];
            }
        }
        out
    };
    let apply_k = |x: &DVector<f64>| -> DVector<f64> {
        let mut y = DVector::from_vec(ops.volume_stiffness.matvec(x.as_slice()));
        y[ground] = 0.0;
        y
    };

    // deterministic start block
    let mut rng = SplitMix64::new(0x5105_4a11_u64);
    let mut xblock = DMatrix::from_fn(nv, p, |_, _| rng.next_pm1());
    for c in 0..p {
        xblock[(ground, c)] = 0.0;
    }

    let orthonormalize = |y: &mut DMatrix<f64>| -> Result<()> {
        let mut ky = DMatrix::zeros(nv, y.ncols());
        for c in 0..y.ncols() {
            ky.set_column(c, &apply_k(&y.column(c).into_owned()));
        }
        let gram = {
            let g = y.transpose() * &ky;
            let gt = g.transpose();
            (g + gt) * 0.5
        };
        let ch = Cholesky::new(gram).ok_or_else(|| {
            SloshError::SolverFailure("subspace lost rank during iteration".into())
        })?;
        // Y <- Y L^-T
        let yt = ch
            .l()
            .solve_lower_triangular(&y.transpose())
            .ok_or_else(|| SloshError::SolverFailure("triangular solve failed".into()))?;
        *y = yt.transpose();
        Ok(())
    };

    orthonormalize(&mut xblock)?;
    let mut theta: DVector<f64> = DVector::zeros(p);
    let max_iter = 500;
    let mut converged = false;
    let mut stable_count = 0usize;

    for _it in 0..max_iter {
        let b = apply_w(&xblock);
        let cols = par_columns(p, |c| ctx.factor.solve(b.column(c).as_slice()));
        let mut yblock = DMatrix::zeros(nv, p);
        for (c, col) in cols.into_iter().enumerate() {
            yblock.set_column(c, &DVector::from_vec(col));
        }
        orthonormalize(&mut yblock)?;
        // Rayleigh-Ritz in the stiffness inner product
        let zs = vtilde.transpose() * gather(&yblock);
        let h = {
            let h = zs.transpose() * &zs;
            let ht = h.transpose();
            (h + ht) * 0.5
        };
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut rot = DMatrix::zeros(p, p);
        let mut new_theta = DVector::zeros(p);
        for (c, &idx) in order.iter().enumerate() {
            rot.set_column(c, &eig.eigenvectors.column(idx));
            new_theta[c] = eig.eigenvalues[idx];
        }
        xblock = &yblock * rot;

        let mut delta = 0.0_f64;
        for j in 0..k {
            let d = (new_theta[j] - theta[j]).abs() / new_theta[j].abs().max(1e-300);
            delta = delta.max(d);
        }
        theta = new_theta;
        if delta < 1e-13 {
            stable_count += 1;
        } else {
            stable_count = 0;
        }
        if stable_count >= 2 {
            // residual acceptance on unit vectors
            let wb = apply_w(&xblock);
            let mut worst = 0.0_f64;
            for j in 0..k {
                let xj = xblock.column(j).into_owned();
                let nrm = xj.norm();
                let r = (wb.column(j).into_owned() - apply_k(&xj) * theta[j]).norm() / nrm;
                worst = worst.max(r);
            }
            if worst <= EIGEN_RESIDUAL_TOL {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(SloshError::SolverFailure(format!(
            "subspace iteration did not converge within {max_iter} iterations"
        )));
    }

    let mut modes = Vec::with_capacity(k);
    for j in 0..k {
        let th = theta[j];
        if !(th > 0.0) {
            return Err(SloshError::SolverFailure(format!(
                "coupled pencil ran out of positive eigenvalues (got {th:e})"
            )));
        }
        let omega = 1.0 / th.sqrt();
        let phi = xblock.column(j).into_owned();
        let tr = ops.trace_of(phi.as_slice());
        let rhs = DVector::from_vec(ops.surface_mass.matvec(tr.as_slice()));
        let xi = chol.solve(&rhs) * omega;
        modes.push(finalize_mode(ctx, ops, omega, phi, xi)?);
    }
    modes.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
    Ok(Spectrum {
        modes,
        bond: ops.bond,
        mesh_fingerprint: ops.mesh_fingerprint,
    })
}

/// Largest relative frequency gap between two spectra, mode by mode.
pub fn max_relative_omega_diff(a: &Spectrum, b: &Spectrum) -> f64 {
    a.modes
        .iter()
        .zip(&b.modes)
        .map(|(x, y)| (x.omega - y.omega).abs() / y.omega)
        .fold(0.0, f64::max)
}
