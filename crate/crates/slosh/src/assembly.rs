//! P1 finite element assembly of the energy operators.
//!
//! Three matrices carry the problem: the volume stiffness (Dirichlet
//! energy), the surface mass and the surface stiffness (free surface
//! energy). All element integrals of products of linears are evaluated in
//! closed form, so the discrete energies are exact for P1 interpolants.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Result, SloshError};
use crate::geometry::MeshPair;
use crate::sparse::{CooBuilder, SymSparseMatrix};

/// Bond number. Infinity is a distinguished mode that removes the capillary
/// stiffness term exactly instead of approximating it with a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bond {
    Finite(f64),
    Infinite,
}

impl Bond {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Bond::Finite(b) if b > 0.0 && b.is_finite() => Ok(()),
            Bond::Finite(b) => Err(SloshError::InvalidSpec(format!(
                "Bond number must be positive and finite, got {b}"
            ))),
            Bond::Infinite => Ok(()),
        }
    }

    /// 1/Bo, exactly zero in the infinite mode.
    pub fn inverse(&self) -> f64 {
        match *self {
            Bond::Finite(b) => 1.0 / b,
            Bond::Infinite => 0.0,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Bond::Infinite)
    }

    pub fn parse(s: &str) -> Result<Bond> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Bond::Infinite);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| SloshError::Config(format!("cannot parse Bond number '{s}'")))?;
        let b = Bond::Finite(v);
        b.validate()?;
        Ok(b)
    }
}

impl std::fmt::Display for Bond {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bond::Finite(b) => write!(f, "{b}"),
            Bond::Infinite => write!(f, "inf"),
        }
    }
}

/// Assembled operators of one container at one Bond number.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// Volume stiffness: grad-grad over the fluid domain.
    pub volume_stiffness: SymSparseMatrix,
    /// Surface mass over the free surface.
    pub surface_mass: SymSparseMatrix,
    /// Surface stiffness: tangential grad-grad over the free surface.
    pub surface_stiffness: SymSparseMatrix,
    /// Surface node -> volume node map.
    pub trace: Vec<usize>,
    pub bond: Bond,
    pub mesh_fingerprint: u64,
}

impl OperatorSet {
    pub fn n_volume(&self) -> usize {
        self.volume_stiffness.dim()
    }

    pub fn n_surface(&self) -> usize {
        self.surface_mass.dim()
    }

    /// Restrict a volume vector to the free surface nodes.
    pub fn trace_of(&self, phi: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.trace.len(), self.trace.iter().map(|&v| phi[v]))
    }

    /// Scatter a surface vector into the volume (zeros off the surface).
    pub fn scatter(&self, xi: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_volume());
        for (s, &v) in self.trace.iter().enumerate() {
            out[v] = xi[s];
        }
        out
    }

    /// Dirichlet energy (1/2) phi^T K phi.
    pub fn dirichlet_energy(&self, phi: &[f64]) -> f64 {
        0.5 * self.volume_stiffness.quad_form(phi, phi)
    }

    /// Free surface energy (1/2) xi^T (M + Bo^-1 K) xi.
    pub fn surface_energy(&self, xi: &[f64]) -> f64 {
        0.5 * (self.surface_mass.quad_form(xi, xi)
            + self.bond.inverse() * self.surface_stiffness.quad_form(xi, xi))
    }

    /// Surface inner product of the trace of a volume field with a surface
    /// field.
    pub fn coupling(&self, phi: &[f64], xi: &[f64]) -> f64 {
        let tr = self.trace_of(phi);
        self.surface_mass.quad_form(tr.as_slice(), xi)
    }

    /// Dense M + Bo^-1 K on the surface.
    pub fn surface_operator_dense(&self) -> DMatrix<f64> {
        let mut s = self.surface_mass.to_dense();
        let r = self.bond.inverse();
        if r != 0.0 {
            s += self.surface_stiffness.to_dense() * r;
        }
        s
    }

    /// Free surface area, 1^T M 1.
    pub fn free_surface_area(&self) -> f64 {
        let ones = vec![1.0; self.n_surface()];
        self.surface_mass.quad_form(&ones, &ones)
    }
}

/// Exact P1 mass matrix of a triangle with the given area.
fn tri_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Exact P1 stiffness matrix of a triangle.
fn tri_stiffness(p: [[f64; 2]; 3], area: f64) -> [[f64; 3]; 3] {
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let f = 1.0 / (4.0 * area);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = f * (b[i] * b[j] + c[i] * c[j]);
        }
    }
    k
}

/// Exact P1 stiffness matrix of a tetrahedron; errors on nonpositive
/// jacobians.
fn tet_stiffness(index: usize, p: [[f64; 3]; 4]) -> Result<([[f64; 4]; 4], f64)> {
    let j = Matrix3::new(
        p[1][0] - p[0][0],
        p[2][0] - p[0][0],
        p[3][0] - p[0][0],
        p[1][1] - p[0][1],
        p[2][1] - p[0][1],
        p[3][1] - p[0][1],
        p[1][2] - p[0][2],
        p[2][2] - p[0][2],
        p[3][2] - p[0][2],
    );
    let det = j.determinant();
    if det <= 0.0 {
        return Err(SloshError::DegenerateElement {
            index,
            jacobian: det,
        });
    }
    let inv = j.try_inverse().ok_or(SloshError::DegenerateElement {
        index,
        jacobian: det,
    })?;
    let vol = det / 6.0;
    // gradients of barycentric coordinates: rows of J^-1, plus the zeroth
    let mut g = [[0.0f64; 3]; 4];
    for i in 0..3 {
        for d in 0..3 {
            g[i + 1][d] = inv[(i, d)];
        }
    }
    g[0] = [
        -(g[1][0] + g[2][0] + g[3][0]),
        -(g[1][1] + g[2][1] + g[3][1]),
        -(g[1][2] + g[2][2] + g[3][2]),
    ];
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            k[a][b] = vol * (g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2]);
        }
    }
    Ok((k, vol))
}

/// Assemble the operator set for a mesh pair at a given Bond number.
pub fn assemble(pair: &MeshPair, bond: Bond) -> Result<OperatorSet> {
    bond.validate()?;
    let surface = &pair.surface;
    let volume = &pair.volume;
    let ns = surface.nodes.len();
    let nv = volume.nodes.len();

    let mut mass = CooBuilder::new(ns);
    let mut stiff = CooBuilder::new(ns);
    for (t, &area) in surface.triangles.iter().zip(&surface.areas) {
        let pts = [
            surface.nodes[t[0]],
            surface.nodes[t[1]],
            surface.nodes[t[2]],
        ];
        let me = tri_mass(area);
        let ke = tri_stiffness(pts, area);
        for a in 0..3 {
            for b in 0..3 {
                mass.push(t[a], t[b], me[a][b]);
                stiff.push(t[a], t[b], ke[a][b]);
            }
        }
    }

    let mut vol_stiff = CooBuilder::new(nv);
    for (idx, tet) in volume.tets.iter().enumerate() {
        let pts = [
            volume.nodes[tet[0]],
            volume.nodes[tet[1]],
            volume.nodes[tet[2]],
            volume.nodes[tet[3]],
        ];
        let (ke, _vol) = tet_stiffness(idx, pts)?;
        for a in 0..4 {
            for b in 0..4 {
                vol_stiff.push(tet[a], tet[b], ke[a][b]);
            }
        }
    }

    Ok(OperatorSet {
        volume_stiffness: vol_stiff.build()?,
        surface_mass: mass.build()?,
        surface_stiffness: stiff.build()?,
        trace: volume.surface_trace.clone(),
        bond,
        mesh_fingerprint: pair.fingerprint(),
    })
}

/// xi^T K_F xi, the squared tangential gradient of the P1 interpolant.
pub fn surface_gradient_energy(xi: &[f64], ops: &OperatorSet) -> Result<f64> {
    if xi.len() != ops.n_surface() {
        return Err(SloshError::DimensionMismatch {
            expected: ops.n_surface(),
            got: xi.len(),
        });
    }
    Ok(ops.surface_stiffness.quad_form(xi, xi))
}

/// Projector onto zero-mean surface fields, orthogonal in the mass inner
/// product: P v = v - 1 (1^T M v) / |F|. Idempotent and self-adjoint with
/// respect to M.
#[derive(Debug, Clone)]
pub struct MeanProjector {
    /// M 1
    pub weights: DVector<f64>,
    /// 1^T M 1 = |F|
    pub total: f64,
}

pub fn mean_projector(ops: &OperatorSet) -> MeanProjector {
    let ones = vec![1.0; ops.n_surface()];
    let weights = DVector::from_vec(ops.surface_mass.matvec(&ones));
    let total = weights.sum();
    MeanProjector { weights, total }
}

impl MeanProjector {
    /// Weighted mean, (1^T M v) / |F|.
    pub fn mean(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, x) in self.weights.iter().zip(v) {
            acc += w * x;
        }
        acc / self.total
    }

    pub fn apply_mut(&self, v: &mut [f64]) {
        let m = self.mean(v);
        for x in v.iter_mut() {
            *x -= m;
        }
    }

    pub fn apply(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::from_column_slice(v);
        self.apply_mut(out.as_mut_slice());
        out
    }

    /// Adjoint projector P^T v = v - w (1^T v) / |F|.
    pub fn apply_adjoint_mut(&self, v: &mut [f64]) {
        let s: f64 = v.iter().sum();
        let f = s / self.total;
        for (x, w) in v.iter_mut().zip(self.weights.iter()) {
            *x -= f * w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ContainerSpec, MeshPair};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_cube_ops(n: usize, bond: Bond) -> OperatorSet {
        let spec = ContainerSpec::rectangle(1.0, 1.0, 1.0, n);
        let pair = MeshPair::generate(&spec).unwrap();
        assemble(&pair, bond).unwrap()
    }

    #[test]
    fn constants_in_stiffness_nullspace() {
        let ops = unit_cube_ops(3, Bond::Infinite);
        let ones_v = vec![1.0; ops.n_volume()];
        let r = ops.volume_stiffness.matvec(&ones_v);
        let scale = ops.volume_stiffness.max_abs();
        assert!(r.iter().all(|x| x.abs() <= 1e-12 * scale));
        let ones_s = vec![1.0; ops.n_surface()];
        let rs = ops.surface_stiffness.matvec(&ones_s);
        let ss = ops.surface_stiffness.max_abs();
        assert!(rs.iter().all(|x| x.abs() <= 1e-12 * ss));
    }

    #[test]
    fn mass_sums_to_area() {
        let ops = unit_cube_ops(4, Bond::Infinite);
        assert_relative_eq!(ops.free_surface_area(), 1.0, epsilon = 1e-12);
        let xi = vec![1.0; ops.n_surface()];
        assert_relative_eq!(ops.surface_mass.quad_form(&xi, &xi), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_field_dirichlet_energy_is_exact() {
        // u = z over the unit cube: integral of |grad u|^2 is 1
        let spec = ContainerSpec::rectangle(1.0, 1.0, 1.0, 3);
        let pair = MeshPair::generate(&spec).unwrap();
        let ops = assemble(&pair, Bond::Infinite).unwrap();
        let u: Vec<f64> = pair.volume.nodes.iter().map(|p| p[2]).collect();
        assert_relative_eq!(ops.volume_stiffness.quad_form(&u, &u), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn surface_gradient_energy_examples() {
        let ops = unit_cube_ops(4, Bond::Infinite);
        let spec = ContainerSpec::rectangle(1.0, 1.0, 1.0, 4);
        let pair = MeshPair::generate(&spec).unwrap();
        // xi = x (mean-shift is irrelevant for the gradient)
        let p = mean_projector(&ops);
        let mut xi: Vec<f64> = pair.surface.nodes.iter().map(|q| q[0]).collect();
        p.apply_mut(&mut xi);
        assert_relative_eq!(
            surface_gradient_energy(&xi, &ops).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let constant = vec![3.7; ops.n_surface()];
        assert_abs_diff_eq!(
            surface_gradient_energy(&constant, &ops).unwrap(),
            0.0,
            epsilon = 1e-12
        );

        // x + y on a 2x1 rectangle: |grad|^2 = 2 over area 2
        let spec2 = ContainerSpec::rectangle(2.0, 1.0, 1.0, 4);
        let pair2 = MeshPair::generate(&spec2).unwrap();
        let ops2 = assemble(&pair2, Bond::Infinite).unwrap();
        let xi2: Vec<f64> = pair2.surface.nodes.iter().map(|q| q[0] + q[1]).collect();
        assert_relative_eq!(
            surface_gradient_energy(&xi2, &ops2).unwrap(),
            4.0,
            epsilon = 1e-12
        );

        let bad = vec![0.0; 3];
        assert!(surface_gradient_energy(&bad, &ops).is_err());
    }

    #[test]
    fn assembled_matrices_are_symmetric() {
        let ops = unit_cube_ops(3, Bond::Finite(5.0));
        assert_eq!(ops.volume_stiffness.symmetry_residual(), 0.0);
        assert_eq!(ops.surface_mass.symmetry_residual(), 0.0);
        assert_eq!(ops.surface_stiffness.symmetry_residual(), 0.0);
    }

    #[test]
    fn bond_scaling_only_touches_capillary_term() {
        let spec = ContainerSpec::disk(1.0, 1.0, 3);
        let pair = MeshPair::generate(&spec).unwrap();
        let a = assemble(&pair, Bond::Finite(7.0)).unwrap();
        let b = assemble(&pair, Bond::Finite(14.0)).unwrap();
        let sa = a.surface_operator_dense();
        let sb = b.surface_operator_dense();
        let m = a.surface_mass.to_dense();
        let lhs = &sa - &m;
        let rhs = (&sb - &m) * 2.0;
        let scale = sa.amax();
        assert!((lhs - rhs).amax() <= 1e-14 * scale);
    }

    #[test]
    fn bo_infinite_drops_capillary_term_exactly() {
        let spec = ContainerSpec::disk(1.0, 1.0, 3);
        let pair = MeshPair::generate(&spec).unwrap();
        let inf = assemble(&pair, Bond::Infinite).unwrap();
        let s = inf.surface_operator_dense();
        let m = inf.surface_mass.to_dense();
        assert_eq!((s - m).amax(), 0.0);
    }

    #[test]
    fn mean_projector_properties() {
        let ops = unit_cube_ops(4, Bond::Finite(3.0));
        let p = mean_projector(&ops);
        let n = ops.n_surface();

        let constant = vec![2.5; n];
        let pc = p.apply(&constant);
        assert!(pc.amax() <= 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pv = p.apply(&v);
            let ppv = p.apply(pv.as_slice());
            let diff = (&ppv - &pv).amax();
            assert!(diff <= 1e-12, "not idempotent: {diff}");
            // 1^T M (P v) = 0
            let m_pv = ops.surface_mass.matvec(pv.as_slice());
            let s: f64 = m_pv.iter().sum();
            assert!(s.abs() <= 1e-12, "mean not removed: {s}");
        }
    }

    /// Independent per-element oracle: interpolate the P1 field from nodal
    /// values by solving the local Vandermonde system, then integrate the
    /// constant gradient dot product over the element.
    #[test]
    fn brute_force_element_oracle_matches_assembly() {
        let spec = ContainerSpec::rectangle(1.0, 1.0, 1.0, 2);
        let pair = MeshPair::generate(&spec).unwrap();
        let ops = assemble(&pair, Bond::Infinite).unwrap();
        assert!(pair.volume.tets.len() <= 100);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let nv = ops.n_volume();
        let u: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();

        let grad = |tet: &[usize; 4], f: &[f64]| -> nalgebra::Vector3<f64> {
            // solve for affine coefficients (a, gx, gy, gz)
            let mut m = nalgebra::Matrix4::zeros();
            let mut rhs = nalgebra::Vector4::zeros();
            for (r, &node) in tet.iter().enumerate() {
                let p = pair.volume.nodes[node];
                m[(r, 0)] = 1.0;
                m[(r, 1)] = p[0];
                m[(r, 2)] = p[1];
                m[(r, 3)] = p[2];
                rhs[r] = f[node];
            }
            let sol = m.lu().solve(&rhs).unwrap();
            nalgebra::Vector3::new(sol[1], sol[2], sol[3])
        };

        let mut oracle = 0.0;
        for (tet, &vol) in pair.volume.tets.iter().zip(&pair.volume.volumes) {
            oracle += grad(tet, &u).dot(&grad(tet, &v)) * vol;
        }
        let assembled = ops.volume_stiffness.quad_form(&u, &v);
        assert_relative_eq!(assembled, oracle, epsilon = 1e-12, max_relative = 1e-12);
    }
}
