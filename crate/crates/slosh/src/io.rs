//! Artifact writers: legacy VTK meshes, MatrixMarket operator dumps and
//! CSV tables. Every file is written to a temporary sibling and renamed
//! into place, so interrupted runs never leave partial artifacts. Numbers
//! are printed with 17 significant digits for a lossless double
//! round-trip.

use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::OperatorSet;
use crate::eigensolve::Spectrum;
use crate::error::Result;
use crate::geometry::{SurfaceMesh, VolumeMesh};
use crate::perturbation::{PerturbationReport, SweepTable};
use crate::sparse::SymSparseMatrix;

/// 17 significant digits, enough to reconstruct the exact double.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write-then-rename so readers never observe a partial file.
pub fn atomic_write(path: &Path, content: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Legacy ASCII VTK of the volume mesh (cell type 10), with optional
/// nodal scalar fields.
pub fn write_vtk_volume(
    path: &Path,
    mesh: &VolumeMesh,
    point_data: &[(&str, &[f64])],
) -> Result<()> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("sloshing volume mesh\n");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.nodes.len());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} {}", g17(p[0]), g17(p[1]), g17(p[2]));
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.tets.len(), 5 * mesh.tets.len());
    for t in &mesh.tets {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.tets.len());
    for _ in &mesh.tets {
        s.push_str("10\n");
    }
    write_point_data(&mut s, mesh.nodes.len(), point_data);
    atomic_write(path, s.as_bytes())
}

/// Legacy ASCII VTK of the free surface (cell type 5).
pub fn write_vtk_surface(
    path: &Path,
    mesh: &SurfaceMesh,
    point_data: &[(&str, &[f64])],
) -> Result<()> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("free surface mesh\n");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.nodes.len());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} {}", g17(p[0]), g17(p[1]), g17(0.0));
    }
    let _ = writeln!(
        s,
        "CELLS {} {}",
        mesh.triangles.len(),
        4 * mesh.triangles.len()
    );
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.triangles.len());
    for _ in &mesh.triangles {
        s.push_str("5\n");
    }
    write_point_data(&mut s, mesh.nodes.len(), point_data);
    atomic_write(path, s.as_bytes())
}

fn write_point_data(s: &mut String, n: usize, point_data: &[(&str, &[f64])]) {
    if point_data.is_empty() {
        return;
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, values) in point_data {
        assert_eq!(values.len(), n, "point data length mismatch");
        let _ = writeln!(s, "SCALARS {name} double 1");
        s.push_str("LOOKUP_TABLE default\n");
        for v in *values {
            let _ = writeln!(s, "{}", g17(*v));
        }
    }
}

/// MatrixMarket coordinate dump of the lower triangle, 1-based.
pub fn write_matrix_market(path: &Path, m: &SymSparseMatrix) -> Result<()> {
    let mut s = String::new();
    s.push_str("%%MatrixMarket matrix coordinate real symmetric\n");
    let entries: Vec<(usize, usize, f64)> = m.lower_entries().collect();
    let _ = writeln!(s, "{} {} {}", m.dim(), m.dim(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(s, "{} {} {}", i + 1, j + 1, g17(v));
    }
    atomic_write(path, s.as_bytes())
}

/// Spectrum table: one row per mode with its energies.
pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum, ops: &OperatorSet) -> Result<()> {
    let mut s = String::from("mode_index,omega,omega_squared,D_energy,S_energy,coupling\n");
    for (i, m) in spectrum.modes.iter().enumerate() {
        let d = ops.dirichlet_energy(m.phi.as_slice());
        let se = ops.surface_energy(m.xi.as_slice());
        let c = ops.coupling(m.phi.as_slice(), m.xi.as_slice());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            i + 1,
            g17(m.omega),
            g17(m.omega * m.omega),
            g17(d),
            g17(se),
            g17(c)
        );
    }
    atomic_write(path, s.as_bytes())
}

pub fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<()> {
    let mut s = String::from("Bo,mode_index,omega,tracking_overlap\n");
    for row in &table.rows {
        for (j, (&w, &o)) in row.omegas.iter().zip(&row.overlaps).enumerate() {
            let _ = writeln!(s, "{},{},{},{}", row.bond, j + 1, g17(w), g17(o));
        }
    }
    atomic_write(path, s.as_bytes())
}

pub fn write_perturbation_csv(path: &Path, reports: &[PerturbationReport]) -> Result<()> {
    let mut s = String::from("mode_index,omega0,slope_formula,slope_fd,rel_error\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.mode_index + 1,
            g17(r.omega0),
            g17(r.slope_formula),
            g17(r.slope_fd),
            g17(r.rel_error)
        );
    }
    atomic_write(path, s.as_bytes())
}

/// Analytic dispersion table for a set of cylinder indices.
pub fn write_dispersion_csv(
    path: &Path,
    points: &[crate::analytic::DispersionPoint],
) -> Result<()> {
    let mut s = String::from("n,m,z_nm,h_over_a,Bo,lambda_sq,omega_sq\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            p.n,
            p.m,
            g17(p.root),
            g17(p.h_over_a),
            p.bond,
            g17(p.lambda_sq),
            g17(p.omega_sq)
        );
    }
    atomic_write(path, s.as_bytes())
}

/// Convergence study table.
pub struct ConvergenceRow {
    pub level: usize,
    pub n_surface: usize,
    pub omega: f64,
    pub oracle: f64,
    pub rel_error: f64,
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow], order: f64) -> Result<()> {
    let mut s = String::from("level,n_surface,omega1,oracle,rel_error,estimated_order\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.level,
            r.n_surface,
            g17(r.omega),
            g17(r.oracle),
            g17(r.rel_error),
            g17(order)
        );
    }
    atomic_write(path, s.as_bytes())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::geometry::{ContainerSpec, MeshPair};

    #[test]
    fn vtk_files_have_expected_structure() {
        let spec = ContainerSpec::rectangle(1.0, 1.0, 1.0, 2);
        let pair = MeshPair::generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let vol_path = dir.path().join("vol.vtk");
        let phi = vec![0.5; pair.volume.nodes.len()];
        write_vtk_volume(&vol_path, &pair.volume, &[("phi", &phi)]).unwrap();
        let text = std::fs::read_to_string(&vol_path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("\n10\n"));
        assert!(text.contains("SCALARS phi double 1"));

        let surf_path = dir.path().join("surf.vtk");
        let xi = vec![1.0; pair.surface.nodes.len()];
        write_vtk_surface(&surf_path, &pair.surface, &[("xi", &xi)]).unwrap();
        let text = std::fs::read_to_string(&surf_path).unwrap();
        assert!(text.contains("\n5\n"));
        assert!(text.contains("SCALARS xi double 1"));
    }

    #[test]
    fn matrix_market_roundtrip_header() {
        let spec = ContainerSpec::rectangle(1.0, 1.0, 1.0, 2);
        let pair = MeshPair::generate(&spec).unwrap();
        let ops = assemble(&pair, crate::assembly::Bond::Infinite).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mass.mtx");
        write_matrix_market(&path, &ops.surface_mass).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "%%MatrixMarket matrix coordinate real symmetric"
        );
        let head: Vec<usize> = lines
            .next()
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(head[0], ops.n_surface());
        assert_eq!(head[1], ops.n_surface());
        // only the lower triangle is stored
        let body: Vec<&str> = lines.collect();
        assert_eq!(body.len(), head[2]);
        for line in body {
            let f: Vec<&str> = line.split_whitespace().collect();
            let (i, j): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
            assert!(i >= j);
        }
    }

    #[test]
    fn g17_roundtrips_doubles() {
        for &x in &[1.0, -3.5e-13, std::f64::consts::PI, 1.2345678901234567e-300] {
            let s = g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn atomic_write_replaces_existing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        atomic_write(&path, b"old").unwrap();
        atomic_write(&path, b"new").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "new");
        // no leftover temporaries
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
