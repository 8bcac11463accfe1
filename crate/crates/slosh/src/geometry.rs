//! Structured meshes for vertical-walled containers.
//!
//! The fluid domain is an extrusion F x (-h, 0) of a flat free surface F
//! (disk or rectangle). The free surface keeps its own triangulation; the
//! volume mesh is built by extruding every surface triangle into prisms and
//! splitting each prism into three tetrahedra with a global lowest-index
//! diagonal rule, so neighboring prisms always agree on the shared quad
//! diagonal and the mesh stays conforming. Walls are vertical by
//! construction and wall facet normals have an exactly zero z-component.

use std::collections::HashMap;

use crate::error::{Result, SloshError};

/// Planform of the free surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContainerShape {
    Disk { radius: f64 },
    Rectangle { lx: f64, ly: f64 },
}

impl ContainerShape {
    /// Longest planform extent, used to pick the target edge length.
    pub fn max_extent(&self) -> f64 {
        match *self {
            ContainerShape::Disk { radius } => radius,
            ContainerShape::Rectangle { lx, ly } => lx.max(ly),
        }
    }

    /// Analytic planform area.
    pub fn area(&self) -> f64 {
        match *self {
            ContainerShape::Disk { radius } => std::f64::consts::PI * radius * radius,
            ContainerShape::Rectangle { lx, ly } => lx * ly,
        }
    }
}

/// Nondimensional container geometry: planform, depth and target resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainerSpec {
    pub shape: ContainerShape,
    pub depth: f64,
    pub resolution: usize,
}

impl ContainerSpec {
    pub fn disk(radius: f64, depth: f64, resolution: usize) -> Self {
        ContainerSpec {
            shape: ContainerShape::Disk { radius },
            depth,
            resolution,
        }
    }

    pub fn rectangle(lx: f64, ly: f64, depth: f64, resolution: usize) -> Self {
        ContainerSpec {
            shape: ContainerShape::Rectangle { lx, ly },
            depth,
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = match self.shape {
            ContainerShape::Disk { radius } => radius > 0.0 && radius.is_finite(),
            ContainerShape::Rectangle { lx, ly } => {
                lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()
            }
        };
        if !dims_ok {
            return Err(SloshError::InvalidSpec(
                "planform dimensions must be positive and finite".into(),
            ));
        }
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(SloshError::InvalidSpec("depth must be positive".into()));
        }
        if self.resolution < 2 {
            return Err(SloshError::InvalidSpec("resolution must be >= 2".into()));
        }
        Ok(())
    }

    /// Characteristic in-plane edge length, max-extent / resolution.
    pub fn edge_length(&self) -> f64 {
        self.shape.max_extent() / self.resolution as f64
    }

    /// Extrusion layer count keeping cell aspect ratio near one.
    pub fn default_layers(&self) -> usize {
        ((self.depth / self.edge_length()).round() as usize).max(1)
    }
}

/// Triangulated free surface at z = 0.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Edges lying on the contact line, oriented along the boundary walk.
    pub boundary_edges: Vec<[usize; 2]>,
    pub areas: Vec<f64>,
    pub shape: ContainerShape,
}

impl SurfaceMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn boundary_nodes(&self) -> Vec<bool> {
        let mut b = vec![false; self.nodes.len()];
        for e in &self.boundary_edges {
            b[e[0]] = true;
            b[e[1]] = true;
        }
        b
    }
}

/// Boundary facet classification of the extruded domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetTag {
    FreeSurface,
    Wall,
    Bottom,
}

#[derive(Debug, Clone)]
pub struct BoundaryFacet {
    pub nodes: [usize; 3],
    pub tag: FacetTag,
}

/// Tetrahedral mesh of the extruded fluid domain.
#[derive(Debug, Clone)]
pub struct VolumeMesh {
    pub nodes: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    /// surface node index -> volume node index (the z = 0 layer).
    pub surface_trace: Vec<usize>,
    pub boundary_facets: Vec<BoundaryFacet>,
    pub volumes: Vec<f64>,
    pub depth: f64,
    pub layers: usize,
}

impl VolumeMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

/// A surface mesh with its extrusion, kept in sync across refinement.
#[derive(Debug, Clone)]
pub struct MeshPair {
    pub surface: SurfaceMesh,
    pub volume: VolumeMesh,
}

impl MeshPair {
    pub fn generate(spec: &ContainerSpec) -> Result<Self> {
        let surface = mesh_surface(spec)?;
        let volume = extrude(&surface, spec.depth, spec.default_layers())?;
        Ok(MeshPair { surface, volume })
    }

    pub fn generate_with_layers(spec: &ContainerSpec, layers: usize) -> Result<Self> {
        let surface = mesh_surface(spec)?;
        let volume = extrude(&surface, spec.depth, layers)?;
        Ok(MeshPair { surface, volume })
    }

    /// FNV-1a over the raw bits of surface and volume node coordinates.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |x: f64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for p in &self.surface.nodes {
            eat(p[0]);
            eat(p[1]);
        }
        for p in &self.volume.nodes {
            eat(p[0]);
            eat(p[1]);
            eat(p[2]);
        }
        h
    }
}

fn triangle_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

fn compute_areas(nodes: &[[f64; 2]], triangles: &[[usize; 3]]) -> Result<Vec<f64>> {
    triangles
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let a = triangle_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
            if a <= 0.0 {
                Err(SloshError::DegenerateMesh(format!(
                    "triangle {k} has nonpositive area {a:e}"
                )))
            } else {
                Ok(a)
            }
        })
        .collect()
}

/// Conforming triangulation of the free surface.
///
/// Rectangles subdivide into an nx x ny grid of diagonally split cells;
/// disks use a structured polar web with `resolution` rings and boundary
/// nodes placed exactly on the circle.
pub fn mesh_surface(spec: &ContainerSpec) -> Result<SurfaceMesh> {
    spec.validate()?;
    match spec.shape {
        ContainerShape::Rectangle { lx, ly } => mesh_rectangle(lx, ly, spec.resolution),
        ContainerShape::Disk { radius } => mesh_disk(radius, spec.resolution),
    }
}

fn mesh_rectangle(lx: f64, ly: f64, n: usize) -> Result<SurfaceMesh> {
    let edge = lx.max(ly) / n as f64;
    let nx = ((lx / edge).round() as usize).max(1);
    let ny = ((ly / edge).round() as usize).max(1);
    let id = |ix: usize, iy: usize| iy * (nx + 1) + ix;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            nodes.push([lx * ix as f64 / nx as f64, ly * iy as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let v00 = id(ix, iy);
            let v10 = id(ix + 1, iy);
            let v01 = id(ix, iy + 1);
            let v11 = id(ix + 1, iy + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for ix in 0..nx {
        boundary_edges.push([id(ix, 0), id(ix + 1, 0)]);
    }
    for iy in 0..ny {
        boundary_edges.push([id(nx, iy), id(nx, iy + 1)]);
    }
    for ix in (0..nx).rev() {
        boundary_edges.push([id(ix + 1, ny), id(ix, ny)]);
    }
    for iy in (0..ny).rev() {
        boundary_edges.push([id(0, iy + 1), id(0, iy)]);
    }
    let areas = compute_areas(&nodes, &triangles)?;
    Ok(SurfaceMesh {
        nodes,
        triangles,
        boundary_edges,
        areas,
        shape: ContainerShape::Rectangle { lx, ly },
    })
}

fn mesh_disk(radius: f64, n: usize) -> Result<SurfaceMesh> {
    // ring r of n has 6r nodes at radius r/n; boundary nodes are exact
    let ring_start = |r: usize| if r == 0 { 0 } else { 1 + 3 * r * (r - 1) };
    let mut nodes = vec![[0.0, 0.0]];
    for r in 1..=n {
        let rho = radius * r as f64 / n as f64;
        let count = 6 * r;
        for k in 0..count {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            nodes.push([rho * theta.cos(), rho * theta.sin()]);
        }
    }
    let mut triangles = Vec::with_capacity(6 * n * n);
    for s in 0..6 {
        triangles.push([0, ring_start(1) + s, ring_start(1) + (s + 1) % 6]);
    }
    for r in 2..=n {
        let outer = ring_start(r);
        let inner = ring_start(r - 1);
        let on = 6 * r;
        let inn = 6 * (r - 1);
        for s in 0..6 {
            let o = |j: usize| outer + (s * r + j) % on;
            let i = |j: usize| inner + (s * (r - 1) + j) % inn;
            for j in 0..r {
                triangles.push([o(j), o(j + 1), i(j)]);
                if j + 1 < r {
                    triangles.push([o(j + 1), i(j + 1), i(j)]);
                }
            }
        }
    }
    let outer = ring_start(n);
    let on = 6 * n;
    let boundary_edges = (0..on).map(|k| [outer + k, outer + (k + 1) % on]).collect();
    let areas = compute_areas(&nodes, &triangles)?;
    Ok(SurfaceMesh {
        nodes,
        triangles,
        boundary_edges,
        areas,
        shape: ContainerShape::Disk { radius },
    })
}

fn tet_signed_volume(p: [[f64; 3]; 4]) -> f64 {
    let d = [
        [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]],
        [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]],
        [p[3][0] - p[0][0], p[3][1] - p[0][1], p[3][2] - p[0][2]],
    ];
    let det = d[0][0] * (d[1][1] * d[2][2] - d[1][2] * d[2][1])
        - d[0][1] * (d[1][0] * d[2][2] - d[1][2] * d[2][0])
        + d[0][2] * (d[1][0] * d[2][1] - d[1][1] * d[2][0]);
    det / 6.0
}

/// Extrude the surface into `layers` prism slabs, three tets per prism.
pub fn extrude(surface: &SurfaceMesh, depth: f64, layers: usize) -> Result<VolumeMesh> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(SloshError::InvalidSpec("depth must be positive".into()));
    }
    if layers == 0 {
        return Err(SloshError::InvalidSpec("layers must be >= 1".into()));
    }
    let ns = surface.nodes.len();
    let mut nodes = Vec::with_capacity(ns * (layers + 1));
    for l in 0..=layers {
        let z = -depth * l as f64 / layers as f64;
        for p in &surface.nodes {
            nodes.push([p[0], p[1], z]);
        }
    }

    let mut tets = Vec::with_capacity(3 * surface.triangles.len() * layers);
    for tri in &surface.triangles {
        // rotate so the smallest global surface index leads; the quad over
        // edge (p, q) is always split by the diagonal from the upper copy
        // of min(p, q), so neighboring prisms agree on shared faces
        let mut t = *tri;
        while !(t[0] < t[1] && t[0] < t[2]) {
            t = [t[1], t[2], t[0]];
        }
        let (a, b, c) = (t[0], t[1], t[2]);
        for l in 0..layers {
            let u = |s: usize| l * ns + s;
            let w = |s: usize| (l + 1) * ns + s;
            let prism: [[usize; 4]; 3] = if b < c {
                [
                    [u(a), u(b), u(c), w(c)],
                    [u(a), u(b), w(c), w(b)],
                    [u(a), w(b), w(c), w(a)],
                ]
            } else {
                [
                    [u(a), u(b), u(c), w(b)],
                    [u(a), u(c), w(c), w(b)],
                    [u(a), w(a), w(b), w(c)],
                ]
            };
            for mut tet in prism {
                let v =
                    tet_signed_volume([nodes[tet[0]], nodes[tet[1]], nodes[tet[2]], nodes[tet[3]]]);
                if v < 0.0 {
                    tet.swap(2, 3);
                }
                tets.push(tet);
            }
        }
    }

    let mut volumes = Vec::with_capacity(tets.len());
    for (k, tet) in tets.iter().enumerate() {
        let v = tet_signed_volume([nodes[tet[0]], nodes[tet[1]], nodes[tet[2]], nodes[tet[3]]]);
        if v <= 0.0 {
            return Err(SloshError::DegenerateMesh(format!(
                "tet {k} has nonpositive volume {v:e}"
            )));
        }
        volumes.push(v);
    }

    let boundary_facets = extract_boundary_facets(&nodes, &tets, depth);
    let surface_trace = (0..ns).collect();

    Ok(VolumeMesh {
        nodes,
        tets,
        surface_trace,
        boundary_facets,
        volumes,
        depth,
        layers,
    })
}

fn extract_boundary_facets(
    nodes: &[[f64; 3]],
    tets: &[[usize; 4]],
    depth: f64,
) -> Vec<BoundaryFacet> {
    // face key -> (count, outward-oriented nodes, first appearance)
    let mut faces: HashMap<[usize; 3], (usize, [usize; 3], usize)> = HashMap::new();
    let mut order = 0usize;
    for tet in tets {
        // opposite-vertex face list; orientation chosen outward
        let local: [([usize; 3], usize); 4] = [
            ([tet[1], tet[3], tet[2]], tet[0]),
            ([tet[0], tet[2], tet[3]], tet[1]),
            ([tet[0], tet[3], tet[1]], tet[2]),
            ([tet[0], tet[1], tet[2]], tet[3]),
        ];
        for (f, _opp) in local {
            let mut key = f;
            key.sort_unstable();
            let e = faces.entry(key).or_insert((0, f, order));
            e.0 += 1;
            order += 1;
        }
    }
    let mut boundary: Vec<(usize, [usize; 3])> = faces
        .into_values()
        .filter(|(count, _, _)| *count == 1)
        .map(|(_, f, ord)| (ord, f))
        .collect();
    boundary.sort_unstable_by_key(|(ord, _)| *ord);

    boundary
        .into_iter()
        .map(|(_, f)| {
            let zs = [nodes[f[0]][2], nodes[f[1]][2], nodes[f[2]][2]];
            let tag = if zs.iter().all(|&z| z == 0.0) {
                FacetTag::FreeSurface
            } else if zs.iter().all(|&z| z == -depth) {
                FacetTag::Bottom
            } else {
                FacetTag::Wall
            };
            BoundaryFacet { nodes: f, tag }
        })
        .collect()
}

/// z-component of a facet normal; exact zero for vertical wall facets.
pub fn facet_normal_z(nodes: &[[f64; 3]], f: &[usize; 3]) -> f64 {
    let (p0, p1, p2) = (nodes[f[0]], nodes[f[1]], nodes[f[2]]);
    (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
}

/// Uniform 1-to-4 refinement of the surface; boundary midpoints of a disk
/// are re-projected onto the exact circle.
pub fn refine_surface(surface: &SurfaceMesh) -> Result<SurfaceMesh> {
    let mut nodes = surface.nodes.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let boundary: std::collections::HashSet<(usize, usize)> = surface
        .boundary_edges
        .iter()
        .map(|e| (e[0].min(e[1]), e[0].max(e[1])))
        .collect();

    let mut mid = |p: usize, q: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
        let key = (p.min(q), p.max(q));
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let mut xy = [
            0.5 * (nodes[p][0] + nodes[q][0]),
            0.5 * (nodes[p][1] + nodes[q][1]),
        ];
        if boundary.contains(&key) {
            if let ContainerShape::Disk { radius } = surface.shape {
                let r = (xy[0] * xy[0] + xy[1] * xy[1]).sqrt();
                xy = [xy[0] * radius / r, xy[1] * radius / r];
            }
        }
        let idx = nodes.len();
        nodes.push(xy);
        midpoint.insert(key, idx);
        idx
    };

    let mut triangles = Vec::with_capacity(4 * surface.triangles.len());
    for t in &surface.triangles {
        let m01 = mid(t[0], t[1], &mut nodes);
        let m12 = mid(t[1], t[2], &mut nodes);
        let m20 = mid(t[2], t[0], &mut nodes);
        triangles.push([t[0], m01, m20]);
        triangles.push([t[1], m12, m01]);
        triangles.push([t[2], m20, m12]);
        triangles.push([m01, m12, m20]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * surface.boundary_edges.len());
    for e in &surface.boundary_edges {
        let m = midpoint[&(e[0].min(e[1]), e[0].max(e[1]))];
        boundary_edges.push([e[0], m]);
        boundary_edges.push([m, e[1]]);
    }
    let areas = compute_areas(&nodes, &triangles)?;
    Ok(SurfaceMesh {
        nodes,
        triangles,
        boundary_edges,
        areas,
        shape: surface.shape,
    })
}

/// Uniform refinement of the pair: surface 1-to-4, extrusion layer count
/// doubled so the vertical resolution keeps pace.
pub fn refine(pair: &MeshPair) -> Result<MeshPair> {
    let surface = refine_surface(&pair.surface)?;
    let volume = extrude(&surface, pair.volume.depth, pair.volume.layers * 2)?;
    Ok(MeshPair { surface, volume })
}
