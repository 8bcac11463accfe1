//! Direct solver for the interior Neumann problems.
//!
//! The volume stiffness is singular (constants), so one node is grounded and
//! the remaining SPD system is factored once per mesh by an envelope
//! (profile) Cholesky under a reverse Cuthill-McKee ordering. Extruded
//! meshes are strongly banded, which keeps the envelope small.

use crate::error::{Result, SloshError};
use crate::sparse::SymSparseMatrix;

/// Reverse Cuthill-McKee ordering. `adj` holds sorted neighbor lists.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut level = Vec::new();
    let mut next_level = Vec::new();

    // BFS returning (eccentricity, min-degree node of last level)
    let bfs = |start: usize, seen: &mut Vec<bool>| {
        for s in seen.iter_mut() {
            *s = false;
        }
        let mut frontier = vec![start];
        seen[start] = true;
        let mut ecc = 0usize;
        let mut last = vec![start];
        while !frontier.is_empty() {
            last = frontier.clone();
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            if !next.is_empty() {
                ecc += 1;
            }
            frontier = next;
        }
        let best = *last
            .iter()
            .min_by_key(|&&u| (deg[u], u))
            .expect("nonempty level");
        (ecc, best)
    };

    let mut scratch = vec![false; n];
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start (George-Liu)
        let mut start = seed;
        let (mut ecc, mut cand) = bfs(start, &mut scratch);
        loop {
            let (e2, c2) = bfs(cand, &mut scratch);
            start = cand;
            if e2 > ecc {
                ecc = e2;
                cand = c2;
            } else {
                break;
            }
        }
        // Cuthill-McKee BFS over this component
        level.clear();
        level.push(start);
        visited[start] = true;
        while !level.is_empty() {
            next_level.clear();
            for &w in level.iter() {
                order.push(w);
                let mut nbrs: Vec<usize> =
                    adj[w].iter().copied().filter(|&v| !visited[v]).collect();
                nbrs.sort_by_key(|&v| (deg[v], v));
                for v in nbrs {
                    visited[v] = true;
                    next_level.push(v);
                }
            }
            std::mem::swap(&mut level, &mut next_level);
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factorization of a grounded SPD stiffness matrix.
///
/// `ground` names the node removed from the singular operator; solutions
/// carry a zero there and callers re-normalize the constant mode as needed.
pub struct EnvelopeCholesky {
    n_full: usize,
    ground: usize,
    /// perm[new] = grounded index
    perm: Vec<usize>,
    first: Vec<usize>,
    row_ptr: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

#[inline]
fn to_grounded(full: usize, ground: usize) -> Option<usize> {
    use std::cmp::Ordering::*;
    match full.cmp(&ground) {
        Less => Some(full),
        Equal => None,
        Greater => Some(full - 1),
    }
}

#[inline]
fn to_full(g: usize, ground: usize) -> usize {
    if g < ground {
        g
    } else {
        g + 1
    }
}

impl EnvelopeCholesky {
    pub fn factor(a: &SymSparseMatrix, ground: usize) -> Result<Self> {
        let n_full = a.dim();
        assert!(ground < n_full);
        let n = n_full - 1;
        if n == 0 {
            return Err(SloshError::SingularOperator(
                "grounded system is empty".into(),
            ));
        }

        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i_full in 0..n_full {
            let Some(i) = to_grounded(i_full, ground) else {
                continue;
            };
            let (cols, _) = a.row(i_full);
            for &j_full in cols {
                if j_full == i_full {
                    continue;
                }
                if let Some(j) = to_grounded(j_full, ground) {
                    adj[i].push(j);
                }
            }
            adj[i].sort_unstable();
        }

        let perm = reverse_cuthill_mckee(&adj);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let mut first = vec![0usize; n];
        for i in 0..n {
            let old = perm[i];
            let mut lo = i;
            for &j_old in &adj[old] {
                let j = iperm[j_old];
                if j < lo {
                    lo = j;
                }
            }
            first[i] = lo;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + (i - first[i]);
        }
        let mut vals = vec![0.0f64; row_ptr[n]];
        let mut diag = vec![0.0f64; n];

        let mut seg: Vec<f64> = Vec::new();
        for i in 0..n {
            let fi = first[i];
            seg.clear();
            seg.resize(i - fi, 0.0);
            let old = perm[i];
            let old_full = to_full(old, ground);
            let (cols, avals) = a.row(old_full);
            let mut aii = 0.0;
            for (&j_full, &v) in cols.iter().zip(avals) {
                if j_full == old_full {
                    aii = v;
                    continue;
                }
                let Some(jg) = to_grounded(j_full, ground) else {
                    continue;
                };
                let j = iperm[jg];
                if j < i {
                    debug_assert!(j >= fi);
                    seg[j - fi] = v;
                }
            }
            // eliminate along the envelope
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = seg[j - fi];
                if lo < j {
                    let li = &seg[(lo - fi)..(j - fi)];
                    let lj = &vals[(row_ptr[j] + lo - fj)..(row_ptr[j] + j - fj)];
                    let mut dot = 0.0;
                    for (x, y) in li.iter().zip(lj) {
                        dot += x * y;
                    }
                    s -= dot;
                }
                seg[j - fi] = s / diag[j];
            }
            let mut d = aii;
            for v in &seg {
                d -= v * v;
            }
            if d <= 0.0 {
                return Err(SloshError::SingularOperator(format!(
                    "nonpositive pivot {:e} at grounded row {i}",
                    d
                )));
            }
            diag[i] = d.sqrt();
            vals[row_ptr[i]..row_ptr[i + 1]].copy_from_slice(&seg);
        }

        Ok(EnvelopeCholesky {
            n_full,
            ground,
            perm,
            first,
            row_ptr,
            vals,
            diag,
        })
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn envelope_len(&self) -> usize {
        self.vals.len()
    }

    /// Solve the grounded system for a full-length right hand side. The
    /// entry at the ground node is ignored; the solution carries zero there.
    pub fn solve(&self, b_full: &[f64]) -> Vec<f64> {
        assert_eq!(b_full.len(), self.n_full);
        let n = self.n_full - 1;
        let mut x = vec![0.0f64; n];
        for i in 0..n {
            x[i] = b_full[to_full(self.perm[i], self.ground)];
        }
        // forward: L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.vals[self.row_ptr[i]..self.row_ptr[i + 1]];
            let mut s = x[i];
            for (k, lv) in row.iter().enumerate() {
                s -= lv * x[fi + k];
            }
            x[i] = s / self.diag[i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            x[i] /= self.diag[i];
            let xi = x[i];
            let fi = self.first[i];
            let row = &self.vals[self.row_ptr[i]..self.row_ptr[i + 1]];
            for (k, lv) in row.iter().enumerate() {
                x[fi + k] -= lv * xi;
            }
        }
        let mut out = vec![0.0f64; self.n_full];
        for i in 0..n {
            out[to_full(self.perm[i], self.ground)] = x[i];
        }
        out
    }
}
