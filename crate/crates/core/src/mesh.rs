//! Triangulations of 2D domains with the boundary split into a clamped part (Γ0) and a
//! traction-free part (Γ1), plus the barycentric (Alfeld) refinement the stress element needs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceTag {
    Interior,
    /// Γ0: displacement vanishes, no multiplier.
    Dirichlet,
    /// Γ1: zero normal stress, enforced by the multiplier.
    Traction,
}

/// Union of sides of the unit square, used to select Γ1 for the built-in generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideSet {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl SideSet {
    pub const NONE: SideSet = SideSet {
        left: false,
        right: false,
        bottom: false,
        top: false,
    };

    pub fn is_all(&self) -> bool {
        self.left && self.right && self.bottom && self.top
    }

    /// Parses a comma separated list of `left`, `right`, `bottom`, `top` (or `none`).
    pub fn parse(s: &str) -> Result<Self> {
        let mut out = SideSet::NONE;
        for item in s.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "left" => out.left = true,
                "right" => out.right = true,
                "bottom" => out.bottom = true,
                "top" => out.top = true,
                "none" => {}
                other => return Err(Error::InvalidInput(format!("unknown square side '{other}'"))),
            }
        }
        Ok(out)
    }

    fn contains_edge(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        (self.left && a[0] == 0.0 && b[0] == 0.0)
            || (self.right && a[0] == 1.0 && b[0] == 1.0)
            || (self.bottom && a[1] == 0.0 && b[1] == 0.0)
            || (self.top && a[1] == 1.0 && b[1] == 1.0)
    }
}

impl std::fmt::Display for SideSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = [
            (self.left, "left"),
            (self.right, "right"),
            (self.bottom, "bottom"),
            (self.top, "top"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if names.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", names.join(","))
        }
    }
}

/// Affine element map `x = origin + jac * xi` from the reference triangle and derived data.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub origin: [f64; 2],
    /// `jac[r][c] = d x_r / d xi_c`.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub inv: [[f64; 2]; 2],
    /// Inverse transpose, maps reference gradients to physical gradients.
    pub inv_t: [[f64; 2]; 2],
    pub diameter: f64,
    pub area: f64,
    /// Outward unit normal of local face `i` (the face opposite local vertex `i`).
    pub normals: [[f64; 2]; 3],
    pub face_lengths: [f64; 3],
}

impl ElementGeometry {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let jac = [
            [p[1][0] - p[0][0], p[2][0] - p[0][0]],
            [p[1][1] - p[0][1], p[2][1] - p[0][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        let inv_t = [[inv[0][0], inv[1][0]], [inv[0][1], inv[1][1]]];
        let mut normals = [[0.0; 2]; 3];
        let mut face_lengths = [0.0; 3];
        for i in 0..3 {
            let a = p[(i + 1) % 3];
            let b = p[(i + 2) % 3];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            face_lengths[i] = len;
            normals[i] = [dy / len, -dx / len];
        }
        let diameter = face_lengths.iter().copied().fold(0.0, f64::max);
        Self {
            origin: p[0],
            jac,
            det,
            inv,
            inv_t,
            diameter,
            area: 0.5 * det,
            normals,
            face_lengths,
        }
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Physical gradient from a reference gradient.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// Reference coordinates of the start and end vertex of local face `i`.
pub fn reference_face_endpoints(i: usize) -> ([f64; 2], [f64; 2]) {
    const V: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    (V[(i + 1) % 3], V[(i + 2) % 3])
}

/// An immutable triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Sorted vertex pairs `(a, b)` with `a < b`, in lexicographic order.
    faces: Vec<[usize; 2]>,
    face_tags: Vec<FaceTag>,
    element_faces: Vec<[usize; 3]>,
    /// `+1` when the element's local face runs from `faces[f][0]` to `faces[f][1]`.
    element_face_signs: Vec<[i8; 3]>,
    /// Adjacent elements with the local face index on each.
    face_elements: Vec<Vec<(usize, usize)>>,
    alfeld_parent: Option<Vec<usize>>,
}

fn signed_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

impl Mesh {
    /// Builds a mesh from raw connectivity; `boundary` maps sorted boundary vertex pairs to
    /// their tag and must cover every boundary edge.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: &BTreeMap<[usize; 2], FaceTag>,
        alfeld_parent: Option<Vec<usize>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut used = vec![false; nv];
        for (e, t) in triangles.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!("element {e} references vertex {v} >= {nv}")));
                }
                used[v] = true;
            }
            let area = signed_area([vertices[t[0]], vertices[t[1]], vertices[t[2]]]);
            if area == 0.0 || !area.is_finite() {
                return Err(Error::DegenerateTriangle { element: e, area });
            }
            if area < 0.0 {
                return Err(Error::InvalidMesh(format!("non-CCW element {e}")));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("dangling vertex {v}")));
        }

        let mut edge_map: BTreeMap<[usize; 2], Vec<(usize, usize)>> = BTreeMap::new();
        for (e, t) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = t[(i + 1) % 3];
                let b = t[(i + 2) % 3];
                edge_map.entry([a.min(b), a.max(b)]).or_default().push((e, i));
            }
        }
        let mut faces = Vec::with_capacity(edge_map.len());
        let mut face_tags = Vec::with_capacity(edge_map.len());
        let mut face_elements = Vec::with_capacity(edge_map.len());
        let mut element_faces = vec![[usize::MAX; 3]; triangles.len()];
        let mut element_face_signs = vec![[0i8; 3]; triangles.len()];
        for (f, (pair, adj)) in edge_map.iter().enumerate() {
            let tag = match adj.len() {
                1 => *boundary.get(pair).ok_or_else(|| {
                    Error::InvalidMesh(format!("boundary face ({}, {}) has no tag", pair[0], pair[1]))
                })?,
                2 => FaceTag::Interior,
                n => {
                    return Err(Error::InvalidMesh(format!(
                        "face ({}, {}) shared by {n} elements",
                        pair[0], pair[1]
                    )))
                }
            };
            if tag == FaceTag::Interior && adj.len() == 1 {
                return Err(Error::InvalidMesh(format!(
                    "boundary face ({}, {}) tagged interior",
                    pair[0], pair[1]
                )));
            }
            for &(e, i) in adj {
                let t = triangles[e];
                element_faces[e][i] = f;
                element_face_signs[e][i] = if t[(i + 1) % 3] == pair[0] { 1 } else { -1 };
            }
            faces.push(*pair);
            face_tags.push(tag);
            face_elements.push(adj.clone());
        }
        for pair in boundary.keys() {
            match edge_map.get(pair) {
                Some(adj) if adj.len() == 1 => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary record ({}, {}) is not a boundary edge",
                        pair[0], pair[1]
                    )))
                }
            }
        }
        if !face_tags.contains(&FaceTag::Dirichlet) {
            return Err(Error::InvalidMesh("Γ0 (dirichlet boundary) is empty".into()));
        }
        if let Some(parent) = &alfeld_parent {
            if parent.len() != triangles.len() {
                return Err(Error::InvalidMesh("alfeld parent map has wrong length".into()));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            faces,
            face_tags,
            element_faces,
            element_face_signs,
            face_elements,
            alfeld_parent,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn faces(&self) -> &[[usize; 2]] {
        &self.faces
    }

    pub fn face_tags(&self) -> &[FaceTag] {
        &self.face_tags
    }

    pub fn face_tag(&self, f: usize) -> FaceTag {
        self.face_tags[f]
    }

    pub fn element_faces(&self, e: usize) -> [usize; 3] {
        self.element_faces[e]
    }

    pub fn element_face_signs(&self, e: usize) -> [i8; 3] {
        self.element_face_signs[e]
    }

    /// `(element, local face)` pairs adjacent to face `f`.
    pub fn face_elements(&self, f: usize) -> &[(usize, usize)] {
        &self.face_elements[f]
    }

    pub fn alfeld_parent(&self) -> Option<&[usize]> {
        self.alfeld_parent.as_deref()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn count_faces(&self, tag: FaceTag) -> usize {
        self.face_tags.iter().filter(|&&t| t == tag).count()
    }

    pub fn element_points(&self, e: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn geometry(&self, e: usize) -> ElementGeometry {
        ElementGeometry::new(self.element_points(e))
    }

    pub fn face_length(&self, f: usize) -> f64 {
        let [a, b] = self.faces[f];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.geometry(e).diameter).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.geometry(e).diameter)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.geometry(e).area).sum()
    }

    /// `V - E + T`; equals 1 for a simply connected planar triangulation.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_faces() as i64 + self.n_elements() as i64
    }

    /// Sorted boundary pairs with their tags (the mesh file's boundary section).
    pub fn boundary_records(&self) -> BTreeMap<[usize; 2], FaceTag> {
        self.faces
            .iter()
            .zip(&self.face_tags)
            .filter(|(_, t)| **t != FaceTag::Interior)
            .map(|(f, t)| (*f, *t))
            .collect()
    }
}

fn square_vertices(n: usize) -> Vec<[f64; 2]> {
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            v.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    v
}

fn tag_square_boundary(
    vertices: &[[f64; 2]],
    triangles: &[[usize; 3]],
    gamma1: SideSet,
) -> BTreeMap<[usize; 2], FaceTag> {
    let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for t in triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *count.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }
    count
        .into_iter()
        .filter(|(_, c)| *c == 1)
        .map(|(pair, _)| {
            let tag = if gamma1.contains_edge(vertices[pair[0]], vertices[pair[1]]) {
                FaceTag::Traction
            } else {
                FaceTag::Dirichlet
            };
            (pair, tag)
        })
        .collect()
}

/// Unit square with `n x n` cells, each cut by its lower-left to upper-right diagonal.
pub fn generate_structured_macro(cells_per_side: usize, gamma1: SideSet) -> Result<Mesh> {
    if cells_per_side == 0 {
        return Err(Error::InvalidInput("cells_per_side must be >= 1".into()));
    }
    if gamma1.is_all() {
        return Err(Error::InvalidMesh("Γ0 (dirichlet boundary) is empty".into()));
    }
    let n = cells_per_side;
    let vertices = square_vertices(n);
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let boundary = tag_square_boundary(&vertices, &triangles, gamma1);
    Mesh::from_parts(vertices, triangles, &boundary, None)
}

/// Structured unit-square mesh with every macro triangle split at its barycenter.
///
/// `gamma1` selects the traction-free sides; the remaining sides form Γ0.
pub fn generate_structured_alfeld(cells_per_side: usize, gamma1: SideSet) -> Result<Mesh> {
    alfeld_split(&generate_structured_macro(cells_per_side, gamma1)?)
}

/// Replaces each triangle by three children sharing its barycenter.
///
/// Parent edges are kept whole and keep their boundary tags. Applying the split to an
/// already split mesh splits again (3x the elements); the operation is not idempotent.
pub fn alfeld_split(mesh: &Mesh) -> Result<Mesh> {
    let mut vertices = mesh.vertices.clone();
    let mut triangles = Vec::with_capacity(3 * mesh.n_elements());
    let mut parent = Vec::with_capacity(3 * mesh.n_elements());
    for (e, t) in mesh.triangles.iter().enumerate() {
        let p = mesh.element_points(e);
        let area = signed_area(p);
        if area <= 0.0 || !area.is_finite() {
            return Err(Error::DegenerateTriangle { element: e, area });
        }
        let g = vertices.len();
        vertices.push([
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ]);
        for i in 0..3 {
            triangles.push([t[i], t[(i + 1) % 3], g]);
            parent.push(e);
        }
    }
    Mesh::from_parts(vertices, triangles, &mesh.boundary_records(), Some(parent))
}

/// Writes the `wsym-mesh v1` text format.
pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "wsym-mesh v1");
    let _ = writeln!(s, "dim 2");
    let _ = writeln!(s, "vertices {}", mesh.n_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:?} {:?}", v[0], v[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.n_elements());
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let records = mesh.boundary_records();
    let _ = writeln!(s, "boundary {}", records.len());
    for (pair, tag) in &records {
        let code = if *tag == FaceTag::Traction { 1 } else { 0 };
        let _ = writeln!(s, "{} {} {}", pair[0], pair[1], code);
    }
    s
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

/// Parses the `wsym-mesh v1` format; errors carry 1-based line numbers.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: String| Error::MeshParse { line, message };
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
    };
    let (ln, header) = next("header")?;
    if header != "wsym-mesh v1" {
        return Err(err(ln, format!("malformed header '{header}'")));
    }
    let (ln, dim) = next("dim")?;
    if dim.split_whitespace().collect::<Vec<_>>() != ["dim", "2"] {
        return Err(err(ln, format!("expected 'dim 2', found '{dim}'")));
    }
    fn count(ln: usize, line: &str, key: &str) -> Result<usize> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 || parts[0] != key {
            return Err(Error::MeshParse {
                line: ln,
                message: format!("expected '{key} <count>', found '{line}'"),
            });
        }
        parts[1].parse().map_err(|_| Error::MeshParse {
            line: ln,
            message: format!("invalid {key} count '{}'", parts[1]),
        })
    }
    fn fields<T: std::str::FromStr>(ln: usize, line: &str, n: usize) -> Result<Vec<T>> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != n {
            return Err(Error::MeshParse {
                line: ln,
                message: format!("expected {n} fields, found {}", parts.len()),
            });
        }
        parts
            .iter()
            .map(|p| {
                p.parse::<T>().map_err(|_| Error::MeshParse {
                    line: ln,
                    message: format!("cannot parse '{p}'"),
                })
            })
            .collect()
    }
    let (ln, l) = next("vertices")?;
    let nv = count(ln, l, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next("vertex")?;
        let v: Vec<f64> = fields(ln, l, 2)?;
        vertices.push([v[0], v[1]]);
    }
    let (ln, l) = next("triangles")?;
    let nt = count(ln, l, "triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for e in 0..nt {
        let (ln, l) = next("triangle")?;
        let t: Vec<usize> = fields(ln, l, 3)?;
        if let Some(&bad) = t.iter().find(|&&v| v >= nv) {
            return Err(err(ln, format!("triangle references missing vertex {bad}")));
        }
        let p = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
        let a = signed_area(p);
        if a < 0.0 {
            return Err(err(ln, format!("non-CCW element {e}")));
        }
        if a == 0.0 {
            return Err(err(ln, format!("degenerate element {e}")));
        }
        triangles.push([t[0], t[1], t[2]]);
    }
    let (ln, l) = next("boundary")?;
    let nb = count(ln, l, "boundary")?;
    let mut boundary = BTreeMap::new();
    let mut edge_set = std::collections::BTreeSet::new();
    for t in &triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            edge_set.insert([a.min(b), a.max(b)]);
        }
    }
    for _ in 0..nb {
        let (ln, l) = next("boundary record")?;
        let r: Vec<usize> = fields(ln, l, 3)?;
        let pair = [r[0].min(r[1]), r[0].max(r[1])];
        if !edge_set.contains(&pair) {
            return Err(err(ln, format!("boundary record references nonexistent edge ({}, {})", r[0], r[1])));
        }
        let tag = match r[2] {
            0 => FaceTag::Dirichlet,
            1 => FaceTag::Traction,
            t => return Err(err(ln, format!("unknown boundary tag {t}"))),
        };
        boundary.insert(pair, tag);
    }
    if let Some((ln, l)) = lines.next() {
        return Err(err(ln, format!("trailing content '{l}'")));
    }
    Mesh::from_parts(vertices, triangles, &boundary, None)
}

/// Bucket grid for locating the element containing a point.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    lo: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in mesh.vertices() {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let side = (mesh.n_elements() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); side * side];
        for e in 0..mesh.n_elements() {
            let p = mesh.element_points(e);
            let (mut bl, mut bh) = ([usize::MAX; 2], [0usize; 2]);
            for d in 0..2 {
                let mn = p.iter().map(|q| q[d]).fold(f64::INFINITY, f64::min);
                let mx = p.iter().map(|q| q[d]).fold(f64::NEG_INFINITY, f64::max);
                let tol = 1e-12 * cell[d];
                bl[d] = (((mn - tol - lo[d]) / cell[d]).floor().max(0.0) as usize).min(dims[d] - 1);
                bh[d] = (((mx + tol - lo[d]) / cell[d]).floor().max(0.0) as usize).min(dims[d] - 1);
            }
            for j in bl[1]..=bh[1] {
                for i in bl[0]..=bh[0] {
                    buckets[j * dims[0] + i].push(e);
                }
            }
        }
        Self {
            mesh,
            lo,
            cell,
            dims,
            buckets,
        }
    }

    /// Element containing `x` and the reference coordinates of `x` in it.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let mut idx = [0usize; 2];
        for d in 0..2 {
            let c = ((x[d] - self.lo[d]) / self.cell[d]).floor();
            if c < -1.0 || c > self.dims[d] as f64 {
                return None;
            }
            idx[d] = (c.max(0.0) as usize).min(self.dims[d] - 1);
        }
        let mut best: Option<(usize, [f64; 2], f64)> = None;
        for &e in &self.buckets[idx[1] * self.dims[0] + idx[0]] {
            let g = self.mesh.geometry(e);
            let xi = g.to_reference(x);
            let slack = xi[0].min(xi[1]).min(1.0 - xi[0] - xi[1]);
            if slack >= 0.0 {
                return Some((e, xi));
            }
            if best.as_ref().is_none_or(|b| slack > b.2) {
                best = Some((e, xi, slack));
            }
        }
        best.filter(|b| b.2 > -1e-10).map(|b| (b.0, b.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_counts() {
        let m = generate_structured_alfeld(1, SideSet::NONE).unwrap();
        assert_eq!(m.n_elements(), 6);
        assert_eq!(m.n_vertices(), 6);
        assert_eq!(m.count_faces(FaceTag::Interior), 7);
        assert_eq!(m.count_faces(FaceTag::Dirichlet), 4);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn two_cells_give_24_elements() {
        let m = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        assert_eq!(m.n_elements(), 24);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn right_side_traction() {
        let gamma1 = SideSet {
            right: true,
            ..SideSet::NONE
        };
        let m = generate_structured_alfeld(1, gamma1).unwrap();
        let traction: Vec<_> = (0..m.n_faces())
            .filter(|&f| m.face_tag(f) == FaceTag::Traction)
            .map(|f| m.faces()[f].map(|v| m.vertices()[v]))
            .collect();
        assert_eq!(traction.len(), 1);
        let [a, b] = traction[0];
        assert_eq!((a[0], b[0]), (1.0, 1.0));
        assert_eq!(m.count_faces(FaceTag::Dirichlet), 3);
    }

    #[test]
    fn split_single_triangle() {
        let mut b = BTreeMap::new();
        for p in [[0, 1], [1, 2], [0, 2]] {
            b.insert(p, FaceTag::Dirichlet);
        }
        let m = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], &b, None).unwrap();
        let s = alfeld_split(&m).unwrap();
        assert_eq!(s.vertices()[3], [1.0 / 3.0, 1.0 / 3.0]);
        for e in 0..3 {
            assert!((s.geometry(e).area - 1.0 / 6.0).abs() < 1e-15);
        }
        // parent edges stay whole
        assert_eq!(s.count_faces(FaceTag::Dirichlet), 3);
        // splitting again is not idempotent
        let s2 = alfeld_split(&s).unwrap();
        assert_eq!(s2.n_elements(), 9);
    }

    #[test]
    fn split_rejects_degenerate() {
        let m = generate_structured_macro(1, SideSet::NONE).unwrap();
        let mut bad = m.clone();
        bad.vertices[2] = [0.5, 0.5];
        assert!(matches!(alfeld_split(&bad), Err(Error::DegenerateTriangle { .. })));
    }

    #[test]
    fn area_and_orientation() {
        for n in [1, 3, 8] {
            let m = generate_structured_alfeld(n, SideSet::NONE).unwrap();
            assert!(((m.total_area() - 1.0) / 1.0).abs() < 1e-13);
            assert!((0..m.n_elements()).all(|e| m.geometry(e).det > 0.0));
            for f in 0..m.n_faces() {
                let adj = m.face_elements(f).len();
                match m.face_tag(f) {
                    FaceTag::Interior => assert_eq!(adj, 2),
                    _ => assert_eq!(adj, 1),
                }
            }
            // every barycenter has valence 3 inside its macro element
            let parent = m.alfeld_parent().unwrap();
            let first_bary = (n + 1) * (n + 1);
            for g in first_bary..m.n_vertices() {
                let owners: Vec<usize> = (0..m.n_elements())
                    .filter(|&e| m.triangles()[e].contains(&g))
                    .collect();
                assert_eq!(owners.len(), 3);
                assert!(owners.iter().all(|&e| parent[e] == parent[owners[0]]));
            }
        }
    }

    #[test]
    fn geometry_normals_and_lengths() {
        let m = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        for e in 0..m.n_elements() {
            let g = m.geometry(e);
            let p = m.element_points(e);
            for i in 0..3 {
                let n = g.normals[i];
                assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
                let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                assert!((g.face_lengths[i] - (b[0] - a[0]).hypot(b[1] - a[1])).abs() < 1e-15);
                // outward: the opposite vertex lies on the negative side
                let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                let to_v = [p[i][0] - mid[0], p[i][1] - mid[1]];
                assert!(to_v[0] * n[0] + to_v[1] * n[1] < 0.0);
            }
        }
    }

    #[test]
    fn face_signs_follow_global_order() {
        let m = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        for e in 0..m.n_elements() {
            let t = m.triangles()[e];
            for i in 0..3 {
                let f = m.element_faces(e)[i];
                let start = t[(i + 1) % 3];
                let expect = if start == m.faces()[f][0] { 1 } else { -1 };
                assert_eq!(m.element_face_signs(e)[i], expect);
            }
        }
        // lexicographic face order
        assert!(m.faces().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn round_trip_text() {
        let gamma1 = SideSet {
            top: true,
            ..SideSet::NONE
        };
        let m = generate_structured_alfeld(2, gamma1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mesh");
        write_mesh(&m, &path).unwrap();
        let r = read_mesh(&path).unwrap();
        assert_eq!(r.triangles(), m.triangles());
        assert_eq!(r.faces(), m.faces());
        assert_eq!(r.face_tags(), m.face_tags());
        assert_eq!(r.vertices(), m.vertices());
    }

    #[test]
    fn parse_errors() {
        let cw = "wsym-mesh v1\ndim 2\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\nboundary 0\n";
        let e = parse_mesh(cw).unwrap_err().to_string();
        assert!(e.contains("non-CCW element 0"), "{e}");
        assert!(e.contains("line 8"), "{e}");

        let header = "wsym-mesh v2\n";
        assert!(matches!(parse_mesh(header), Err(Error::MeshParse { line: 1, .. })));

        let missing_edge = "wsym-mesh v1\ndim 2\nvertices 4\n0 0\n1 0\n0 1\n5 5\ntriangles 1\n0 1 2\nboundary 1\n0 3 0\n";
        let e = parse_mesh(missing_edge).unwrap_err().to_string();
        assert!(e.contains("nonexistent edge"), "{e}");

        let dangling = "wsym-mesh v1\ndim 2\nvertices 4\n0 0\n1 0\n0 1\n5 5\ntriangles 1\n0 1 2\nboundary 3\n0 1 0\n1 2 0\n0 2 0\n";
        let e = parse_mesh(dangling).unwrap_err().to_string();
        assert!(e.contains("dangling vertex 3"), "{e}");

        let bad_tag = "wsym-mesh v1\ndim 2\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\nboundary 3\n0 1 0\n1 2 7\n0 2 0\n";
        let e = parse_mesh(bad_tag).unwrap_err().to_string();
        assert!(e.contains("unknown boundary tag 7"), "{e}");

        let ok = "# comment\nwsym-mesh v1\ndim 2\nvertices 3\n0 0\n1 0 # trailing\n0 1\ntriangles 1\n0 1 2\nboundary 3\n0 1 0\n1 2 1\n0 2 0\n";
        let m = parse_mesh(ok).unwrap();
        assert_eq!(m.count_faces(FaceTag::Traction), 1);
    }

    #[test]
    fn rejects_empty_gamma0() {
        let all = SideSet {
            left: true,
            right: true,
            bottom: true,
            top: true,
        };
        assert!(generate_structured_alfeld(1, all).is_err());
    }

    #[test]
    fn locator_finds_points() {
        let m = generate_structured_alfeld(4, SideSet::NONE).unwrap();
        let loc = PointLocator::new(&m);
        for e in 0..m.n_elements() {
            let g = m.geometry(e);
            let x = g.to_physical([0.2, 0.3]);
            let (found, xi) = loc.locate(x).unwrap();
            assert_eq!(found, e);
            assert!((xi[0] - 0.2).abs() < 1e-12 && (xi[1] - 0.3).abs() < 1e-12);
        }
        assert!(loc.locate([1.0, 1.0]).is_some());
        assert!(loc.locate([3.0, 0.5]).is_none());
    }
}
