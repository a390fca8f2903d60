//! Goldberg-polyhedron tiling of the lunar sphere.
//!
//! A class-I Goldberg polyhedron GP(m,0) is the dual of an icosahedral
//! geodesic subdivision of frequency `m`: 10m²+2 cells, of which exactly
//! 12 are pentagons and the rest hexagons. Cells are identified by a
//! stable index; cell centers are the geodesic vertices, pushed onto the
//! sphere by normalizing (gnomonic projection of the flat subdivision).
//!
//! The icosahedron orientation is canonical (one vertex at +z) and its
//! coordinates are built from radical constants rather than trig calls,
//! so cell indices and center vectors are reproducible across runs and
//! platforms. Subdivision points are deduplicated by exact integer
//! barycentric keys, never by float comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean lunar radius in meters.
pub const LUNAR_RADIUS_M: f64 = 1_737_400.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("invalid tiling frequency {0}; frequency must be >= 1")]
    InvalidFrequency(u32),
    #[error("cell frequency {got} does not match tiling frequency {expected}")]
    FrequencyMismatch { expected: u32, got: u32 },
    #[error("cell index {index} out of range for frequency {frequency}")]
    IndexOutOfRange { frequency: u32, index: u32 },
}

/// Identifier of one cell of a GP(m,0) tiling.
///
/// Frequency 0 is reserved for abstract cells addressed by an explicit
/// distance matrix instead of a constructed tiling.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct CellId {
    pub frequency: u32,
    pub index: u32,
}

impl CellId {
    pub fn new(frequency: u32, index: u32) -> CellId {
        CellId { frequency, index }
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "gp{}-{}", self.frequency, self.index)
    }
}

/// Latitude/longitude on the lunar sphere, in degrees.
/// Latitude is in [-90, 90], longitude in (-180, 180].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelenographicCoord {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl SelenographicCoord {
    pub fn new(lat_deg: f64, lon_deg: f64) -> SelenographicCoord {
        SelenographicCoord { lat_deg, lon_deg }
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let lat = self.lat_deg.to_radians();
        let lon = self.lon_deg.to_radians();
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }
}

/// Convert a unit vector back to latitude/longitude, rounded to
/// nanodegrees so the rendering does not depend on last-ULP libm
/// behavior of the host platform.
fn unit_to_coord(v: [f64; 3]) -> SelenographicCoord {
    let lat = v[2].clamp(-1.0, 1.0).asin().to_degrees();
    let lon = v[1].atan2(v[0]).to_degrees();
    let round9 = |x: f64| (x * 1e9).round() / 1e9;
    let mut lon = round9(lon);
    if lon <= -180.0 {
        lon += 360.0;
    }
    SelenographicCoord::new(round9(lat), lon)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross_norm(a: [f64; 3], b: [f64; 3]) -> f64 {
    let x = a[1] * b[2] - a[2] * b[1];
    let y = a[2] * b[0] - a[0] * b[2];
    let z = a[0] * b[1] - a[1] * b[0];
    (x * x + y * y + z * z).sqrt()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// The canonical icosahedron: one vertex at +z, first top-ring vertex at
/// longitude 0. Coordinates come from sqrt(5) radicals only.
fn icosahedron_vertices() -> [[f64; 3]; 12] {
    let s5 = 5.0_f64.sqrt();
    let ring_z = 1.0 / s5;
    let ring_r = 2.0 / s5;
    let cos36 = (s5 + 1.0) / 4.0;
    let sin36 = (10.0 - 2.0 * s5).sqrt() / 4.0;
    let cos72 = (s5 - 1.0) / 4.0;
    let sin72 = (10.0 + 2.0 * s5).sqrt() / 4.0;

    // cos/sin of 36°·k for k = 0..9
    let cos_t = [
        1.0, cos36, cos72, -cos72, -cos36, -1.0, -cos36, -cos72, cos72, cos36,
    ];
    let sin_t = [
        0.0, sin36, sin72, sin72, sin36, 0.0, -sin36, -sin72, -sin72, -sin36,
    ];

    let mut v = [[0.0; 3]; 12];
    v[0] = [0.0, 0.0, 1.0];
    for k in 0..5 {
        // top ring: longitude 72°·k  (= 36°·2k)
        v[1 + k] = [ring_r * cos_t[2 * k], ring_r * sin_t[2 * k], ring_z];
        // bottom ring: longitude 36° + 72°·k
        v[6 + k] = [
            ring_r * cos_t[2 * k + 1],
            ring_r * sin_t[2 * k + 1],
            -ring_z,
        ];
    }
    v[11] = [0.0, 0.0, -1.0];
    v
}

/// The 20 icosahedron faces in a fixed order.
fn icosahedron_faces() -> [[u8; 3]; 20] {
    let mut f = [[0u8; 3]; 20];
    for k in 0..5u8 {
        let k1 = (k + 1) % 5;
        f[k as usize] = [0, 1 + k, 1 + k1]; // top fan
        f[5 + k as usize] = [1 + k, 6 + k, 1 + k1]; // upper band
        f[10 + k as usize] = [6 + k, 6 + k1, 1 + k1]; // lower band
        f[15 + k as usize] = [11, 6 + k, 6 + k1]; // bottom fan
    }
    f
}

/// A constructed GP(m,0) tiling. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Tiling {
    frequency: u32,
    radius_m: f64,
    centers: Vec<[f64; 3]>,
    neighbors: Vec<Vec<u32>>,
    edge_count: usize,
    triangle_count: usize,
}

impl Tiling {
    /// Build the GP(m,0) tiling at the given sphere radius.
    pub fn build(frequency: u32, radius_m: f64) -> Result<Tiling, GridError> {
        if frequency < 1 {
            return Err(GridError::InvalidFrequency(frequency));
        }
        let m = frequency as u32;
        let verts = icosahedron_vertices();
        let faces = icosahedron_faces();

        // Exact integer barycentric key: sorted (icosa vertex, weight)
        // pairs with zero weights dropped. Shared edge and corner points
        // from different faces produce identical keys.
        type Key = Vec<(u8, u32)>;
        let mut ids: BTreeMap<Key, u32> = BTreeMap::new();
        let mut centers: Vec<[f64; 3]> = Vec::new();
        let mut face_grids: Vec<Vec<u32>> = Vec::with_capacity(20);

        let grid_index = |i: u32, j: u32| -> usize {
            // row-major over j (0..=m), then i (0..=m-j)
            let mut idx = 0usize;
            for jj in 0..j {
                idx += (m - jj + 1) as usize;
            }
            idx + i as usize
        };

        for face in faces.iter() {
            let mut grid = vec![0u32; ((m + 1) * (m + 2) / 2) as usize];
            for j in 0..=m {
                for i in 0..=(m - j) {
                    let w = [m - i - j, i, j];
                    let mut key: Key = face
                        .iter()
                        .zip(w.iter())
                        .filter(|(_, &w)| w > 0)
                        .map(|(&v, &w)| (v, w))
                        .collect();
                    key.sort_unstable();
                    let next = centers.len() as u32;
                    let id = *ids.entry(key.clone()).or_insert_with(|| {
                        // Position from the canonical key so the float
                        // evaluation order never depends on which face
                        // reached the point first.
                        let mut p = [0.0f64; 3];
                        for &(v, w) in &key {
                            let vv = verts[v as usize];
                            p[0] += w as f64 * vv[0];
                            p[1] += w as f64 * vv[1];
                            p[2] += w as f64 * vv[2];
                        }
                        centers.push(normalize(p));
                        next
                    });
                    grid[grid_index(i, j)] = id;
                }
            }
            face_grids.push(grid);
        }

        // Adjacency and face counts from the subdivision triangles.
        let mut neighbor_sets: Vec<std::collections::BTreeSet<u32>> =
            vec![Default::default(); centers.len()];
        let mut edges: std::collections::BTreeSet<(u32, u32)> = Default::default();
        let mut triangle_count = 0usize;
        let mut seen_tris: std::collections::BTreeSet<[u32; 3]> = Default::default();
        for grid in &face_grids {
            let mut tri = |a: u32, b: u32, c: u32| {
                let mut t = [a, b, c];
                t.sort_unstable();
                if seen_tris.insert(t) {
                    triangle_count += 1;
                }
                for (x, y) in [(a, b), (b, c), (c, a)] {
                    let e = (x.min(y), x.max(y));
                    edges.insert(e);
                    neighbor_sets[x as usize].insert(y);
                    neighbor_sets[y as usize].insert(x);
                }
            };
            for j in 0..m {
                for i in 0..(m - j) {
                    tri(
                        grid[grid_index(i, j)],
                        grid[grid_index(i + 1, j)],
                        grid[grid_index(i, j + 1)],
                    );
                    if i + j + 2 <= m {
                        tri(
                            grid[grid_index(i + 1, j)],
                            grid[grid_index(i + 1, j + 1)],
                            grid[grid_index(i, j + 1)],
                        );
                    }
                }
            }
        }

        let expected = (10 * m * m + 2) as usize;
        assert_eq!(centers.len(), expected, "cell count must be 10m^2+2");

        let neighbors: Vec<Vec<u32>> = neighbor_sets
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();

        Ok(Tiling {
            frequency,
            radius_m,
            centers,
            neighbors,
            edge_count: edges.len(),
            triangle_count,
        })
    }

    pub fn frequency(&self) -> u32 {
        self.frequency
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn cell_count(&self) -> usize {
        self.centers.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        let f = self.frequency;
        (0..self.centers.len() as u32).map(move |i| CellId::new(f, i))
    }

    pub fn pentagon_count(&self) -> usize {
        self.neighbors.iter().filter(|n| n.len() == 5).count()
    }

    pub fn hexagon_count(&self) -> usize {
        self.neighbors.iter().filter(|n| n.len() == 6).count()
    }

    /// V − E + F of the geodesic mesh (vertices = cells, faces = the
    /// subdivision triangles). 2 for any sphere tessellation.
    pub fn euler_characteristic(&self) -> i64 {
        self.centers.len() as i64 - self.edge_count as i64 + self.triangle_count as i64
    }

    fn check(&self, cell: CellId) -> Result<usize, GridError> {
        if cell.frequency != self.frequency {
            return Err(GridError::FrequencyMismatch {
                expected: self.frequency,
                got: cell.frequency,
            });
        }
        if cell.index as usize >= self.centers.len() {
            return Err(GridError::IndexOutOfRange {
                frequency: cell.frequency,
                index: cell.index,
            });
        }
        Ok(cell.index as usize)
    }

    /// The cell whose center is nearest the coordinate (maximal dot
    /// product); ties break to the lowest index.
    pub fn locate_cell(&self, coord: SelenographicCoord) -> CellId {
        let v = coord.unit_vector();
        CellId::new(self.frequency, argmax_dot(&self.centers, v) as u32)
    }

    pub fn cell_center(&self, cell: CellId) -> Result<SelenographicCoord, GridError> {
        Ok(unit_to_coord(self.centers[self.check(cell)?]))
    }

    pub fn cell_center_unit(&self, cell: CellId) -> Result<[f64; 3], GridError> {
        Ok(self.centers[self.check(cell)?])
    }

    pub fn cell_neighbors(&self, cell: CellId) -> Result<Vec<CellId>, GridError> {
        let i = self.check(cell)?;
        Ok(self.neighbors[i]
            .iter()
            .map(|&n| CellId::new(self.frequency, n))
            .collect())
    }

    /// Great-circle distance between cell centers, in meters.
    pub fn surface_distance_m(&self, a: CellId, b: CellId) -> Result<f64, GridError> {
        let ia = self.check(a)?;
        let ib = self.check(b)?;
        if ia == ib {
            return Ok(0.0);
        }
        let va = self.centers[ia];
        let vb = self.centers[ib];
        let angle = cross_norm(va, vb).atan2(dot(va, vb));
        Ok(angle * self.radius_m)
    }
}

/// Index of the maximal dot product; the first (lowest-index) entry wins
/// exact ties.
fn argmax_dot(centers: &[[f64; 3]], v: [f64; 3]) -> usize {
    let mut best = 0usize;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dot(*c, v);
        if d > best_dot {
            best_dot = d;
            best = i;
        }
    }
    best
}
