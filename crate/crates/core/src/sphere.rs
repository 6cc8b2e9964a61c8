//! Points on `S^{d-1}` for `d ∈ {2, 3}`, geodesic geometry and maximal
//! separated node sets.

use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const UNIT_TOL: f64 = 1e-12;

/// A direction in `R^d`, `d ∈ {2, 3}`; unused trailing coordinates are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector {
    c: [f64; 3],
    d: usize,
}

impl UnitVector {
    /// Accepts coordinates whose Euclidean norm is 1 within `1e-12`.
    pub fn new(coords: &[f64]) -> Result<Self> {
        let v = Self::raw(coords)?;
        let norm = v.dot(&v).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return domain(format!("vector has norm {norm}, expected 1"));
        }
        Ok(v)
    }

    /// Normalizes a nonzero vector.
    pub fn normalize(coords: &[f64]) -> Result<Self> {
        let mut v = Self::raw(coords)?;
        let norm = v.dot(&v).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return domain("cannot normalize a zero or non-finite vector");
        }
        for x in v.c.iter_mut() {
            *x /= norm;
        }
        Ok(v)
    }

    fn raw(coords: &[f64]) -> Result<Self> {
        let d = coords.len();
        if !(2..=3).contains(&d) {
            return domain(format!("dimension must be 2 or 3, got {d}"));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return domain("coordinates must be finite");
        }
        let mut c = [0.0; 3];
        c[..d].copy_from_slice(coords);
        Ok(Self { c, d })
    }

    /// Caller guarantees `|c| = 1` and `c[d..] = 0`.
    pub(crate) fn from_array(c: [f64; 3], d: usize) -> Self {
        Self { c, d }
    }

    pub fn axis(d: usize, i: usize) -> Result<Self> {
        if !(2..=3).contains(&d) || i >= d {
            return domain(format!("axis {i} is not defined in dimension {d}"));
        }
        let mut c = [0.0; 3];
        c[i] = 1.0;
        Ok(Self { c, d })
    }

    /// `(cos θ, sin θ)`.
    pub fn from_angle(theta: f64) -> Self {
        Self { c: [theta.cos(), theta.sin(), 0.0], d: 2 }
    }

    /// Polar angle `theta` from `e_3`, azimuth `phi`.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let s = theta.sin();
        Self { c: [s * phi.cos(), s * phi.sin(), theta.cos()], d: 3 }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.d]
    }

    pub(crate) fn array(&self) -> [f64; 3] {
        self.c
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.c[0] * other.c[0] + self.c[1] * other.c[1] + self.c[2] * other.c[2]
    }

    pub(crate) fn dot_slice(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.c).map(|(a, b)| a * b).sum()
    }

    pub fn neg(&self) -> Self {
        Self { c: [-self.c[0], -self.c[1], -self.c[2]], d: self.d }
    }

    /// Angle on the circle; only meaningful for `d = 2`.
    pub fn angle(&self) -> f64 {
        self.c[1].atan2(self.c[0])
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        // Serialized coordinates are rounded; renormalize after a loose check.
        let u = Self::raw(&v)?;
        let norm = u.dot(&u).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return domain(format!("vector has norm {norm}, expected 1"));
        }
        Self::normalize(&v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(u: UnitVector) -> Self {
        u.coords().to_vec()
    }
}

/// Angle between two unit vectors, computed stably as `atan2(|x × y|, ⟨x, y⟩)`.
pub(crate) fn angle_between(x: &UnitVector, y: &UnitVector) -> f64 {
    let (a, b) = (x.c, y.c);
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    s.atan2(x.dot(y))
}

pub fn geodesic_distance(x: &UnitVector, y: &UnitVector) -> Result<f64> {
    if x.d != y.d {
        return domain(format!("dimension mismatch: {} vs {}", x.d, y.d));
    }
    for v in [x, y] {
        let norm = v.dot(v).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return domain(format!("vector has norm {norm}, expected 1"));
        }
    }
    Ok(angle_between(x, y))
}

/// The closed cap `{y : d(x, y) ≤ radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub center: UnitVector,
    pub radius: f64,
}

impl Cap {
    pub fn new(center: UnitVector, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= PI) {
            return domain(format!("cap radius must lie in (0, π], got {radius}"));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, y: &UnitVector) -> bool {
        angle_between(&self.center, y) <= self.radius
    }
}

/// Uniform bucket grid over the ambient cube `[-1, 1]^d`.
pub(crate) struct SpatialGrid {
    h: f64,
    d: usize,
    cells: HashMap<[i32; 3], Vec<usize>>,
    points: Vec<[f64; 3]>,
}

impl SpatialGrid {
    pub fn new(d: usize, h: f64) -> Self {
        Self { h, d, cells: HashMap::new(), points: Vec::new() }
    }

    pub fn from_points(d: usize, h: f64, pts: &[UnitVector]) -> Self {
        let mut g = Self::new(d, h);
        for p in pts {
            g.insert(p.c);
        }
        g
    }

    fn key(&self, x: &[f64; 3]) -> [i32; 3] {
        let mut k = [0i32; 3];
        for i in 0..self.d {
            k[i] = (x[i] / self.h).floor() as i32;
        }
        k
    }

    pub fn insert(&mut self, x: [f64; 3]) -> usize {
        let idx = self.points.len();
        let k = self.key(&x);
        self.cells.entry(k).or_default().push(idx);
        self.points.push(x);
        idx
    }

    fn chord2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    }

    /// Visits every stored point within Euclidean distance `radius` of `x`.
    pub fn for_each_within(&self, x: &[f64; 3], radius: f64, mut f: impl FnMut(usize, f64)) {
        let k = self.key(x);
        let reach = (radius / self.h).ceil() as i32;
        let zr = if self.d == 3 { reach } else { 0 };
        let r2 = radius * radius;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -zr..=zr {
                    let key = [k[0] + dx, k[1] + dy, k[2] + dz];
                    if let Some(bucket) = self.cells.get(&key) {
                        for &i in bucket {
                            let c2 = Self::chord2(&self.points[i], x);
                            if c2 <= r2 {
                                f(i, c2.sqrt());
                            }
                        }
                    }
                }
            }
        }
    }

    /// Nearest stored point and its Euclidean distance.
    pub fn nearest(&self, x: &[f64; 3]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let k = self.key(x);
        let max_shell = (2.0 / self.h).ceil() as i32 + 2;
        let mut best: Option<(usize, f64)> = None;
        for r in 0..=max_shell {
            let zr = if self.d == 3 { r } else { 0 };
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -zr..=zr {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(bucket) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &i in bucket {
                                let c2 = Self::chord2(&self.points[i], x);
                                if best.is_none_or(|(_, b)| c2 < b) {
                                    best = Some((i, c2));
                                }
                            }
                        }
                    }
                }
            }
            if let Some((_, b)) = best {
                if b.sqrt() <= r as f64 * self.h {
                    break;
                }
            }
        }
        best.map(|(i, c2)| (i, c2.sqrt()))
    }
}

pub(crate) fn chord_to_angle(c: f64) -> f64 {
    2.0 * (0.5 * c).min(1.0).asin()
}

pub(crate) fn angle_to_chord(a: f64) -> f64 {
    2.0 * (0.5 * a.min(PI)).sin()
}

/// A maximal `separation`-separated point set with its measured covering radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSet {
    pub d: usize,
    pub points: Vec<UnitVector>,
    pub separation: f64,
    pub covering_radius: f64,
    pub seed: u64,
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Wraps explicit points, measuring separation and covering radius.
    pub fn from_points(d: usize, points: Vec<UnitVector>, seed: u64) -> Result<Self> {
        if points.is_empty() || points.iter().any(|p| p.dim() != d) {
            return domain("points must be nonempty and share the dimension");
        }
        let separation = min_pairwise_distance(&points);
        let covering_radius = measured_covering_radius(d, &points, seed);
        Ok(Self { d, points, separation, covering_radius, seed })
    }
}

/// Smallest pairwise geodesic distance (π for a single point).
pub fn min_pairwise_distance(points: &[UnitVector]) -> f64 {
    let mut best = PI;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.min(angle_between(a, b));
        }
    }
    best
}

/// Covering radius measured against a dense deterministic verification set.
pub fn measured_covering_radius(d: usize, points: &[UnitVector], seed: u64) -> f64 {
    if d == 2 {
        let mut angles: Vec<f64> = points.iter().map(|p| p.angle().rem_euclid(2.0 * PI)).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut gap: f64 = angles[0] + 2.0 * PI - angles[angles.len() - 1];
        for w in angles.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        return 0.5 * gap;
    }
    let sep = min_pairwise_distance(points).max(1e-3);
    let grid = SpatialGrid::from_points(3, angle_to_chord(sep).max(1e-3), points);
    let verify = fibonacci_points(verification_count(sep), rotation_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15));
    verify
        .iter()
        .map(|v| chord_to_angle(grid.nearest(&v.c).map(|(_, c)| c).unwrap_or(2.0)))
        .fold(0.0, f64::max)
}

fn candidate_count(eps: f64) -> usize {
    ((4.0 * PI * 36.0) / (eps * eps)).ceil().clamp(2_000.0, 4.0e6) as usize
}

fn verification_count(eps: f64) -> usize {
    2 * candidate_count(eps)
}

type Rotation = [[f64; 3]; 3];

fn rotation_from_seed(seed: u64) -> Rotation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = [0.0f64; 4];
    loop {
        for x in q.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.iter_mut().for_each(|x| *x /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Rotated Fibonacci lattice with `m` points on `S^2`.
fn fibonacci_points(m: usize, rot: Rotation) -> Vec<UnitVector> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..m)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / m as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            let p = [r * phi.cos(), r * phi.sin(), z];
            let mut c = [0.0; 3];
            for (row, out) in rot.iter().zip(c.iter_mut()) {
                *out = row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
            }
            let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            UnitVector::from_array([c[0] / n, c[1] / n, c[2] / n], 3)
        })
        .collect()
}

#[derive(PartialEq)]
struct Far(f64, usize);

impl Eq for Far {}

impl PartialOrd for Far {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Far {
    // Larger distance first; ties go to the smaller index.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Farthest-point insertion over a candidate cloud until every candidate is
/// within `eps` of the set.
fn farthest_point_insertion(candidates: &[UnitVector], eps: f64) -> Vec<usize> {
    let m = candidates.len();
    let mut dist = vec![f64::INFINITY; m];
    let mut heap: BinaryHeap<Far> = BinaryHeap::new();
    let cand_grid = SpatialGrid::from_points(3, angle_to_chord(eps).max(1e-3), candidates);
    let mut chosen = Vec::new();
    heap.push(Far(f64::INFINITY, 0));
    while let Some(Far(dv, i)) = heap.pop() {
        if dv != dist[i] {
            continue;
        }
        if dv < eps {
            break;
        }
        chosen.push(i);
        dist[i] = 0.0;
        let p = &candidates[i];
        // Only candidates closer to p than their current distance change.
        let reach = if dv.is_finite() { dv } else { PI };
        let mut touched = Vec::new();
        if reach > 0.5 {
            for (j, q) in candidates.iter().enumerate() {
                let a = angle_between(p, q);
                if a < dist[j] {
                    dist[j] = a;
                    touched.push(j);
                }
            }
        } else {
            cand_grid.for_each_within(&p.c, angle_to_chord(reach), |j, c| {
                let a = chord_to_angle(c);
                if a < dist[j] {
                    dist[j] = a;
                    touched.push(j);
                }
            });
        }
        for j in touched {
            if dist[j] >= eps {
                heap.push(Far(dist[j], j));
            }
        }
    }
    chosen
}

/// Builds a maximal `eps`-separated set on `S^{d-1}`, deterministic in `seed`.
///
/// On the circle the points are `⌊2π/eps⌋` equally spaced angles with a
/// seeded offset. On `S^2` they come from farthest-point insertion over a
/// seeded rotated Fibonacci cloud, then gaps found on a denser verification
/// cloud are filled.
pub fn build_maximal_separated_set(d: usize, eps: f64, seed: u64) -> Result<SeparatedSet> {
    if !(eps > 0.0 && eps <= PI) {
        return domain(format!("separation must lie in (0, π], got {eps}"));
    }
    let set = match d {
        2 => {
            let k = ((2.0 * PI / eps) + 1e-9).floor() as usize;
            let step = 2.0 * PI / k as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let offset = rng.random::<f64>() * step;
            let points = (0..k).map(|i| UnitVector::from_angle(offset + step * i as f64)).collect();
            SeparatedSet { d, points, separation: eps, covering_radius: 0.5 * step, seed }
        }
        3 => build_sphere_set(eps, seed)?,
        _ => return domain(format!("dimension must be 2 or 3, got {d}")),
    };
    verify_separated_set(&set)?;
    Ok(set)
}

fn build_sphere_set(eps: f64, seed: u64) -> Result<SeparatedSet> {
    let candidates = fibonacci_points(candidate_count(eps), rotation_from_seed(seed));
    let mut points: Vec<UnitVector> = farthest_point_insertion(&candidates, eps).into_iter().map(|i| candidates[i]).collect();
    let h = angle_to_chord(eps).max(1e-3);
    let mut grid = SpatialGrid::from_points(3, h, &points);
    let verify = fibonacci_points(verification_count(eps), rotation_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15));
    let mut covering: f64 = 0.0;
    for v in &verify {
        let (_, c) = grid.nearest(&v.c).expect("set is nonempty");
        let a = chord_to_angle(c);
        if a >= eps {
            grid.insert(v.c);
            points.push(*v);
        } else {
            covering = covering.max(a);
        }
    }
    Ok(SeparatedSet { d: 3, points, separation: eps, covering_radius: covering, seed })
}

/// Checks separation exactly and maximality against the recorded covering radius.
pub fn verify_separated_set(set: &SeparatedSet) -> Result<()> {
    let fail = |msg: String| Err(Error::Infeasible { message: msg, residual: set.covering_radius });
    if set.points.is_empty() {
        return fail("empty node set".into());
    }
    let grid = SpatialGrid::from_points(set.d, angle_to_chord(set.separation).max(1e-3), &set.points);
    let chord = angle_to_chord(set.separation);
    for (i, p) in set.points.iter().enumerate() {
        let mut bad = None;
        grid.for_each_within(&p.c, chord, |j, _| {
            if j != i && angle_between(p, &set.points[j]) < set.separation * (1.0 - 1e-12) {
                bad = Some(j);
            }
        });
        if let Some(j) = bad {
            return fail(format!("points {i} and {j} are closer than the separation"));
        }
    }
    if set.covering_radius >= set.separation {
        return fail(format!(
            "covering radius {} is not below the separation {}",
            set.covering_radius, set.separation
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distances_of_axes() {
        let e1 = UnitVector::axis(3, 0).unwrap();
        let e2 = UnitVector::axis(3, 1).unwrap();
        assert_eq!(geodesic_distance(&e1, &e1).unwrap(), 0.0);
        assert_abs_diff_eq!(geodesic_distance(&e1, &e1.neg()).unwrap(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(geodesic_distance(&e1, &e2).unwrap(), PI / 2.0, epsilon = 1e-15);
        assert!(UnitVector::new(&[1.0, 1.0]).is_err());
        assert!(geodesic_distance(&e1, &UnitVector::axis(2, 0).unwrap()).is_err());
    }

    #[test]
    fn circle_sets() {
        let s = build_maximal_separated_set(2, PI, 3).unwrap();
        assert_eq!(s.len(), 2);
        assert_abs_diff_eq!(s.points[0].dot(&s.points[1]), -1.0, epsilon = 1e-12);
        assert_eq!(build_maximal_separated_set(2, 0.6 * PI, 3).unwrap().len(), 3);
        for k in 4..40 {
            let s = build_maximal_separated_set(2, 2.0 * PI / k as f64, k as u64).unwrap();
            assert!(s.len() >= k / 2 && s.len() <= k);
        }
        assert!(build_maximal_separated_set(2, 0.0, 1).is_err());
    }

    #[test]
    fn sphere_set_is_maximal() {
        let s = build_maximal_separated_set(3, 0.3, 11).unwrap();
        assert!(min_pairwise_distance(&s.points) >= 0.3);
        assert!(s.covering_radius < 0.3);
        let again = build_maximal_separated_set(3, 0.3, 11).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn nearest_matches_scan() {
        let pts = fibonacci_points(500, rotation_from_seed(1));
        let grid = SpatialGrid::from_points(3, 0.1, &pts);
        for q in fibonacci_points(50, rotation_from_seed(2)) {
            let (i, _) = grid.nearest(&q.c).unwrap();
            let best = pts.iter().map(|p| angle_between(p, &q)).fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(angle_between(&pts[i], &q), best, epsilon = 1e-14);
        }
    }
}
