//! Rectangular prism `Omega = (a, b) x prod(-a_i, a_i)`, the cylinder
//! `Omega x (0, T)` and uniform tensor-product grids over it.
//!
//! Node layout is time-major: `index = k * n_space + i2 * nx1 + i1`. For
//! `n = 1` the transverse axis has a single node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry and diffusion coefficient of the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec<T> {
    /// Spatial dimension, 1 or 2.
    pub n: usize,
    pub a: T,
    pub b: T,
    /// Half-widths `a_i` of the transverse directions (empty for `n = 1`).
    pub half_widths: Vec<T>,
    pub t_end: T,
    pub alpha: T,
}

impl<T: Scalar> DomainSpec<T> {
    pub fn one_d(a: T, b: T, t_end: T, alpha: T) -> Self {
        Self { n: 1, a, b, half_widths: Vec::new(), t_end, alpha }
    }

    pub fn two_d(a: T, b: T, a2: T, t_end: T, alpha: T) -> Self {
        Self { n: 2, a, b, half_widths: vec![a2], t_end, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 1 && self.n != 2 {
            return Err(Error::InvalidDomain(format!("dimension n = {} not in {{1, 2}}", self.n)));
        }
        if self.half_widths.len() != self.n - 1 {
            return Err(Error::InvalidDomain(format!(
                "expected {} transverse half-widths, got {}",
                self.n - 1,
                self.half_widths.len()
            )));
        }
        if !(self.a > T::zero() && self.b > self.a) {
            return Err(Error::InvalidDomain(format!("need 0 < a < b, got a = {}, b = {}", self.a, self.b)));
        }
        if !(self.t_end > T::zero()) {
            return Err(Error::InvalidDomain(format!("need T > 0, got {}", self.t_end)));
        }
        if !(self.alpha > T::zero()) {
            return Err(Error::InvalidDomain(format!("need alpha > 0, got {}", self.alpha)));
        }
        if let Some(w) = self.half_widths.iter().find(|w| !(**w > T::zero())) {
            return Err(Error::InvalidDomain(format!("transverse half-width must be positive, got {w}")));
        }
        Ok(())
    }

    /// Measure of the transverse cross-section `Omega_1` (1 when `n = 1`).
    pub fn cross_section_measure(&self) -> T {
        self.half_widths.iter().fold(T::one(), |acc, w| acc * (*w + *w))
    }
}

/// One of the `2n` lateral faces of the prism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceId {
    /// `x1 = a`
    Minus1,
    /// `x1 = b`
    Plus1,
    /// `x2 = -a2`
    Minus2,
    /// `x2 = +a2`
    Plus2,
}

impl FaceId {
    pub fn axis(self) -> usize {
        match self {
            FaceId::Minus1 | FaceId::Plus1 => 0,
            FaceId::Minus2 | FaceId::Plus2 => 1,
        }
    }

    pub fn is_plus(self) -> bool {
        matches!(self, FaceId::Plus1 | FaceId::Plus2)
    }

    pub fn label(self) -> &'static str {
        match self {
            FaceId::Minus1 => "x1-",
            FaceId::Plus1 => "x1+",
            FaceId::Minus2 => "x2-",
            FaceId::Plus2 => "x2+",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "x1-" => Some(FaceId::Minus1),
            "x1+" => Some(FaceId::Plus1),
            "x2-" => Some(FaceId::Minus2),
            "x2+" => Some(FaceId::Plus2),
            _ => None,
        }
    }
}

/// Spatial nodes of one lateral face, ordered along the tangential axis.
///
/// Edge nodes shared by two faces belong to the face with the lowest axis
/// index, so `x2` faces exclude the `x1 = a` and `x1 = b` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub id: FaceId,
    /// Spatial node indices (`i2 * nx1 + i1`).
    pub nodes: Vec<usize>,
    /// Spacing along the tangential axis; `None` for a point face (`n = 1`).
    pub tangential_spacing: Option<f64>,
    /// Tangential coordinate of each face node.
    pub tangential_coords: Vec<f64>,
    /// Spatial index step pointing into the domain along the normal.
    pub inward_stride: isize,
    /// Grid spacing along the normal axis.
    pub normal_spacing: f64,
}

impl Face {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Uniform tensor-product grid over `Omega x [0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub domain: DomainSpec<T>,
    pub nx1: usize,
    /// Transverse node counts (empty for `n = 1`).
    pub nxi: Vec<usize>,
    pub nt: usize,
    pub hx1: T,
    pub hxi: Vec<T>,
    pub ht: T,
    pub faces: Vec<Face>,
}

/// Axis selector for grid-wide operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Spatial axis `0` (`x1`) or `1` (`x2`).
    Space(usize),
    Time,
}

pub const MIN_NODES: usize = 4;

/// Builds the grid, validating the domain and node counts.
pub fn build_grid<T: Scalar>(spec: DomainSpec<T>, nx1: usize, nxi: &[usize], nt: usize) -> Result<Grid<T>> {
    spec.validate()?;
    if nx1 < MIN_NODES {
        return Err(Error::TooFewNodes { axis: "x1", count: nx1 });
    }
    if nt < MIN_NODES {
        return Err(Error::TooFewNodes { axis: "t", count: nt });
    }
    if nxi.len() != spec.n - 1 {
        return Err(Error::InvalidDomain(format!(
            "expected {} transverse node counts, got {}",
            spec.n - 1,
            nxi.len()
        )));
    }
    if let Some(&c) = nxi.iter().find(|&&c| c < MIN_NODES) {
        return Err(Error::TooFewNodes { axis: "x2", count: c });
    }
    let hx1 = (spec.b - spec.a) / T::count(nx1 - 1);
    let hxi: Vec<T> = spec
        .half_widths
        .iter()
        .zip(nxi)
        .map(|(w, &c)| (*w + *w) / T::count(c - 1))
        .collect();
    let ht = spec.t_end / T::count(nt - 1);
    let mut grid = Grid { domain: spec, nx1, nxi: nxi.to_vec(), nt, hx1, hxi, ht, faces: Vec::new() };
    grid.faces = grid.compute_faces();
    Ok(grid)
}

impl<T: Scalar> Grid<T> {
    pub fn dim(&self) -> usize {
        self.domain.n
    }

    pub fn nx2(&self) -> usize {
        self.nxi.first().copied().unwrap_or(1)
    }

    pub fn n_space(&self) -> usize {
        self.nx1 * self.nx2()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_space() * self.nt
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize, k: usize) -> usize {
        k * self.n_space() + i2 * self.nx1 + i1
    }

    /// Splits a spatial node index into `(i1, i2)`.
    #[inline]
    pub fn space_coords(&self, s: usize) -> (usize, usize) {
        (s % self.nx1, s / self.nx1)
    }

    pub fn x1(&self, i1: usize) -> T {
        if i1 + 1 == self.nx1 {
            self.domain.b
        } else {
            self.domain.a + T::count(i1) * self.hx1
        }
    }

    pub fn x2(&self, i2: usize) -> T {
        match self.domain.half_widths.first() {
            None => T::zero(),
            Some(&w) => {
                if i2 + 1 == self.nx2() {
                    w
                } else {
                    -w + T::count(i2) * self.hxi[0]
                }
            }
        }
    }

    pub fn t(&self, k: usize) -> T {
        if k + 1 == self.nt {
            self.domain.t_end
        } else {
            T::count(k) * self.ht
        }
    }

    /// Number of nodes along an axis.
    pub fn axis_len(&self, axis: Axis) -> usize {
        match axis {
            Axis::Space(0) => self.nx1,
            Axis::Space(1) => self.nx2(),
            Axis::Space(d) => panic!("spatial axis {d} out of range"),
            Axis::Time => self.nt,
        }
    }

    /// Flat index stride between neighbours along an axis.
    pub fn axis_stride(&self, axis: Axis) -> usize {
        match axis {
            Axis::Space(0) => 1,
            Axis::Space(1) => self.nx1,
            Axis::Space(d) => panic!("spatial axis {d} out of range"),
            Axis::Time => self.n_space(),
        }
    }

    pub fn spacing(&self, axis: Axis) -> T {
        match axis {
            Axis::Space(0) => self.hx1,
            Axis::Space(d) => self.hxi[d - 1],
            Axis::Time => self.ht,
        }
    }

    /// Spatial axes followed by time.
    pub fn axes(&self) -> Vec<Axis> {
        let mut v: Vec<Axis> = (0..self.dim()).map(Axis::Space).collect();
        v.push(Axis::Time);
        v
    }

    pub fn space_axes(&self) -> Vec<Axis> {
        (0..self.dim()).map(Axis::Space).collect()
    }

    /// True when the spatial node lies on the boundary of `Omega`.
    pub fn is_boundary_space(&self, s: usize) -> bool {
        let (i1, i2) = self.space_coords(s);
        if i1 == 0 || i1 + 1 == self.nx1 {
            return true;
        }
        self.dim() == 2 && (i2 == 0 || i2 + 1 == self.nx2())
    }

    /// Spatial indices of interior nodes in increasing order.
    pub fn interior_space_nodes(&self) -> Vec<usize> {
        (0..self.n_space()).filter(|&s| !self.is_boundary_space(s)).collect()
    }

    /// Spatial indices of boundary nodes in increasing order.
    pub fn boundary_space_nodes(&self) -> Vec<usize> {
        (0..self.n_space()).filter(|&s| self.is_boundary_space(s)).collect()
    }

    pub fn face(&self, id: FaceId) -> Option<&Face> {
        self.faces.iter().find(|f| f.id == id)
    }

    /// Mean space-time cell volume `h_x1 * ... * h_t`.
    pub fn cell_volume(&self) -> T {
        self.hxi.iter().fold(self.hx1 * self.ht, |acc, h| acc * *h)
    }

    fn compute_faces(&self) -> Vec<Face> {
        let nx1 = self.nx1;
        let nx2 = self.nx2();
        let hx1 = self.hx1.to_f64_lossy();
        let mut faces = Vec::new();
        for id in [FaceId::Minus1, FaceId::Plus1] {
            let i1 = if id.is_plus() { nx1 - 1 } else { 0 };
            let nodes: Vec<usize> = (0..nx2).map(|i2| i2 * nx1 + i1).collect();
            let (tangential_spacing, tangential_coords) = if self.dim() == 2 {
                (
                    Some(self.hxi[0].to_f64_lossy()),
                    (0..nx2).map(|i2| self.x2(i2).to_f64_lossy()).collect(),
                )
            } else {
                (None, vec![0.0])
            };
            faces.push(Face {
                id,
                nodes,
                tangential_spacing,
                tangential_coords,
                inward_stride: if id.is_plus() { -1 } else { 1 },
                normal_spacing: hx1,
            });
        }
        if self.dim() == 2 {
            let hx2 = self.hxi[0].to_f64_lossy();
            for id in [FaceId::Minus2, FaceId::Plus2] {
                let i2 = if id.is_plus() { nx2 - 1 } else { 0 };
                let nodes: Vec<usize> = (1..nx1 - 1).map(|i1| i2 * nx1 + i1).collect();
                faces.push(Face {
                    id,
                    nodes,
                    tangential_spacing: Some(hx1),
                    tangential_coords: (1..nx1 - 1).map(|i1| self.x1(i1).to_f64_lossy()).collect(),
                    inward_stride: if id.is_plus() { -(nx1 as isize) } else { nx1 as isize },
                    normal_spacing: hx2,
                });
            }
        }
        faces
    }
}

/// Contiguous range of time levels `k_lo..=k_hi` strictly inside `(eps, T - eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub k_lo: usize,
    pub k_hi: usize,
}

impl TimeWindow {
    pub fn full(nt: usize) -> Self {
        Self { k_lo: 0, k_hi: nt - 1 }
    }

    pub fn len(&self) -> usize {
        self.k_hi + 1 - self.k_lo
    }

    pub fn is_empty(&self) -> bool {
        self.k_hi < self.k_lo
    }

    pub fn contains(&self, k: usize) -> bool {
        k >= self.k_lo && k <= self.k_hi
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        self.k_lo..=self.k_hi
    }

    pub fn is_subset_of(&self, other: &TimeWindow) -> bool {
        self.k_lo >= other.k_lo && self.k_hi <= other.k_hi
    }
}

/// Time levels of the shrunken cylinder `Omega x (eps, T - eps)`.
///
/// The lower bound is snapped down and the upper bound up to the grid, and
/// only levels strictly inside the interval are kept.
pub fn shrink_cylinder<T: Scalar>(grid: &Grid<T>, eps: T) -> Result<TimeWindow> {
    let t_end = grid.domain.t_end;
    let half = t_end / T::lit(2.0);
    if !(eps > T::zero() && eps < half) {
        return Err(Error::EpsilonOutOfRange { eps: eps.to_f64_lossy(), half: half.to_f64_lossy() });
    }
    let tol = T::lit(1e-9);
    let lo = (eps / grid.ht + tol).floor().to_usize().unwrap_or(0) + 1;
    let hi_f = ((t_end - eps) / grid.ht - tol).ceil().to_usize().unwrap_or(0);
    if hi_f == 0 || hi_f - 1 < lo {
        return Err(Error::EmptyRegion(format!("no grid time strictly inside ({eps}, {})", t_end - eps)));
    }
    Ok(TimeWindow { k_lo: lo, k_hi: hi_f - 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid1(nx1: usize, nt: usize) -> Grid<f64> {
        build_grid(DomainSpec::one_d(1.0, 2.0, 1.0, 1.0), nx1, &[], nt).unwrap()
    }

    #[test]
    fn spacing_is_uniform() {
        let g = grid1(11, 11);
        assert_relative_eq!(g.hx1, 0.1, epsilon = 1e-15);
        assert_relative_eq!(g.ht, 0.1, epsilon = 1e-15);
        assert_eq!(g.x1(10), 2.0);
        assert_eq!(g.x1(0), 1.0);
        assert_eq!(g.t(10), 1.0);
    }

    #[test]
    fn one_d_has_two_point_faces() {
        let g = grid1(11, 11);
        let ids: Vec<FaceId> = g.faces.iter().map(|f| f.id).collect();
        assert_eq!(ids, vec![FaceId::Minus1, FaceId::Plus1]);
        assert_eq!(g.face(FaceId::Minus1).unwrap().nodes, vec![0]);
        assert_eq!(g.face(FaceId::Plus1).unwrap().nodes, vec![10]);
    }

    #[test]
    fn two_d_faces_partition_the_boundary() {
        let spec = DomainSpec::two_d(1.0, 2.0, 1.0, 1.0, 1.0);
        let (nx1, nx2, nt) = (6, 5, 4);
        let g = build_grid(spec, nx1, &[nx2], nt).unwrap();
        assert_eq!(g.faces.len(), 4);
        // node count on the x1 = b face over time, by enumeration
        let plus1 = g.face(FaceId::Plus1).unwrap();
        assert_eq!(plus1.len() * nt, nx2 * nt);

        let mut seen = vec![0usize; g.n_space()];
        for f in &g.faces {
            for &s in &f.nodes {
                seen[s] += 1;
            }
        }
        for s in 0..g.n_space() {
            let expected = usize::from(g.is_boundary_space(s));
            assert_eq!(seen[s], expected, "node {s}");
        }
        let total: usize = g.faces.iter().map(|f| f.len()).sum();
        assert_eq!(total, g.boundary_space_nodes().len());
        assert_eq!(total, 2 * nx2 + 2 * (nx1 - 2));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            build_grid(DomainSpec::one_d(1.0, 2.0, 1.0, 1.0), 3, &[], 11),
            Err(Error::TooFewNodes { .. })
        ));
        assert!(build_grid(DomainSpec::one_d(2.0, 1.0, 1.0, 1.0), 11, &[], 11).is_err());
        assert!(build_grid(DomainSpec::one_d(0.0, 1.0, 1.0, 1.0), 11, &[], 11).is_err());
        assert!(build_grid(DomainSpec::one_d(1.0, 2.0, 1.0, -1.0), 11, &[], 11).is_err());
        assert!(build_grid(DomainSpec::two_d(1.0, 2.0, 0.0, 1.0, 1.0), 11, &[5], 11).is_err());
        let mut spec = DomainSpec::one_d(1.0, 2.0, 1.0, 1.0);
        spec.n = 3;
        assert!(build_grid(spec, 11, &[], 11).is_err());
    }

    #[test]
    fn shrink_cylinder_enumerates_interior_times() {
        let g = grid1(11, 11);
        let w = shrink_cylinder(&g, 0.25).unwrap();
        let times: Vec<f64> = w.levels().map(|k| g.t(k)).collect();
        let expected: Vec<f64> = (0..11).map(|k| g.t(k)).filter(|&t| t > 0.25 && t < 0.75).collect();
        assert_eq!(times, expected);
        assert_eq!((w.k_lo, w.k_hi), (3, 7));

        let all = shrink_cylinder(&g, 1e-9).unwrap();
        assert_eq!((all.k_lo, all.k_hi), (1, 9));

        // eps on a grid time is excluded (strict inequality)
        let on_grid = shrink_cylinder(&g, 0.3).unwrap();
        assert_eq!((on_grid.k_lo, on_grid.k_hi), (4, 6));

        assert!(matches!(shrink_cylinder(&g, 0.5), Err(Error::EpsilonOutOfRange { .. })));
        assert!(shrink_cylinder(&g, 0.0).is_err());
        let single = shrink_cylinder(&g, 0.49).unwrap();
        assert_eq!((single.k_lo, single.k_hi), (5, 5));
    }

    #[test]
    fn shrink_cylinder_is_monotone() {
        let g = grid1(11, 41);
        let mut prev = shrink_cylinder(&g, 0.001).unwrap();
        for j in 1..48 {
            let eps = 0.001 + 0.01 * j as f64;
            let w = shrink_cylinder(&g, eps).unwrap();
            assert!(w.is_subset_of(&prev), "eps = {eps}");
            prev = w;
        }
    }
}
