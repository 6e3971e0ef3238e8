//! Lateral Cauchy data: Dirichlet and Neumann traces of `u` and `m` on every
//! lateral face, the face-sum norms `H^{2,1}(S_T)` / `H^{1,0}(S_T)`, trace
//! extraction and the smooth noise model.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Face, FaceId, Grid};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::scalar::Scalar;
use crate::stencil::{self, trapezoid_weights, Deriv};

/// Which of the four lateral traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trace {
    /// `u` on `S_T`
    G0,
    /// `d_nu u` on `S_T`
    G1,
    /// `m` on `S_T`
    P0,
    /// `d_nu m` on `S_T`
    P1,
}

impl Trace {
    pub const ALL: [Trace; 4] = [Trace::G0, Trace::G1, Trace::P0, Trace::P1];

    /// Dirichlet traces are measured in `H^{2,1}`, Neumann traces in `H^{1,0}`.
    pub fn norm_kind(self) -> LateralNorm {
        match self {
            Trace::G0 | Trace::P0 => LateralNorm::H21,
            Trace::G1 | Trace::P1 => LateralNorm::H10,
        }
    }

    pub fn is_neumann(self) -> bool {
        matches!(self, Trace::G1 | Trace::P1)
    }

    pub fn is_density(self) -> bool {
        matches!(self, Trace::P0 | Trace::P1)
    }

    pub fn label(self) -> &'static str {
        match self {
            Trace::G0 => "g0",
            Trace::G1 => "g1",
            Trace::P0 => "p0",
            Trace::P1 => "p1",
        }
    }
}

/// Face-local norm type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LateralNorm {
    /// tangential derivatives to order 2, time derivative to order 1
    H21,
    /// tangential derivatives to order 1, no time derivative
    H10,
}

/// Traces on one face; arrays are time-major (`k * face_len + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceData<T> {
    pub id: FaceId,
    pub g0: Vec<T>,
    pub g1: Vec<T>,
    pub p0: Vec<T>,
    pub p1: Vec<T>,
}

impl<T: Scalar> FaceData<T> {
    pub fn get(&self, which: Trace) -> &[T] {
        match which {
            Trace::G0 => &self.g0,
            Trace::G1 => &self.g1,
            Trace::P0 => &self.p0,
            Trace::P1 => &self.p1,
        }
    }

    pub fn get_mut(&mut self, which: Trace) -> &mut Vec<T> {
        match which {
            Trace::G0 => &mut self.g0,
            Trace::G1 => &mut self.g1,
            Trace::P0 => &mut self.p0,
            Trace::P1 => &mut self.p1,
        }
    }
}

/// Lateral Cauchy data on every face of a grid.
#[derive(Debug, Clone)]
pub struct CauchyData<T> {
    grid: Arc<Grid<T>>,
    pub faces: Vec<FaceData<T>>,
}

impl<T: Scalar> PartialEq for CauchyData<T> {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.faces == other.faces
    }
}

impl<T: Scalar> CauchyData<T> {
    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let faces = grid
            .faces
            .iter()
            .map(|f| {
                let n = f.len() * grid.nt;
                FaceData { id: f.id, g0: vec![T::zero(); n], g1: vec![T::zero(); n], p0: vec![T::zero(); n], p1: vec![T::zero(); n] }
            })
            .collect();
        Self { grid, faces }
    }

    pub fn from_faces(grid: Arc<Grid<T>>, faces: Vec<FaceData<T>>) -> Result<Self> {
        let d = Self { grid, faces };
        d.check_conforming()?;
        Ok(d)
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn check_conforming(&self) -> Result<()> {
        if self.faces.len() != self.grid.faces.len() {
            return Err(Error::Nonconforming(format!(
                "{} faces given, grid has {}",
                self.faces.len(),
                self.grid.faces.len()
            )));
        }
        for (fd, f) in self.faces.iter().zip(&self.grid.faces) {
            if fd.id != f.id {
                return Err(Error::Nonconforming(format!("face {:?} where {:?} expected", fd.id, f.id)));
            }
            let n = f.len() * self.grid.nt;
            for which in Trace::ALL {
                if fd.get(which).len() != n {
                    return Err(Error::Nonconforming(format!(
                        "face {} trace {} has {} values, expected {n}",
                        f.id.label(),
                        which.label(),
                        fd.get(which).len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn face_data(&self, id: FaceId) -> Option<&FaceData<T>> {
        self.faces.iter().find(|f| f.id == id)
    }

    /// `self - other`, trace by trace.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a - b)
    }

    pub fn combine(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if *self.grid != *other.grid {
            return Err(Error::GridMismatch("Cauchy data on different grids".into()));
        }
        let faces = self
            .faces
            .iter()
            .zip(&other.faces)
            .map(|(a, b)| {
                let mut out = a.clone();
                for which in Trace::ALL {
                    for (o, &v) in out.get_mut(which).iter_mut().zip(b.get(which)) {
                        *o = f(*o, v);
                    }
                }
                out
            })
            .collect();
        Ok(Self { grid: self.grid.clone(), faces })
    }

    /// Face-sum norm of one trace, in the norm `which.norm_kind()`.
    pub fn norm(&self, which: Trace) -> Result<T> {
        norm_lateral(self, which)
    }

    /// All four norms in the order `g0, g1, p0, p1`.
    pub fn norms(&self) -> Result<[T; 4]> {
        Ok([self.norm(Trace::G0)?, self.norm(Trace::G1)?, self.norm(Trace::P0)?, self.norm(Trace::P1)?])
    }
}

/// Quadrature weights and tangential spacing of a face.
pub(crate) fn face_geometry<T: Scalar>(face: &Face) -> (Vec<T>, Option<T>) {
    let hs = face.tangential_spacing.map(T::lit);
    let ws = match hs {
        Some(h) => trapezoid_weights(face.len(), h),
        None => vec![T::one()],
    };
    (ws, hs)
}

/// Squared face-local norm of `values` (time-major over the face nodes).
pub fn face_norm_sq<T: Scalar>(face: &Face, grid: &Grid<T>, values: &[T], kind: LateralNorm) -> T {
    let nf = face.len();
    let nt = grid.nt;
    let (ws, hs) = face_geometry::<T>(face);
    let wt = trapezoid_weights(nt, grid.ht);
    let mut total = T::zero();
    for k in 0..nt {
        let line = &values[k * nf..(k + 1) * nf];
        let (ds, dss) = match hs {
            Some(h) => (
                stencil::apply_line(Deriv::First, line, h),
                if kind == LateralNorm::H21 { stencil::apply_line(Deriv::Second, line, h) } else { Vec::new() },
            ),
            None => (Vec::new(), Vec::new()),
        };
        for j in 0..nf {
            let w = ws[j] * wt[k];
            let mut integrand = line[j] * line[j];
            if let Some(v) = ds.get(j) {
                integrand += *v * *v;
            }
            if let Some(v) = dss.get(j) {
                integrand += *v * *v;
            }
            total += w * integrand;
        }
    }
    if kind == LateralNorm::H21 {
        // time derivative along each face node
        for j in 0..nf {
            let line: Vec<T> = (0..nt).map(|k| values[k * nf + j]).collect();
            let dt = stencil::apply_line(Deriv::First, &line, grid.ht);
            for k in 0..nt {
                total += ws[j] * wt[k] * dt[k] * dt[k];
            }
        }
    }
    total
}

/// `||p||_{S_T}` as the square root of the sum over faces of squared face norms.
pub fn norm_lateral<T: Scalar>(data: &CauchyData<T>, which: Trace) -> Result<T> {
    data.check_conforming()?;
    let grid = data.grid();
    let total = data
        .faces
        .iter()
        .zip(&grid.faces)
        .fold(T::zero(), |acc, (fd, f)| acc + face_norm_sq(f, grid, fd.get(which), which.norm_kind()));
    Ok(total.sqrt())
}

/// Outward normal derivative at face node `s` and level `k` by the
/// three-point one-sided stencil.
pub fn normal_derivative<T: Scalar>(field: &ScalarField<T>, face: &Face, s: usize, k: usize) -> T {
    let c = stencil::outward_normal_coeffs(T::lit(face.normal_spacing));
    let ns = field.grid().n_space();
    let base = k * ns;
    let v = field.values();
    let s1 = (s as isize + face.inward_stride) as usize;
    let s2 = (s as isize + 2 * face.inward_stride) as usize;
    c[0] * v[base + s] + c[1] * v[base + s1] + c[2] * v[base + s2]
}

/// Dirichlet traces by restriction, Neumann traces by second-order one-sided differences.
pub fn extract_traces<T: Scalar>(u: &ScalarField<T>, m: &ScalarField<T>) -> Result<CauchyData<T>> {
    u.check_same_grid(m)?;
    let grid = u.grid().clone();
    let ns = grid.n_space();
    let faces = grid
        .faces
        .iter()
        .map(|f| {
            let n = f.len() * grid.nt;
            let mut fd = FaceData {
                id: f.id,
                g0: Vec::with_capacity(n),
                g1: Vec::with_capacity(n),
                p0: Vec::with_capacity(n),
                p1: Vec::with_capacity(n),
            };
            for k in 0..grid.nt {
                for &s in &f.nodes {
                    fd.g0.push(u.values()[k * ns + s]);
                    fd.g1.push(normal_derivative(u, f, s, k));
                    fd.p0.push(m.values()[k * ns + s]);
                    fd.p1.push(normal_derivative(m, f, s, k));
                }
            }
            fd
        })
        .collect();
    Ok(CauchyData { grid, faces })
}

/// Number of trigonometric modes per axis in the noise model.
pub const NOISE_MODES: usize = 4;

/// Adds smooth seeded noise rescaled so that each of the four trace-difference
/// norms equals `delta`. `delta = 0` returns the input unchanged.
pub fn perturb_to_delta<T: Scalar>(data: &CauchyData<T>, delta: T, seed: u64) -> Result<CauchyData<T>> {
    if !(delta >= T::zero()) {
        return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {delta}")));
    }
    data.check_conforming()?;
    if delta == T::zero() {
        return Ok(data.clone());
    }
    let noise = smooth_noise(data.grid(), seed);
    let mut out = data.clone();
    for which in Trace::ALL {
        let n = noise.norm(which)?;
        if !(n > T::zero()) {
            return Err(Error::InvalidParameter("degenerate noise sample".into()));
        }
        let scale = calibrate_scale(data, &noise, which, delta / n, delta)?;
        for ((fo, fd), fnoise) in out.faces.iter_mut().zip(&data.faces).zip(&noise.faces) {
            for ((o, &d), &e) in fo.get_mut(which).iter_mut().zip(fd.get(which)).zip(fnoise.get(which)) {
                *o = d + scale * e;
            }
        }
        refine_entries(data, &mut out, which, delta);
    }
    Ok(out)
}

/// Nudges single entries by one ulp until the stored increment has norm
/// `delta` to about machine precision. Entries with small sensitivity give
/// the fine control that rescaling alone cannot.
fn refine_entries<T: Scalar>(data: &CauchyData<T>, out: &mut CauchyData<T>, which: Trace, delta: T) {
    let grid = data.grid().clone();
    let kind = which.norm_kind();
    let target = delta * delta;
    let tol = T::lit(1e-14) * target;
    let face_q = |fo: &FaceData<T>, fd: &FaceData<T>, face: &Face| {
        let inc: Vec<T> = fo.get(which).iter().zip(fd.get(which)).map(|(&o, &d)| o - d).collect();
        face_norm_sq(face, &grid, &inc, kind)
    };
    let mut qs: Vec<T> = out.faces.iter().zip(&data.faces).zip(&grid.faces).map(|((fo, fd), f)| face_q(fo, fd, f)).collect();
    let mut total: T = qs.iter().fold(T::zero(), |a, &b| a + b);
    for _pass in 0..3 {
        for fi in 0..out.faces.len() {
            let n = out.faces[fi].get(which).len();
            for j in 0..n {
                if (total - target).abs() <= tol {
                    return;
                }
                let v = out.faces[fi].get(which)[j];
                let step = v.abs().max(T::min_positive_value()) * T::epsilon();
                let dir = if total > target { -T::one() } else { T::one() };
                for cand in [v + dir * step, v - dir * step] {
                    out.faces[fi].get_mut(which)[j] = cand;
                    let q = face_q(&out.faces[fi], &data.faces[fi], &grid.faces[fi]);
                    let t2 = total - qs[fi] + q;
                    if (t2 - target).abs() < (total - target).abs() {
                        qs[fi] = q;
                        total = t2;
                        break;
                    }
                    out.faces[fi].get_mut(which)[j] = v;
                }
            }
        }
    }
}

/// Norm of the increment `(d + s e) - d` as actually stored in floating point.
fn stored_increment_norm<T: Scalar>(data: &CauchyData<T>, noise: &CauchyData<T>, which: Trace, s: T) -> Result<T> {
    let grid = data.grid();
    let mut total = T::zero();
    for ((fd, fnoise), face) in data.faces.iter().zip(&noise.faces).zip(&grid.faces) {
        let inc: Vec<T> = fd.get(which).iter().zip(fnoise.get(which)).map(|(&d, &e)| (d + s * e) - d).collect();
        total += face_norm_sq(face, grid, &inc, which.norm_kind());
    }
    Ok(total.sqrt())
}

/// Scale factor whose stored increment has norm `delta`.
///
/// Rounding of `d + s e` perturbs the increment by up to one ulp of `d`, which
/// the tangential second differences amplify; the factor is refined against
/// the stored increment, first by fixed-point rescaling and then by a local
/// scan of neighbouring factors.
fn calibrate_scale<T: Scalar>(data: &CauchyData<T>, noise: &CauchyData<T>, which: Trace, s0: T, delta: T) -> Result<T> {
    let target_rel = T::lit(1e-14);
    let mut best = s0;
    let mut best_err = (stored_increment_norm(data, noise, which, s0)? / delta - T::one()).abs();
    let mut s = s0;
    for _ in 0..4 {
        if best_err <= target_rel {
            return Ok(best);
        }
        let nrm = stored_increment_norm(data, noise, which, s)?;
        s *= delta / nrm;
        let err = (stored_increment_norm(data, noise, which, s)? / delta - T::one()).abs();
        if err < best_err {
            best = s;
            best_err = err;
        }
    }
    let centre = best;
    let step = T::lit(1e-13).max(best_err / T::lit(4.0));
    for i in 1..=400 {
        if best_err <= target_rel {
            break;
        }
        let offset = T::count((i + 1) / 2) * step * if i % 2 == 0 { -T::one() } else { T::one() };
        let cand = centre * (T::one() + offset);
        let err = (stored_increment_norm(data, noise, which, cand)? / delta - T::one()).abs();
        if err < best_err {
            best = cand;
            best_err = err;
        }
    }
    Ok(best)
}

/// Unscaled band-limited noise on every face and trace.
pub fn smooth_noise<T: Scalar>(grid: &Arc<Grid<T>>, seed: u64) -> CauchyData<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CauchyData::zeros(grid.clone());
    let t_end = grid.domain.t_end.to_f64_lossy();
    for which in Trace::ALL {
        for (fd, face) in out.faces.iter_mut().zip(&grid.faces) {
            let coeff: Vec<f64> = (0..NOISE_MODES * NOISE_MODES).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phase_s: Vec<f64> = (0..NOISE_MODES).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let phase_t: Vec<f64> = (0..NOISE_MODES).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let sigma = normalized_tangential(face, grid);
            let nf = face.len();
            let values = fd.get_mut(which);
            for k in 0..grid.nt {
                let tau = grid.t(k).to_f64_lossy() / t_end;
                for (j, &sg) in sigma.iter().enumerate() {
                    let mut v = 0.0;
                    for p in 0..NOISE_MODES {
                        let bs = (p as f64 * PI * sg + phase_s[p]).cos();
                        for q in 0..NOISE_MODES {
                            v += coeff[p * NOISE_MODES + q] * bs * (q as f64 * PI * tau + phase_t[q]).cos();
                        }
                    }
                    values[k * nf + j] = T::lit(v);
                }
            }
        }
    }
    out
}

/// Tangential coordinate of each face node mapped to `[0, 1]` over the full side.
fn normalized_tangential<T: Scalar>(face: &Face, grid: &Grid<T>) -> Vec<f64> {
    if face.tangential_spacing.is_none() {
        return vec![0.0];
    }
    let (lo, hi) = match face.id.axis() {
        0 => {
            let w = grid.domain.half_widths[0].to_f64_lossy();
            (-w, w)
        }
        _ => (grid.domain.a.to_f64_lossy(), grid.domain.b.to_f64_lossy()),
    };
    face.tangential_coords.iter().map(|c| (c - lo) / (hi - lo)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, DomainSpec};
    use approx::assert_relative_eq;

    fn grid1() -> Arc<Grid<f64>> {
        Arc::new(build_grid(DomainSpec::one_d(1.0, 2.0, 1.0, 1.0), 11, &[], 9).unwrap())
    }

    fn grid2() -> Arc<Grid<f64>> {
        Arc::new(build_grid(DomainSpec::two_d(1.0, 2.0, 0.5, 1.0, 1.0), 9, &[7], 6).unwrap())
    }

    #[test]
    fn neumann_of_linear_field() {
        let g = grid2();
        let u = ScalarField::from_fn(g.clone(), |x1, _, _| x1);
        let d = extract_traces(&u, &u).unwrap();
        let plus = d.face_data(FaceId::Plus1).unwrap();
        assert!(plus.g1.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let minus = d.face_data(FaceId::Minus1).unwrap();
        assert!(minus.g1.iter().all(|v| (v + 1.0).abs() < 1e-12));
        let side = d.face_data(FaceId::Plus2).unwrap();
        assert!(side.g1.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn neumann_of_constant_and_quadratic() {
        let g = grid1();
        let c = ScalarField::from_fn(g.clone(), |_, _, _| 4.2);
        let d = extract_traces(&c, &c).unwrap();
        for f in &d.faces {
            assert!(f.g1.iter().chain(&f.p1).all(|v| v.abs() < 1e-12));
        }
        let q = ScalarField::from_fn(g.clone(), |x1, _, _| x1 * x1);
        let d = extract_traces(&q, &q).unwrap();
        assert!(d.face_data(FaceId::Plus1).unwrap().g1.iter().all(|v| (v - 4.0).abs() < 1e-11));
        assert!(d.face_data(FaceId::Minus1).unwrap().g1.iter().all(|v| (v + 2.0).abs() < 1e-11));
    }

    #[test]
    fn constant_data_on_one_face() {
        // H^{1,0} norm of constant c on a face of measure A over (0, T) is c sqrt(A T)
        let g = grid2();
        let mut d = CauchyData::zeros(g.clone());
        let c = 0.7;
        for v in d.faces[1].g1.iter_mut() {
            *v = c;
        }
        assert_relative_eq!(d.norm(Trace::G1).unwrap(), c * (1.0f64 * 1.0).sqrt(), max_relative = 1e-12);
        let g1d = grid1();
        let mut d = CauchyData::zeros(g1d);
        for v in d.faces[0].p1.iter_mut() {
            *v = c;
        }
        assert_relative_eq!(d.norm(Trace::P1).unwrap(), c, max_relative = 1e-12);
    }

    #[test]
    fn single_face_equals_face_norm() {
        let g = grid2();
        let u = ScalarField::from_fn(g.clone(), |x1, x2, t| (x1 + 2.0 * x2).sin() * (1.0 + t));
        let full = extract_traces(&u, &u).unwrap();
        let mut only = CauchyData::zeros(g.clone());
        only.faces[2] = full.faces[2].clone();
        let expected = face_norm_sq(&g.faces[2], &g, &full.faces[2].g0, LateralNorm::H21).sqrt();
        assert_relative_eq!(only.norm(Trace::G0).unwrap(), expected, max_relative = 1e-14);
        assert_eq!(CauchyData::zeros(g).norm(Trace::G0).unwrap(), 0.0);
    }

    #[test]
    fn perturbation_hits_delta_exactly() {
        for g in [grid1(), grid2()] {
            let u = ScalarField::from_fn(g.clone(), |x1, x2, t| x1 * t + x2);
            let m = ScalarField::from_fn(g.clone(), |x1, _, t| 1.0 + 0.1 * (x1 - t).cos());
            let d = extract_traces(&u, &m).unwrap();
            for delta in [1e-2, 1e-4, 1e-6] {
                let p = perturb_to_delta(&d, delta, 7).unwrap();
                let diff = p.difference(&d).unwrap();
                for n in diff.norms().unwrap() {
                    assert_relative_eq!(n, delta, max_relative = 1e-12);
                }
            }
            assert_eq!(perturb_to_delta(&d, 0.0, 7).unwrap(), d);
            assert_eq!(perturb_to_delta(&d, 1e-3, 3).unwrap(), perturb_to_delta(&d, 1e-3, 3).unwrap());
            assert_ne!(perturb_to_delta(&d, 1e-3, 3).unwrap(), perturb_to_delta(&d, 1e-3, 4).unwrap());
        }
    }

    #[test]
    fn nonconforming_rejected() {
        let g = grid1();
        let mut d = CauchyData::zeros(g);
        d.faces[0].g0.pop();
        assert!(matches!(d.norm(Trace::G0), Err(Error::Nonconforming(_))));
    }
}
