//! Concentric-ring codebook for the UCA, the user-side angular grid, and the
//! Kronecker sparsifying dictionary built from both.
//!
//! Angles are spaced so that adjacent codewords on a ring sit `x` apart in
//! the Bessel argument `beta = (4 pi R / lambda) sin(dtheta / 2)`, and rings
//! are spaced uniformly in inverse range so that adjacent rings sit `x`
//! apart in `zeta = (2 pi R^2 / lambda)(1/(4 r1) - 1/(4 r2))`. The sampling
//! argument `x` defaults to the first zero of `J0`.
//!
//! Ring index 0 is the far-field ring (`r = inf`); ring `s` for `s >= 1` sits
//! at `r_delta / s`. Codebook columns are ring-major:
//! `column = ring * n_angles + angle`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DistanceModel, UcaGeometry, UlaGeometry};
use crate::linalg::{kron, matmul, CMat, CVec};
use crate::specfun::j0;

/// `2 asin(lambda x / (4 pi R))`.
pub fn angular_spacing(geom: &UcaGeometry, sampling_arg: f64) -> Result<f64> {
    let s = geom.wavelength() * sampling_arg / (4.0 * PI * geom.radius());
    if !(0.0..=1.0).contains(&s) || s.is_nan() {
        return Err(Error::Geometry(format!(
            "radius {} m too small for sampling argument {sampling_arg} (asin argument {s})",
            geom.radius()
        )));
    }
    Ok(2.0 * s.asin())
}

/// `r_delta = pi R^2 / (2 lambda x)`, the range of ring 1.
pub fn ring_constant(geom: &UcaGeometry, sampling_arg: f64) -> f64 {
    PI * geom.radius().powi(2) / (2.0 * geom.wavelength() * sampling_arg)
}

/// Radius giving exactly `n_angles` angular samples. Places `2 pi / theta_delta`
/// at `n_angles + 0.5` so the floor is insensitive to rounding.
pub fn radius_for_angle_count(n_angles: usize, wavelength: f64, sampling_arg: f64) -> Result<f64> {
    if n_angles < 2 {
        return Err(Error::Config("at least two angular samples are required".into()));
    }
    let theta_delta = 2.0 * PI / (n_angles as f64 + 0.5);
    Ok(wavelength * sampling_arg / (4.0 * PI * (0.5 * theta_delta).sin()))
}

/// Minimum range giving exactly `n_rings` rings (far-field ring included).
/// Places `r_delta / r_min` at `n_rings - 0.5`.
pub fn r_min_for_ring_count(n_rings: usize, ring_constant: f64) -> Result<f64> {
    if n_rings == 0 {
        return Err(Error::Config("ring count must be positive".into()));
    }
    Ok(ring_constant / (n_rings as f64 - 0.5))
}

#[derive(Debug, Clone)]
pub struct RingCodebook {
    matrix: CMat,
    angle_grid: Vec<f64>,
    ring_grid: Vec<f64>,
    theta_delta: f64,
    ring_constant: f64,
    sampling_arg: f64,
    r_min: f64,
    geometry: UcaGeometry,
    distance_model: DistanceModel,
}

/// Inspection header written next to a codebook dump. The far-field ring is
/// encoded as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookHeader {
    pub n_r: usize,
    pub radius: f64,
    pub wavelength: f64,
    pub theta_delta: f64,
    pub sampling_arg: f64,
    pub ring_constant: f64,
    pub r_min: f64,
    pub distance_model: DistanceModel,
    pub angle_grid: Vec<f64>,
    pub ring_grid: Vec<Option<f64>>,
}

pub fn build_ring_codebook(
    geom: &UcaGeometry,
    r_min: f64,
    sampling_arg: f64,
    distance_model: DistanceModel,
) -> Result<RingCodebook> {
    if !(r_min > 0.0 && r_min.is_finite()) {
        return Err(Error::Domain(format!("r_min must be positive, got {r_min}")));
    }
    if !(sampling_arg > 0.0 && sampling_arg.is_finite()) {
        return Err(Error::Domain(format!(
            "sampling argument must be positive, got {sampling_arg}"
        )));
    }
    let theta_delta = angular_spacing(geom, sampling_arg)?;
    let n_angles = (2.0 * PI / theta_delta).floor() as usize;
    // S1 = floor(2 pi / theta_delta) - 1, angles s1 = 0..=S1
    if n_angles < 2 {
        return Err(Error::Geometry(format!(
            "angular spacing {theta_delta} rad leaves fewer than two samples"
        )));
    }
    let angle_grid: Vec<f64> = (0..n_angles).map(|s| s as f64 * theta_delta).collect();

    let r_delta = ring_constant(geom, sampling_arg);
    let s2 = (r_delta / r_min).floor() as usize;
    let ring_grid: Vec<f64> = std::iter::once(f64::INFINITY)
        .chain((1..=s2).map(|s| r_delta / s as f64))
        .collect();

    let n_r = geom.n_elements();
    let mut matrix = CMat::zeros(n_r, angle_grid.len() * ring_grid.len());
    for (ri, &r) in ring_grid.iter().enumerate() {
        for (ai, &theta) in angle_grid.iter().enumerate() {
            let col = geom.near_steering_unchecked(r, theta, distance_model);
            matrix.set_column(ri * angle_grid.len() + ai, &col);
        }
    }

    Ok(RingCodebook {
        matrix,
        angle_grid,
        ring_grid,
        theta_delta,
        ring_constant: r_delta,
        sampling_arg,
        r_min,
        geometry: geom.clone(),
        distance_model,
    })
}

impl RingCodebook {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn angle_grid(&self) -> &[f64] {
        &self.angle_grid
    }

    /// Descending, far-field ring (`inf`) first.
    pub fn ring_grid(&self) -> &[f64] {
        &self.ring_grid
    }

    pub fn theta_delta(&self) -> f64 {
        self.theta_delta
    }

    pub fn ring_constant(&self) -> f64 {
        self.ring_constant
    }

    pub fn sampling_arg(&self) -> f64 {
        self.sampling_arg
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn geometry(&self) -> &UcaGeometry {
        &self.geometry
    }

    pub fn distance_model(&self) -> DistanceModel {
        self.distance_model
    }

    pub fn n_angles(&self) -> usize {
        self.angle_grid.len()
    }

    pub fn n_rings(&self) -> usize {
        self.ring_grid.len()
    }

    pub fn n_columns(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column_index(&self, ring: usize, angle: usize) -> usize {
        ring * self.n_angles() + angle
    }

    /// `(ring, angle)` of a column.
    pub fn grid_position(&self, column: usize) -> (usize, usize) {
        (column / self.n_angles(), column % self.n_angles())
    }

    /// Nearest angle sample in circular distance.
    pub fn nearest_angle(&self, theta: f64) -> usize {
        let wrapped = theta.rem_euclid(2.0 * PI);
        let mut best = (0, f64::INFINITY);
        for (i, &a) in self.angle_grid.iter().enumerate() {
            let d = (wrapped - a).abs();
            let d = d.min(2.0 * PI - d);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Nearest ring in inverse range, the metric the rings are uniform in.
    pub fn nearest_ring(&self, r: f64) -> usize {
        let inv = 1.0 / r;
        let step = 1.0 / self.ring_constant;
        let s = (inv / step).round() as usize;
        s.min(self.n_rings() - 1)
    }

    /// Largest `|<a(r, theta_s), a(r, theta_{s+1})>|` over all rings.
    pub fn adjacent_angle_coherence(&self) -> f64 {
        let n_a = self.n_angles();
        let mut worst: f64 = 0.0;
        for ring in 0..self.n_rings() {
            for s in 0..n_a - 1 {
                let a = self.matrix.column(self.column_index(ring, s));
                let b = self.matrix.column(self.column_index(ring, s + 1));
                worst = worst.max(a.dotc(&b).norm());
            }
        }
        worst
    }

    /// Largest off-diagonal `|Gram|` entry of the codebook.
    pub fn mutual_coherence(&self) -> f64 {
        mutual_coherence(&self.matrix)
    }

    pub fn header(&self) -> CodebookHeader {
        CodebookHeader {
            n_r: self.geometry.n_elements(),
            radius: self.geometry.radius(),
            wavelength: self.geometry.wavelength(),
            theta_delta: self.theta_delta,
            sampling_arg: self.sampling_arg,
            ring_constant: self.ring_constant,
            r_min: self.r_min,
            distance_model: self.distance_model,
            angle_grid: self.angle_grid.clone(),
            ring_grid: self
                .ring_grid
                .iter()
                .map(|&r| r.is_finite().then_some(r))
                .collect(),
        }
    }

    /// Writes `codebook.json` (header) and `codebook.csv`
    /// (`row,col,re,im`, one line per entry) into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header_path = dir.join("codebook.json");
        let json = serde_json::to_string_pretty(&self.header())
            .map_err(|e| Error::format(&header_path, e))?;
        std::fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;

        let csv_path = dir.join("codebook.csv");
        let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&csv_path, e);
        writeln!(w, "row,col,re,im").map_err(io)?;
        for j in 0..self.matrix.ncols() {
            for i in 0..self.matrix.nrows() {
                let z = self.matrix[(i, j)];
                writeln!(w, "{i},{j},{},{}", z.re, z.im).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Largest off-diagonal `|Gram|` entry of the column-normalised matrix.
pub fn mutual_coherence(m: &CMat) -> f64 {
    let gram = matmul(&m.adjoint(), m);
    let mut worst: f64 = 0.0;
    for j in 0..gram.ncols() {
        for i in 0..j {
            let denom = (gram[(i, i)].re * gram[(j, j)].re).sqrt();
            if denom > 0.0 {
                worst = worst.max(gram[(i, j)].norm() / denom);
            }
        }
    }
    worst
}

/// Histogram of off-diagonal `|Gram|` magnitudes on `[0, 1]`.
pub fn coherence_histogram(m: &CMat, bins: usize) -> Vec<(f64, f64, usize)> {
    let bins = bins.max(1);
    let gram = matmul(&m.adjoint(), m);
    let mut counts = vec![0usize; bins];
    for j in 0..gram.ncols() {
        for i in 0..j {
            let v = gram[(i, j)].norm().clamp(0.0, 1.0);
            let b = ((v * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b as f64 / bins as f64, (b + 1) as f64 / bins as f64, c))
        .collect()
}

/// User-side grid with direction cosines `2 (t - 1) / G_T - 1`, `t = 1..=G_T`.
#[derive(Debug, Clone)]
pub struct UlaGrid {
    direction_cosines: Vec<f64>,
    angles: Vec<f64>,
    matrix: CMat,
    geometry: UlaGeometry,
}

pub fn build_ula_grid(geom: &UlaGeometry, g_t: usize) -> Result<UlaGrid> {
    if g_t == 0 {
        return Err(Error::Config("user grid size must be positive".into()));
    }
    let direction_cosines: Vec<f64> = (0..g_t)
        .map(|t| 2.0 * t as f64 / g_t as f64 - 1.0)
        .collect();
    let angles = direction_cosines.iter().map(|c| c.acos()).collect();
    let mut matrix = CMat::zeros(geom.n_elements(), g_t);
    for (t, &c) in direction_cosines.iter().enumerate() {
        matrix.set_column(t, &geom.steering_cos(c));
    }
    Ok(UlaGrid {
        direction_cosines,
        angles,
        matrix,
        geometry: geom.clone(),
    })
}

impl UlaGrid {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn direction_cosines(&self) -> &[f64] {
        &self.direction_cosines
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn geometry(&self) -> &UlaGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Grid point with the closest direction cosine.
    pub fn nearest(&self, direction_cosine: f64) -> usize {
        let step = 2.0 / self.len() as f64;
        let t = ((direction_cosine + 1.0) / step).round() as isize;
        t.clamp(0, self.len() as isize - 1) as usize
    }
}

/// `conj(A_T) ⊗ A_R`, kept together with its two factors.
#[derive(Debug, Clone)]
pub struct SparsifyingDictionary {
    matrix: CMat,
    bs: CMat,
    ue_conj: CMat,
}

pub fn build_dictionary(cb: &RingCodebook, ug: &UlaGrid) -> SparsifyingDictionary {
    let ue_conj = ug.matrix().map(|z| z.conj());
    let bs = cb.matrix().clone();
    SparsifyingDictionary {
        matrix: kron(&ue_conj, &bs),
        bs,
        ue_conj,
    }
}

impl SparsifyingDictionary {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Base-station factor `A_R`.
    pub fn bs_factor(&self) -> &CMat {
        &self.bs
    }

    /// User factor `conj(A_T)`.
    pub fn ue_factor_conj(&self) -> &CMat {
        &self.ue_conj
    }

    pub fn n_bs_columns(&self) -> usize {
        self.bs.ncols()
    }

    pub fn n_ue_columns(&self) -> usize {
        self.ue_conj.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.matrix.ncols()
    }

    /// Column of `Lambda` for user grid point `t` and codebook column `k`;
    /// equals the column-major index of `H_b(k, t)`.
    pub fn column_index(&self, t: usize, k: usize) -> usize {
        t * self.n_bs_columns() + k
    }

    /// `(t, k)` for a dictionary column.
    pub fn split_index(&self, column: usize) -> (usize, usize) {
        (column / self.n_bs_columns(), column % self.n_bs_columns())
    }

    /// `Lambda h_b`, computed as `vec(A_R H_b A_T^H)`.
    pub fn apply(&self, h_b: &CVec) -> CVec {
        let hb = CMat::from_column_slice(self.n_bs_columns(), self.n_ue_columns(), h_b.as_slice());
        let h = matmul(&matmul(&self.bs, &hb), &self.ue_conj.transpose());
        CVec::from_column_slice(h.as_slice())
    }
}

/// `|a^H(r1, theta1) a(r2, theta2)|` by direct summation.
pub fn beamforming_gain(
    geom: &UcaGeometry,
    r1: f64,
    theta1: f64,
    r2: f64,
    theta2: f64,
    model: DistanceModel,
) -> Result<f64> {
    let a = geom.near_steering(r1, theta1, model)?;
    let b = geom.near_steering(r2, theta2, model)?;
    Ok(a.dotc(&b).norm())
}

/// Which Bessel approximation a gain sweep validates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSweep {
    /// Two codewords on the ring at `range` (use `inf` for far field),
    /// separated in angle so that their Bessel argument is `beta`.
    Angular { range: f64 },
    /// Two codewords at azimuth `angle`, one on the far-field ring and one
    /// on a ring chosen so that their Bessel argument is `zeta`.
    Distance { angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub parameter: f64,
    pub measured_gain: f64,
    pub j0_prediction: f64,
}

/// Measured gain against `|J0|` over `samples` points on `[0, max_argument]`.
pub fn gain_vs_bessel_report(
    geom: &UcaGeometry,
    mode: GainSweep,
    samples: usize,
    max_argument: f64,
) -> Result<Vec<GainRow>> {
    if samples < 2 {
        return Err(Error::Config("gain sweep needs at least two samples".into()));
    }
    let model = DistanceModel::Taylor;
    let k_r = 4.0 * PI * geom.radius() / geom.wavelength();
    (0..samples)
        .map(|i| {
            let x = max_argument * i as f64 / (samples - 1) as f64;
            let measured = match mode {
                GainSweep::Angular { range } => {
                    if x > k_r {
                        return Err(Error::Geometry(format!(
                            "beta {x} exceeds 4 pi R / lambda = {k_r}"
                        )));
                    }
                    let dtheta = 2.0 * (x / k_r).asin();
                    beamforming_gain(geom, range, 0.0, range, dtheta, model)?
                }
                GainSweep::Distance { angle } => {
                    let r2 = if x == 0.0 {
                        f64::INFINITY
                    } else {
                        PI * geom.radius().powi(2) / (2.0 * geom.wavelength() * x)
                    };
                    beamforming_gain(geom, f64::INFINITY, angle, r2, angle, model)?
                }
            };
            Ok(GainRow {
                parameter: x,
                measured_gain: measured,
                j0_prediction: j0(x).abs(),
            })
        })
        .collect()
}
