//! Partly calibrated subarray geometry, narrowband snapshot synthesis and
//! covariance estimation.
//!
//! Positions are measured in half-wavelengths, so a phase of `pi * distance`
//! corresponds to the propagation delay over that distance.

use std::io::{Read, Write};

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::rng;

pub use crate::linalg::{eig_hermitian, EigenPairs};

/// One subarray: position of its first sensor and number of sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subarray {
    pub xi: [f64; 2],
    pub sensors: usize,
}

/// Subarrays of uniform linear arrays that share the inter-sensor spacing but
/// sit at arbitrary displacements from each other. The first subarray is the
/// reference and sits at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    subarrays: Vec<Subarray>,
    spacing: f64,
}

impl ArrayGeometry {
    pub fn new(subarrays: Vec<Subarray>, spacing: f64) -> Result<Self> {
        if subarrays.is_empty() {
            return Err(Error::Geometry("at least one subarray is required".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Geometry(format!("spacing must be positive, got {spacing}")));
        }
        if subarrays[0].xi != [0.0, 0.0] {
            return Err(Error::Geometry(format!(
                "the first subarray is the reference and must sit at (0, 0), got {:?}",
                subarrays[0].xi
            )));
        }
        for (k, s) in subarrays.iter().enumerate() {
            if s.sensors == 0 {
                return Err(Error::Geometry(format!("subarray {k} has no sensors")));
            }
            if !s.xi.iter().all(|v| v.is_finite()) {
                return Err(Error::Geometry(format!("subarray {k} has a non-finite position")));
            }
        }
        Ok(Self { subarrays, spacing })
    }

    /// Six two-sensor subarrays at half-wavelength spacing, the layout used
    /// throughout the examples and tests.
    pub fn six_subarray_reference() -> Self {
        let xi = [
            [0.0, 0.0],
            [0.45, 0.99],
            [3.02, 0.45],
            [5.61, 0.90],
            [8.03, 1.46],
            [8.70, 0.50],
        ];
        Self::new(xi.iter().map(|&xi| Subarray { xi, sensors: 2 }).collect(), 1.0)
            .expect("reference geometry is valid")
    }

    pub fn subarrays(&self) -> &[Subarray] {
        &self.subarrays
    }

    pub fn node_count(&self) -> usize {
        self.subarrays.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn sensors(&self, k: usize) -> usize {
        self.subarrays[k].sensors
    }

    pub fn total_sensors(&self) -> usize {
        self.subarrays.iter().map(|s| s.sensors).sum()
    }

    /// Index of node `k`'s first sensor in the stacked measurement vector.
    pub fn offset(&self, k: usize) -> usize {
        self.subarrays[..k].iter().map(|s| s.sensors).sum()
    }

    /// Node owning each stacked sensor index.
    pub fn sensor_owner(&self) -> Vec<usize> {
        self.subarrays
            .iter()
            .enumerate()
            .flat_map(|(k, s)| std::iter::repeat_n(k, s.sensors))
            .collect()
    }
}

/// Far-field narrowband sources in spatially white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceScenario {
    doas_deg: Vec<f64>,
    source_cov: CMatrix,
    noise_var: f64,
}

impl SourceScenario {
    pub fn new(doas_deg: Vec<f64>, source_cov: CMatrix, noise_var: f64) -> Result<Self> {
        let l = doas_deg.len();
        if source_cov.nrows() != l || source_cov.ncols() != l {
            return Err(Error::Scenario(format!(
                "source covariance is {}x{}, expected {l}x{l}",
                source_cov.nrows(),
                source_cov.ncols()
            )));
        }
        for (i, &t) in doas_deg.iter().enumerate() {
            if t.is_nan() || t.abs() >= 90.0 {
                return Err(Error::AngleOutOfRange { theta_deg: t });
            }
            if doas_deg[..i].contains(&t) {
                return Err(Error::Scenario(format!("direction {t} deg appears twice")));
            }
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::Scenario(format!("noise variance must be positive, got {noise_var}")));
        }
        if l > 0 {
            let defect = linalg::hermitian_defect(&source_cov);
            if defect > 1e-10 {
                return Err(Error::Scenario(format!(
                    "source covariance is not Hermitian (relative defect {defect:e})"
                )));
            }
            let eig = eig_hermitian(&source_cov)?;
            let floor = -1e-12 * source_cov.norm();
            if eig.values.iter().any(|&v| v < floor) {
                return Err(Error::Scenario("source covariance is not positive semidefinite".into()));
            }
        }
        Ok(Self {
            doas_deg,
            source_cov,
            noise_var,
        })
    }

    /// Uncorrelated sources of equal power.
    pub fn equal_power(doas_deg: Vec<f64>, power: f64, noise_var: f64) -> Result<Self> {
        let l = doas_deg.len();
        let cov = CMatrix::identity(l, l) * Complex64::new(power, 0.0);
        Self::new(doas_deg, cov, noise_var)
    }

    /// Uncorrelated sources of power `power` with the noise variance set by
    /// the per-source SNR in dB.
    pub fn from_snr_db(doas_deg: Vec<f64>, power: f64, snr_db: f64) -> Result<Self> {
        Self::equal_power(doas_deg, power, power * 10f64.powf(-snr_db / 10.0))
    }

    /// Three unit-power sources at -14, -10 and 5 degrees.
    pub fn three_source_reference(snr_db: f64) -> Self {
        Self::from_snr_db(vec![-14.0, -10.0, 5.0], 1.0, snr_db).expect("reference scenario is valid")
    }

    pub fn doas_deg(&self) -> &[f64] {
        &self.doas_deg
    }

    pub fn source_count(&self) -> usize {
        self.doas_deg.len()
    }

    pub fn source_cov(&self) -> &CMatrix {
        &self.source_cov
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self> {
        Self::new(self.doas_deg.clone(), self.source_cov.clone(), noise_var)
    }
}

/// Snapshots split per node: block `k` is `M_k x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    per_node: Vec<CMatrix>,
}

impl SnapshotSet {
    pub fn from_blocks(per_node: Vec<CMatrix>) -> Result<Self> {
        let n = per_node.first().map(|b| b.ncols()).unwrap_or(0);
        if per_node.is_empty() || n == 0 {
            return Err(Error::Dimension("a snapshot set needs at least one node and one sample".into()));
        }
        if let Some(k) = per_node.iter().position(|b| b.ncols() != n || b.nrows() == 0) {
            return Err(Error::Dimension(format!("node {k} block has inconsistent shape")));
        }
        Ok(Self { per_node })
    }

    /// Splits a stacked `M x N` snapshot matrix according to `geom`.
    pub fn from_stacked(x: &CMatrix, geom: &ArrayGeometry) -> Result<Self> {
        if x.nrows() != geom.total_sensors() {
            return Err(Error::Dimension(format!(
                "{} rows of data for {} sensors",
                x.nrows(),
                geom.total_sensors()
            )));
        }
        let blocks = (0..geom.node_count())
            .map(|k| x.rows(geom.offset(k), geom.sensors(k)).into_owned())
            .collect();
        Self::from_blocks(blocks)
    }

    pub fn node_count(&self) -> usize {
        self.per_node.len()
    }

    pub fn samples(&self) -> usize {
        self.per_node[0].ncols()
    }

    pub fn block(&self, k: usize) -> &CMatrix {
        &self.per_node[k]
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.per_node
    }

    pub fn total_sensors(&self) -> usize {
        self.per_node.iter().map(|b| b.nrows()).sum()
    }

    /// Stacked `M x N` matrix whose columns are the full measurement vectors.
    pub fn stacked(&self) -> CMatrix {
        let m = self.total_sensors();
        let n = self.samples();
        let mut x = CMatrix::zeros(m, n);
        let mut row = 0;
        for b in &self.per_node {
            x.rows_mut(row, b.nrows()).copy_from(b);
            row += b.nrows();
        }
        x
    }

    /// Writes a CSV dump with columns `node,sensor,t,re,im` (zero-based
    /// indices, shortest round-trip decimal floats).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for (k, b) in self.per_node.iter().enumerate() {
            for t in 0..b.ncols() {
                for s in 0..b.nrows() {
                    let z = b[(s, t)];
                    wtr.serialize(SnapshotRecord {
                        node: k,
                        sensor: s,
                        t,
                        re: z.re,
                        im: z.im,
                    })
                    .map_err(csv_err)?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`SnapshotSet::write_csv`]. Rows may come in
    /// any order; every (node, sensor, t) cell must appear exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut records = Vec::new();
        for rec in rdr.deserialize::<SnapshotRecord>() {
            records.push(rec.map_err(csv_err)?);
        }
        if records.is_empty() {
            return Err(Error::Dimension("snapshot dump is empty".into()));
        }
        let nodes = records.iter().map(|r| r.node).max().unwrap() + 1;
        let n = records.iter().map(|r| r.t).max().unwrap() + 1;
        let mut sensors = vec![0usize; nodes];
        for r in &records {
            sensors[r.node] = sensors[r.node].max(r.sensor + 1);
        }
        let mut blocks: Vec<CMatrix> = sensors.iter().map(|&m| CMatrix::zeros(m, n)).collect();
        let mut seen: Vec<Vec<bool>> = sensors.iter().map(|&m| vec![false; m * n]).collect();
        for r in records {
            let cell = r.t * sensors[r.node] + r.sensor;
            if std::mem::replace(&mut seen[r.node][cell], true) {
                return Err(Error::Dimension(format!(
                    "duplicate entry for node {}, sensor {}, t {}",
                    r.node, r.sensor, r.t
                )));
            }
            blocks[r.node][(r.sensor, r.t)] = Complex64::new(r.re, r.im);
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(Error::Dimension("snapshot dump has missing entries".into()));
        }
        Self::from_blocks(blocks)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRecord {
    node: usize,
    sensor: usize,
    t: usize,
    re: f64,
    im: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

/// Response of node `k`'s subarray to a plane wave from `theta_deg`: entry `m`
/// is `exp(j pi xi_k . kappa) exp(j pi m d sin(theta))` with
/// `kappa = (sin(theta), cos(theta))`.
pub fn steering_vector(geom: &ArrayGeometry, k: usize, theta_deg: f64) -> Result<CVector> {
    if theta_deg.is_nan() || theta_deg.abs() >= 90.0 {
        return Err(Error::AngleOutOfRange { theta_deg });
    }
    let sub = geom.subarrays.get(k).ok_or_else(|| {
        Error::Dimension(format!("node {k} does not exist ({} nodes)", geom.node_count()))
    })?;
    let (s, c) = theta_deg.to_radians().sin_cos();
    let base = std::f64::consts::PI * (sub.xi[0] * s + sub.xi[1] * c);
    let step = std::f64::consts::PI * geom.spacing * s;
    Ok(CVector::from_fn(sub.sensors, |m, _| {
        Complex64::from_polar(1.0, base + step * m as f64)
    }))
}

/// `M x L` steering matrix, node blocks stacked in order.
pub fn full_steering_matrix(geom: &ArrayGeometry, doas_deg: &[f64]) -> Result<CMatrix> {
    let m = geom.total_sensors();
    let mut a = CMatrix::zeros(m, doas_deg.len());
    for (l, &theta) in doas_deg.iter().enumerate() {
        for k in 0..geom.node_count() {
            let v = steering_vector(geom, k, theta)?;
            a.view_mut((geom.offset(k), l), (v.len(), 1)).copy_from(&v);
        }
    }
    Ok(a)
}

/// `A P A^H + sigma^2 I`.
pub fn true_covariance(geom: &ArrayGeometry, scen: &SourceScenario) -> Result<CMatrix> {
    let m = geom.total_sensors();
    let a = full_steering_matrix(geom, &scen.doas_deg)?;
    let mut r = &a * &scen.source_cov * a.adjoint();
    for i in 0..m {
        r[(i, i)] += Complex64::new(scen.noise_var, 0.0);
    }
    Ok(hermitize(r))
}

/// Factor `F` with `F F^H = P`, used to colour unit-variance source draws.
fn source_factor(p: &CMatrix) -> Result<CMatrix> {
    if p.nrows() == 0 {
        return Ok(p.clone());
    }
    if let Some(ch) = Cholesky::new(p.clone()) {
        return Ok(ch.l());
    }
    // Singular (e.g. coherent) source covariance: symmetric square root.
    let eig = eig_hermitian(p)?;
    let mut f = eig.vectors.clone();
    for (j, &v) in eig.values.iter().enumerate() {
        let s = Complex64::new(v.max(0.0).sqrt(), 0.0);
        for i in 0..f.nrows() {
            f[(i, j)] *= s;
        }
    }
    Ok(f)
}

/// Draws `n` snapshots `x(t) = A s(t) + n(t)` with circular Gaussian sources
/// and noise, deterministically from `seed`.
pub fn generate_snapshots(
    geom: &ArrayGeometry,
    scen: &SourceScenario,
    n: usize,
    seed: u64,
) -> Result<SnapshotSet> {
    let mut r = rng::stream_rng(seed, 0);
    generate_snapshots_with_rng(geom, scen, n, &mut r)
}

/// As [`generate_snapshots`], drawing from a caller-supplied generator. For
/// each snapshot the `L` source values are drawn first, then the `M` noise
/// values in sensor order.
pub fn generate_snapshots_with_rng<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    scen: &SourceScenario,
    n: usize,
    rng: &mut R,
) -> Result<SnapshotSet> {
    if n == 0 {
        return Err(Error::Dimension("at least one snapshot is required".into()));
    }
    let m = geom.total_sensors();
    let l = scen.source_count();
    let a = full_steering_matrix(geom, &scen.doas_deg)?;
    let f = source_factor(&scen.source_cov)?;
    let sigma = scen.noise_var.sqrt();
    let mut x = CMatrix::zeros(m, n);
    for t in 0..n {
        let z = rng::complex_normal_vector(rng, l);
        let s = &f * z;
        let mut col = &a * s;
        for i in 0..m {
            col[i] += rng::complex_normal(rng) * sigma;
        }
        x.set_column(t, &col);
    }
    SnapshotSet::from_stacked(&x, geom)
}

/// Replaces the lower triangle by the conjugate of the upper one and zeroes the
/// imaginary part of the diagonal.
fn hermitize(mut r: CMatrix) -> CMatrix {
    let m = r.nrows();
    for i in 0..m {
        r[(i, i)].im = 0.0;
        for j in (i + 1)..m {
            r[(j, i)] = r[(i, j)].conj();
        }
    }
    r
}

/// `(1/N) sum_t x(t) x(t)^H`, exactly Hermitian.
pub fn sample_covariance(snaps: &SnapshotSet) -> CMatrix {
    let x = snaps.stacked();
    let n = x.ncols() as f64;
    hermitize((&x * x.adjoint()).unscale(n))
}

/// Index of the first consecutive eigenvalue pair closer than
/// `1e-8 * lambda_1`, with that gap.
pub fn small_eigen_gap(values: &[f64]) -> Option<(usize, f64)> {
    let scale = values.first().copied().unwrap_or(0.0).abs();
    values
        .windows(2)
        .position(|w| (w[0] - w[1]).abs() < 1e-8 * scale)
        .map(|i| (i, (values[i] - values[i + 1]).abs()))
}

/// Hermitian eigendecomposition that logs a warning when two leading
/// eigenvalues nearly coincide.
pub fn eig_hermitian_checked(r: &CMatrix, leading: usize) -> Result<EigenPairs> {
    let eig = eig_hermitian(r)?;
    let upto = (leading + 1).min(eig.values.len());
    if let Some((i, gap)) = small_eigen_gap(&eig.values[..upto]) {
        log::warn!("eigenvalues {} and {} are separated by only {gap:e}", i + 1, i + 2);
    }
    Ok(eig)
}
