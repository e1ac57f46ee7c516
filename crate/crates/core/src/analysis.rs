//! Feature-space studies over a set of views: pairwise cosine similarity,
//! interpolation quality along camera arcs and a 2D principal-axis projection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{cosine_similarity, lerp_features, FeatureEncoder, FeatureVector};
use crate::geometry::{angle_between, slerp_position};

pub const DEFAULT_HISTOGRAM_BIN: f64 = 0.02;

/// How far (scene units) a triple's middle camera may sit from the A–B arc.
pub const ARC_TOLERANCE: f64 = 1e-6;

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, e.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMeta {
    /// Degrees.
    pub azimuth: f64,
    /// Degrees.
    pub elevation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityTable {
    pub views: Vec<ViewMeta>,
    pub features: Vec<FeatureVector>,
    /// Row-major n×n cosine matrix.
    pub matrix: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// Lower edge of the first bin.
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl SimilarityTable {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.len() + j]
    }

    /// Off-diagonal entries `(i, j, cos)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.get(i, j))))
    }

    /// Histogram of the off-diagonal entries over [-1, 1].
    pub fn histogram(&self, bin_width: f64) -> Result<Histogram> {
        if !(bin_width > 0.0 && bin_width <= 2.0) {
            return Err(Error::Domain(format!("bin width must lie in (0, 2], got {bin_width}")));
        }
        let bins = (2.0 / bin_width).ceil() as usize;
        let mut counts = vec![0; bins];
        for (_, _, c) in self.pairs() {
            let b = (((c + 1.0) / bin_width).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Histogram {
            start: -1.0,
            bin_width,
            counts,
        })
    }

    /// Mean cosine per camera-angle bucket `[k·w, (k+1)·w)` degrees, for
    /// the non-empty buckets in increasing order: `(bucket start, mean, count)`.
    pub fn angle_buckets(&self, positions: &[crate::geometry::Vec3], width_deg: f64) -> Result<Vec<(f64, f64, usize)>> {
        if positions.len() != self.len() {
            return Err(Error::Domain("one position per view is required".into()));
        }
        if !(width_deg > 0.0) {
            return Err(Error::Domain("bucket width must be positive".into()));
        }
        let buckets = (180.0 / width_deg).ceil() as usize + 1;
        let mut sum = vec![0.0; buckets];
        let mut count = vec![0usize; buckets];
        for (i, j, c) in self.pairs() {
            let angle = angle_between(&positions[i], &positions[j])?.to_degrees();
            let b = ((angle / width_deg).floor() as usize).min(buckets - 1);
            sum[b] += c;
            count[b] += 1;
        }
        Ok((0..buckets)
            .filter(|&b| count[b] > 0)
            .map(|b| (b as f64 * width_deg, sum[b] / count[b] as f64, count[b]))
            .collect())
    }

    pub fn write_matrix_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let e = csv_err(path);
        w.write_record(["i", "j", "azimuth_i", "elevation_i", "azimuth_j", "elevation_j", "cosine"])
            .map_err(&e)?;
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (self.views[i], self.views[j]);
                w.write_record(&[
                    i.to_string(),
                    j.to_string(),
                    a.azimuth.to_string(),
                    a.elevation.to_string(),
                    b.azimuth.to_string(),
                    b.elevation.to_string(),
                    self.get(i, j).to_string(),
                ])
                .map_err(&e)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl Histogram {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let e = csv_err(path);
        w.write_record(["bin_start", "bin_end", "count"]).map_err(&e)?;
        for (k, c) in self.counts.iter().enumerate() {
            let lo = self.start + k as f64 * self.bin_width;
            w.write_record(&[lo.to_string(), (lo + self.bin_width).to_string(), c.to_string()])
                .map_err(&e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Features of every view and their full cosine matrix.
pub fn pairwise_similarity(dataset: &Dataset, encoder: &dyn FeatureEncoder) -> Result<SimilarityTable> {
    if dataset.len() < 2 {
        return Err(Error::InsufficientViews {
            needed: 2,
            got: dataset.len(),
        });
    }
    let features = dataset
        .images
        .iter()
        .map(|img| encoder.extract(img))
        .collect::<Result<Vec<_>>>()?;
    let n = features.len();
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        matrix[i * n + i] = cosine_similarity(&features[i], &features[i])?;
        for j in (i + 1)..n {
            let c = cosine_similarity(&features[i], &features[j])?;
            matrix[i * n + j] = c;
            matrix[j * n + i] = c;
        }
    }
    let views = dataset
        .poses
        .iter()
        .map(|p| {
            let (az, el) = p.azimuth_elevation();
            ViewMeta {
                azimuth: az.to_degrees(),
                elevation: el.to_degrees(),
            }
        })
        .collect();
    Ok(SimilarityTable {
        views,
        features,
        matrix,
    })
}

/// Views `a` and `b` with `mid` on the arc between them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub a: usize,
    pub mid: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub triple: Triple,
    /// Interpolation coefficient placing `mid` on the arc.
    pub s: f64,
    pub interpolated: f64,
    pub endpoint_a: f64,
    pub endpoint_b: f64,
}

impl TripleRecord {
    /// Interpolated score strictly above both endpoint scores.
    pub fn wins(&self) -> bool {
        self.interpolated > self.endpoint_a && self.interpolated > self.endpoint_b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationStudy {
    pub records: Vec<TripleRecord>,
    pub win_rate: f64,
}

impl InterpolationStudy {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let e = csv_err(path);
        w.write_record(["a", "mid", "b", "s", "cos_interpolated", "cos_a", "cos_b", "win"])
            .map_err(&e)?;
        for r in &self.records {
            w.write_record(&[
                r.triple.a.to_string(),
                r.triple.mid.to_string(),
                r.triple.b.to_string(),
                r.s.to_string(),
                r.interpolated.to_string(),
                r.endpoint_a.to_string(),
                r.endpoint_b.to_string(),
                (r.wins() as u8).to_string(),
            ])
            .map_err(&e)?;
        }
        // the mean of the 0/1 win column is the win rate
        let rate = self.win_rate.to_string();
        w.write_record(["mean", "", "", "", "", "", "", rate.as_str()]).map_err(&e)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Arc coefficient of `mid` between `a` and `b`, or a domain error when
/// `mid` is not on the arc.
fn arc_coefficient(dataset: &Dataset, t: &Triple) -> Result<f64> {
    let n = dataset.len();
    if t.a >= n || t.mid >= n || t.b >= n {
        return Err(Error::Domain(format!("triple {t:?} indexes past {n} views")));
    }
    let (pa, pm, pb) = (
        dataset.poses[t.a].position,
        dataset.poses[t.mid].position,
        dataset.poses[t.b].position,
    );
    let total = angle_between(&pa, &pb)?;
    let s = if total < crate::geometry::ANGLE_EPS {
        0.0
    } else {
        angle_between(&pa, &pm)? / total
    };
    if !(0.0..=1.0 + 1e-9).contains(&s) {
        return Err(Error::Domain(format!("view {} is not between views {} and {}", t.mid, t.a, t.b)));
    }
    let s = s.min(1.0);
    let on_arc = slerp_position(&pa, &pb, s)?;
    if (on_arc - pm).norm() > ARC_TOLERANCE {
        return Err(Error::Domain(format!(
            "view {} lies {:.3e} off the arc between views {} and {}",
            t.mid,
            (on_arc - pm).norm(),
            t.a,
            t.b
        )));
    }
    Ok(s)
}

/// Compares the interpolated feature `Lerp(v_a, v_b, s)` against the true
/// middle-view feature, next to the two endpoint features.
pub fn interpolation_study(
    dataset: &Dataset,
    encoder: &dyn FeatureEncoder,
    triples: &[Triple],
) -> Result<InterpolationStudy> {
    let coefficients = triples
        .iter()
        .map(|t| arc_coefficient(dataset, t))
        .collect::<Result<Vec<_>>>()?;
    let mut used = vec![false; dataset.len()];
    for t in triples {
        used[t.a] = true;
        used[t.mid] = true;
        used[t.b] = true;
    }
    let features = used
        .iter()
        .zip(&dataset.images)
        .map(|(&u, img)| if u { encoder.extract(img).map(Some) } else { Ok(None) })
        .collect::<Result<Vec<_>>>()?;
    let feature = |i: usize| features[i].as_ref().expect("feature extracted for every used view");
    let mut records = Vec::with_capacity(triples.len());
    for (t, &s) in triples.iter().zip(&coefficients) {
        let (va, vm, vb) = (feature(t.a), feature(t.mid), feature(t.b));
        let interp = lerp_features(va, vb, s)?;
        records.push(TripleRecord {
            triple: *t,
            s,
            interpolated: cosine_similarity(&interp, vm)?,
            endpoint_a: cosine_similarity(va, vm)?,
            endpoint_b: cosine_similarity(vb, vm)?,
        });
    }
    let win_rate = if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.wins()).count() as f64 / records.len() as f64
    };
    Ok(InterpolationStudy { records, win_rate })
}

/// Triples on a closed ring of `n` evenly spaced views: every `(i, i+k, i+2k)`
/// for `k` in `steps`.
pub fn ring_triples(n: usize, steps: &[usize]) -> Vec<Triple> {
    let mut out = Vec::new();
    for &k in steps {
        if k == 0 || 2 * k >= n {
            continue;
        }
        for i in 0..n {
            out.push(Triple {
                a: i,
                mid: (i + k) % n,
                b: (i + 2 * k) % n,
            });
        }
    }
    out
}

/// Every `(a, mid, b)` with `a < b` whose middle camera lies on the arc
/// between `a` and `b` (strictly inside it) and whose arc spans at most
/// `max_angle_deg`.
pub fn arc_triples(dataset: &Dataset, max_angle_deg: f64) -> Vec<Triple> {
    let n = dataset.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let (pa, pb) = (dataset.poses[a].position, dataset.poses[b].position);
            let Ok(total) = angle_between(&pa, &pb) else { continue };
            if total.to_degrees() > max_angle_deg + 1e-9 || total < crate::geometry::ANGLE_EPS {
                continue;
            }
            for mid in 0..n {
                if mid == a || mid == b {
                    continue;
                }
                let t = Triple { a, mid, b };
                if let Ok(s) = arc_coefficient(dataset, &t) {
                    if s > 0.0 && s < 1.0 {
                        out.push(t);
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Unit principal axes (zero when degenerate).
    pub axes: [Vec<f64>; 2],
    pub mean: Vec<f64>,
    /// Variance along each axis.
    pub variances: [f64; 2],
    /// All inputs identical; every coordinate is zero.
    pub degenerate: bool,
}

impl Projection {
    /// Point `i` mapped back to feature space.
    pub fn reconstruct(&self, i: usize) -> Vec<f64> {
        let [x, y] = self.coords[i];
        self.mean
            .iter()
            .zip(&self.axes[0])
            .zip(&self.axes[1])
            .map(|((m, a), b)| m + x * a + y * b)
            .collect()
    }

    /// Mean planar distance over the given index pairs.
    pub fn mean_distance(&self, pairs: &[(usize, usize)]) -> f64 {
        let sum: f64 = pairs
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (self.coords[i], self.coords[j]);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .sum();
        sum / pairs.len().max(1) as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let e = csv_err(path);
        w.write_record(["view", "x", "y"]).map_err(&e)?;
        for (i, c) in self.coords.iter().enumerate() {
            w.write_record(&[i.to_string(), c[0].to_string(), c[1].to_string()])
                .map_err(&e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

const POWER_ITERATIONS: usize = 5000;
const POWER_TOL: f64 = 1e-15;

/// Leading eigenvector of the symmetric matrix `c` (d×d) by power iteration.
fn leading_eigenvector(c: &[f64], d: usize) -> (Vec<f64>, f64) {
    // start from the column of largest diagonal so the iterate is in range
    let start = (0..d)
        .max_by(|&a, &b| c[a * d + a].total_cmp(&c[b * d + b]))
        .unwrap_or(0);
    let mut v: Vec<f64> = (0..d).map(|i| c[i * d + start] + if i == start { 1e-3 } else { 0.0 }).collect();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| c[i * d + j] * v[j]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (vec![0.0; d], 0.0);
        }
        let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        lambda = norm;
        if change < POWER_TOL {
            break;
        }
    }
    (v, lambda)
}

fn orient(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Projects centered features onto their top two principal axes. Each axis
/// is signed so its first non-negligible loading is positive.
pub fn project_2d(features: &[FeatureVector]) -> Result<Projection> {
    if features.len() < 3 {
        return Err(Error::Domain(format!(
            "projection needs at least 3 features, got {}",
            features.len()
        )));
    }
    let d = features[0].dim();
    if features.iter().any(|f| f.dim() != d) {
        return Err(Error::Domain("features differ in dimension".into()));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, x) in mean.iter_mut().zip(f.as_slice()) {
            *m += x / n;
        }
    }
    let centered: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.as_slice().iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += row[i] * row[j] / n;
            }
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if total <= 1e-24 {
        return Ok(Projection {
            coords: vec![[0.0; 2]; features.len()],
            axes: [vec![0.0; d], vec![0.0; d]],
            mean,
            variances: [0.0; 2],
            degenerate: true,
        });
    }

    let (mut a1, l1) = leading_eigenvector(&cov, d);
    orient(&mut a1);
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] -= l1 * a1[i] * a1[j];
        }
    }
    let (mut a2, l2) = leading_eigenvector(&cov, d);
    // re-orthogonalize against the first axis
    let proj: f64 = a2.iter().zip(&a1).map(|(x, y)| x * y).sum();
    a2.iter_mut().zip(&a1).for_each(|(x, y)| *x -= proj * y);
    let norm2 = a2.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm2 > 1e-12 {
        a2.iter_mut().for_each(|x| *x /= norm2);
        orient(&mut a2);
    } else {
        a2 = vec![0.0; d];
    }

    let coords = centered
        .iter()
        .map(|row| {
            let x: f64 = row.iter().zip(&a1).map(|(p, q)| p * q).sum();
            let y: f64 = row.iter().zip(&a2).map(|(p, q)| p * q).sum();
            [x, y]
        })
        .collect();
    Ok(Projection {
        coords,
        axes: [a1, a2],
        mean,
        variances: [l1, l2.max(0.0)],
        degenerate: false,
    })
}
