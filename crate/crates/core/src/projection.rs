//! Exact (O(n^2)) t-SNE to two dimensions, plus SVG and CSV rendering of
//! the result.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
    /// Larger inputs are subsampled (stratified by label) to this many rows.
    pub max_points: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
            max_points: 5000,
        }
    }
}

const MOMENTUM_SWITCH: usize = 250;
const DIST_FLOOR: f64 = 1e-12;
const ENTROPY_TOL: f64 = 1e-8;
const MAX_BISECTIONS: usize = 50;

fn squared_distances(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = x.row(i);
            (0..n).map(move |j| {
                if i == j {
                    0.0
                } else {
                    let d: f64 = xi.iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    d.max(DIST_FLOOR)
                }
            })
        })
        .collect();
    Array2::from_shape_vec((n, n), rows).expect("n x n")
}

/// Conditional distribution `P(j|i)` for one row; the Gaussian precision is
/// bisected until the entropy matches `ln(perplexity)`.
fn conditional_row(dist: &[f64], i: usize, target_entropy: f64) -> Vec<f64> {
    let n = dist.len();
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let d_mean = dist.iter().sum::<f64>() / (n - 1) as f64;
    let mut beta = 1.0 / (d_mean - d_min).max(DIST_FLOOR);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut p = vec![0.0; n];

    let eval = |beta: f64, p: &mut [f64]| -> f64 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            if j == i {
                p[j] = 0.0;
                continue;
            }
            let shifted = dist[j] - d_min;
            let v = (-beta * shifted).exp();
            p[j] = v;
            sum += v;
            weighted += v * shifted;
        }
        p.iter_mut().for_each(|v| *v /= sum);
        sum.ln() + beta * weighted / sum
    };

    for _ in 0..MAX_BISECTIONS {
        let h = eval(beta, &mut p);
        let diff = h - target_entropy;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    eval(beta, &mut p);
    p
}

fn check_perplexity(n: usize, perplexity: f64) -> Result<()> {
    if n < 4 {
        return Err(Error::invalid(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let upper = (n as f64 - 1.0) / 3.0;
    if !(perplexity > 1.0 && perplexity < upper) {
        return Err(Error::invalid(format!(
            "perplexity must lie in (1, {upper:.3}) for {n} points, got {perplexity}"
        )));
    }
    Ok(())
}

/// Row-stochastic conditional affinities `P(j|i)`, zero diagonal.
pub fn conditional_affinities(x: ArrayView2<f64>, perplexity: f64) -> Result<Array2<f64>> {
    let n = x.nrows();
    check_perplexity(n, perplexity)?;
    let dist = squared_distances(x);
    let target = perplexity.ln();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| conditional_row(dist.row(i).as_slice().expect("standard layout"), i, target))
        .collect();
    Ok(Array2::from_shape_vec((n, n), rows).expect("n x n"))
}

/// Symmetric joint affinities `(P(j|i) + P(i|j)) / (2n)`, summing to one.
pub fn pairwise_affinities(x: ArrayView2<f64>, perplexity: f64) -> Result<Array2<f64>> {
    let cond = conditional_affinities(x, perplexity)?;
    let n = cond.nrows() as f64;
    Ok((&cond + &cond.t()) / (2.0 * n))
}

fn student_t_kernel(y: &Array2<f64>) -> (Array2<f64>, f64) {
    let n = y.nrows();
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n).map(move |j| {
                if i == j {
                    0.0
                } else {
                    let dx = y[[i, 0]] - y[[j, 0]];
                    let dy = y[[i, 1]] - y[[j, 1]];
                    1.0 / (1.0 + dx * dx + dy * dy)
                }
            })
        })
        .collect();
    let num = Array2::from_shape_vec((n, n), vals).expect("n x n");
    let z = num.sum();
    (num, z)
}

/// KL(P || Q) for the Student-t similarities of embedding `y`.
pub fn kl_divergence(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let (num, z) = student_t_kernel(y);
    p.iter()
        .zip(num.iter())
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &nv)| pv * (pv / (nv / z).max(f64::MIN_POSITIVE)).ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneOutput {
    /// `n x 2`, centered at the origin.
    pub embedding: Array2<f64>,
    /// `(iteration, KL)` pairs recorded every 50 iterations and at the end,
    /// always measured against the unexaggerated affinities.
    pub kl_history: Vec<(usize, f64)>,
}

impl TsneOutput {
    pub fn kl_at(&self, iteration: usize) -> Option<f64> {
        self.kl_history.iter().find(|(i, _)| *i == iteration).map(|&(_, kl)| kl)
    }
}

pub fn tsne(x: ArrayView2<f64>, cfg: &TsneConfig) -> Result<TsneOutput> {
    if cfg.iterations < cfg.exaggeration_iters.max(MOMENTUM_SWITCH) {
        return Err(Error::invalid(format!(
            "t-SNE needs at least {MOMENTUM_SWITCH} iterations, got {}",
            cfg.iterations
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite t-SNE input".into()));
    }
    let p = pairwise_affinities(x, cfg.perplexity)?;
    let n = p.nrows();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y = Array2::from_shape_simple_fn((n, 2), || normal.sample(&mut rng));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut history = Vec::new();

    for iter in 1..=cfg.iterations {
        let exaggeration = if iter <= cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if iter <= MOMENTUM_SWITCH { 0.5 } else { 0.8 };
        let (num, z) = student_t_kernel(&y);

        let grad_rows: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = num[[i, j]];
                    let coeff = 4.0 * (exaggeration * p[[i, j]] - w / z) * w;
                    g[0] += coeff * (y[[i, 0]] - y[[j, 0]]);
                    g[1] += coeff * (y[[i, 1]] - y[[j, 1]]);
                }
                g
            })
            .collect();

        for (i, g) in grad_rows.iter().enumerate() {
            for d in 0..2 {
                let same_sign = (g[d] > 0.0) == (update[[i, d]] > 0.0);
                gains[[i, d]] = if same_sign { (gains[[i, d]] * 0.8).max(0.01) } else { gains[[i, d]] + 0.2 };
                update[[i, d]] = momentum * update[[i, d]] - cfg.learning_rate * gains[[i, d]] * g[d];
                y[[i, d]] += update[[i, d]];
            }
        }
        let mean = y.mean_axis(Axis(0)).expect("n >= 4");
        y -= &mean;

        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("t-SNE produced a non-finite value at iteration {iter}")));
        }
        if iter % 50 == 0 || iter == cfg.iterations {
            history.push((iter, kl_divergence(&p, &y)));
        }
    }
    Ok(TsneOutput {
        embedding: y,
        kl_history: history,
    })
}

/// Indices of a label-stratified random subsample of at most `max_points`
/// rows, ascending. Returns every index when the input already fits.
pub fn stratified_subsample(labels: &[usize], max_points: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if n <= max_points {
        return (0..n).collect();
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    let exact: Vec<f64> = groups
        .iter()
        .map(|g| max_points as f64 * g.len() as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut leftover = max_points - quota.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..n_classes).collect();
    by_remainder.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for c in by_remainder {
        if leftover == 0 {
            break;
        }
        if quota[c] < groups[c].len() {
            quota[c] += 1;
            leftover -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(max_points);
    for (g, q) in groups.iter_mut().zip(quota) {
        g.shuffle(&mut rng);
        out.extend_from_slice(&g[..q]);
    }
    out.sort_unstable();
    out
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 600.0;
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// 800x600 scatter plot, axes fitted to the data with a 5% margin, one
/// palette color per class (cycled) and a legend.
pub fn render_scatter_svg(y: ArrayView2<f64>, labels: &[usize], class_names: &[String]) -> Result<String> {
    if y.ncols() != 2 || y.nrows() != labels.len() {
        return Err(Error::invalid("scatter plot needs an n x 2 matrix and n labels"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite coordinate in scatter plot".into()));
    }
    let axis = |d: usize| -> (f64, f64) {
        let col = y.column(d);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let project = |v: f64, (lo, hi): (f64, f64), extent: f64, flip: bool| -> f64 {
        let margin = 0.05 * extent;
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        let t = if flip { 1.0 - t } else { t };
        margin + t * (extent - 2.0 * margin)
    };
    let (xr, yr) = (axis(0), axis(1));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<g id="points">"#);
    for (row, &l) in y.rows().into_iter().zip(labels) {
        let cx = project(row[0], xr, SVG_WIDTH, false);
        let cy = project(row[1], yr, SVG_HEIGHT, true);
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}" fill-opacity="0.7"/>"#,
            PALETTE[l % PALETTE.len()]
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    for (row, &c) in present.iter().enumerate() {
        let top = 12.0 + 18.0 * row as f64;
        let name = class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
        let _ = writeln!(
            svg,
            r#"<rect x="{:.0}" y="{top:.0}" width="10" height="10" fill="{}"/><text x="{:.0}" y="{:.0}">{}</text>"#,
            SVG_WIDTH - 150.0,
            PALETTE[c % PALETTE.len()],
            SVG_WIDTH - 134.0,
            top + 9.0,
            xml_escape(&name)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_scatter_svg(y: ArrayView2<f64>, labels: &[usize], class_names: &[String], path: &Path) -> Result<()> {
    let svg = render_scatter_svg(y, labels, class_names)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Writes `id,x,y,label` rows.
pub fn write_projection_csv(path: &Path, ids: &[String], y: ArrayView2<f64>, labels: &[String]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_err = |e: csv::Error| Error::invalid(format!("writing {}: {e}", path.display()));
    w.write_record(["id", "x", "y", "label"]).map_err(to_err)?;
    for ((id, row), label) in ids.iter().zip(y.rows()).zip(labels) {
        w.write_record([id.as_str(), &row[0].to_string(), &row[1].to_string(), label.as_str()])
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
