#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;

use hexmort::geometry::Point;
use hexmort::ingest::{Flag, FlagSet, Outcome, PatientRecord, Sex};
use hexmort::stats::DesignMatrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const CANONICAL_HEADER: &str = "state,municipality,sex,age,outcome,diabetes,copd,asthma,immunosuppression,hypertension,cardiovascular,obesity,chronic_kidney,other_comorbidity,pneumonia,intubated";

pub fn synth_record(rng: &mut ChaCha8Rng) -> PatientRecord {
    let state = rng.random_range(1..=32u32);
    let flags: FlagSet = Flag::ALL.into_iter().filter(|_| rng.random_bool(0.2)).collect();
    PatientRecord {
        state,
        municipality: state * 1000 + rng.random_range(1..=25u32),
        sex: if rng.random_bool(0.5) { Sex::Male } else { Sex::Female },
        age: rng.random_range(0..=110u32),
        outcome: if rng.random_bool(0.4) { Outcome::Deceased } else { Outcome::Survived },
        flags,
    }
}

pub fn synth_records(n: usize, seed: u64) -> Vec<PatientRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| synth_record(&mut rng)).collect()
}

/// Canonical-schema CSV where roughly one row in ten is damaged in a known
/// way. Returns the text and the number of clean rows.
pub fn synth_csv(n: usize, seed: u64) -> (String, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from(CANONICAL_HEADER);
    text.push('\n');
    let mut clean = 0;
    for _ in 0..n {
        let r = synth_record(&mut rng);
        let mut cells: Vec<String> = vec![
            format!("{:02}", r.state),
            format!("{:03}", r.municipality % 1000),
            if r.sex == Sex::Male { "2" } else { "1" }.into(),
            r.age.to_string(),
            if r.outcome == Outcome::Deceased { "2020-05-01" } else { "9999-99-99" }.into(),
        ];
        cells.extend(Flag::ALL.iter().map(|f| if r.has(*f) { "1" } else { "2" }.to_string()));
        match rng.random_range(0..40) {
            0 => cells[6] = "98".into(),
            1 => cells[7] = String::new(),
            2 => cells[3] = "140".into(),
            3 => cells[0] = "45".into(),
            4 => cells[8] = "x".into(),
            5 => {
                cells.pop();
            }
            _ => clean += 1,
        }
        let _ = writeln!(text, "{}", cells.join(","));
    }
    (text, clean)
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Gaussian design with outcome drawn from `sigmoid(intercept + x·beta)`.
pub fn planted_design(n: usize, beta: &[f64], intercept: f64, seed: u64) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let x = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
    let y = Array1::from_iter(x.rows().into_iter().map(|row| {
        let eta = intercept + row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        if rng.random_bool(sigmoid(eta)) { 1.0 } else { 0.0 }
    }));
    let names = (0..p).map(|j| format!("x{j}")).collect();
    DesignMatrix::new(names, x, y).unwrap()
}

/// Solves `a · v = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|i, j| a[*i][k].abs().total_cmp(&a[*j][k].abs())).unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut v = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * v[j]).sum();
        v[k] = (b[k] - s) / a[k][k];
    }
    v
}

/// Unpenalized logistic regression by Newton's method. Returns
/// `[intercept, beta...]`.
pub fn newton_logistic(d: &DesignMatrix) -> Vec<f64> {
    let (n, p) = (d.rows(), d.cols());
    let mut theta = vec![0.0; p + 1];
    for _ in 0..100 {
        let mut grad = vec![0.0; p + 1];
        let mut hess = vec![vec![0.0; p + 1]; p + 1];
        for i in 0..n {
            let mut z = vec![1.0];
            z.extend(d.x.row(i).iter());
            let eta: f64 = z.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            for a in 0..=p {
                grad[a] += (d.y[i] - mu) * z[a];
                for b in 0..=p {
                    hess[a][b] += w * z[a] * z[b];
                }
            }
        }
        let step = solve(hess, grad);
        let size = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for (t, s) in theta.iter_mut().zip(&step) {
            *t += s;
        }
        if size < 1e-13 {
            break;
        }
    }
    theta
}

/// Pearson correlation by the two-pass textbook formula.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

pub struct SmallLayoutFixture {
    pub name: String,
    pub centroids: BTreeMap<String, Point>,
    pub edges: Vec<(String, String)>,
}

pub fn small_layout_fixtures() -> Vec<SmallLayoutFixture> {
    let text = include_str!("../fixtures/small_layouts.json");
    let raw: serde_json::Value = serde_json::from_str(text).unwrap();
    raw.as_array()
        .unwrap()
        .iter()
        .map(|f| SmallLayoutFixture {
            name: f["name"].as_str().unwrap().to_string(),
            centroids: f["centroids"]
                .as_object()
                .unwrap()
                .iter()
                .map(|(k, v)| (k.clone(), Point::new(v[0].as_f64().unwrap(), v[1].as_f64().unwrap())))
                .collect(),
            edges: f["edges"]
                .as_array()
                .unwrap()
                .iter()
                .map(|e| (e[0].as_str().unwrap().to_string(), e[1].as_str().unwrap().to_string()))
                .collect(),
        })
        .collect()
}

/// Minimum layout cost over every injective placement in the axial window
/// `q, r ∈ [-2, 2]`, found by depth-first search with cost bounding.
///
/// Centroid normalization is recomputed here from its definition: recenter on
/// the mean, flip y, scale mean nearest-neighbor spacing to `√3 · size`.
pub fn exhaustive_window_optimum(fx: &SmallLayoutFixture, lambda: f64, size: f64) -> f64 {
    let codes: Vec<&String> = fx.centroids.keys().collect();
    let pts: Vec<Point> = fx.centroids.values().copied().collect();
    let n = pts.len();
    let mx = pts.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let nn: Vec<f64> = (0..n)
        .filter_map(|i| {
            (0..n)
                .filter(|j| *j != i)
                .map(|j| ((pts[i].x - pts[j].x).powi(2) + (pts[i].y - pts[j].y).powi(2)).sqrt())
                .min_by(f64::total_cmp)
        })
        .collect();
    let scale = if nn.is_empty() { 1.0 } else { 3f64.sqrt() * size / (nn.iter().sum::<f64>() / nn.len() as f64) };
    let targets: Vec<(f64, f64)> = pts.iter().map(|p| ((p.x - mx) * scale, -(p.y - my) * scale)).collect();

    let cells: Vec<(i32, i32)> = (-2..=2).flat_map(|q| (-2..=2).map(move |r| (q, r))).collect();
    let center = |(q, r): (i32, i32)| (size * 3f64.sqrt() * (q as f64 + r as f64 / 2.0), size * 1.5 * r as f64);
    let dist = |a: (i32, i32), b: (i32, i32)| {
        let (dq, dr) = (a.0 - b.0, a.1 - b.1);
        (dq.abs() + dr.abs() + (dq + dr).abs()) / 2
    };
    let index = |c: &String| codes.iter().position(|k| *k == c).unwrap();
    let edges: Vec<(usize, usize)> = fx.edges.iter().map(|(a, b)| (index(a), index(b))).collect();

    struct Search<'a> {
        n: usize,
        cells: &'a [(i32, i32)],
        disp: Vec<Vec<f64>>,
        edges: &'a [(usize, usize)],
        lambda: f64,
        dist: &'a dyn Fn((i32, i32), (i32, i32)) -> i32,
        best: f64,
    }

    fn dfs(s: &mut Search, placed: &mut Vec<usize>, used: &mut Vec<bool>, cost: f64) {
        if cost >= s.best {
            return;
        }
        let i = placed.len();
        if i == s.n {
            s.best = cost;
            return;
        }
        for c in 0..s.cells.len() {
            if used[c] {
                continue;
            }
            let mut add = s.disp[i][c];
            for &(a, b) in s.edges {
                let other = if a == i && b < i {
                    b
                } else if b == i && a < i {
                    a
                } else {
                    continue;
                };
                if (s.dist)(s.cells[c], s.cells[placed[other]]) != 1 {
                    add += s.lambda;
                }
            }
            used[c] = true;
            placed.push(c);
            dfs(s, placed, used, cost + add);
            placed.pop();
            used[c] = false;
        }
    }

    let disp: Vec<Vec<f64>> = targets
        .iter()
        .map(|t| {
            cells
                .iter()
                .map(|c| {
                    let (x, y) = center(*c);
                    (x - t.0).powi(2) + (y - t.1).powi(2)
                })
                .collect()
        })
        .collect();
    let mut s = Search {
        n,
        cells: &cells,
        disp,
        edges: &edges,
        lambda,
        dist: &dist,
        best: f64::INFINITY,
    };
    dfs(&mut s, &mut Vec::new(), &mut vec![false; cells.len()], 0.0);
    s.best
}
