//! Seeded property checks on the projection, its Jacobian and the power
//! iteration, reported as a pass/fail table.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use crate::discrepancy::{disc_regression, power_iteration, second_moment};
use crate::nn::matrix::Matrix;
use crate::nn::rng::{self, Rng};
use crate::simplex::{danskin_residual, darn_jacobian, darn_jvp, darn_project, find_nu, DEFAULT_NU_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Default,
    Fast,
}

/// Sizes and tolerances of one verification run.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifySettings {
    pub projection_instances: usize,
    pub grid_per_axis: usize,
    pub dirichlet_samples: usize,
    pub jacobian_points: usize,
    pub power_matrices: usize,
    pub power_max_dim: usize,
    /// Reports the k = 1e3 / 1e4 scaling of the projection.
    pub timing: bool,
    /// Threshold tolerance used by every projection in the run.
    pub nu_tol: f64,
    pub seed: u64,
}

impl Profile {
    pub fn settings(self) -> VerifySettings {
        match self {
            Profile::Default => VerifySettings {
                projection_instances: 1000,
                grid_per_axis: 200,
                dirichlet_samples: 10_000,
                jacobian_points: 500,
                power_matrices: 100,
                power_max_dim: 50,
                timing: true,
                nu_tol: DEFAULT_NU_TOL,
                seed: 2024,
            },
            Profile::Fast => VerifySettings {
                projection_instances: 100,
                grid_per_axis: 60,
                dirichlet_samples: 1_000,
                jacobian_points: 100,
                power_matrices: 10,
                power_max_dim: 20,
                timing: false,
                nu_tol: DEFAULT_NU_TOL,
                seed: 2024,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{status}  {:<width$}  {}", c.name, c.detail);
        }
        out
    }
}

const KS: [usize; 4] = [2, 3, 5, 10];

fn random_z(r: &mut Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| r.random_range(-3.0..3.0)).collect()
}

/// `-<z, a> + ||a||_2`, the projection objective at unit temperature.
fn objective(z: &[f64], a: &[f64]) -> f64 {
    let lin: f64 = z.iter().zip(a).map(|(x, y)| x * y).sum();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    norm - lin
}

fn simplex_grid(k: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let n = per_axis - 1;
    let step = 1.0 / n as f64;
    match k {
        2 => (0..=n).map(|i| vec![i as f64 * step, 1.0 - i as f64 * step]).collect(),
        3 => {
            let mut pts = Vec::new();
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let a = i as f64 * step;
                    let b = j as f64 * step;
                    pts.push(vec![a, b, (1.0 - a - b).max(0.0)]);
                }
            }
            pts
        }
        _ => Vec::new(),
    }
}

fn dirichlet_ones(r: &mut Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(r)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn check_projection(s: &VerifySettings) -> CheckResult {
    let mut r = rng::seeded(s.seed);
    let grids: Vec<Vec<Vec<f64>>> = KS.iter().map(|&k| simplex_grid(k, s.grid_per_axis)).collect();
    let mut worst_sum = 0.0_f64;
    let mut worst_residual = 0.0_f64;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut negative = false;
    for n in 0..s.projection_instances {
        let ki = n % KS.len();
        let z = random_z(&mut r, KS[ki]);
        let p = match darn_project(&z, s.nu_tol) {
            Ok(p) => p,
            Err(e) => return fail("projection_optimality", format!("instance {n}: {e}")),
        };
        let alpha = p.weights.alpha();
        negative |= alpha.iter().any(|a| *a < 0.0);
        worst_sum = worst_sum.max((alpha.iter().sum::<f64>() - 1.0).abs());
        worst_residual = worst_residual.max((p.residual_norm - 1.0).abs());
        let u = objective(&z, alpha);
        for cand in &grids[ki] {
            worst_gap = worst_gap.max(u - objective(&z, cand));
        }
        for _ in 0..s.dirichlet_samples {
            let cand = dirichlet_ones(&mut r, z.len());
            worst_gap = worst_gap.max(u - objective(&z, &cand));
        }
    }
    let passed = !negative && worst_sum <= 1e-12 && worst_residual <= 1e-10 && worst_gap <= 1e-8;
    CheckResult {
        name: "projection_optimality",
        passed,
        detail: format!(
            "{} instances; |sum-1| {worst_sum:.1e}, |norm-1| {worst_residual:.1e}, U(alpha*)-min U(sample) {worst_gap:.1e}",
            s.projection_instances
        ),
    }
}

fn fail(name: &'static str, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed: false,
        detail,
    }
}

/// Random points whose support cannot change under a `1e-4` perturbation.
fn stable_points(s: &VerifySettings) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(s.seed ^ 0x5EED);
    let mut out = Vec::with_capacity(s.jacobian_points);
    while out.len() < s.jacobian_points {
        let k = KS[out.len() % KS.len()];
        let z = random_z(&mut r, k);
        if let Ok(nu) = find_nu(&z, DEFAULT_NU_TOL) {
            if z.iter().all(|x| (x - nu).abs() > 1e-4) {
                out.push(z);
            }
        }
    }
    out
}

fn frobenius_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn check_jacobian(s: &VerifySettings, points: &[Vec<f64>]) -> CheckResult {
    let h = 1e-6;
    let mut r = rng::seeded(s.seed ^ 0x7AC0);
    let (mut worst_fd, mut worst_sym, mut worst_col, mut worst_jvp) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for (n, z) in points.iter().enumerate() {
        let k = z.len();
        let result = (|| {
            let p = darn_project(z, s.nu_tol)?;
            let j = darn_jacobian(z, &p)?;
            let mut fd = vec![0.0; k * k];
            for c in 0..k {
                let mut zp = z.clone();
                zp[c] += h;
                let mut zm = z.clone();
                zm[c] -= h;
                let ap = darn_project(&zp, s.nu_tol)?;
                let am = darn_project(&zm, s.nu_tol)?;
                for row in 0..k {
                    fd[row * k + c] = (ap.weights.alpha()[row] - am.weights.alpha()[row]) / (2.0 * h);
                }
            }
            let v: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
            let jv = darn_jvp(z, &p, &v)?;
            Ok::<_, crate::DarnError>((j, fd, v, jv))
        })();
        let (j, fd, v, jv) = match result {
            Ok(x) => x,
            Err(e) => return fail("jacobian", format!("point {n}: {e}")),
        };
        worst_fd = worst_fd.max(frobenius_rel(j.entries(), &fd));
        for a in 0..k {
            let mut col = 0.0;
            for b in 0..k {
                worst_sym = worst_sym.max((j.get(a, b) - j.get(b, a)).abs());
                col += j.get(b, a);
            }
            worst_col = worst_col.max(col.abs());
        }
        let dense = j.mul_vec(&v);
        for (x, y) in dense.iter().zip(&jv) {
            worst_jvp = worst_jvp.max((x - y).abs());
        }
    }
    CheckResult {
        name: "jacobian",
        passed: worst_fd < 1e-5 && worst_sym <= 1e-12 && worst_col <= 1e-10 && worst_jvp <= 1e-12,
        detail: format!(
            "{} points; fd rel {worst_fd:.1e}, asym {worst_sym:.1e}, col sum {worst_col:.1e}, jvp {worst_jvp:.1e}",
            points.len()
        ),
    }
}

fn check_danskin(s: &VerifySettings, points: &[Vec<f64>]) -> CheckResult {
    let mut worst = 0.0_f64;
    for (n, z) in points.iter().enumerate() {
        match darn_project(z, s.nu_tol).and_then(|p| danskin_residual(z, &p)) {
            Ok(res) => worst = worst.max(res),
            Err(e) => return fail("danskin_consistency", format!("point {n}: {e}")),
        }
    }
    CheckResult {
        name: "danskin_consistency",
        passed: worst < 1e-8,
        detail: format!("{} points; max |J(z - a/|a|)| {worst:.1e}", points.len()),
    }
}

/// Scores on a `2^-30` grid, so `z + c` is exact for `|c| <= 1e6`. Without
/// this, rounding of the shifted input alone moves entries by `ulp(1e6) / 2`.
fn representable_z(r: &mut Rng, k: usize) -> Vec<f64> {
    let q = (1u64 << 30) as f64;
    random_z(r, k).into_iter().map(|x| (x * q).round() / q).collect()
}

fn check_shift(s: &VerifySettings) -> CheckResult {
    let mut r = rng::seeded(s.seed ^ 0x5417);
    let mut worst = 0.0_f64;
    let mut worst_shift = 0.0;
    for n in 0..s.projection_instances {
        let z = representable_z(&mut r, KS[n % KS.len()]);
        let base = match darn_project(&z, s.nu_tol) {
            Ok(p) => p,
            Err(e) => return fail("shift_invariance", e.to_string()),
        };
        for c in [1.0, -1.0, 1e6, -1e6] {
            let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
            let p = match darn_project(&shifted, s.nu_tol) {
                Ok(p) => p,
                Err(e) => return fail("shift_invariance", e.to_string()),
            };
            for (a, b) in p.weights.alpha().iter().zip(base.weights.alpha()) {
                if (a - b).abs() > worst {
                    worst = (a - b).abs();
                    worst_shift = c;
                }
            }
        }
    }
    CheckResult {
        name: "shift_invariance",
        passed: worst <= 1e-10,
        detail: format!("c in {{+-1, +-1e6}}; max |diff| {worst:.1e} (at c = {worst_shift})"),
    }
}

fn random_symmetric(r: &mut Rng, d: usize) -> Matrix {
    let mut m = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let x: f64 = r.random_range(-1.0..1.0);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

fn check_power(s: &VerifySettings) -> CheckResult {
    let mut r = rng::seeded(s.seed ^ 0x9041);
    let mut worst = 0.0_f64;
    for n in 0..s.power_matrices {
        let d = r.random_range(2..=s.power_max_dim);
        let m = random_symmetric(&mut r, d);
        let oracle = nalgebra::DMatrix::from_row_slice(d, d, m.as_slice())
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, x| acc.max(x.abs()));
        match power_iteration(&m, 100_000, 1e-13, n as u64) {
            Ok(e) => worst = worst.max((e.magnitude - oracle).abs()),
            Err(e) => return fail("power_iteration", e.to_string()),
        }
    }
    let features = random_symmetric(&mut r, 6);
    let same = second_moment(&features).and_then(|mm| disc_regression(&mm, &mm, 20, 1e-7, 0));
    let zero_ok = matches!(same, Ok(v) if v == 0.0);
    CheckResult {
        name: "power_iteration",
        passed: worst < 1e-6 && zero_ok,
        detail: format!(
            "{} matrices up to {}x{}; max |lambda - oracle| {worst:.1e}; disc(M, M) = 0: {zero_ok}",
            s.power_matrices, s.power_max_dim, s.power_max_dim
        ),
    }
}

/// Median seconds of `find_nu` followed by `darn_project` at size `k`.
pub fn projection_timing(k: usize, reps: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let z = random_z(&mut r, k);
            let start = Instant::now();
            let nu = find_nu(&z, DEFAULT_NU_TOL).expect("finite scores");
            let p = darn_project(&z, DEFAULT_NU_TOL).expect("finite scores");
            std::hint::black_box((nu, p));
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

fn check_complexity(s: &VerifySettings) -> CheckResult {
    let small = projection_timing(1_000, 41, s.seed);
    let large = projection_timing(10_000, 41, s.seed + 1);
    let ratio = large / small;
    CheckResult {
        name: "complexity",
        passed: ratio <= 20.0,
        detail: format!(
            "median k=1e3 {:.1} us, k=1e4 {:.1} us, ratio {ratio:.2} (limit 20)",
            small * 1e6,
            large * 1e6
        ),
    }
}

pub fn verify(settings: &VerifySettings) -> VerifyReport {
    let points = stable_points(settings);
    let mut checks = vec![
        check_projection(settings),
        check_jacobian(settings, &points),
        check_danskin(settings, &points),
        check_shift(settings),
        check_power(settings),
    ];
    if settings.timing {
        checks.push(check_complexity(settings));
    }
    VerifyReport { checks }
}
