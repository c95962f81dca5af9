#![allow(dead_code)]

use std::path::PathBuf;

use locrelay::ctmc::Generator;
use locrelay::scenario::Scenario;
use nalgebra::DMatrix;

/// Knobs of a small synthetic scenario; everything else keeps its default.
#[derive(Debug, Clone)]
pub struct Small {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub origin: f64,
    pub speed: f64,
    pub tau: f64,
    pub mu: f64,
    pub sigma: f64,
    pub queue: usize,
    pub role: &'static str,
}

impl Default for Small {
    fn default() -> Self {
        Small { nx: 3, ny: 3, spacing: 8.0, origin: 4.0, speed: 2.0, tau: 1.0, mu: 20.0, sigma: 0.0, queue: 2, role: "mobile_relay" }
    }
}

impl Small {
    pub fn text(&self) -> String {
        let far = self.origin + self.spacing * (self.nx as f64 - 1.0);
        format!(
            "name = small\n\
             [grid]\nnx = {}\nny = {}\nspacing_m = {}\norigin_x_m = {o}\norigin_y_m = {o}\n\
             [nodes]\nmobility_role = {}\nap_x_m = {o}\nap_y_m = {o}\ndest_x_m = {far}\ndest_y_m = {o}\n\
             [mobility]\nspeed_mps = {}\n\
             [updates]\ntau_hz = {}\nmu_hz = {}\nqueue_size = {}\n\
             [location_error]\nsigma_m = {}\n",
            self.nx,
            self.ny,
            self.spacing,
            self.role,
            self.speed,
            self.tau,
            self.mu,
            self.queue,
            self.sigma,
            o = self.origin,
        )
    }

    pub fn scenario(&self) -> Scenario {
        let mut text = self.text();
        if self.role == "mobile_destination" {
            // A static relay midway along the first row.
            let mid = self.origin + self.spacing * ((self.nx - 1) / 2) as f64;
            text = text.replace("[mobility]", &format!("relay_m = {mid},{}\n[mobility]", self.origin));
        }
        Scenario::parse_str(&text, "small", None).expect("synthetic scenario parses")
    }
}

pub fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Stationary vector from the right singular vector of Qᵀ with the smallest singular value.
pub fn dense_stationary(q: &Generator) -> Vec<f64> {
    let n = q.n();
    let dense = q.to_dense();
    let qt = DMatrix::from_fn(n, n, |i, j| dense[j][i]);
    let svd = qt.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let (k, _) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let v: Vec<f64> = v_t.row(k).iter().copied().collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
