//! Time-domain simulation of the closed loop under seeded disturbances.
//!
//! Classic fixed-step fourth-order Runge–Kutta on `ẋ = Acl x + Bdcl d(t)`
//! with the disturbance redrawn each step and held constant across the step
//! (sample-and-hold). "White noise with magnitude a" is realized as
//! independent per-channel uniform samples on [-a, a]; runs are
//! reproducible from the seed.

use std::fmt::Write as FmtWrite;
use std::io::Write as IoWrite;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mas::ClosedLoop;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at step {0} (t = {1})")]
    NonFiniteState(usize, f64),
    #[error("bad simulation config: {0}")]
    BadConfig(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    UniformWhite { amplitude: f64, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Horizon in seconds.
    pub t_final: f64,
    /// Fixed step in seconds.
    pub dt: f64,
    /// Initial global state (length N·n).
    pub x0: DVector<f64>,
    pub noise: NoiseModel,
}

impl SimConfig {
    pub fn new(t_final: f64, dt: f64, x0: DVector<f64>, noise: NoiseModel) -> Result<Self, SimError> {
        if !(dt > 0.0) {
            return Err(SimError::BadConfig(format!("dt must be positive, got {dt}")));
        }
        if t_final < dt {
            return Err(SimError::BadConfig(format!("T = {t_final} shorter than dt = {dt}")));
        }
        Ok(Self {
            t_final,
            dt,
            x0,
            noise,
        })
    }
}

/// Recorded run: outputs per agent per step, optional inputs, and the grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub time: Vec<f64>,
    /// Row per step, `N·p` columns (agent-major).
    pub y: DMatrix<f64>,
    /// Row per step, `N·m` columns; present when a gain was supplied.
    pub u: Option<DMatrix<f64>>,
    pub agents: usize,
    pub outputs_per_agent: usize,
    pub inputs_per_agent: usize,
}

impl Trajectory {
    /// Output component `j` of agent `i` over time.
    pub fn y_series(&self, agent: usize, j: usize) -> impl Iterator<Item = f64> + '_ {
        let col = agent * self.outputs_per_agent + j;
        (0..self.time.len()).map(move |k| self.y[(k, col)])
    }

    /// Max-abs output of agent `i` at step `k` (across its p components).
    fn y_abs(&self, agent: usize, k: usize) -> f64 {
        (0..self.outputs_per_agent)
            .map(|j| self.y[(k, agent * self.outputs_per_agent + j)].abs())
            .fold(0.0, f64::max)
    }

    fn gap_abs(&self, a: usize, b: usize, k: usize) -> f64 {
        (0..self.outputs_per_agent)
            .map(|j| {
                (self.y[(k, a * self.outputs_per_agent + j)]
                    - self.y[(k, b * self.outputs_per_agent + j)])
                .abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Simulate without recording inputs.
pub fn simulate(closed: &ClosedLoop, cfg: &SimConfig) -> Result<Trajectory, SimError> {
    simulate_with_inputs(closed, None, cfg)
}

/// Simulate, additionally recording `u = -F x` for the supplied stacked
/// gain.
pub fn simulate_with_inputs(
    closed: &ClosedLoop,
    full_gain: Option<&DMatrix<f64>>,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    let nn = closed.acl.nrows();
    if cfg.x0.len() != nn {
        return Err(SimError::BadConfig(format!(
            "x0 has length {}, closed loop has {nn} states",
            cfg.x0.len()
        )));
    }
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let agents = closed.agents;
    let p_total = closed.ccl.nrows();
    let nd_total = closed.bdcl.ncols();
    let m_total = full_gain.map_or(0, |f| f.nrows());

    let mut rng = match cfg.noise {
        NoiseModel::UniformWhite { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        NoiseModel::None => None,
    };
    let amplitude = match cfg.noise {
        NoiseModel::UniformWhite { amplitude, .. } => amplitude,
        NoiseModel::None => 0.0,
    };

    let mut time = Vec::with_capacity(steps + 1);
    let mut y = DMatrix::zeros(steps + 1, p_total);
    let mut u = full_gain.map(|_| DMatrix::zeros(steps + 1, m_total));

    let mut x = cfg.x0.clone();
    let mut d = DVector::zeros(nd_total);
    let record = |x: &DVector<f64>,
                  k: usize,
                  y: &mut DMatrix<f64>,
                  u: &mut Option<DMatrix<f64>>| {
        let yk = &closed.ccl * x;
        for (c, v) in yk.iter().enumerate() {
            y[(k, c)] = *v;
        }
        if let (Some(u), Some(f)) = (u.as_mut(), full_gain) {
            let uk = -(f * x);
            for (c, v) in uk.iter().enumerate() {
                u[(k, c)] = *v;
            }
        }
    };

    time.push(0.0);
    record(&x, 0, &mut y, &mut u);
    let dt = cfg.dt;
    for k in 0..steps {
        if let Some(rng) = rng.as_mut() {
            for di in d.iter_mut() {
                *di = rng.random_range(-amplitude..=amplitude);
            }
        }
        let forcing = &closed.bdcl * &d;
        let k1 = &closed.acl * &x + &forcing;
        let k2 = &closed.acl * (&x + &k1 * (dt / 2.0)) + &forcing;
        let k3 = &closed.acl * (&x + &k2 * (dt / 2.0)) + &forcing;
        let k4 = &closed.acl * (&x + &k3 * dt) + &forcing;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteState(k + 1, (k + 1) as f64 * dt));
        }
        time.push((k + 1) as f64 * dt);
        record(&x, k + 1, &mut y, &mut u);
    }

    Ok(Trajectory {
        time,
        y,
        u,
        agents,
        outputs_per_agent: p_total / agents,
        inputs_per_agent: if agents > 0 { m_total / agents } else { 0 },
    })
}

/// Settling / peak / pairwise-gap metrics at an absolute band.
#[derive(Debug, Clone)]
pub struct Metrics {
    pub band: f64,
    /// Per agent: time of the last sample with |y_i| > band (0 if none).
    pub settling: Vec<f64>,
    /// Per agent: peak |y_i| over the run.
    pub peak: Vec<f64>,
    /// Per unordered pair (i, j): last time |y_i - y_j| > band.
    pub pairwise: Vec<((usize, usize), f64)>,
}

impl Metrics {
    pub fn settling_max(&self) -> f64 {
        self.settling.iter().copied().fold(0.0, f64::max)
    }
    pub fn peak_max(&self) -> f64 {
        self.peak.iter().copied().fold(0.0, f64::max)
    }
    pub fn pair(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairwise.iter().find(|(k, _)| *k == key).map(|(_, t)| *t)
    }
}

pub fn metrics(traj: &Trajectory, band: f64) -> Metrics {
    assert!(band > 0.0, "band must be positive");
    let steps = traj.time.len();
    let mut settling = Vec::with_capacity(traj.agents);
    let mut peak = Vec::with_capacity(traj.agents);
    for i in 0..traj.agents {
        let mut last = 0.0;
        let mut pk = 0.0f64;
        for k in 0..steps {
            let v = traj.y_abs(i, k);
            pk = pk.max(v);
            if v > band {
                last = traj.time[k];
            }
        }
        settling.push(last);
        peak.push(pk);
    }
    let mut pairwise = Vec::new();
    for i in 0..traj.agents {
        for j in (i + 1)..traj.agents {
            let mut last = 0.0;
            for k in 0..steps {
                if traj.gap_abs(i, j, k) > band {
                    last = traj.time[k];
                }
            }
            pairwise.push(((i, j), last));
        }
    }
    Metrics {
        band,
        settling,
        peak,
        pairwise,
    }
}

/// CSV body: `t,y1,…,yN[,u1,…]`, one row per step. Values use the shortest
/// round-trip decimal form, so re-importing reproduces the series
/// bit-exactly.
pub fn csv_string(traj: &Trajectory) -> String {
    let mut out = String::new();
    out.push('t');
    for i in 0..traj.agents {
        for j in 0..traj.outputs_per_agent {
            if traj.outputs_per_agent == 1 {
                let _ = write!(out, ",y{}", i + 1);
            } else {
                let _ = write!(out, ",y{}_{}", i + 1, j + 1);
            }
        }
    }
    if traj.u.is_some() {
        for i in 0..traj.agents {
            for j in 0..traj.inputs_per_agent {
                if traj.inputs_per_agent == 1 {
                    let _ = write!(out, ",u{}", i + 1);
                } else {
                    let _ = write!(out, ",u{}_{}", i + 1, j + 1);
                }
            }
        }
    }
    out.push('\n');
    for k in 0..traj.time.len() {
        let _ = write!(out, "{}", traj.time[k]);
        for c in 0..traj.y.ncols() {
            let _ = write!(out, ",{}", traj.y[(k, c)]);
        }
        if let Some(u) = &traj.u {
            for c in 0..u.ncols() {
                let _ = write!(out, ",{}", u[(k, c)]);
            }
        }
        out.push('\n');
    }
    out
}

const SVG_PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Static SVG line plot of every agent's first output component: one
/// polyline per agent.
pub fn svg_string(traj: &Trajectory, title: &str) -> String {
    let (w, h) = (860.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 30.0, 40.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let tmax = traj.time.last().copied().unwrap_or(1.0).max(1e-12);
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for i in 0..traj.agents {
        for v in traj.y_series(i, 0) {
            ymin = ymin.min(v);
            ymax = ymax.max(v);
        }
    }
    if !ymin.is_finite() || ymin == ymax {
        ymin -= 1.0;
        ymax += 1.0;
    }
    let pad = 0.05 * (ymax - ymin);
    let (ymin, ymax) = (ymin - pad, ymax + pad);
    let xmap = |t: f64| ml + pw * t / tmax;
    let ymap = |v: f64| mt + ph * (1.0 - (v - ymin) / (ymax - ymin));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="14">{title}</text>"#,
        ml
    );
    // axes
    let _ = writeln!(
        s,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        mt + ph,
        ml + pw,
        mt + ph
    );
    let _ = writeln!(
        s,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        mt + ph
    );
    for (frac, label) in [(0.0, 0.0), (0.5, tmax / 2.0), (1.0, tmax)] {
        let x = ml + pw * frac;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{label:.2}</text>"#,
            mt + ph + 16.0
        );
    }
    for v in [ymin, 0.0f64.clamp(ymin, ymax), ymax] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#,
            ml - 6.0,
            ymap(v) + 4.0
        );
    }
    // decimate long runs to keep files reasonable
    let stride = (traj.time.len() / 2000).max(1);
    for i in 0..traj.agents {
        let color = SVG_PALETTE[i % SVG_PALETTE.len()];
        let mut points = String::new();
        for k in (0..traj.time.len()).step_by(stride) {
            let v = traj.y[(k, i * traj.outputs_per_agent)];
            let _ = write!(points, "{:.3},{:.3} ", xmap(traj.time[k]), ymap(v));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{points}"/>"#
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Atomic file write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), SimError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Export the trajectory as CSV (and optionally SVG) next to each other.
pub fn export_csv(traj: &Trajectory, path: &Path) -> Result<(), SimError> {
    write_atomic(path, &csv_string(traj))
}

pub fn export_svg(traj: &Trajectory, title: &str, path: &Path) -> Result<(), SimError> {
    write_atomic(path, &svg_string(traj, title))
}
