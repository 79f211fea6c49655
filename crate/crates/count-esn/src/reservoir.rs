//! Fixed random reservoirs: spike-and-slab weight generation, spectral
//! normalization, the hidden-state recursion, and the merged hierarchical
//! design built from hidden states.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelSeries;
use crate::rng::rng_from_seed;

/// Activation applied coordinate-wise in the hidden-state recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Hyperparameters of the reservoir. Weight entries are zero with
/// probability 1 - pi (the spike) and Uniform(-a, a) otherwise (the slab).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservoirSpec {
    /// Hidden nodes.
    pub n_h: usize,
    /// Autoregressive order; only p = 1 is supported.
    pub p: usize,
    /// Covariate dimension fed through U_X.
    pub r: usize,
    /// Recurrence scaling in (0, 1].
    pub nu: f64,
    pub a_w: f64,
    pub a_u_y: f64,
    pub a_u_x: f64,
    pub pi_w: f64,
    pub pi_u_y: f64,
    pub pi_u_x: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ReservoirSpec {
    fn default() -> Self {
        ReservoirSpec {
            n_h: 30,
            p: 1,
            r: 2,
            nu: 0.9,
            a_w: 0.01,
            a_u_y: 0.01,
            a_u_x: 0.01,
            pi_w: 0.1,
            pi_u_y: 0.1,
            pi_u_x: 0.1,
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

impl ReservoirSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_h == 0 {
            return Err(Error::Config("reservoir needs at least one hidden node".into()));
        }
        if self.p != 1 {
            return Err(Error::Config("only autoregressive order p = 1 is supported".into()));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        for (name, a) in [("a_w", self.a_w), ("a_u_y", self.a_u_y), ("a_u_x", self.a_u_x)] {
            if a < 0.0 {
                return Err(Error::Config(format!("slab half-width {name} must be >= 0")));
            }
        }
        for (name, pi) in [("pi_w", self.pi_w), ("pi_u_y", self.pi_u_y), ("pi_u_x", self.pi_u_x)] {
            if !(0.0..=1.0).contains(&pi) {
                return Err(Error::Config(format!(
                    "inclusion probability {name} must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Fixed reservoir weights; never mutated after generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirWeights {
    pub spec: ReservoirSpec,
    /// n_h x n_h recurrence matrix.
    pub w: DMatrix<f64>,
    /// p x n_h input matrix for lagged counts.
    pub u_y: DMatrix<f64>,
    /// r x n_h input matrix for covariates.
    pub u_x: DMatrix<f64>,
    /// Spectral radius of `w`.
    pub lambda_w: f64,
}

fn spike_slab<R: Rng>(rows: usize, cols: usize, a: f64, pi: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let keep: f64 = rng.random();
        if keep < pi {
            (rng.random::<f64>() * 2.0 - 1.0) * a
        } else {
            0.0
        }
    })
}

/// Generate the fixed weights for a spec. Pure function of the spec,
/// including its seed.
pub fn gen_weights(spec: &ReservoirSpec) -> Result<ReservoirWeights> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    // Generation order is part of the reproducibility contract: W, U_Y, U_X.
    let w = spike_slab(spec.n_h, spec.n_h, spec.a_w, spec.pi_w, &mut rng);
    let u_y = spike_slab(spec.p, spec.n_h, spec.a_u_y, spec.pi_u_y, &mut rng);
    let u_x = spike_slab(spec.r, spec.n_h, spec.a_u_x, spec.pi_u_x, &mut rng);
    let lambda_w = spectral_radius(&w)?;
    Ok(ReservoirWeights {
        spec: spec.clone(),
        w,
        u_y,
        u_x,
        lambda_w,
    })
}

/// Spectral radius (maximum eigenvalue modulus) of a square matrix.
///
/// Uses normalized repeated squaring: ||W^(2^k)||_F^(1/2^k) converges to the
/// spectral radius from above at a doubly exponential rate in k. Falls back
/// to a dense eigensolve if the iteration has not stabilized at the cap.
pub fn spectral_radius(w: &DMatrix<f64>) -> Result<f64> {
    if w.nrows() != w.ncols() {
        return Err(Error::Dimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("spectral radius: non-finite entries".into()));
    }
    let norm0 = w.norm();
    if norm0 == 0.0 {
        return Ok(0.0);
    }
    let mut b = w / norm0;
    let mut log_scale = norm0.ln(); // ln ||W^(2^k)|| ~ 2^k * est
    let mut weight = 1.0f64; // 1 / 2^k
    let mut estimate = norm0;
    for _ in 0..80 {
        let c = &b * &b;
        let n = c.norm();
        if n == 0.0 {
            return Ok(0.0); // nilpotent
        }
        b = c / n;
        // log ||W^(2^(k+1))|| = 2 log ||W^(2^k)|| + log ||B_k^2||
        log_scale = 2.0 * log_scale + n.ln();
        weight *= 0.5;
        let new_estimate = (log_scale * weight).exp();
        if (new_estimate - estimate).abs() <= 1e-12 * new_estimate.max(f64::MIN_POSITIVE) {
            return Ok(new_estimate);
        }
        estimate = new_estimate;
    }
    // Dense fallback for spectra the squaring iteration resolves too slowly.
    Ok(dense_spectral_radius(w))
}

/// Dense eigensolver route; also serves as an independent oracle in tests.
pub fn dense_spectral_radius(w: &DMatrix<f64>) -> f64 {
    w.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// One step of the hidden-state recursion:
/// `g( (nu/lambda_W) W' h_prev + ln(y_prev + 1) U_Y' + U_X' x_t )`.
///
/// When lambda_W = 0 the recurrence term is identically zero and is skipped.
pub fn advance(
    h_prev: &DVector<f64>,
    y_prev: u64,
    x_t: &[f64],
    weights: &ReservoirWeights,
    nu: f64,
) -> Result<DVector<f64>> {
    let n_h = weights.w.nrows();
    if h_prev.len() != n_h {
        return Err(Error::Dimension(format!(
            "hidden state has length {}, reservoir has {n_h} nodes",
            h_prev.len()
        )));
    }
    if x_t.len() != weights.u_x.nrows() {
        return Err(Error::Dimension(format!(
            "covariate has length {}, U_X expects {}",
            x_t.len(),
            weights.u_x.nrows()
        )));
    }
    let mut pre = if weights.lambda_w > 0.0 {
        weights.w.transpose() * h_prev * (nu / weights.lambda_w)
    } else {
        DVector::zeros(n_h)
    };
    let log_y = ((y_prev as f64) + 1.0).ln();
    for j in 0..n_h {
        pre[j] += log_y * weights.u_y[(0, j)];
        for (k, xv) in x_t.iter().enumerate() {
            pre[j] += xv * weights.u_x[(k, j)];
        }
    }
    Ok(pre.map(|v| weights.spec.activation.apply(v)))
}

/// Hidden states h_{i,t} for every school and year, N x T x n_h.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    data: Vec<f64>,
    n_schools: usize,
    n_years: usize,
    n_h: usize,
}

impl HiddenStates {
    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn state(&self, school: usize, t: usize) -> &[f64] {
        let start = (school * self.n_years + t) * self.n_h;
        &self.data[start..start + self.n_h]
    }

    /// T x n_h design matrix of one school's hidden states.
    pub fn school_design(&self, school: usize, t_rows: usize) -> DMatrix<f64> {
        DMatrix::from_fn(t_rows, self.n_h, |t, j| self.state(school, t)[j])
    }
}

/// Roll the recursion over a panel: h_{i,1} = g(U_X' x_{i,1}) and subsequent
/// states advance on the observed counts. Schools are independent, so the
/// first `t` years of the output depend only on data before year `t`.
pub fn run_states(
    panel: &PanelSeries,
    weights: &ReservoirWeights,
    nu: f64,
) -> Result<HiddenStates> {
    if panel.covariate_dim() != weights.u_x.nrows() {
        return Err(Error::Dimension(format!(
            "panel covariate dimension {} does not match U_X rows {}",
            panel.covariate_dim(),
            weights.u_x.nrows()
        )));
    }
    let n = panel.n_schools();
    let t_len = panel.n_years();
    let n_h = weights.w.nrows();
    let mut data = vec![0.0; n * t_len * n_h];
    for i in 0..n {
        let mut h = DVector::zeros(n_h);
        let x1 = panel.covariate(i, 0);
        for j in 0..n_h {
            let mut pre = 0.0;
            for (k, xv) in x1.iter().enumerate() {
                pre += xv * weights.u_x[(k, j)];
            }
            h[j] = weights.spec.activation.apply(pre);
        }
        data[(i * t_len) * n_h..(i * t_len + 1) * n_h].copy_from_slice(h.as_slice());
        for t in 1..t_len {
            h = advance(&h, panel.count(i, t - 1), panel.covariate(i, t), weights, nu)?;
            let start = (i * t_len + t) * n_h;
            data[start..start + n_h].copy_from_slice(h.as_slice());
        }
    }
    Ok(HiddenStates {
        data,
        n_schools: n,
        n_years: t_len,
        n_h,
    })
}

/// Merged hierarchical design: the row for (school i, year t) carries the
/// school's hidden state in the block of its geographic state and a state
/// indicator, for a total width of n_h * n_s + n_s.
///
/// Rows are stored grouped by state (each row has only n_h + 1 structurally
/// nonzero entries); [`MergedDesign::to_dense`] materializes the full layout.
#[derive(Debug, Clone)]
pub struct MergedDesign {
    pub n_h: usize,
    pub n_states: usize,
    pub blocks: Vec<StateBlock>,
}

/// Rows of the merged design belonging to one state.
#[derive(Debug, Clone)]
pub struct StateBlock {
    pub state: usize,
    /// (school, year) of each row, in panel order.
    pub rows: Vec<(usize, usize)>,
    /// n_rows x (n_h + 1); the last column is the state-indicator entry.
    pub design: DMatrix<f64>,
}

impl MergedDesign {
    pub fn width(&self) -> usize {
        self.n_h * self.n_states + self.n_states
    }

    pub fn n_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len()).sum()
    }

    /// Dense (N*T) x (n_h*n_s + n_s) layout, rows in panel order.
    pub fn to_dense(&self, panel: &PanelSeries) -> DMatrix<f64> {
        let t_len = panel.n_years();
        let mut out = DMatrix::zeros(self.n_rows(), self.width());
        for block in &self.blocks {
            for (r, &(i, t)) in block.rows.iter().enumerate() {
                let global_row = i * t_len + t;
                for j in 0..self.n_h {
                    out[(global_row, block.state * self.n_h + j)] = block.design[(r, j)];
                }
                out[(global_row, self.n_h * self.n_states + block.state)] =
                    block.design[(r, self.n_h)];
            }
        }
        out
    }
}

/// Group hidden states by geographic state into the merged design.
pub fn merged_design(states: &HiddenStates, panel: &PanelSeries) -> Result<MergedDesign> {
    if states.n_schools != panel.n_schools() || states.n_years != panel.n_years() {
        return Err(Error::Dimension(
            "hidden states and panel have mismatched shapes".into(),
        ));
    }
    let n_states = panel.n_states();
    let n_h = states.n_h;
    let mut blocks: Vec<StateBlock> = (0..n_states)
        .map(|s| StateBlock {
            state: s,
            rows: Vec::new(),
            design: DMatrix::zeros(0, 0),
        })
        .collect();
    let mut rows_per_state = vec![Vec::new(); n_states];
    for i in 0..panel.n_schools() {
        let s = panel.state_of(i);
        for t in 0..panel.n_years() {
            rows_per_state[s].push((i, t));
        }
    }
    for (s, rows) in rows_per_state.into_iter().enumerate() {
        let mut design = DMatrix::zeros(rows.len(), n_h + 1);
        for (r, &(i, t)) in rows.iter().enumerate() {
            let h = states.state(i, t);
            for j in 0..n_h {
                design[(r, j)] = h[j];
            }
            design[(r, n_h)] = 1.0;
        }
        blocks[s].rows = rows;
        blocks[s].design = design;
    }
    Ok(MergedDesign {
        n_h,
        n_states,
        blocks,
    })
}
