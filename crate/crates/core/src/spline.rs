//! Catmull-Rom spline representation of control trajectories.
//!
//! A trajectory is parameterized by `K` control nodes (a `D × K` matrix) and
//! sampled on `T` dense timesteps through a precomputed `K × T` basis matrix:
//! `dense = nodes · phi` and, in the least-squares sense,
//! `nodes = dense · phi_pinv`.
//!
//! Nodes are spaced uniformly over the dense grid, node `0` at dense index `0`
//! and node `K - 1` at dense index `T - 1`. The end segments use phantom nodes
//! extrapolated linearly from the two nearest real nodes, so the curve
//! interpolates both endpoints and reproduces affine node sequences exactly.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum node count with a full four-point support.
pub const MIN_NODES: usize = 4;

/// Uniform Catmull-Rom (tension ½) matrix. Row `j` holds the power-basis
/// coefficients `[1, t, t², t³]` of the weight applied to control point
/// `P_{i-1+j}`.
pub const CATMULL_ROM: [[f64; 4]; 4] = [
    [0.0, -0.5, 1.0, -0.5],
    [1.0, 0.0, -2.5, 1.5],
    [0.0, 0.5, 2.0, -1.5],
    [0.0, 0.0, -0.5, 0.5],
];

/// Control-point matrix, `D` control dimensions by `K` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrajectory {
    data: DMatrix<f64>,
}

impl NodeTrajectory {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() < MIN_NODES {
            return Err(Error::Config(format!(
                "node trajectory needs at least {MIN_NODES} nodes, got {}",
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::Config("node trajectory has zero dimensions".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("node trajectory has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(dims: usize, nodes: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(dims, nodes))
    }

    /// Builds a trajectory whose every node equals `value`.
    pub fn constant(value: &[f64], nodes: usize) -> Result<Self> {
        Self::new(DMatrix::from_fn(value.len(), nodes, |d, _| value[d]))
    }

    pub fn dims(&self) -> usize {
        self.data.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
}

/// Dense control samples, `D` dimensions by `T` timesteps of `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    data: DMatrix<f64>,
    dt: f64,
}

impl DenseTrajectory {
    pub fn new(data: DMatrix<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dense trajectory dt must be positive, got {dt}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dense trajectory has non-finite entries".into()));
        }
        Ok(Self { data, dt })
    }

    pub fn dims(&self) -> usize {
        self.data.nrows()
    }

    pub fn steps(&self) -> usize {
        self.data.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Control vector applied at dense step `k`.
    pub fn control(&self, k: usize) -> Vec<f64> {
        self.data.column(k).iter().copied().collect()
    }
}

/// Catmull-Rom weights `(w₋₁, w₀, w₊₁, w₊₂)` of the four control points
/// bounding a segment, at local parameter `t ∈ [0, 1]`.
pub fn segment_weights(t: f64) -> Result<[f64; 4]> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("segment parameter {t} outside [0, 1]")));
    }
    let powers = [1.0, t, t * t, t * t * t];
    let mut w = [0.0; 4];
    for (wj, row) in w.iter_mut().zip(CATMULL_ROM.iter()) {
        *wj = row.iter().zip(powers.iter()).map(|(c, p)| c * p).sum();
    }
    Ok(w)
}

/// Precomputed basis matrix `phi` (`K × T`) and its right pseudo-inverse
/// `phi_pinv` (`T × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPair {
    phi: DMatrix<f64>,
    phi_pinv: DMatrix<f64>,
}

impl BasisPair {
    pub fn nodes(&self) -> usize {
        self.phi.nrows()
    }

    pub fn steps(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn phi_pinv(&self) -> &DMatrix<f64> {
        &self.phi_pinv
    }

    /// Shared, memoized basis for `(nodes, steps)`.
    pub fn cached(nodes: usize, steps: usize) -> Result<Arc<BasisPair>> {
        type Cache = Mutex<HashMap<(usize, usize), Arc<BasisPair>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(hit) = cache.lock().expect("basis cache poisoned").get(&(nodes, steps)) {
            return Ok(Arc::clone(hit));
        }
        let basis = Arc::new(build_basis(nodes, steps)?);
        cache
            .lock()
            .expect("basis cache poisoned")
            .entry((nodes, steps))
            .or_insert_with(|| Arc::clone(&basis));
        Ok(basis)
    }
}

/// Position of dense step `s` on the node axis, split into segment index and
/// local parameter.
fn locate(step: usize, nodes: usize, steps: usize) -> (usize, f64) {
    let numer = (step * (nodes - 1)) as f64;
    let tau = numer / (steps - 1) as f64;
    let seg = (tau.floor() as usize).min(nodes - 2);
    let t = (tau - seg as f64).clamp(0.0, 1.0);
    (seg, t)
}

pub fn build_basis(nodes: usize, steps: usize) -> Result<BasisPair> {
    if nodes < MIN_NODES {
        return Err(Error::Config(format!("basis needs K >= {MIN_NODES}, got K = {nodes}")));
    }
    if steps < nodes {
        return Err(Error::Config(format!("basis needs T >= K, got K = {nodes}, T = {steps}")));
    }
    let mut phi = DMatrix::<f64>::zeros(nodes, steps);
    for s in 0..steps {
        let (seg, t) = locate(s, nodes, steps);
        let w = segment_weights(t)?;
        for (j, wj) in w.iter().enumerate() {
            let idx = seg as isize - 1 + j as isize;
            if idx < 0 {
                // phantom P₋₁ = 2·P₀ − P₁
                phi[(0, s)] += 2.0 * wj;
                phi[(1, s)] -= wj;
            } else if idx as usize >= nodes {
                // phantom P_K = 2·P_{K−1} − P_{K−2}
                phi[(nodes - 1, s)] += 2.0 * wj;
                phi[(nodes - 2, s)] -= wj;
            } else {
                phi[(idx as usize, s)] += wj;
            }
        }
    }

    let gram = &phi * phi.transpose();
    let chol = gram.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!("phi·phiᵀ is not positive definite for K = {nodes}, T = {steps}"))
    })?;
    let phi_pinv = phi.transpose() * chol.inverse();
    Ok(BasisPair { phi, phi_pinv })
}

fn check_dims(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: got {got}, basis expects {want}")));
    }
    Ok(())
}

/// `dense = nodes · phi`.
pub fn nodes_to_dense(nodes: &NodeTrajectory, basis: &BasisPair, dt: f64) -> Result<DenseTrajectory> {
    check_dims("node count", nodes.nodes(), basis.nodes())?;
    DenseTrajectory::new(nodes.matrix() * basis.phi(), dt)
}

/// Least-squares node fit, `nodes = dense · phi_pinv`.
pub fn dense_to_nodes(dense: &DenseTrajectory, basis: &BasisPair) -> Result<NodeTrajectory> {
    check_dims("dense step count", dense.steps(), basis.steps())?;
    NodeTrajectory::new(dense.matrix() * basis.phi_pinv())
}
